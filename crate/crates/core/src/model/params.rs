use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::tokenizer::RESERVED;

macro_rules! param_struct {
    ($($name:ident : $ty:ty),* $(,)?) => {
        /// Every trainable tensor of the network, in a fixed order.
        #[derive(Debug, Clone, PartialEq)]
        pub struct Params {
            $(pub $name: $ty,)*
        }

        impl Params {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
                vec![$((
                    stringify!($name),
                    self.$name.shape().to_vec(),
                    self.$name.as_slice().expect("contiguous"),
                )),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
                vec![$((stringify!($name), self.$name.as_slice_mut().expect("contiguous"))),*]
            }

            pub fn zeros_like(&self) -> Self {
                Self { $($name: <$ty>::zeros(self.$name.raw_dim()),)* }
            }
        }
    };
}

param_struct! {
    emb: Array2<f64>,
    enc_f_wx: Array2<f64>,
    enc_f_wh: Array2<f64>,
    enc_f_b: Array1<f64>,
    enc_b_wx: Array2<f64>,
    enc_b_wh: Array2<f64>,
    enc_b_b: Array1<f64>,
    init_w: Array2<f64>,
    init_b: Array1<f64>,
    dec_wx: Array2<f64>,
    dec_wh: Array2<f64>,
    dec_b: Array1<f64>,
    att_wk: Array2<f64>,
    att_wq: Array2<f64>,
    att_b: Array1<f64>,
    att_v: Array1<f64>,
    ptr_wk: Array2<f64>,
    ptr_wq: Array2<f64>,
    ptr_b: Array1<f64>,
    ptr_v: Array1<f64>,
    out_w: Array2<f64>,
    out_b: Array1<f64>,
}

/// Tensors updated with the encoder learning rate.
pub const ENCODER_TENSORS: &[&str] = &[
    "emb", "enc_f_wx", "enc_f_wh", "enc_f_b", "enc_b_wx", "enc_b_wh", "enc_b_b",
];

fn uniform2(rng: &mut ChaCha8Rng, rows: usize, cols: usize, k: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-k..k))
}

fn uniform1(rng: &mut ChaCha8Rng, n: usize, k: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.random_range(-k..k))
}

fn lstm_bias(h: usize) -> Array1<f64> {
    let mut b = Array1::zeros(4 * h);
    b.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
    b
}

impl Params {
    /// Shapes implied by `cfg` and a vocabulary of `vocab_len` entries.
    pub fn zeros(cfg: &ModelConfig, vocab_len: usize) -> Self {
        let (e, h) = (cfg.embed_dim, cfg.hidden_dim);
        let a = h;
        let r = RESERVED.len();
        Self {
            emb: Array2::zeros((vocab_len, e)),
            enc_f_wx: Array2::zeros((4 * h, e)),
            enc_f_wh: Array2::zeros((4 * h, h)),
            enc_f_b: Array1::zeros(4 * h),
            enc_b_wx: Array2::zeros((4 * h, e)),
            enc_b_wh: Array2::zeros((4 * h, h)),
            enc_b_b: Array1::zeros(4 * h),
            init_w: Array2::zeros((h, 2 * h)),
            init_b: Array1::zeros(h),
            dec_wx: Array2::zeros((4 * h, e + 2 * h)),
            dec_wh: Array2::zeros((4 * h, h)),
            dec_b: Array1::zeros(4 * h),
            att_wk: Array2::zeros((a, 2 * h)),
            att_wq: Array2::zeros((a, h)),
            att_b: Array1::zeros(a),
            att_v: Array1::zeros(a),
            ptr_wk: Array2::zeros((a, 2 * h)),
            ptr_wq: Array2::zeros((a, 3 * h)),
            ptr_b: Array1::zeros(a),
            ptr_v: Array1::zeros(a),
            out_w: Array2::zeros((r, 3 * h)),
            out_b: Array1::zeros(r),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, LSTM forget-gate bias 1.
    pub fn init(cfg: &ModelConfig, vocab_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let (e, h) = (cfg.embed_dim, cfg.hidden_dim);
        let a = h;
        let r = RESERVED.len();
        let kh = 1.0 / (h as f64).sqrt();
        let k2h = 1.0 / (2.0 * h as f64).sqrt();
        let k3h = 1.0 / (3.0 * h as f64).sqrt();
        let ka = 1.0 / (a as f64).sqrt();
        Self {
            emb: uniform2(rng, vocab_len, e, 0.5),
            enc_f_wx: uniform2(rng, 4 * h, e, kh),
            enc_f_wh: uniform2(rng, 4 * h, h, kh),
            enc_f_b: lstm_bias(h),
            enc_b_wx: uniform2(rng, 4 * h, e, kh),
            enc_b_wh: uniform2(rng, 4 * h, h, kh),
            enc_b_b: lstm_bias(h),
            init_w: uniform2(rng, h, 2 * h, k2h),
            init_b: Array1::zeros(h),
            dec_wx: uniform2(rng, 4 * h, e + 2 * h, kh),
            dec_wh: uniform2(rng, 4 * h, h, kh),
            dec_b: lstm_bias(h),
            att_wk: uniform2(rng, a, 2 * h, k2h),
            att_wq: uniform2(rng, a, h, kh),
            att_b: Array1::zeros(a),
            att_v: uniform1(rng, a, ka),
            ptr_wk: uniform2(rng, a, 2 * h, k2h),
            ptr_wq: uniform2(rng, a, 3 * h, k3h),
            ptr_b: Array1::zeros(a),
            ptr_v: uniform1(rng, a, ka),
            out_w: uniform2(rng, r, 3 * h, k3h),
            out_b: Array1::zeros(r),
        }
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.2.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.2.iter().all(|x| x.is_finite()))
    }
}
