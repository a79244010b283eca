//! Encoder-decoder forward pass, loss and hand-written backward pass.
//!
//! Encoder: embeddings and a bidirectional LSTM. Decoder: one LSTM layer fed
//! the previous output's embedding and the previous attention context, with
//! additive attention over the encoder states. The output distribution at
//! each step covers only the allowed specials (scored by a linear head) and
//! the copyable input positions (scored by an additive pointer); a token
//! type's probability is the sum over its positions.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::lstm::{cell_backward, cell_forward, seq_backward, seq_forward, SeqTrace};
use super::params::Params;
use crate::tokenizer::{EOS, UNK_ID};

/// One training or decoding example in id form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Embedding rows of the encoder input.
    pub input_ids: Vec<u32>,
    /// Positions that may be copied.
    pub copy_pos: Vec<usize>,
    /// Output id of every copyable position, aligned with `copy_pos`.
    pub copy_type: Vec<u32>,
    /// Reserved ids the output head may produce (schema specials and EOS).
    pub special_ids: Vec<u32>,
    /// Target output ids; empty for decoding.
    pub targets: Vec<u32>,
    /// Embedding row used as decoder input for each target, i.e. the row of
    /// the previous output (EOS for the first step).
    pub prev_rows: Vec<u32>,
}

impl Example {
    pub fn embedding_row(id: u32, vocab_len: usize) -> u32 {
        if (id as usize) < vocab_len {
            id
        } else {
            UNK_ID
        }
    }
}

pub(crate) fn bos_row() -> u32 {
    crate::tokenizer::RESERVED
        .iter()
        .position(|t| *t == EOS)
        .unwrap() as u32
}

pub(crate) struct EncCache {
    xs: Array2<f64>,
    fwd: SeqTrace,
    bwd: SeqTrace,
    pub henc: Array2<f64>,
    mean: Array1<f64>,
    pub s0: Array1<f64>,
    katt: Array2<f64>,
    kptr: Array2<f64>,
}

pub(crate) fn encode(p: &Params, ids: &[u32]) -> EncCache {
    let e = p.emb.ncols();
    let mut xs = Array2::zeros((ids.len(), e));
    for (t, &id) in ids.iter().enumerate() {
        xs.row_mut(t).assign(&p.emb.row(id as usize));
    }
    let fwd = seq_forward(&xs, &p.enc_f_wx, &p.enc_f_wh, &p.enc_f_b, false);
    let bwd = seq_forward(&xs, &p.enc_b_wx, &p.enc_b_wh, &p.enc_b_b, true);
    let henc = concatenate![Axis(1), fwd.hs, bwd.hs];
    let mean = henc.mean_axis(Axis(0)).expect("non-empty input");
    let mut s0 = p.init_w.dot(&mean);
    s0 += &p.init_b;
    s0.mapv_inplace(f64::tanh);
    let katt = henc.dot(&p.att_wk.t());
    let kptr = henc.dot(&p.ptr_wk.t());
    EncCache {
        xs,
        fwd,
        bwd,
        henc,
        mean,
        s0,
        katt,
        kptr,
    }
}

/// Everything one decoder step computes, kept for backprop.
pub(crate) struct StepCache {
    x: Array1<f64>,
    s_prev: Array1<f64>,
    c_prev: Array1<f64>,
    gates: Array1<f64>,
    pub c: Array1<f64>,
    pub s: Array1<f64>,
    ua: Array2<f64>,
    alpha: Array1<f64>,
    pub ctx: Array1<f64>,
    q: Array1<f64>,
    up: Array2<f64>,
    /// Probabilities aligned with `Example::special_ids`.
    pub p_special: Vec<f64>,
    /// Probabilities aligned with `Example::copy_pos`.
    pub p_copy: Vec<f64>,
}

fn additive_scores(
    keys: &Array2<f64>,
    q: &Array1<f64>,
    v: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let mut u = keys + q;
    u.mapv_inplace(f64::tanh);
    let e = u.dot(v);
    (u, e)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn dec_step(
    p: &Params,
    enc: &EncCache,
    ex: &Example,
    prev_row: u32,
    ctx_prev: &Array1<f64>,
    s_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> StepCache {
    let x = concatenate![Axis(0), p.emb.row(prev_row as usize), ctx_prev.view()];
    let mut zx = p.dec_wx.dot(&x);
    zx += &p.dec_b;
    let cell = cell_forward(zx.view(), &p.dec_wh, s_prev.view(), c_prev.view());
    let s = cell.h;

    let mut qa = p.att_wq.dot(&s);
    qa += &p.att_b;
    let (ua, e) = additive_scores(&enc.katt, &qa, &p.att_v);
    let lse = log_sum_exp(e.iter().copied());
    let alpha = e.mapv(|x| (x - lse).exp());
    let ctx = enc.henc.t().dot(&alpha);

    let q = concatenate![Axis(0), s.view(), ctx.view()];
    let mut qp = p.ptr_wq.dot(&q);
    qp += &p.ptr_b;
    let (up, ptr) = additive_scores(&enc.kptr, &qp, &p.ptr_v);
    let mut o = p.out_w.dot(&q);
    o += &p.out_b;

    let logits_special: Vec<f64> = ex.special_ids.iter().map(|&r| o[r as usize]).collect();
    let logits_copy: Vec<f64> = ex.copy_pos.iter().map(|&j| ptr[j]).collect();
    let z = log_sum_exp(logits_special.iter().chain(logits_copy.iter()).copied());
    StepCache {
        x,
        s_prev: s_prev.clone(),
        c_prev: c_prev.clone(),
        gates: cell.gates,
        c: cell.c,
        s,
        ua,
        alpha,
        ctx,
        q,
        up,
        p_special: logits_special.iter().map(|l| (l - z).exp()).collect(),
        p_copy: logits_copy.iter().map(|l| (l - z).exp()).collect(),
    }
}

impl StepCache {
    /// Probability of output id `y`.
    pub fn prob(&self, ex: &Example, y: u32) -> f64 {
        if let Some(k) = ex.special_ids.iter().position(|&r| r == y) {
            return self.p_special[k];
        }
        ex.copy_type
            .iter()
            .zip(&self.p_copy)
            .filter(|(t, _)| **t == y)
            .map(|(_, p)| p)
            .sum()
    }

    /// Distribution over output ids (specials then copy types, ids ascending).
    pub fn distribution(&self, ex: &Example) -> Vec<(u32, f64)> {
        let mut out: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
        for (&id, &p) in ex.special_ids.iter().zip(&self.p_special) {
            *out.entry(id).or_default() += p;
        }
        for (&id, &p) in ex.copy_type.iter().zip(&self.p_copy) {
            *out.entry(id).or_default() += p;
        }
        out.into_iter().collect()
    }
}

pub(crate) struct Trace {
    enc: EncCache,
    steps: Vec<StepCache>,
}

/// Teacher-forced pass. Returns the summed negative log-likelihood of the
/// targets and the trace for backprop.
pub(crate) fn forward(p: &Params, ex: &Example) -> (f64, Trace) {
    let enc = encode(p, &ex.input_ids);
    let h = p.dec_wh.ncols();
    let mut s = enc.s0.clone();
    let mut c = Array1::zeros(h);
    let mut ctx = Array1::zeros(2 * h);
    let mut nll = 0.0;
    let mut steps = Vec::with_capacity(ex.targets.len());
    for (k, &y) in ex.targets.iter().enumerate() {
        let st = dec_step(p, &enc, ex, ex.prev_rows[k], &ctx, &s, &c);
        nll -= st.prob(ex, y).ln();
        s = st.s.clone();
        c = st.c.clone();
        ctx = st.ctx.clone();
        steps.push(st);
    }
    (nll, Trace { enc, steps })
}

/// Accumulate `scale * d(nll)/d(params)` into `g`.
pub(crate) fn backward(p: &Params, ex: &Example, tr: &Trace, scale: f64, g: &mut Params) {
    let enc = &tr.enc;
    let h = p.dec_wh.ncols();
    let e = p.emb.ncols();
    let r = p.out_w.nrows();
    let a = p.att_v.len();
    let t_len = enc.henc.nrows();
    let n = tr.steps.len();

    let mut d_henc = Array2::<f64>::zeros((t_len, 2 * h));
    let mut d_katt = Array2::<f64>::zeros((t_len, a));
    let mut d_kptr = Array2::<f64>::zeros((t_len, a));
    let mut d_out = Array2::<f64>::zeros((n, r));
    let mut q_rows = Array2::<f64>::zeros((n, 3 * h));
    let mut d_qp_rows = Array2::<f64>::zeros((n, a));
    let mut d_qa_rows = Array2::<f64>::zeros((n, a));
    let mut s_rows = Array2::<f64>::zeros((n, h));
    let mut dz_rows = Array2::<f64>::zeros((n, 4 * h));
    let mut x_rows = Array2::<f64>::zeros((n, e + 2 * h));
    let mut sprev_rows = Array2::<f64>::zeros((n, h));

    let mut ds_carry = Array1::<f64>::zeros(h);
    let mut dc_carry = Array1::<f64>::zeros(h);
    let mut dctx_carry = Array1::<f64>::zeros(2 * h);

    for k in (0..n).rev() {
        let st = &tr.steps[k];
        let y = ex.targets[k];
        let py = st.prob(ex, y);

        // d nll / d logits
        let mut d_o = Array1::<f64>::zeros(r);
        for (i, &row) in ex.special_ids.iter().enumerate() {
            let ind = if row == y { 1.0 } else { 0.0 };
            d_o[row as usize] = scale * (st.p_special[i] - ind);
        }
        let mut d_ptr = Array1::<f64>::zeros(t_len);
        for (i, &j) in ex.copy_pos.iter().enumerate() {
            let pj = st.p_copy[i];
            let hit = if ex.copy_type[i] == y { pj / py } else { 0.0 };
            d_ptr[j] = scale * (pj - hit);
        }

        // output head
        let mut dq = p.out_w.t().dot(&d_o);
        d_out.row_mut(k).assign(&d_o);
        q_rows.row_mut(k).assign(&st.q);

        // pointer
        g.ptr_v += &st.up.t().dot(&d_ptr);
        let mut dpre = st.up.mapv(|u| 1.0 - u * u);
        dpre *= &p.ptr_v;
        dpre *= &d_ptr.view().insert_axis(Axis(1));
        let dqp = dpre.sum_axis(Axis(0));
        d_kptr += &dpre;
        dq += &p.ptr_wq.t().dot(&dqp);
        d_qp_rows.row_mut(k).assign(&dqp);

        let mut ds = dq.slice(s![..h]).to_owned();
        let dctx = &dq.slice(s![h..]) + &dctx_carry;

        // context = alpha^T henc
        let d_alpha = enc.henc.dot(&dctx);
        for j in 0..t_len {
            d_henc.row_mut(j).scaled_add(st.alpha[j], &dctx);
        }
        let dot = st.alpha.dot(&d_alpha);
        let d_e = &st.alpha * &(d_alpha - dot);

        // attention scores
        g.att_v += &st.ua.t().dot(&d_e);
        let mut dpre = st.ua.mapv(|u| 1.0 - u * u);
        dpre *= &p.att_v;
        dpre *= &d_e.view().insert_axis(Axis(1));
        let dqa = dpre.sum_axis(Axis(0));
        d_katt += &dpre;
        ds += &p.att_wq.t().dot(&dqa);
        d_qa_rows.row_mut(k).assign(&dqa);
        s_rows.row_mut(k).assign(&st.s);

        // decoder cell
        ds += &ds_carry;
        let (dz, dc_prev) = cell_backward(
            st.gates.view(),
            st.c.view(),
            st.c_prev.view(),
            ds.view(),
            dc_carry.view(),
        );
        let dx = p.dec_wx.t().dot(&dz);
        ds_carry = p.dec_wh.t().dot(&dz);
        dc_carry = dc_prev;
        dz_rows.row_mut(k).assign(&dz);
        x_rows.row_mut(k).assign(&st.x);
        sprev_rows.row_mut(k).assign(&st.s_prev);

        g.emb
            .row_mut(ex.prev_rows[k] as usize)
            .scaled_add(1.0, &dx.slice(s![..e]));
        dctx_carry = dx.slice(s![e..]).to_owned();
    }

    g.out_w += &d_out.t().dot(&q_rows);
    g.out_b += &d_out.sum_axis(Axis(0));
    g.ptr_wq += &d_qp_rows.t().dot(&q_rows);
    g.ptr_b += &d_qp_rows.sum_axis(Axis(0));
    g.att_wq += &d_qa_rows.t().dot(&s_rows);
    g.att_b += &d_qa_rows.sum_axis(Axis(0));
    g.dec_wx += &dz_rows.t().dot(&x_rows);
    g.dec_wh += &dz_rows.t().dot(&sprev_rows);
    g.dec_b += &dz_rows.sum_axis(Axis(0));

    // initial decoder state s0 = tanh(W m + b), m = mean(henc)
    let d_pre0 = &ds_carry * &enc.s0.mapv(|v| 1.0 - v * v);
    g.init_w += &d_pre0
        .view()
        .insert_axis(Axis(1))
        .dot(&enc.mean.view().insert_axis(Axis(0)));
    g.init_b += &d_pre0;
    let d_mean = p.init_w.t().dot(&d_pre0) / t_len as f64;
    d_henc += &d_mean.view().insert_axis(Axis(0));

    // key projections
    g.att_wk += &d_katt.t().dot(&enc.henc);
    g.ptr_wk += &d_kptr.t().dot(&enc.henc);
    d_henc += &d_katt.dot(&p.att_wk);
    d_henc += &d_kptr.dot(&p.ptr_wk);

    // encoder
    let dh_f = d_henc.slice(s![.., ..h]).to_owned();
    let dh_b = d_henc.slice(s![.., h..]).to_owned();
    let dx_f = seq_backward(
        &enc.fwd,
        &enc.xs,
        &p.enc_f_wx,
        &p.enc_f_wh,
        &dh_f,
        &mut g.enc_f_wx,
        &mut g.enc_f_wh,
        &mut g.enc_f_b,
    );
    let dx_b = seq_backward(
        &enc.bwd,
        &enc.xs,
        &p.enc_b_wx,
        &p.enc_b_wh,
        &dh_b,
        &mut g.enc_b_wx,
        &mut g.enc_b_wh,
        &mut g.enc_b_b,
    );
    for (t, &id) in ex.input_ids.iter().enumerate() {
        let mut row = g.emb.row_mut(id as usize);
        row += &dx_f.row(t);
        row += &dx_b.row(t);
    }
}

/// Mean per-token negative log-likelihood over a batch.
pub fn batch_loss(p: &Params, batch: &[Example]) -> f64 {
    let n: usize = batch.iter().map(|ex| ex.targets.len()).sum();
    if n == 0 {
        return 0.0;
    }
    batch.iter().map(|ex| forward(p, ex).0).sum::<f64>() / n as f64
}

/// Mean per-token loss and its gradient.
pub fn batch_loss_and_grad(p: &Params, batch: &[Example]) -> (f64, Params) {
    let n: usize = batch.iter().map(|ex| ex.targets.len()).sum();
    let mut g = p.zeros_like();
    if n == 0 {
        return (0.0, g);
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    for ex in batch {
        let (nll, tr) = forward(p, ex);
        total += nll;
        backward(p, ex, &tr, scale, &mut g);
    }
    (total * scale, g)
}
