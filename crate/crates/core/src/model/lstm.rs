//! Single LSTM cell, forward and backward. Gate layout is `[i, f, g, o]`.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) struct CellOut {
    /// Activated gates.
    pub gates: Array1<f64>,
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

/// One step given the pre-activation input part `zx = Wx x + b`.
pub(crate) fn cell_forward(
    zx: ArrayView1<f64>,
    wh: &Array2<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> CellOut {
    let h = h_prev.len();
    let mut z = wh.dot(&h_prev);
    z += &zx;
    for k in 0..h {
        z[k] = sigmoid(z[k]);
        z[h + k] = sigmoid(z[h + k]);
        z[2 * h + k] = z[2 * h + k].tanh();
        z[3 * h + k] = sigmoid(z[3 * h + k]);
    }
    let mut c = Array1::zeros(h);
    let mut hn = Array1::zeros(h);
    for k in 0..h {
        c[k] = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
        hn[k] = z[3 * h + k] * c[k].tanh();
    }
    CellOut { gates: z, c, h: hn }
}

/// Gradient w.r.t. the gate pre-activations, and the carried cell gradient.
pub(crate) fn cell_backward(
    gates: ArrayView1<f64>,
    c: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    dh: ArrayView1<f64>,
    dc: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let h = c.len();
    let mut dz = Array1::zeros(4 * h);
    let mut dc_prev = Array1::zeros(h);
    for k in 0..h {
        let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
        let tc = c[k].tanh();
        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dct * g * i * (1.0 - i);
        dz[h + k] = dct * c_prev[k] * f * (1.0 - f);
        dz[2 * h + k] = dct * i * (1.0 - g * g);
        dz[3 * h + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dct * f;
    }
    (dz, dc_prev)
}

/// A full pass over a sequence, kept for backprop. Rows are indexed by input
/// position regardless of direction.
pub(crate) struct SeqTrace {
    pub hs: Array2<f64>,
    pub cs: Array2<f64>,
    pub gates: Array2<f64>,
    pub reverse: bool,
}

impl SeqTrace {
    /// Position whose state feeds step `t`, if any.
    fn prev(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.hs.nrows()).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }
}

pub(crate) fn seq_forward(
    xs: &Array2<f64>,
    wx: &Array2<f64>,
    wh: &Array2<f64>,
    b: &Array1<f64>,
    reverse: bool,
) -> SeqTrace {
    let t_len = xs.nrows();
    let h = wh.ncols();
    let mut zx = xs.dot(&wx.t());
    zx += b;
    let mut hs = Array2::zeros((t_len, h));
    let mut cs = Array2::zeros((t_len, h));
    let mut gates = Array2::zeros((t_len, 4 * h));
    let zero = Array1::zeros(h);
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    let mut prev: Option<usize> = None;
    for &t in &order {
        let (hp, cp) = match prev {
            Some(p) => (hs.row(p).to_owned(), cs.row(p).to_owned()),
            None => (zero.clone(), zero.clone()),
        };
        let out = cell_forward(zx.row(t), wh, hp.view(), cp.view());
        hs.row_mut(t).assign(&out.h);
        cs.row_mut(t).assign(&out.c);
        gates.row_mut(t).assign(&out.gates);
        prev = Some(t);
    }
    SeqTrace {
        hs,
        cs,
        gates,
        reverse,
    }
}

/// Backprop through a sequence given `dhs` (gradient on every output state).
/// Accumulates weight gradients and returns the gradient on `xs`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn seq_backward(
    trace: &SeqTrace,
    xs: &Array2<f64>,
    wx: &Array2<f64>,
    wh: &Array2<f64>,
    dhs: &Array2<f64>,
    dwx: &mut Array2<f64>,
    dwh: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    let t_len = xs.nrows();
    let h = wh.ncols();
    let mut dz_all = Array2::zeros((t_len, 4 * h));
    let mut h_prev_all = Array2::zeros((t_len, h));
    let mut dh_rec = Array1::zeros(h);
    let mut dc = Array1::<f64>::zeros(h);
    let zero = Array1::zeros(h);
    let order: Vec<usize> = if trace.reverse {
        (0..t_len).collect()
    } else {
        (0..t_len).rev().collect()
    };
    for &t in &order {
        let p = trace.prev(t);
        let cp = p.map(|p| trace.cs.row(p)).unwrap_or(zero.view());
        if let Some(p) = p {
            h_prev_all.row_mut(t).assign(&trace.hs.row(p));
        }
        let dh = &dhs.row(t) + &dh_rec;
        let (dz, dc_prev) = cell_backward(
            trace.gates.row(t),
            trace.cs.row(t),
            cp,
            dh.view(),
            dc.view(),
        );
        dh_rec = wh.t().dot(&dz);
        dc = dc_prev;
        dz_all.row_mut(t).assign(&dz);
    }
    *dwx += &dz_all.t().dot(xs);
    *dwh += &dz_all.t().dot(&h_prev_all);
    Zip::from(db)
        .and(dz_all.sum_axis(Axis(0)).view())
        .for_each(|a, &b| *a += b);
    dz_all.dot(wx)
}
