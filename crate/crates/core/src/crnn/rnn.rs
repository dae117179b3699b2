//! Single-direction LSTM and GRU layers over a batch of sequences stored
//! as rows `b * n + t`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use super::layers::sigmoid;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SeqShape {
    pub batch: usize,
    pub n: usize,
    pub reverse: bool,
}

impl SeqShape {
    /// Time index visited at step `s`.
    fn time(&self, s: usize) -> usize {
        if self.reverse {
            self.n - 1 - s
        } else {
            s
        }
    }

    /// Time index of the previous step before `t`, if any.
    fn prev(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.n).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }

    fn gather(&self, m: &Array2<f64>, t: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.batch, m.ncols()));
        for b in 0..self.batch {
            out.row_mut(b).assign(&m.row(b * self.n + t));
        }
        out
    }
}

pub(crate) struct LstmCache {
    /// Activated gates i, f, g, o per row.
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

/// Gates ordered i, f, g, o; one bias vector.
pub(crate) fn lstm_forward(
    x: &Array2<f64>,
    shape: SeqShape,
    w_ih: ArrayView2<f64>,
    w_hh: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> (Array2<f64>, LstmCache) {
    let hdim = w_hh.nrows();
    let mut xp = x.dot(&w_ih);
    xp += &bias;
    let rows = x.nrows();
    let mut gates = Array2::zeros((rows, 4 * hdim));
    let mut c_all = Array2::zeros((rows, hdim));
    let mut h_all = Array2::zeros((rows, hdim));
    let mut h = Array2::<f64>::zeros((shape.batch, hdim));
    let mut c = Array2::<f64>::zeros((shape.batch, hdim));
    for s in 0..shape.n {
        let t = shape.time(s);
        let mut pre = shape.gather(&xp, t);
        general_mat_mul(1.0, &h, &w_hh, 1.0, &mut pre);
        for b in 0..shape.batch {
            let row = b * shape.n + t;
            let p = pre.row(b);
            let mut g = gates.row_mut(row);
            for k in 0..hdim {
                let i = sigmoid(p[k]);
                let f = sigmoid(p[hdim + k]);
                let gg = p[2 * hdim + k].tanh();
                let o = sigmoid(p[3 * hdim + k]);
                let cn = f * c[[b, k]] + i * gg;
                c[[b, k]] = cn;
                h[[b, k]] = o * cn.tanh();
                g[k] = i;
                g[hdim + k] = f;
                g[2 * hdim + k] = gg;
                g[3 * hdim + k] = o;
            }
            c_all.row_mut(row).assign(&c.row(b));
            h_all.row_mut(row).assign(&h.row(b));
        }
    }
    let cache = LstmCache {
        gates,
        c: c_all,
        h: h_all.clone(),
    };
    (h_all, cache)
}

pub(crate) struct RnnGrads<'a> {
    pub w_ih: ArrayViewMut2<'a, f64>,
    pub w_hh: ArrayViewMut2<'a, f64>,
    pub b_ih: ArrayViewMut1<'a, f64>,
    pub b_hh: Option<ArrayViewMut1<'a, f64>>,
}

pub(crate) fn lstm_backward(
    dh_out: &Array2<f64>,
    x: &Array2<f64>,
    shape: SeqShape,
    cache: &LstmCache,
    w_ih: ArrayView2<f64>,
    w_hh: ArrayView2<f64>,
    grads: &mut RnnGrads,
) -> Array2<f64> {
    let hdim = w_hh.nrows();
    let mut dpre_all = Array2::zeros((x.nrows(), 4 * hdim));
    let mut dh_next = Array2::<f64>::zeros((shape.batch, hdim));
    let mut dc_next = Array2::<f64>::zeros((shape.batch, hdim));
    for s in (0..shape.n).rev() {
        let t = shape.time(s);
        let prev = shape.prev(t);
        let mut dpre = Array2::zeros((shape.batch, 4 * hdim));
        let mut h_prev = Array2::zeros((shape.batch, hdim));
        for b in 0..shape.batch {
            let row = b * shape.n + t;
            let g = cache.gates.row(row);
            let c_prev = |k: usize| prev.map_or(0.0, |p| cache.c[[b * shape.n + p, k]]);
            if let Some(p) = prev {
                h_prev.row_mut(b).assign(&cache.h.row(b * shape.n + p));
            }
            for k in 0..hdim {
                let (i, f, gg, o) = (g[k], g[hdim + k], g[2 * hdim + k], g[3 * hdim + k]);
                let ct = cache.c[[row, k]];
                let tc = ct.tanh();
                let dh = dh_out[[row, k]] + dh_next[[b, k]];
                let dc = dc_next[[b, k]] + dh * o * (1.0 - tc * tc);
                dpre[[b, k]] = dc * gg * i * (1.0 - i);
                dpre[[b, hdim + k]] = dc * c_prev(k) * f * (1.0 - f);
                dpre[[b, 2 * hdim + k]] = dc * i * (1.0 - gg * gg);
                dpre[[b, 3 * hdim + k]] = dh * tc * o * (1.0 - o);
                dc_next[[b, k]] = dc * f;
            }
            dpre_all.row_mut(row).assign(&dpre.row(b));
        }
        general_mat_mul(1.0, &h_prev.t(), &dpre, 1.0, &mut grads.w_hh);
        dh_next = dpre.dot(&w_hh.t());
    }
    general_mat_mul(1.0, &x.t(), &dpre_all, 1.0, &mut grads.w_ih);
    grads.b_ih += &dpre_all.sum_axis(Axis(0));
    dpre_all.dot(&w_ih.t())
}

pub(crate) struct GruCache {
    /// Activated r, z, n per row.
    gates: Array2<f64>,
    /// Recurrent projection of the n gate, `W_hn h + b_hn`.
    hn: Array2<f64>,
    h: Array2<f64>,
}

/// Gates ordered r, z, n, with separate input and recurrent biases:
/// `n = tanh(W_in x + b_in + r * (W_hn h + b_hn))`,
/// `h' = (1 - z) * n + z * h`.
pub(crate) fn gru_forward(
    x: &Array2<f64>,
    shape: SeqShape,
    w_ih: ArrayView2<f64>,
    w_hh: ArrayView2<f64>,
    b_ih: ArrayView1<f64>,
    b_hh: ArrayView1<f64>,
) -> (Array2<f64>, GruCache) {
    let hdim = w_hh.nrows();
    let mut xp = x.dot(&w_ih);
    xp += &b_ih;
    let rows = x.nrows();
    let mut gates = Array2::zeros((rows, 3 * hdim));
    let mut hn_all = Array2::zeros((rows, hdim));
    let mut h_all = Array2::zeros((rows, hdim));
    let mut h = Array2::<f64>::zeros((shape.batch, hdim));
    for s in 0..shape.n {
        let t = shape.time(s);
        let mut hp = h.dot(&w_hh);
        hp += &b_hh;
        for b in 0..shape.batch {
            let row = b * shape.n + t;
            let xr = xp.row(row);
            let mut g = gates.row_mut(row);
            for k in 0..hdim {
                let r = sigmoid(xr[k] + hp[[b, k]]);
                let z = sigmoid(xr[hdim + k] + hp[[b, hdim + k]]);
                let hn = hp[[b, 2 * hdim + k]];
                let nn = (xr[2 * hdim + k] + r * hn).tanh();
                h[[b, k]] = (1.0 - z) * nn + z * h[[b, k]];
                g[k] = r;
                g[hdim + k] = z;
                g[2 * hdim + k] = nn;
                hn_all[[row, k]] = hn;
            }
            h_all.row_mut(row).assign(&h.row(b));
        }
    }
    let cache = GruCache {
        gates,
        hn: hn_all,
        h: h_all.clone(),
    };
    (h_all, cache)
}

pub(crate) fn gru_backward(
    dh_out: &Array2<f64>,
    x: &Array2<f64>,
    shape: SeqShape,
    cache: &GruCache,
    w_ih: ArrayView2<f64>,
    w_hh: ArrayView2<f64>,
    grads: &mut RnnGrads,
) -> Array2<f64> {
    let hdim = w_hh.nrows();
    let mut dxp_all = Array2::zeros((x.nrows(), 3 * hdim));
    let mut dh_next = Array2::<f64>::zeros((shape.batch, hdim));
    let b_hh = grads.b_hh.as_mut().expect("GRU has a recurrent bias");
    for s in (0..shape.n).rev() {
        let t = shape.time(s);
        let prev = shape.prev(t);
        let mut dhp = Array2::zeros((shape.batch, 3 * hdim));
        let mut h_prev = Array2::zeros((shape.batch, hdim));
        let mut dh_carry = Array2::zeros((shape.batch, hdim));
        for b in 0..shape.batch {
            let row = b * shape.n + t;
            if let Some(p) = prev {
                h_prev.row_mut(b).assign(&cache.h.row(b * shape.n + p));
            }
            let g = cache.gates.row(row);
            for k in 0..hdim {
                let (r, z, nn) = (g[k], g[hdim + k], g[2 * hdim + k]);
                let hprev = h_prev[[b, k]];
                let dh = dh_out[[row, k]] + dh_next[[b, k]];
                let dn = dh * (1.0 - z);
                let dz = dh * (hprev - nn);
                let dan = dn * (1.0 - nn * nn);
                let dr = dan * cache.hn[[row, k]];
                let dar = dr * r * (1.0 - r);
                let daz = dz * z * (1.0 - z);
                dxp_all[[row, k]] = dar;
                dxp_all[[row, hdim + k]] = daz;
                dxp_all[[row, 2 * hdim + k]] = dan;
                dhp[[b, k]] = dar;
                dhp[[b, hdim + k]] = daz;
                dhp[[b, 2 * hdim + k]] = dan * r;
                dh_carry[[b, k]] = dh * z;
            }
        }
        general_mat_mul(1.0, &h_prev.t(), &dhp, 1.0, &mut grads.w_hh);
        *b_hh += &dhp.sum_axis(Axis(0));
        dh_next = dh_carry + dhp.dot(&w_hh.t());
    }
    general_mat_mul(1.0, &x.t(), &dxp_all, 1.0, &mut grads.w_ih);
    grads.b_ih += &dxp_all.sum_axis(Axis(0));
    dxp_all.dot(&w_ih.t())
}
