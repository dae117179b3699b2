use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut3, Axis};
use rand::Rng;

/// Row layout of a batch of `batch` time x pitch grids with `channels` as
/// columns. Each grid is zero-padded by `pad_t` frames and `pad_p` pitch
/// bins on both sides, so that every shift of a "same" convolution is a
/// contiguous block of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grid {
    pub batch: usize,
    pub n: usize,
    pub p: usize,
    pub pad_t: usize,
    pub pad_p: usize,
}

impl Grid {
    pub fn width(&self) -> usize {
        self.p + 2 * self.pad_p
    }

    fn height(&self) -> usize {
        self.n + 2 * self.pad_t
    }

    pub fn rows(&self) -> usize {
        self.batch * self.height() * self.width()
    }

    pub fn row(&self, b: usize, t: usize, p: usize) -> usize {
        (b * self.height() + t + self.pad_t) * self.width() + p + self.pad_p
    }

    /// Indices of all non-padding rows.
    pub fn interior(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.batch * self.n * self.p);
        for b in 0..self.batch {
            for t in 0..self.n {
                let start = self.row(b, t, 0);
                rows.extend(start..start + self.p);
            }
        }
        rows
    }

    pub fn with_p(&self, p: usize) -> Grid {
        Grid { p, ..*self }
    }

    pub fn zero_padding(&self, x: &mut Array2<f64>) {
        let mut keep = vec![false; self.rows()];
        for r in self.interior() {
            keep[r] = true;
        }
        for (r, mut row) in x.rows_mut().into_iter().enumerate() {
            if !keep[r] {
                row.fill(0.0);
            }
        }
    }
}

/// Signed row offset of each kernel tap.
fn tap_offsets(grid: &Grid, kt: usize, kp: usize) -> Vec<isize> {
    let w = grid.width() as isize;
    (0..kt)
        .flat_map(|dt| {
            (0..kp).map(move |dp| {
                (dt as isize - (kt / 2) as isize) * w + dp as isize - (kp / 2) as isize
            })
        })
        .collect()
}

/// "Same" 2-D convolution, weights `[kt * kp, c_in, c_out]`.
pub(crate) fn conv_forward(
    x: &Array2<f64>,
    grid: &Grid,
    kernel: (usize, usize),
    w: ArrayView3<f64>,
    bias: ArrayView1<f64>,
) -> Array2<f64> {
    let (c_in, c_out) = (w.shape()[1], w.shape()[2]);
    let mut y = Array2::zeros((grid.rows(), c_out));
    let offsets = tap_offsets(grid, kernel.0, kernel.1);
    let w = w.as_standard_layout();
    let ws = w.as_slice().expect("standard layout");
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let bias = bias.to_vec();
    let ys = y.as_slice_mut().expect("fresh array");
    for r in grid.interior() {
        let yr = &mut ys[r * c_out..(r + 1) * c_out];
        yr.copy_from_slice(&bias);
        for (k, &off) in offsets.iter().enumerate() {
            let src = (r as isize + off) as usize;
            let xr = &xs[src * c_in..(src + 1) * c_in];
            let wk = &ws[k * c_in * c_out..(k + 1) * c_in * c_out];
            for (ci, &a) in xr.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (yv, &wv) in yr.iter_mut().zip(&wk[ci * c_out..(ci + 1) * c_out]) {
                    *yv += a * wv;
                }
            }
        }
    }
    y
}

/// Gradients of [`conv_forward`]; `dy` must be zero on padding rows.
/// `dx` is skipped when `need_dx` is false.
pub(crate) fn conv_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    grid: &Grid,
    kernel: (usize, usize),
    w: ArrayView3<f64>,
    mut dw: ArrayViewMut3<f64>,
    db: &mut ndarray::ArrayViewMut1<f64>,
    need_dx: bool,
) -> Option<Array2<f64>> {
    *db += &dy.sum_axis(Axis(0));
    let (c_in, c_out) = (w.shape()[1], w.shape()[2]);
    let offsets = tap_offsets(grid, kernel.0, kernel.1);
    let w = w.as_standard_layout();
    let ws = w.as_slice().expect("standard layout");
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let dy = dy.as_standard_layout();
    let dys = dy.as_slice().expect("standard layout");
    // [tap, c_out, c_in] so that dx rows accumulate without reductions
    let wt = w
        .view()
        .permuted_axes([0, 2, 1])
        .as_standard_layout()
        .into_owned();
    let wts = wt.as_slice().expect("standard layout");
    let mut dws = vec![0.0; ws.len()];
    let mut dx = need_dx.then(|| vec![0.0; xs.len()]);
    for r in grid.interior() {
        let dyr = &dys[r * c_out..(r + 1) * c_out];
        for (k, &off) in offsets.iter().enumerate() {
            let src = (r as isize + off) as usize;
            let xr = &xs[src * c_in..(src + 1) * c_in];
            let base = k * c_in * c_out;
            for (ci, &a) in xr.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let dwr = &mut dws[base + ci * c_out..base + (ci + 1) * c_out];
                for (g, &d) in dwr.iter_mut().zip(dyr) {
                    *g += a * d;
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dxr = &mut dx[src * c_in..(src + 1) * c_in];
                for (co, &d) in dyr.iter().enumerate() {
                    for (g, &wv) in dxr
                        .iter_mut()
                        .zip(&wts[base + co * c_in..base + (co + 1) * c_in])
                    {
                        *g += d * wv;
                    }
                }
            }
        }
    }
    dw += &ArrayView3::from_shape(dw.raw_dim(), &dws).expect("weight shape");
    dx.map(|v| {
        let mut dx = Array2::from_shape_vec((xs.len() / c_in, c_in), v).expect("input shape");
        grid.zero_padding(&mut dx);
        dx
    })
}

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

pub(crate) struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_stats: bool,
}

/// Batch statistics of a forward pass, used to update running estimates.
pub(crate) struct BnStats {
    pub mean: Array1<f64>,
    pub var_unbiased: Array1<f64>,
}

/// Per-channel normalization over the interior rows of `grid`. With
/// `running = None` batch statistics are used.
pub(crate) fn bn_forward(
    x: &Array2<f64>,
    interior: &[usize],
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running: Option<(ArrayView1<f64>, ArrayView1<f64>)>,
) -> (Array2<f64>, BnCache, Option<BnStats>) {
    let c = x.ncols();
    let m = interior.len() as f64;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let row = |r: usize| &xs[r * c..(r + 1) * c];
    let (mean, var, stats) = match running {
        Some((rm, rv)) => (rm.to_owned(), rv.to_owned(), None),
        None => {
            let mut mean = vec![0.0; c];
            for &r in interior {
                for (acc, v) in mean.iter_mut().zip(row(r)) {
                    *acc += v;
                }
            }
            let mean = Array1::from(mean) / m;
            let mut var = vec![0.0; c];
            for &r in interior {
                for ((acc, v), mu) in var.iter_mut().zip(row(r)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            let var = Array1::from(var);
            let unbiased = &var / (m - 1.0).max(1.0);
            (
                mean.clone(),
                var / m,
                Some(BnStats {
                    mean,
                    var_unbiased: unbiased,
                }),
            )
        }
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let (mean_s, inv_s) = (mean.to_vec(), inv_std.to_vec());
    let (gamma, beta) = (gamma.to_vec(), beta.to_vec());
    let mut xhat = vec![0.0; xs.len()];
    let mut y = vec![0.0; xs.len()];
    for &r in interior {
        let span = r * c..(r + 1) * c;
        let (hr, yr) = (&mut xhat[span.clone()], &mut y[span]);
        for k in 0..c {
            hr[k] = (row(r)[k] - mean_s[k]) * inv_s[k];
            yr[k] = hr[k] * gamma[k] + beta[k];
        }
    }
    let shape = x.raw_dim();
    let xhat = Array2::from_shape_vec(shape, xhat).expect("same shape");
    let y = Array2::from_shape_vec(shape, y).expect("same shape");
    let batch_stats = stats.is_some();
    (
        y,
        BnCache {
            xhat,
            inv_std,
            batch_stats,
        },
        stats,
    )
}

pub(crate) fn bn_backward(
    dy: &Array2<f64>,
    interior: &[usize],
    cache: &BnCache,
    gamma: ArrayView1<f64>,
    dgamma: &mut ndarray::ArrayViewMut1<f64>,
    dbeta: &mut ndarray::ArrayViewMut1<f64>,
) -> Array2<f64> {
    let c = dy.ncols();
    let m = interior.len() as f64;
    let dy = dy.as_standard_layout();
    let ds = dy.as_slice().expect("standard layout");
    let hs = cache.xhat.as_slice().expect("standard layout");
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for &r in interior {
        let (d, h) = (&ds[r * c..(r + 1) * c], &hs[r * c..(r + 1) * c]);
        for k in 0..c {
            sum_dy[k] += d[k];
            sum_dy_xhat[k] += d[k] * h[k];
        }
    }
    for k in 0..c {
        dgamma[k] += sum_dy_xhat[k];
        dbeta[k] += sum_dy[k];
    }
    let scale: Vec<f64> = (0..c).map(|k| gamma[k] * cache.inv_std[k]).collect();
    let mut dx = vec![0.0; ds.len()];
    for &r in interior {
        let span = r * c..(r + 1) * c;
        let (d, h, out) = (&ds[span.clone()], &hs[span.clone()], &mut dx[span]);
        for k in 0..c {
            out[k] = if cache.batch_stats {
                (d[k] - sum_dy[k] / m - h[k] * sum_dy_xhat[k] / m) * scale[k]
            } else {
                d[k] * scale[k]
            };
        }
    }
    Array2::from_shape_vec(dy.raw_dim(), dx).expect("same shape")
}

pub(crate) fn relu(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `dy` where the ReLU output `y` is not positive.
pub(crate) fn relu_backward(dy: &mut Array2<f64>, y: &Array2<f64>) {
    ndarray::Zip::from(dy).and(y).for_each(|d, &y| {
        if y <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Max over adjacent pitch pairs; returns the output and which of each pair
/// won.
pub(crate) fn pool_forward(x: &Array2<f64>, grid: &Grid) -> (Array2<f64>, Grid, Vec<bool>) {
    let out = grid.with_p(grid.p / 2);
    let c = x.ncols();
    let mut y = Array2::zeros((out.rows(), c));
    let mut second = Vec::with_capacity(out.batch * out.n * out.p * c);
    for b in 0..grid.batch {
        for t in 0..grid.n {
            for q in 0..out.p {
                let (r0, r1) = (grid.row(b, t, 2 * q), grid.row(b, t, 2 * q + 1));
                let ro = out.row(b, t, q);
                for k in 0..c {
                    let (a, z) = (x[[r0, k]], x[[r1, k]]);
                    second.push(z > a);
                    y[[ro, k]] = a.max(z);
                }
            }
        }
    }
    (y, out, second)
}

pub(crate) fn pool_backward(
    dy: &Array2<f64>,
    grid: &Grid,
    out: &Grid,
    second: &[bool],
) -> Array2<f64> {
    let c = dy.ncols();
    let mut dx = Array2::zeros((grid.rows(), c));
    let mut idx = 0;
    for b in 0..grid.batch {
        for t in 0..grid.n {
            for q in 0..out.p {
                let ro = out.row(b, t, q);
                for k in 0..c {
                    let r = grid.row(b, t, 2 * q + second[idx] as usize);
                    dx[[r, k]] = dy[[ro, k]];
                    idx += 1;
                }
            }
        }
    }
    dx
}

/// Interior of a grid as one row per frame: `[batch * n, p * c]`.
pub(crate) fn flatten(x: &Array2<f64>, grid: &Grid) -> Array2<f64> {
    let c = x.ncols();
    let mut f = Array2::zeros((grid.batch * grid.n, grid.p * c));
    for b in 0..grid.batch {
        for t in 0..grid.n {
            let r = grid.row(b, t, 0);
            let block = x.slice(s![r..r + grid.p, ..]);
            let mut dst = f.row_mut(b * grid.n + t);
            for (q, row) in block.rows().into_iter().enumerate() {
                dst.slice_mut(s![q * c..(q + 1) * c]).assign(&row);
            }
        }
    }
    f
}

pub(crate) fn unflatten(df: &Array2<f64>, grid: &Grid, c: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((grid.rows(), c));
    for b in 0..grid.batch {
        for t in 0..grid.n {
            let r = grid.row(b, t, 0);
            let src = df.row(b * grid.n + t);
            for q in 0..grid.p {
                dx.row_mut(r + q).assign(&src.slice(s![q * c..(q + 1) * c]));
            }
        }
    }
    dx
}

pub(crate) fn dense_forward(
    x: &Array2<f64>,
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub(crate) fn dense_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: ArrayView2<f64>,
    dw: &mut ndarray::ArrayViewMut2<f64>,
    db: &mut ndarray::ArrayViewMut1<f64>,
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - rate)`.
pub(crate) fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
