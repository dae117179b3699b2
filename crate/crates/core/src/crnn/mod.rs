//! Convolutional-recurrent network that maps an unaligned piano roll and a
//! spectrogram to the aligned piano roll.
//!
//! Each input goes through its own branch of three 3x3 convolutions (each
//! followed by batch normalization and ReLU, the last two by max pooling
//! over pitch) and a dense embedding. The two embeddings are concatenated
//! per frame and passed through a bidirectional recurrent layer and a dense
//! sigmoid head with one output per piano key.

mod layers;
mod params;
mod rnn;
mod store;
mod train;

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::NUM_PITCHES;
use layers::{BnCache, BnStats, Grid};
use rnn::{GruCache, LstmCache, RnnGrads, SeqShape};

pub use params::{Adam, AdamConfig, ParamSet, Tensor};
pub use store::{load_weights, save_weights, WeightStore, WEIGHT_FORMAT_VERSION};
pub use train::{
    bce_loss, bce_with_logits, train, write_training_log, EpochLog, TrainConfig, TrainOutcome,
    TrainingExample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnCell {
    Lstm,
    Gru,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub conv_filters: [usize; 3],
    /// Kernel extent in frames and pitch bins; both odd.
    pub kernel: [usize; 2],
    pub dense_embed: usize,
    pub rnn_hidden: usize,
    pub rnn_cell: RnnCell,
    pub dropout: f64,
    pub bidirectional: bool,
    /// Feed zeros instead of the piano roll, turning the model into a
    /// transcriber.
    pub blind_transcription: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_filters: [16, 16, 32],
            kernel: [3, 3],
            dense_embed: 256,
            rnn_hidden: 256,
            rnn_cell: RnnCell::Lstm,
            dropout: 0.5,
            bidirectional: true,
            blind_transcription: false,
        }
    }
}

/// Pitch bins left after the two pooling stages.
/// Initial activation probability of every output pitch.
pub const OUTPUT_PRIOR: f64 = 0.01;

pub const POOLED_PITCHES: usize = NUM_PITCHES / 4;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_filters.contains(&0) || self.dense_embed == 0 || self.rnn_hidden == 0 {
            return Err(Error::config("layer sizes must be positive"));
        }
        if self.kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::config(format!(
                "kernel extents must be odd, got {:?}",
                self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn embedding_size(&self) -> usize {
        2 * self.dense_embed
    }

    pub fn rnn_output_size(&self) -> usize {
        self.rnn_hidden * if self.bidirectional { 2 } else { 1 }
    }

    fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let [f1, f2, f3] = self.conv_filters;
        let taps = self.kernel[0] * self.kernel[1];
        let conv = |ci: usize, co: usize| taps * ci * co + co + 2 * co;
        let branch = conv(1, f1)
            + conv(f1, f2)
            + conv(f2, f3)
            + POOLED_PITCHES * f3 * self.dense_embed
            + self.dense_embed;
        let (h, i) = (self.rnn_hidden, self.embedding_size());
        let per_dir = match self.rnn_cell {
            RnnCell::Lstm => 4 * h * (i + h) + 4 * h,
            RnnCell::Gru => 3 * h * (i + h) + 6 * h,
        };
        2 * branch
            + self.directions() * per_dir
            + self.rnn_output_size() * NUM_PITCHES
            + NUM_PITCHES
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct BranchIdx {
    conv: [ConvIdx; 3],
    dense_w: usize,
    dense_b: usize,
}

#[derive(Debug, Clone, Copy)]
struct DirIdx {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: Option<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    branches: [BranchIdx; 2],
    dirs: Vec<DirIdx>,
    out_w: usize,
    out_b: usize,
}

/// Parameters (trainable) and buffers (batch-norm running statistics)
/// created in a fixed order with fixed names.
fn build_layout(cfg: &ModelConfig) -> (ParamSet, ParamSet, Layout) {
    let mut p = ParamSet::new();
    let mut buf = ParamSet::new();
    let taps = cfg.kernel[0] * cfg.kernel[1];
    let mut branch = |name: &str, p: &mut ParamSet| {
        let mut c_in = 1;
        let conv = cfg.conv_filters;
        let mut idx = Vec::new();
        for (l, &co) in conv.iter().enumerate() {
            let pre = format!("{name}.conv{}", l + 1);
            idx.push(ConvIdx {
                w: p.add(format!("{pre}.weight"), &[taps, c_in, co]),
                b: p.add(format!("{pre}.bias"), &[co]),
                gamma: p.add(format!("{pre}.bn.gamma"), &[co]),
                beta: p.add(format!("{pre}.bn.beta"), &[co]),
                mean: buf.add(format!("{pre}.bn.running_mean"), &[co]),
                var: buf.add(format!("{pre}.bn.running_var"), &[co]),
            });
            c_in = co;
        }
        BranchIdx {
            conv: [idx[0], idx[1], idx[2]],
            dense_w: p.add(
                format!("{name}.dense.weight"),
                &[POOLED_PITCHES * c_in, cfg.dense_embed],
            ),
            dense_b: p.add(format!("{name}.dense.bias"), &[cfg.dense_embed]),
        }
    };
    let branches = [branch("roll", &mut p), branch("spec", &mut p)];
    let (h, i) = (cfg.rnn_hidden, cfg.embedding_size());
    let gates = match cfg.rnn_cell {
        RnnCell::Lstm => 4,
        RnnCell::Gru => 3,
    };
    let dirs = ["fwd", "bwd"][..cfg.directions()]
        .iter()
        .map(|d| DirIdx {
            w_ih: p.add(format!("rnn.{d}.w_ih"), &[i, gates * h]),
            w_hh: p.add(format!("rnn.{d}.w_hh"), &[h, gates * h]),
            b_ih: p.add(format!("rnn.{d}.b_ih"), &[gates * h]),
            b_hh: (cfg.rnn_cell == RnnCell::Gru)
                .then(|| p.add(format!("rnn.{d}.b_hh"), &[gates * h])),
        })
        .collect();
    let out_w = p.add("out.weight", &[cfg.rnn_output_size(), NUM_PITCHES]);
    let out_b = p.add("out.bias", &[NUM_PITCHES]);
    (
        p,
        buf,
        Layout {
            branches,
            dirs,
            out_w,
            out_b,
        },
    )
}

/// How a forward pass treats batch normalization and dropout.
pub(crate) struct Mode<'a> {
    pub batch_stats: bool,
    pub dropout: Option<&'a mut ChaCha8Rng>,
}

impl Mode<'_> {
    pub fn eval() -> Self {
        Mode {
            batch_stats: false,
            dropout: None,
        }
    }
}

struct ConvCache {
    input: Array2<f64>,
    bn: BnCache,
    /// Post-ReLU output.
    out: Array2<f64>,
    stats: Option<BnStats>,
}

struct BranchCache {
    grids: [Grid; 3],
    convs: Vec<ConvCache>,
    pool1: (Grid, Vec<bool>),
    pool2: (Grid, Vec<bool>),
    flat: Array2<f64>,
    /// Post-ReLU dense output before dropout.
    dense: Array2<f64>,
    mask: Option<Array2<f64>>,
}

enum DirCache {
    Lstm(LstmCache),
    Gru(GruCache),
}

pub(crate) struct ForwardCache {
    batch: usize,
    n: usize,
    branches: Vec<BranchCache>,
    embed: Array2<f64>,
    dirs: Vec<DirCache>,
    rnn_out: Array2<f64>,
    rnn_mask: Option<Array2<f64>>,
}

/// Model configuration plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Crnn {
    config: ModelConfig,
    params: ParamSet,
    buffers: ParamSet,
}

impl Crnn {
    /// Uniform initialization in `±1/sqrt(fan_in)` (recurrent weights in
    /// `±1/sqrt(hidden)`), batch-norm scale 1 and shift 0. Output biases
    /// start at the log-odds of [`OUTPUT_PRIOR`] so early updates are not
    /// dominated by pushing every pitch towards silence.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (mut params, mut buffers, layout) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden_bound = 1.0 / (config.rnn_hidden as f64).sqrt();
        let mut uniform = |t: &mut Tensor, bound: f64| {
            t.value.mapv_inplace(|_| rng.random_range(-bound..bound));
        };
        for branch in &layout.branches {
            for c in &branch.conv {
                let shape = params.tensors()[c.w].value.shape().to_vec();
                let bound = 1.0 / ((shape[0] * shape[1]) as f64).sqrt();
                uniform(&mut params.tensors_mut()[c.w], bound);
                uniform(&mut params.tensors_mut()[c.b], bound);
                params.tensors_mut()[c.gamma].value.fill(1.0);
                buffers.tensors_mut()[c.var].value.fill(1.0);
            }
            let bound = 1.0 / (params.tensors()[branch.dense_w].value.shape()[0] as f64).sqrt();
            uniform(&mut params.tensors_mut()[branch.dense_w], bound);
            uniform(&mut params.tensors_mut()[branch.dense_b], bound);
        }
        for d in &layout.dirs {
            for i in [Some(d.w_ih), Some(d.w_hh), Some(d.b_ih), d.b_hh]
                .into_iter()
                .flatten()
            {
                uniform(&mut params.tensors_mut()[i], hidden_bound);
            }
        }
        let bound = 1.0 / (config.rnn_output_size() as f64).sqrt();
        uniform(&mut params.tensors_mut()[layout.out_w], bound);
        let prior = (OUTPUT_PRIOR / (1.0 - OUTPUT_PRIOR)).ln();
        params.tensors_mut()[layout.out_b].value.fill(prior);
        Ok(Crnn {
            config,
            params,
            buffers,
        })
    }

    /// Assembles a model from stored tensors, checking names and shapes.
    pub fn from_parts(config: ModelConfig, params: ParamSet, buffers: ParamSet) -> Result<Self> {
        config.validate()?;
        let (want_p, want_b, _) = build_layout(&config);
        for (want, got) in [(&want_p, &params), (&want_b, &buffers)] {
            if want.len() != got.len() {
                return Err(Error::WeightLoad {
                    field: "tensors".into(),
                    message: format!("expected {} tensors, found {}", want.len(), got.len()),
                });
            }
            for (w, g) in want.tensors().iter().zip(got.tensors()) {
                if w.name != g.name || w.value.shape() != g.value.shape() {
                    return Err(Error::WeightLoad {
                        field: w.name.clone(),
                        message: format!(
                            "expected '{}' with shape {:?}, found '{}' with shape {:?}",
                            w.name,
                            w.value.shape(),
                            g.name,
                            g.value.shape()
                        ),
                    });
                }
            }
        }
        Ok(Crnn {
            config,
            params,
            buffers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn buffers(&self) -> &ParamSet {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut ParamSet {
        &mut self.buffers
    }

    fn layout(&self) -> Layout {
        build_layout(&self.config).2
    }

    fn check_inputs(roll: &Array3<f64>, feat: &Array3<f64>) -> Result<()> {
        if roll.dim() != feat.dim() {
            return Err(Error::invalid(format!(
                "piano roll {:?} and features {:?} differ in shape",
                roll.dim(),
                feat.dim()
            )));
        }
        if roll.shape()[2] != NUM_PITCHES || roll.shape()[1] == 0 {
            return Err(Error::invalid(format!(
                "inputs must be [batch, frames > 0, {NUM_PITCHES}], got {:?}",
                roll.dim()
            )));
        }
        Ok(())
    }

    fn branch_forward(
        &self,
        idx: &BranchIdx,
        input: &Array3<f64>,
        zero_input: bool,
        mode: &mut Mode,
    ) -> BranchCache {
        let (batch, n, p) = input.dim();
        let [kt, kp] = self.config.kernel;
        let g0 = Grid {
            batch,
            n,
            p,
            pad_t: kt / 2,
            pad_p: kp / 2,
        };
        let (g1, g2) = (g0.with_p(p / 2), g0.with_p(p / 4));
        let mut x = Array2::zeros((g0.rows(), 1));
        if !zero_input {
            for b in 0..batch {
                for t in 0..n {
                    let r = g0.row(b, t, 0);
                    x.slice_mut(s![r..r + p, 0])
                        .assign(&input.slice(s![b, t, ..]));
                }
            }
        }
        let mut convs = Vec::with_capacity(3);
        let mut run = |x: Array2<f64>, grid: &Grid, c: &ConvIdx, mode: &mut Mode| -> Array2<f64> {
            let z =
                layers::conv_forward(&x, grid, (kt, kp), self.params.v3(c.w), self.params.v1(c.b));
            let running =
                (!mode.batch_stats).then(|| (self.buffers.v1(c.mean), self.buffers.v1(c.var)));
            let interior = grid.interior();
            let (mut y, bn, stats) = layers::bn_forward(
                &z,
                &interior,
                self.params.v1(c.gamma),
                self.params.v1(c.beta),
                running,
            );
            layers::relu(&mut y);
            convs.push(ConvCache {
                input: x,
                bn,
                out: y.clone(),
                stats,
            });
            y
        };
        let a1 = run(x, &g0, &idx.conv[0], mode);
        let a2 = run(a1, &g0, &idx.conv[1], mode);
        let (p1, _, which1) = layers::pool_forward(&a2, &g0);
        let a3 = run(p1, &g1, &idx.conv[2], mode);
        let (p2, _, which2) = layers::pool_forward(&a3, &g1);
        let flat = layers::flatten(&p2, &g2);
        let mut dense = layers::dense_forward(
            &flat,
            self.params.v2(idx.dense_w),
            self.params.v1(idx.dense_b),
        );
        layers::relu(&mut dense);
        let mask = mode
            .dropout
            .as_deref_mut()
            .filter(|_| self.config.dropout > 0.0)
            .map(|rng| layers::dropout_mask(dense.dim(), self.config.dropout, rng));
        BranchCache {
            grids: [g0, g1, g2],
            convs,
            pool1: (g1, which1),
            pool2: (g2, which2),
            flat,
            dense,
            mask,
        }
    }

    fn branch_output(cache: &BranchCache) -> Array2<f64> {
        match &cache.mask {
            Some(m) => &cache.dense * m,
            None => cache.dense.clone(),
        }
    }

    /// Logits `[batch * n, 88]` (rows `b * n + t`) and everything needed
    /// for the backward pass.
    pub(crate) fn forward(
        &self,
        roll: &Array3<f64>,
        feat: &Array3<f64>,
        mode: &mut Mode,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        Self::check_inputs(roll, feat)?;
        let (batch, n, _) = roll.dim();
        let layout = self.layout();
        let rb = self.branch_forward(
            &layout.branches[0],
            roll,
            self.config.blind_transcription,
            mode,
        );
        let sb = self.branch_forward(&layout.branches[1], feat, false, mode);
        let d = self.config.dense_embed;
        let mut embed = Array2::zeros((batch * n, 2 * d));
        embed
            .slice_mut(s![.., ..d])
            .assign(&Self::branch_output(&rb));
        embed
            .slice_mut(s![.., d..])
            .assign(&Self::branch_output(&sb));

        let h = self.config.rnn_hidden;
        let mut rnn_out = Array2::zeros((batch * n, self.config.rnn_output_size()));
        let mut dirs = Vec::new();
        for (k, dir) in layout.dirs.iter().enumerate() {
            let shape = SeqShape {
                batch,
                n,
                reverse: k == 1,
            };
            let (w_ih, w_hh, b_ih) = (
                self.params.v2(dir.w_ih),
                self.params.v2(dir.w_hh),
                self.params.v1(dir.b_ih),
            );
            let (out, cache) = match self.config.rnn_cell {
                RnnCell::Lstm => {
                    let (o, c) = rnn::lstm_forward(&embed, shape, w_ih, w_hh, b_ih);
                    (o, DirCache::Lstm(c))
                }
                RnnCell::Gru => {
                    let b_hh = self.params.v1(dir.b_hh.expect("GRU recurrent bias"));
                    let (o, c) = rnn::gru_forward(&embed, shape, w_ih, w_hh, b_ih, b_hh);
                    (o, DirCache::Gru(c))
                }
            };
            rnn_out.slice_mut(s![.., k * h..(k + 1) * h]).assign(&out);
            dirs.push(cache);
        }
        let rnn_mask = mode
            .dropout
            .as_deref_mut()
            .filter(|_| self.config.dropout > 0.0)
            .map(|rng| layers::dropout_mask(rnn_out.dim(), self.config.dropout, rng));
        let head_in = match &rnn_mask {
            Some(m) => &rnn_out * m,
            None => rnn_out.clone(),
        };
        let logits = layers::dense_forward(
            &head_in,
            self.params.v2(layout.out_w),
            self.params.v1(layout.out_b),
        );
        Ok((
            logits,
            ForwardCache {
                batch,
                n,
                branches: vec![rb, sb],
                embed,
                dirs,
                rnn_out,
                rnn_mask,
            },
        ))
    }

    fn branch_backward(
        &self,
        idx: &BranchIdx,
        cache: &BranchCache,
        d_out: Array2<f64>,
        grads: &mut ParamSet,
    ) {
        let [kt, kp] = self.config.kernel;
        let mut d = match &cache.mask {
            Some(m) => d_out * m,
            None => d_out,
        };
        layers::relu_backward(&mut d, &cache.dense);
        let dflat = {
            let (dw, db) = two_mut(grads, idx.dense_w, idx.dense_b);
            let (mut dw, mut db) = (
                dw.view_mut().into_dimensionality().unwrap(),
                db.view_mut().into_dimensionality().unwrap(),
            );
            layers::dense_backward(
                &d,
                &cache.flat,
                self.params.v2(idx.dense_w),
                &mut dw,
                &mut db,
            )
        };
        let [g0, g1, g2] = cache.grids;
        let c3 = self.config.conv_filters[2];
        let dp2 = layers::unflatten(&dflat, &g2, c3);
        let da3 = layers::pool_backward(&dp2, &g1, &cache.pool2.0, &cache.pool2.1);
        let conv_back =
            |l: usize, grid: &Grid, mut da: Array2<f64>, grads: &mut ParamSet, need_dx: bool| {
                let c = &idx.conv[l];
                let cc = &cache.convs[l];
                layers::relu_backward(&mut da, &cc.out);
                let interior = grid.interior();
                let dz = {
                    let (dg, dbeta) = two_mut(grads, c.gamma, c.beta);
                    let (mut dg, mut dbeta) = (
                        dg.view_mut().into_dimensionality().unwrap(),
                        dbeta.view_mut().into_dimensionality().unwrap(),
                    );
                    layers::bn_backward(
                        &da,
                        &interior,
                        &cc.bn,
                        self.params.v1(c.gamma),
                        &mut dg,
                        &mut dbeta,
                    )
                };
                let (dw, db) = two_mut(grads, c.w, c.b);
                let (dw, mut db) = (
                    dw.view_mut().into_dimensionality().unwrap(),
                    db.view_mut().into_dimensionality().unwrap(),
                );
                layers::conv_backward(
                    &dz,
                    &cc.input,
                    grid,
                    (kt, kp),
                    self.params.v3(c.w),
                    dw,
                    &mut db,
                    need_dx,
                )
            };
        let dp1 = conv_back(2, &g1, da3, grads, true).expect("input gradient");
        let da2 = layers::pool_backward(&dp1, &g0, &cache.pool1.0, &cache.pool1.1);
        let da1 = conv_back(1, &g0, da2, grads, true).expect("input gradient");
        conv_back(0, &g0, da1, grads, false);
    }

    /// Parameter gradients for upstream logit gradients `dlogits`.
    pub(crate) fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> ParamSet {
        let layout = self.layout();
        let mut grads = self.params.zeros_like();
        let head_in = match &cache.rnn_mask {
            Some(m) => &cache.rnn_out * m,
            None => cache.rnn_out.clone(),
        };
        let mut d_rnn = {
            let (dw, db) = two_mut(&mut grads, layout.out_w, layout.out_b);
            let (mut dw, mut db) = (
                dw.view_mut().into_dimensionality().unwrap(),
                db.view_mut().into_dimensionality().unwrap(),
            );
            layers::dense_backward(
                dlogits,
                &head_in,
                self.params.v2(layout.out_w),
                &mut dw,
                &mut db,
            )
        };
        if let Some(m) = &cache.rnn_mask {
            d_rnn *= m;
        }
        let h = self.config.rnn_hidden;
        let mut d_embed = Array2::zeros(cache.embed.raw_dim());
        for (k, (dir, dcache)) in layout.dirs.iter().zip(&cache.dirs).enumerate() {
            let shape = SeqShape {
                batch: cache.batch,
                n: cache.n,
                reverse: k == 1,
            };
            let dh = d_rnn.slice(s![.., k * h..(k + 1) * h]).to_owned();
            let tensors = grads.tensors_mut();
            let mut picked = pick_mut(
                tensors,
                &[Some(dir.w_ih), Some(dir.w_hh), Some(dir.b_ih), dir.b_hh],
            );
            let b_hh = picked.pop().flatten();
            let b_ih = picked.pop().flatten().expect("b_ih");
            let w_hh = picked.pop().flatten().expect("w_hh");
            let w_ih = picked.pop().flatten().expect("w_ih");
            let mut rg = RnnGrads {
                w_ih: w_ih.view_mut().into_dimensionality().unwrap(),
                w_hh: w_hh.view_mut().into_dimensionality().unwrap(),
                b_ih: b_ih.view_mut().into_dimensionality().unwrap(),
                b_hh: b_hh.map(|b| b.view_mut().into_dimensionality().unwrap()),
            };
            let (pw_ih, pw_hh) = (self.params.v2(dir.w_ih), self.params.v2(dir.w_hh));
            let dx = match dcache {
                DirCache::Lstm(c) => {
                    rnn::lstm_backward(&dh, &cache.embed, shape, c, pw_ih, pw_hh, &mut rg)
                }
                DirCache::Gru(c) => {
                    rnn::gru_backward(&dh, &cache.embed, shape, c, pw_ih, pw_hh, &mut rg)
                }
            };
            d_embed += &dx;
        }
        let d = self.config.dense_embed;
        for (b, (idx, bc)) in layout.branches.iter().zip(&cache.branches).enumerate() {
            let part = d_embed.slice(s![.., b * d..(b + 1) * d]).to_owned();
            self.branch_backward(idx, bc, part, &mut grads);
        }
        grads
    }

    /// Moves batch-norm running statistics toward the batch statistics of a
    /// training forward pass.
    pub(crate) fn update_running_stats(&mut self, cache: &ForwardCache) {
        let layout = self.layout();
        for (idx, bc) in layout.branches.iter().zip(&cache.branches) {
            for (c, cc) in idx.conv.iter().zip(&bc.convs) {
                if let Some(st) = &cc.stats {
                    let m = layers::BN_MOMENTUM;
                    let mut rm = self.buffers.m1(c.mean);
                    rm.zip_mut_with(&st.mean, |r, &x| *r = (1.0 - m) * *r + m * x);
                    let mut rv = self.buffers.m1(c.var);
                    rv.zip_mut_with(&st.var_unbiased, |r, &x| *r = (1.0 - m) * *r + m * x);
                }
            }
        }
    }

    /// Evaluation-mode activations `[n, 88]` in (0, 1) for one sequence.
    pub fn infer(&self, roll: &Array2<f64>, feat: &Array2<f64>) -> Result<Array2<f64>> {
        let logits = self.infer_logits(roll, feat)?;
        Ok(logits.mapv(|z| layers::sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)))
    }

    pub fn infer_logits(&self, roll: &Array2<f64>, feat: &Array2<f64>) -> Result<Array2<f64>> {
        let (r, f) = (as_batch(roll), as_batch(feat));
        Ok(self.forward(&r, &f, &mut Mode::eval())?.0)
    }

    /// Mean BCE of a batch `[batch, n, 88]` against targets `[batch * n, 88]`
    /// without dropout; `batch_stats` selects batch statistics for batch
    /// normalization instead of the running estimates.
    pub fn loss(
        &self,
        roll: &Array3<f64>,
        feat: &Array3<f64>,
        target: &Array2<f64>,
        batch_stats: bool,
    ) -> Result<f64> {
        Ok(self.loss_and_gradients(roll, feat, target, batch_stats)?.0)
    }

    /// [`Crnn::loss`] together with its gradient for every parameter tensor.
    pub fn loss_and_gradients(
        &self,
        roll: &Array3<f64>,
        feat: &Array3<f64>,
        target: &Array2<f64>,
        batch_stats: bool,
    ) -> Result<(f64, ParamSet)> {
        let mut mode = Mode {
            batch_stats,
            dropout: None,
        };
        let (logits, cache) = self.forward(roll, feat, &mut mode)?;
        if target.dim() != logits.dim() {
            return Err(Error::invalid(format!(
                "target {:?} does not match output {:?}",
                target.dim(),
                logits.dim()
            )));
        }
        let (loss, dlogits) = bce_with_logits(&logits, target, None);
        Ok((loss, self.backward(&cache, &dlogits)))
    }

    /// Evaluation-mode concatenated branch embeddings `[n, 2 * dense_embed]`.
    pub fn embed(&self, roll: &Array2<f64>, feat: &Array2<f64>) -> Result<Array2<f64>> {
        let (r, f) = (as_batch(roll), as_batch(feat));
        Ok(self.forward(&r, &f, &mut Mode::eval())?.1.embed)
    }
}

/// Output probabilities are kept this far from 0 and 1.
const PROB_FLOOR: f64 = 1e-15;

fn as_batch(m: &Array2<f64>) -> Array3<f64> {
    m.clone().insert_axis(ndarray::Axis(0))
}

fn two_mut(
    p: &mut ParamSet,
    a: usize,
    b: usize,
) -> (&mut ndarray::ArrayD<f64>, &mut ndarray::ArrayD<f64>) {
    let mut v = pick_mut(p.tensors_mut(), &[Some(a), Some(b)]);
    let y = v.pop().flatten().expect("tensor");
    let x = v.pop().flatten().expect("tensor");
    (x, y)
}

/// Disjoint mutable borrows of tensor values by index.
fn pick_mut<'a>(
    tensors: &'a mut [Tensor],
    want: &[Option<usize>],
) -> Vec<Option<&'a mut ndarray::ArrayD<f64>>> {
    let mut slots: Vec<Option<&'a mut ndarray::ArrayD<f64>>> =
        (0..want.len()).map(|_| None).collect();
    for (i, t) in tensors.iter_mut().enumerate() {
        if let Some(k) = want.iter().position(|w| *w == Some(i)) {
            slots[k] = Some(&mut t.value);
        }
    }
    slots
}

#[cfg(test)]
mod tests;
