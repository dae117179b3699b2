//! DTW baseline: chroma and decaying onset features, full and multiscale
//! DTW, and transfer of note times along a warping path.

mod features;
mod multiscale;
mod warp;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use features::{
    chroma_from_features, dlnco_from_features, sync_features_from_audio, sync_features_from_notes,
    DlncoConfig, SYNC_FPS,
};
pub use multiscale::{mrmsdtw, mrmsdtw_with_band, BAND_HALF_WIDTH, MIN_MEMORY_BUDGET};
pub use warp::{align_notes, apply_warp, DtwConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub di: usize,
    pub dj: usize,
    pub weight: f64,
}

/// Allowed predecessor steps in the order they are tried; on equal cost the
/// earlier step wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSet {
    pub steps: Vec<Step>,
}

impl StepSet {
    /// `(1,1)` weighted 2, `(1,2)` and `(2,1)` weighted 1.5. Slopes are
    /// bounded to [1/2, 2], so the sequence lengths may differ at most by
    /// that ratio.
    pub fn weighted() -> Self {
        StepSet {
            steps: vec![
                Step {
                    di: 1,
                    dj: 1,
                    weight: 2.0,
                },
                Step {
                    di: 1,
                    dj: 2,
                    weight: 1.5,
                },
                Step {
                    di: 2,
                    dj: 1,
                    weight: 1.5,
                },
            ],
        }
    }

    /// `(1,1)` weighted 2, `(1,0)` and `(0,1)` weighted 1; reaches every cell.
    pub fn classic() -> Self {
        StepSet {
            steps: vec![
                Step {
                    di: 1,
                    dj: 1,
                    weight: 2.0,
                },
                Step {
                    di: 1,
                    dj: 0,
                    weight: 1.0,
                },
                Step {
                    di: 0,
                    dj: 1,
                    weight: 1.0,
                },
            ],
        }
    }

    pub fn transposed(&self) -> Self {
        StepSet {
            steps: self
                .steps
                .iter()
                .map(|s| Step {
                    di: s.dj,
                    dj: s.di,
                    weight: s.weight,
                })
                .collect(),
        }
    }

    fn find(&self, di: usize, dj: usize) -> Option<&Step> {
        self.steps.iter().find(|s| s.di == di && s.dj == dj)
    }

    fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::config("step set is empty"));
        }
        for s in &self.steps {
            if s.di + s.dj == 0 || s.di > 2 || s.dj > 2 {
                return Err(Error::config(format!(
                    "unsupported step ({}, {})",
                    s.di, s.dj
                )));
            }
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(Error::config(format!("bad step weight {}", s.weight)));
            }
        }
        Ok(())
    }
}

impl Default for StepSet {
    fn default() -> Self {
        StepSet::weighted()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

/// Local cost `chroma_weight * d(chroma) + onset_weight * euclid(onset)`,
/// where `d` is `1 - cos` or the Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub steps: StepSet,
    pub metric: Metric,
    pub chroma_weight: f64,
    pub onset_weight: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            steps: StepSet::weighted(),
            metric: Metric::Cosine,
            chroma_weight: 1.0,
            onset_weight: 1.0,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        self.steps.validate()?;
        let w = [self.chroma_weight, self.onset_weight];
        if w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || w.iter().all(|&w| w == 0.0) {
            return Err(Error::config(format!(
                "cost weights must be non-negative and not all zero, got {w:?}"
            )));
        }
        Ok(())
    }
}

/// Features of one sequence for synchronization: a chroma block and an
/// optional onset block with the same number of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncFeatures {
    pub chroma: FeatureMatrix,
    pub onset: Option<FeatureMatrix>,
}

impl SyncFeatures {
    pub fn new(chroma: FeatureMatrix, onset: Option<FeatureMatrix>) -> Result<Self> {
        if let Some(o) = &onset {
            if o.n_frames() != chroma.n_frames() {
                return Err(Error::invalid(format!(
                    "chroma has {} frames but onset features {}",
                    chroma.n_frames(),
                    o.n_frames()
                )));
            }
        }
        Ok(SyncFeatures { chroma, onset })
    }

    pub fn chroma_only(chroma: FeatureMatrix) -> Self {
        SyncFeatures {
            chroma,
            onset: None,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.chroma.n_frames()
    }

    pub fn fps(&self) -> u32 {
        self.chroma.fps
    }

    pub fn downsample(&self, factor: usize) -> SyncFeatures {
        SyncFeatures {
            chroma: self.chroma.downsample(factor),
            onset: self.onset.as_ref().map(|o| o.downsample(factor)),
        }
    }
}

/// Monotone correspondence between source frames `i` and target frames `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub source_fps: u32,
    pub target_fps: u32,
}

impl WarpPath {
    /// Checks endpoints and that every step belongs to `steps`.
    pub fn validate(&self, n: usize, m: usize, steps: &StepSet) -> Result<()> {
        let (first, last) = match (self.pairs.first(), self.pairs.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::invalid("empty warping path")),
        };
        if first != (0, 0) || last != (n - 1, m - 1) {
            return Err(Error::invalid(format!(
                "path runs from {first:?} to {last:?}, expected (0, 0) to ({}, {})",
                n - 1,
                m - 1
            )));
        }
        for w in self.pairs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.0 < a.0 || b.1 < a.1 || steps.find(b.0 - a.0, b.1 - a.1).is_none() {
                return Err(Error::invalid(format!("illegal step {a:?} -> {b:?}")));
            }
        }
        Ok(())
    }

    /// Writes the pairs as CSV with columns `i,j`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j"])?;
        for (i, j) in &self.pairs {
            w.serialize((i, j))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Row-major contiguous copy of a feature block with per-row L2 norms.
struct Block {
    data: Vec<f64>,
    dims: usize,
    norms: Vec<f64>,
}

impl Block {
    fn new(m: &FeatureMatrix) -> Self {
        let dims = m.values.ncols();
        let data: Vec<f64> = m.values.iter().copied().collect();
        let norms = data
            .chunks(dims.max(1))
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Block { data, dims, norms }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Local cost evaluator for one pair of feature sequences.
pub(crate) struct CostContext {
    a_chroma: Block,
    b_chroma: Block,
    onsets: Option<(Block, Block)>,
    metric: Metric,
    chroma_weight: f64,
    onset_weight: f64,
    pub(crate) n: usize,
    pub(crate) m: usize,
}

impl CostContext {
    pub(crate) fn new(a: &SyncFeatures, b: &SyncFeatures, cfg: &CostConfig) -> Result<Self> {
        cfg.validate()?;
        if a.n_frames() == 0 || b.n_frames() == 0 {
            return Err(Error::invalid("DTW needs non-empty feature sequences"));
        }
        if a.chroma.values.ncols() != b.chroma.values.ncols() {
            return Err(Error::invalid("chroma blocks differ in width"));
        }
        let onsets = match (&a.onset, &b.onset) {
            (Some(x), Some(y)) => {
                if x.values.ncols() != y.values.ncols() {
                    return Err(Error::invalid("onset blocks differ in width"));
                }
                Some((Block::new(x), Block::new(y)))
            }
            (None, None) => None,
            _ => return Err(Error::invalid("onset features present on one side only")),
        };
        Ok(CostContext {
            a_chroma: Block::new(&a.chroma),
            b_chroma: Block::new(&b.chroma),
            onsets,
            metric: cfg.metric,
            chroma_weight: cfg.chroma_weight,
            onset_weight: cfg.onset_weight,
            n: a.n_frames(),
            m: b.n_frames(),
        })
    }

    pub(crate) fn cost(&self, i: usize, j: usize) -> f64 {
        let (x, y) = (self.a_chroma.row(i), self.b_chroma.row(j));
        let d = match self.metric {
            Metric::Cosine => {
                let (nx, ny) = (self.a_chroma.norms[i], self.b_chroma.norms[j]);
                let cos = if nx == 0.0 && ny == 0.0 {
                    1.0
                } else if nx == 0.0 || ny == 0.0 {
                    0.0
                } else {
                    x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (nx * ny)
                };
                1.0 - cos
            }
            Metric::Euclidean => euclidean(x, y),
        };
        let mut c = self.chroma_weight * d;
        if let Some((oa, ob)) = &self.onsets {
            c += self.onset_weight * euclidean(oa.row(i), ob.row(j));
        }
        c
    }
}

/// Per-row admissible column ranges `lo[i]..hi[i]`.
pub(crate) struct Band {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl Band {
    pub(crate) fn full(n: usize, m: usize) -> Self {
        Band {
            lo: vec![0; n],
            hi: vec![m; n],
        }
    }

    pub(crate) fn from_ranges(lo: Vec<usize>, hi: Vec<usize>) -> Self {
        Band { lo, hi }
    }

    pub(crate) fn cells(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h.saturating_sub(*l))
            .sum()
    }
}

/// Dynamic program restricted to a band. Returns the path and its
/// accumulated cost.
pub(crate) fn dtw_banded(
    ctx: &CostContext,
    band: &Band,
    steps: &StepSet,
) -> Result<(Vec<(usize, usize)>, f64)> {
    let (n, m) = (ctx.n, ctx.m);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    for i in 0..n {
        offsets.push(offsets[i] + band.hi[i].saturating_sub(band.lo[i]));
    }
    let total = offsets[n];
    let mut acc = vec![f64::INFINITY; total];
    let mut choice = vec![u8::MAX; total];
    let index = |i: usize, j: usize| -> Option<usize> {
        (j >= band.lo[i] && j < band.hi[i]).then(|| offsets[i] + j - band.lo[i])
    };
    for i in 0..n {
        for j in band.lo[i]..band.hi[i].min(m) {
            let c = ctx.cost(i, j);
            let here = offsets[i] + j - band.lo[i];
            if i == 0 && j == 0 {
                acc[here] = c;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = u8::MAX;
            for (k, s) in steps.steps.iter().enumerate() {
                if i < s.di || j < s.dj {
                    continue;
                }
                if let Some(p) = index(i - s.di, j - s.dj) {
                    let v = acc[p] + s.weight * c;
                    if v < best {
                        best = v;
                        arg = k as u8;
                    }
                }
            }
            acc[here] = best;
            choice[here] = arg;
        }
    }
    let end = index(n - 1, m - 1)
        .filter(|&e| acc[e].is_finite())
        .ok_or_else(|| {
            Error::invalid(format!(
                "end cell ({}, {}) unreachable under the step set",
                n - 1,
                m - 1
            ))
        })?;
    let cost = acc[end];
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let k = choice[index(i, j).expect("cell on path lies in band")];
        let s = &steps.steps[k as usize];
        i -= s.di;
        j -= s.dj;
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok((pairs, cost))
}

/// Globally optimal DTW of `a` (source) against `b` (target).
pub fn dtw_full(a: &SyncFeatures, b: &SyncFeatures, cfg: &CostConfig) -> Result<(WarpPath, f64)> {
    let ctx = CostContext::new(a, b, cfg)?;
    let (pairs, cost) = dtw_banded(&ctx, &Band::full(ctx.n, ctx.m), &cfg.steps)?;
    Ok((
        WarpPath {
            pairs,
            source_fps: a.fps(),
            target_fps: b.fps(),
        },
        cost,
    ))
}

/// Accumulated cost of an arbitrary path under the same recursion as
/// [`dtw_full`].
pub fn path_cost(
    path: &WarpPath,
    a: &SyncFeatures,
    b: &SyncFeatures,
    cfg: &CostConfig,
) -> Result<f64> {
    let ctx = CostContext::new(a, b, cfg)?;
    path.validate(ctx.n, ctx.m, &cfg.steps)?;
    let mut total = ctx.cost(0, 0);
    for w in path.pairs.windows(2) {
        let (p, q) = (w[0], w[1]);
        let s = cfg
            .steps
            .find(q.0 - p.0, q.1 - p.1)
            .expect("validated step");
        total += s.weight * ctx.cost(q.0, q.1);
    }
    Ok(total)
}
