use super::{dtw_banded, dtw_full, Band, CostConfig, CostContext, SyncFeatures, WarpPath};
use crate::error::{Error, Result};

/// Half-width in frames of the refinement band around a projected path.
pub const BAND_HALF_WIDTH: usize = 25;

pub const MIN_MEMORY_BUDGET: usize = 10_000;

/// Memory-restricted multiscale DTW: full DTW on features averaged by the
/// smallest power-of-two factor that fits `memory_budget` cells, then
/// repeated refinement at twice the resolution inside a band around the
/// projected path.
pub fn mrmsdtw(
    a: &SyncFeatures,
    b: &SyncFeatures,
    cfg: &CostConfig,
    memory_budget: usize,
) -> Result<WarpPath> {
    mrmsdtw_with_band(a, b, cfg, memory_budget, BAND_HALF_WIDTH)
}

pub fn mrmsdtw_with_band(
    a: &SyncFeatures,
    b: &SyncFeatures,
    cfg: &CostConfig,
    memory_budget: usize,
    half_width: usize,
) -> Result<WarpPath> {
    if memory_budget < MIN_MEMORY_BUDGET {
        return Err(Error::config(format!(
            "memory budget of {memory_budget} cells is below the minimum of {MIN_MEMORY_BUDGET}"
        )));
    }
    let (n, m) = (a.n_frames(), b.n_frames());
    if n.saturating_mul(m) <= memory_budget {
        return Ok(dtw_full(a, b, cfg)?.0);
    }
    let mut factor = 1usize;
    while n.div_ceil(factor) * m.div_ceil(factor) > memory_budget {
        factor *= 2;
    }
    log::debug!("mrmsdtw: {n}x{m} frames, coarsest factor {factor}");
    let (mut pairs, _) = dtw_full(&a.downsample(factor), &b.downsample(factor), cfg)?;
    let mut pairs = std::mem::take(&mut pairs.pairs);
    while factor > 1 {
        factor /= 2;
        let (fa, fb) = (a.downsample(factor), b.downsample(factor));
        let ctx = CostContext::new(&fa, &fb, cfg)?;
        let band = project(&pairs, ctx.n, ctx.m, half_width);
        log::trace!("mrmsdtw: factor {factor}, {} band cells", band.cells());
        pairs = dtw_banded(&ctx, &band, &cfg.steps)?.0;
    }
    Ok(WarpPath {
        pairs,
        source_fps: a.fps(),
        target_fps: b.fps(),
    })
}

/// Band at twice the resolution of `coarse`, dilated by `w` in both axes.
fn project(coarse: &[(usize, usize)], n: usize, m: usize, w: usize) -> Band {
    let mut lo = vec![usize::MAX; n];
    let mut hi = vec![0usize; n];
    for &(ci, cj) in coarse {
        let (i0, i1) = ((2 * ci).saturating_sub(w), (2 * ci + 1 + w).min(n - 1));
        let (j0, j1) = ((2 * cj).saturating_sub(w), (2 * cj + 2 + w).min(m));
        for i in i0..=i1 {
            lo[i] = lo[i].min(j0);
            hi[i] = hi[i].max(j1);
        }
    }
    for i in 0..n {
        if lo[i] == usize::MAX {
            lo[i] = 0;
            hi[i] = 0;
        }
    }
    Band::from_ranges(lo, hi)
}
