use serde::{Deserialize, Serialize};

use super::{
    mrmsdtw_with_band, sync_features_from_audio, sync_features_from_notes, CostConfig, DlncoConfig,
    StepSet, WarpPath, BAND_HALF_WIDTH,
};
use crate::error::{Error, Result};
use crate::features::AudioBuffer;
use crate::symbolic::{Note, NoteSequence};

/// Notes shorter than this after warping are lengthened.
const MIN_WARPED_DURATION: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwConfig {
    pub cost: CostConfig,
    pub dlnco: DlncoConfig,
    pub memory_budget: usize,
    pub band_half_width: usize,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            cost: CostConfig::default(),
            dlnco: DlncoConfig::default(),
            memory_budget: 1_000_000,
            band_half_width: BAND_HALF_WIDTH,
        }
    }
}

/// Target frame as a function of (fractional) source frame: mean target
/// frame per source frame on the path, linearly interpolated across source
/// frames the path skips.
struct FrameMap {
    targets: Vec<f64>,
    slope_tail: f64,
}

impl FrameMap {
    fn new(path: &WarpPath) -> Result<Self> {
        let n = path
            .pairs
            .last()
            .ok_or_else(|| Error::invalid("empty warping path"))?
            .0
            + 1;
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for &(i, j) in &path.pairs {
            sum[i] += j as f64;
            count[i] += 1;
        }
        let known: Vec<usize> = (0..n).filter(|&i| count[i] > 0).collect();
        let mut targets = vec![0.0; n];
        for &i in &known {
            targets[i] = sum[i] / count[i] as f64;
        }
        for w in known.windows(2) {
            let (p, q) = (w[0], w[1]);
            for i in p + 1..q {
                let f = (i - p) as f64 / (q - p) as f64;
                targets[i] = targets[p] + f * (targets[q] - targets[p]);
            }
        }
        Ok(FrameMap {
            targets,
            slope_tail: path.target_fps as f64 / path.source_fps as f64,
        })
    }

    /// Maps `x`, reporting whether it had to be clamped. Frame `N - 1`
    /// extends one frame further at the nominal rate ratio.
    fn map(&self, x: f64) -> (f64, bool) {
        let last = (self.targets.len() - 1) as f64;
        if x < 0.0 {
            return (self.targets[0], x < -1e-9);
        }
        if x >= last {
            let over = x - last;
            return (
                self.targets[self.targets.len() - 1] + over.min(1.0) * self.slope_tail,
                over > 1.0 + 1e-9,
            );
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        (
            self.targets[i] + f * (self.targets[i + 1] - self.targets[i]),
            false,
        )
    }
}

/// Moves every note boundary from the source (MIDI) axis to the target
/// (audio) axis of `path`.
pub fn apply_warp(seq: &NoteSequence, path: &WarpPath) -> Result<NoteSequence> {
    let map = FrameMap::new(path)?;
    let (fs, ft) = (path.source_fps as f64, path.target_fps as f64);
    let mut clamped = 0usize;
    let mut warp = |t: f64| {
        let (y, c) = map.map(t * fs);
        clamped += c as usize;
        y / ft
    };
    let notes: Vec<Note> = seq
        .notes()
        .iter()
        .map(|n| {
            let onset = warp(n.onset);
            let offset = warp(n.offset).max(onset + MIN_WARPED_DURATION);
            Note {
                onset,
                offset,
                ..*n
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} note boundaries fell outside the warping path and were clamped");
    }
    let m = path.pairs.last().map_or(0, |p| p.1 + 1);
    NoteSequence::new(notes, m as f64 / ft)
}

/// Slopes of the weighted step set are limited to [1/2, 2].
fn reachable_with_bounded_slope(n: usize, m: usize) -> bool {
    n == m || (n >= 2 && m >= 2 && n - 1 <= 2 * (m - 1) && m - 1 <= 2 * (n - 1))
}

/// Aligns a note sequence to a recording by multiscale DTW and returns the
/// warped sequence with the path used.
pub fn align_notes(
    seq: &NoteSequence,
    audio: &AudioBuffer,
    cfg: &DtwConfig,
) -> Result<(NoteSequence, WarpPath)> {
    let source = sync_features_from_notes(seq, &cfg.dlnco)?;
    let target = sync_features_from_audio(audio, &cfg.dlnco)?;
    let (n, m) = (source.n_frames(), target.n_frames());
    let mut cost = cfg.cost.clone();
    if cost.steps == StepSet::weighted() && !reachable_with_bounded_slope(n, m) {
        log::warn!("length ratio {n}:{m} exceeds the step-set slope limits; using classic steps");
        cost.steps = StepSet::classic();
    }
    let path = mrmsdtw_with_band(
        &source,
        &target,
        &cost,
        cfg.memory_budget,
        cfg.band_half_width,
    )?;
    Ok((apply_warp(seq, &path)?, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::scale_tempo;
    use crate::evaluate::{accuracy_report, onset_errors};
    use crate::features::render_notes_to_audio;

    fn path(pairs: Vec<(usize, usize)>) -> WarpPath {
        WarpPath {
            pairs,
            source_fps: 50,
            target_fps: 50,
        }
    }

    fn seq() -> NoteSequence {
        NoteSequence::from_tuples(&[(60, 0.1, 0.5), (64, 0.4, 0.9), (67, 1.0, 1.9)], 2.0).unwrap()
    }

    #[test]
    fn identity_path_leaves_notes_unchanged() {
        let s = seq();
        let w = apply_warp(&s, &path((0..100).map(|i| (i, i)).collect())).unwrap();
        for (a, b) in s.notes().iter().zip(w.notes()) {
            assert!((a.onset - b.onset).abs() < 1e-12 && (a.offset - b.offset).abs() < 1e-12);
            assert_eq!(a.id, b.id);
        }
    }

    #[test]
    fn uniform_stretch_doubles_times() {
        let s = seq();
        let w = apply_warp(&s, &path((0..100).map(|i| (i, 2 * i)).collect())).unwrap();
        for (a, b) in s.notes().iter().zip(w.notes()) {
            assert!((2.0 * a.onset - b.onset).abs() < 1e-9);
        }
    }

    #[test]
    fn plateau_maps_to_mean_target() {
        let pairs = vec![
            (0, 0),
            (1, 1),
            (2, 2),
            (2, 3),
            (2, 4),
            (2, 5),
            (3, 6),
            (4, 7),
        ];
        let s = NoteSequence::from_tuples(&[(60, 2.0 / 50.0, 4.0 / 50.0)], 0.0).unwrap();
        let w = apply_warp(&s, &path(pairs)).unwrap();
        assert!((w.notes()[0].onset * 50.0 - 3.5).abs() < 1e-9);
        assert!((w.notes()[0].offset * 50.0 - 7.0).abs() < 1e-9);
    }

    #[test]
    fn skipped_source_frames_are_interpolated() {
        let pairs = vec![(0, 0), (2, 1), (4, 2)];
        let s = NoteSequence::from_tuples(&[(60, 1.0 / 50.0, 3.0 / 50.0)], 0.0).unwrap();
        let w = apply_warp(&s, &path(pairs)).unwrap();
        assert!((w.notes()[0].onset * 50.0 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn warped_order_is_preserved_per_pitch() {
        let s = NoteSequence::from_tuples(
            &[
                (60, 0.1, 0.2),
                (60, 0.3, 0.4),
                (60, 0.5, 0.9),
                (62, 0.2, 0.3),
            ],
            1.0,
        )
        .unwrap();
        let pairs: Vec<(usize, usize)> = (0..50).map(|i| (i, i + i / 3)).collect();
        let w = apply_warp(&s, &path(pairs)).unwrap();
        let onsets: Vec<f64> = w
            .notes()
            .iter()
            .filter(|n| n.pitch == 60)
            .map(|n| n.onset)
            .collect();
        assert!(onsets.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn dtw_corrects_a_tempo_change() {
        let notes: Vec<(u8, f64, f64)> = (0..16)
            .map(|k| {
                (
                    55 + (k * 5 % 17) as u8,
                    0.25 + 0.5 * k as f64,
                    0.6 + 0.5 * k as f64,
                )
            })
            .collect();
        let aligned = NoteSequence::from_tuples(&notes, 8.5).unwrap();
        let audio = render_notes_to_audio(&aligned, 16_000);
        let unaligned = scale_tempo(&aligned, 1.1).unwrap();
        let (warped, p) = align_notes(&unaligned, &audio, &DtwConfig::default()).unwrap();
        assert_eq!(p.source_fps, 50);
        let before = accuracy_report(&onset_errors(&unaligned, &aligned).unwrap()).unwrap();
        let after = accuracy_report(&onset_errors(&warped, &aligned).unwrap()).unwrap();
        assert!(
            after.mean < before.mean / 3.0,
            "{} vs {}",
            after.mean,
            before.mean
        );
    }
}
