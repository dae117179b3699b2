use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::SyncFeatures;
use crate::error::{Error, Result};
use crate::features::{
    compute_cqt, log_scale, render_notes_to_audio, AudioBuffer, CqtParams, FeatureKind,
    FeatureMatrix, PIPELINE_SAMPLE_RATE,
};
use crate::symbolic::{NoteSequence, MIN_PITCH, NUM_PITCHES};

/// Frame rate at which sequences are synchronized.
pub const SYNC_FPS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlncoConfig {
    /// Floor for the local normalization.
    pub epsilon: f64,
    /// Length of the normalization window in seconds.
    pub window_seconds: f64,
    /// Causal decay kernel applied along time.
    pub kernel: Vec<f64>,
}

impl Default for DlncoConfig {
    fn default() -> Self {
        DlncoConfig {
            epsilon: 1e-4,
            window_seconds: 1.0,
            kernel: vec![1.0, 0.8, 0.6, 0.4, 0.2],
        }
    }
}

fn check_88(feat: &FeatureMatrix) -> Result<()> {
    if feat.values.ncols() != NUM_PITCHES {
        return Err(Error::invalid(format!(
            "expected {NUM_PITCHES} pitch bins, got {}",
            feat.values.ncols()
        )));
    }
    Ok(())
}

fn pitch_class(bin: usize) -> usize {
    (bin + MIN_PITCH as usize) % 12
}

fn fold(values: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((values.nrows(), 12));
    for ((t, k), v) in values.indexed_iter() {
        out[[t, pitch_class(k)]] += v;
    }
    out
}

/// Folds 88 pitch bins to 12 pitch classes and L2-normalizes each frame;
/// silent frames become the uniform vector.
pub fn chroma_from_features(feat: &FeatureMatrix) -> Result<FeatureMatrix> {
    check_88(feat)?;
    let mut chroma = fold(&feat.values);
    let uniform = 1.0 / 12f64.sqrt();
    for mut row in chroma.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            row.fill(uniform);
        } else {
            row /= norm;
        }
    }
    FeatureMatrix::new(chroma, feat.fps, FeatureKind::Chroma)
}

/// Decaying locally normalized chroma onsets: rectified temporal difference
/// per bin, folded to pitch classes, divided by the largest frame norm in a
/// centered window, then smeared forward in time by the decay kernel.
pub fn dlnco_from_features(feat: &FeatureMatrix, cfg: &DlncoConfig) -> Result<FeatureMatrix> {
    check_88(feat)?;
    if cfg.kernel.is_empty() || !(cfg.epsilon > 0.0) || !(cfg.window_seconds > 0.0) {
        return Err(Error::config(
            "DLNCO needs a kernel, epsilon > 0 and a positive window",
        ));
    }
    let n = feat.n_frames();
    let mut diff = Array2::zeros(feat.values.raw_dim());
    for t in 1..n {
        for k in 0..NUM_PITCHES {
            diff[[t, k]] = (feat.values[[t, k]] - feat.values[[t - 1, k]]).max(0.0);
        }
    }
    let folded = fold(&diff);
    let norms: Vec<f64> = folded
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let half = ((cfg.window_seconds * feat.fps as f64) / 2.0).round() as usize;
    let mut normalized = folded.clone();
    for t in 0..n {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(n);
        let local = norms[lo..hi].iter().fold(cfg.epsilon, |m, &x| m.max(x));
        normalized.row_mut(t).mapv_inplace(|v| v / local);
    }
    let mut out = Array2::zeros(normalized.raw_dim());
    for t in 0..n {
        for (d, w) in cfg.kernel.iter().enumerate() {
            if d > t {
                break;
            }
            let src = normalized.row(t - d).to_owned();
            out.row_mut(t).scaled_add(*w, &src);
        }
    }
    FeatureMatrix::new(out, feat.fps, FeatureKind::Dlnco)
}

/// Chroma and onset features at [`SYNC_FPS`] from the log-compressed CQT of
/// `audio`.
pub fn sync_features_from_audio(audio: &AudioBuffer, dlnco: &DlncoConfig) -> Result<SyncFeatures> {
    let audio = if audio.sample_rate == PIPELINE_SAMPLE_RATE {
        audio.clone()
    } else {
        crate::features::resample(audio, PIPELINE_SAMPLE_RATE)?
    };
    let cqt = log_scale(&compute_cqt(&audio, &CqtParams::default())?)?;
    let factor = (cqt.fps / SYNC_FPS) as usize;
    let cqt = cqt.downsample(factor);
    SyncFeatures::new(
        chroma_from_features(&cqt)?,
        Some(dlnco_from_features(&cqt, dlnco)?),
    )
}

/// Same features for a note sequence, computed from its synthesized
/// rendering so both sides share one spectral model.
pub fn sync_features_from_notes(seq: &NoteSequence, dlnco: &DlncoConfig) -> Result<SyncFeatures> {
    let audio = render_notes_to_audio(seq, PIPELINE_SAMPLE_RATE);
    if audio.is_empty() {
        return Err(Error::invalid("note sequence has zero duration"));
    }
    sync_features_from_audio(&audio, dlnco)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(active: &[u8]) -> FeatureMatrix {
        let mut v = Array2::zeros((1, 88));
        for p in active {
            v[[0, (*p - MIN_PITCH) as usize]] = 1.0;
        }
        FeatureMatrix::new(v, 100, FeatureKind::Cqt).unwrap()
    }

    #[test]
    fn chroma_fold() {
        let c = chroma_from_features(&frame(&[60])).unwrap();
        assert_eq!(c.values[[0, 0]], 1.0);
        assert_eq!(c.values.sum(), 1.0);
        let triad = chroma_from_features(&frame(&[60, 64, 67])).unwrap();
        let active: Vec<usize> = (0..12).filter(|&k| triad.values[[0, k]] > 0.0).collect();
        assert_eq!(active, vec![0, 4, 7]);
        let silent = chroma_from_features(&frame(&[])).unwrap();
        let norm = silent.values.row(0).dot(&silent.values.row(0)).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(silent.values.iter().all(|&v| v == silent.values[[0, 0]]));
    }

    #[test]
    fn dlnco_constant_input_is_zero() {
        let v = Array2::from_elem((20, 88), 0.7);
        let f = FeatureMatrix::new(v, 50, FeatureKind::Cqt).unwrap();
        let d = dlnco_from_features(&f, &DlncoConfig::default()).unwrap();
        assert!(d.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dlnco_step_response_follows_kernel() {
        let (n, f0) = (30, 10);
        let mut v = Array2::zeros((n, 88));
        for t in f0..n {
            v[[t, 39]] = 1.0; // pitch 60
        }
        let f = FeatureMatrix::new(v, 50, FeatureKind::Cqt).unwrap();
        let cfg = DlncoConfig::default();
        let d = dlnco_from_features(&f, &cfg).unwrap();
        for t in 0..n {
            let want = if (f0..f0 + 5).contains(&t) {
                cfg.kernel[t - f0]
            } else {
                0.0
            };
            assert_eq!(d.values[[t, 0]], want, "frame {t}");
            for k in 1..12 {
                assert_eq!(d.values[[t, k]], 0.0);
            }
        }
    }

    #[test]
    fn dlnco_simultaneous_onsets() {
        let mut v = Array2::zeros((10, 88));
        for t in 4..10 {
            v[[t, (60 - MIN_PITCH) as usize]] = 1.0;
            v[[t, (64 - MIN_PITCH) as usize]] = 0.5;
        }
        let f = FeatureMatrix::new(v, 50, FeatureKind::Cqt).unwrap();
        let d = dlnco_from_features(&f, &DlncoConfig::default()).unwrap();
        let active: Vec<usize> = (0..12).filter(|&k| d.values[[4, k]] > 0.0).collect();
        assert_eq!(active, vec![0, 4]);
    }

    #[test]
    fn note_features_at_sync_rate() {
        let seq = NoteSequence::from_tuples(&[(60, 0.2, 0.8), (67, 0.5, 1.5)], 2.0).unwrap();
        let f = sync_features_from_notes(&seq, &DlncoConfig::default()).unwrap();
        assert_eq!(f.fps(), SYNC_FPS);
        assert_eq!(f.n_frames(), 100);
        // strongest chroma class while only C sounds
        let row = f.chroma.values.row(20);
        let argmax = (0..12).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, 0);
    }
}
