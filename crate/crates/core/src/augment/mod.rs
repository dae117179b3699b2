//! Loosely aligned MIDI generation and dataset assembly.

mod corpus;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{read_wav, write_wav, AudioBuffer};
use crate::symbolic::{
    parse_midi, quantize_to_ticks, segment_at_silence, write_midi, Note, NoteId, NoteSequence,
    TICKS_PER_SECOND,
};

pub use corpus::{synthetic_corpus, synthetic_piece, CorpusConfig};

/// Distribution of the per-boundary timing shift, always bounded by
/// `max_dev`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftDistribution {
    Uniform,
    /// Zero-mean normal with standard deviation `sigma_ratio * max_dev`,
    /// rejection-sampled to `[-max_dev, max_dev]`.
    TruncatedNormal {
        sigma_ratio: f64,
    },
}

impl Default for ShiftDistribution {
    fn default() -> Self {
        ShiftDistribution::TruncatedNormal {
            sigma_ratio: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Largest onset/offset shift in seconds.
    pub max_dev: f64,
    /// Tempo factors are drawn from `[1 - m, 1 + m]`; 0 disables scaling.
    pub max_tempo_factor: f64,
    pub seed: u64,
    /// Shortest note duration after shifting, in seconds.
    pub min_duration: f64,
    pub distribution: ShiftDistribution,
    /// Approximate segment length in seconds for [`build_dataset`].
    pub segment_len: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_dev: 0.100,
            max_tempo_factor: 0.0,
            seed: 0,
            min_duration: 0.010,
            distribution: ShiftDistribution::default(),
            segment_len: 30.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.max_dev) {
            return Err(Error::config(format!(
                "max_dev must lie in [0, 0.5] s, got {}",
                self.max_dev
            )));
        }
        if !(0.0..1.0).contains(&self.max_tempo_factor) {
            return Err(Error::config(format!(
                "max_tempo_factor must lie in [0, 1), got {}",
                self.max_tempo_factor
            )));
        }
        if !(self.min_duration > 0.0) {
            return Err(Error::config("min_duration must be positive"));
        }
        if let ShiftDistribution::TruncatedNormal { sigma_ratio } = self.distribution {
            if !(sigma_ratio > 0.0) {
                return Err(Error::config("sigma_ratio must be positive"));
            }
        }
        if !(self.segment_len > 0.0) {
            return Err(Error::config("segment_len must be positive"));
        }
        Ok(())
    }
}

fn draw_shift(cfg: &AugmentConfig, rng: &mut impl Rng) -> f64 {
    if cfg.max_dev == 0.0 {
        return 0.0;
    }
    match cfg.distribution {
        ShiftDistribution::Uniform => rng.random_range(-cfg.max_dev..=cfg.max_dev),
        ShiftDistribution::TruncatedNormal { sigma_ratio } => {
            let normal = Normal::new(0.0, sigma_ratio * cfg.max_dev).expect("positive sigma");
            loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= cfg.max_dev {
                    return x;
                }
            }
        }
    }
}

/// Shifts every onset and offset independently by a bounded random amount.
///
/// Negative onsets are clamped to zero and notes shorter than
/// `min_duration` are extended. Notes may change their relative order.
pub fn perturb_timing(
    seq: &NoteSequence,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<NoteSequence> {
    cfg.validate()?;
    let shifts: Vec<(f64, f64)> = seq
        .notes()
        .iter()
        .map(|_| (draw_shift(cfg, rng), draw_shift(cfg, rng)))
        .collect();
    apply_shifts(seq, &shifts, cfg.min_duration)
}

/// Applies explicit `(onset shift, offset shift)` pairs, one per note in
/// sequence order, with the clamping rules of [`perturb_timing`].
pub fn apply_shifts(
    seq: &NoteSequence,
    shifts: &[(f64, f64)],
    min_duration: f64,
) -> Result<NoteSequence> {
    if shifts.len() != seq.len() {
        return Err(Error::invalid("one shift pair per note is required"));
    }
    let notes = seq
        .notes()
        .iter()
        .zip(shifts)
        .map(|(n, &(d_on, d_off))| {
            let onset = (n.onset + d_on).max(0.0);
            let mut offset = n.offset + d_off;
            if offset - onset < min_duration {
                offset = onset + min_duration;
            }
            Note {
                onset,
                offset,
                ..*n
            }
        })
        .collect();
    NoteSequence::new(notes, seq.duration())
}

/// Multiplies every note time (and the duration) by `factor`.
pub fn scale_tempo(seq: &NoteSequence, factor: f64) -> Result<NoteSequence> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::invalid(format!(
            "tempo factor must be positive, got {factor}"
        )));
    }
    seq.map_notes(seq.duration() * factor, |n| Note {
        onset: n.onset * factor,
        offset: n.offset * factor,
        ..*n
    })
}

/// Draws a tempo factor uniformly from `[1 - max, 1 + max]`.
pub fn sample_tempo_factor(max_tempo_factor: f64, rng: &mut impl Rng) -> f64 {
    if max_tempo_factor == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - max_tempo_factor..=1.0 + max_tempo_factor)
    }
}

/// Deterministic seed for one segment of one piece.
pub fn segment_seed(seed: u64, piece: usize, segment: usize) -> u64 {
    let mut z = seed
        ^ (piece as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (segment as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Perturbs (and optionally tempo-scales) an aligned segment. Times of the
/// result lie on the MIDI tick grid; onset shifts are truncated toward zero
/// so they never exceed `max_dev` once written to disk.
pub fn make_unaligned(
    aligned: &NoteSequence,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<(NoteSequence, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perturbed = perturb_timing(aligned, cfg, &mut rng)?;
    let factor = sample_tempo_factor(cfg.max_tempo_factor, &mut rng);
    let scaled = if factor != 1.0 {
        scale_tempo(&perturbed, factor)?
    } else {
        perturbed
    };
    let tick = 1.0 / TICKS_PER_SECOND;
    let snap_toward = |reference: f64, value: f64| {
        let reference = (reference * TICKS_PER_SECOND).round();
        let delta = (value * TICKS_PER_SECOND - reference).trunc();
        ((reference + delta) / TICKS_PER_SECOND).max(0.0)
    };
    let min_ticks = (cfg.min_duration * TICKS_PER_SECOND).ceil().max(1.0) * tick;
    let notes = scaled
        .notes()
        .iter()
        .map(|n| {
            let reference = aligned.get(n.id).map_or(n.onset, |a| a.onset);
            let onset = snap_toward(reference, n.onset);
            let mut offset = (n.offset * TICKS_PER_SECOND).round() / TICKS_PER_SECOND;
            if offset - onset < cfg.min_duration {
                offset = onset + min_ticks;
            }
            Note {
                onset,
                offset,
                ..*n
            }
        })
        .collect();
    let duration = (scaled.duration() * TICKS_PER_SECOND).round() / TICKS_PER_SECOND;
    Ok((NoteSequence::new(notes, duration)?, factor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!(
                "unknown split '{other}' (expected train, valid or test)"
            ))),
        }
    }
}

/// A source recording with its aligned transcription.
#[derive(Debug, Clone)]
pub struct Piece {
    pub name: String,
    /// Source tag used by split schemes, e.g. a MAPS instrument name.
    pub group: String,
    pub audio: AudioBuffer,
    pub notes: NoteSequence,
}

/// One manifest record: audio, aligned MIDI and unaligned MIDI of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTriplet {
    pub audio: PathBuf,
    pub aligned_midi: PathBuf,
    pub unaligned_midi: PathBuf,
    pub split: Split,
    pub seed: u64,
    pub max_dev: f64,
    pub tempo_factor: f64,
    #[serde(default)]
    pub group: String,
    /// Aligned-to-unaligned note identity; ids are preserved, so this is
    /// the identity on the shared id set.
    #[serde(skip)]
    pub note_id_map: Vec<(NoteId, NoteId)>,
}

/// In-memory content of a triplet.
#[derive(Debug, Clone)]
pub struct TripletData {
    pub audio: AudioBuffer,
    pub aligned: NoteSequence,
    pub unaligned: NoteSequence,
}

impl DatasetTriplet {
    /// Reads the triplet's files, resolving relative paths against `root`.
    pub fn load(&self, root: &Path) -> Result<TripletData> {
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                root.join(p)
            }
        };
        Ok(TripletData {
            audio: read_wav(resolve(&self.audio))?,
            aligned: parse_midi(resolve(&self.aligned_midi))?,
            unaligned: parse_midi(resolve(&self.unaligned_midi))?,
        })
    }
}

/// Identity map over the ids shared by both sequences.
pub fn note_id_map(aligned: &NoteSequence, unaligned: &NoteSequence) -> Vec<(NoteId, NoteId)> {
    let mut ids: Vec<NoteId> = aligned
        .ids()
        .filter(|id| unaligned.get(*id).is_some())
        .collect();
    ids.sort();
    ids.into_iter().map(|id| (id, id)).collect()
}

/// Outcome of [`build_dataset`]: written triplets plus per-item failures.
#[derive(Debug, Default)]
pub struct DatasetBuild {
    pub triplets: Vec<DatasetTriplet>,
    pub failures: Vec<(String, Error)>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Segments every piece at silences, writes one triplet per non-empty
/// segment into `out_dir` and a JSON manifest listing them. Failures of single items
/// are collected without aborting the batch.
pub fn build_dataset(
    pieces: &[Piece],
    cfg: &AugmentConfig,
    out_dir: &Path,
) -> Result<DatasetBuild> {
    cfg.validate()?;
    if pieces.is_empty() {
        return Err(Error::config("no pieces to build a dataset from"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut build = DatasetBuild::default();
    for (pi, piece) in pieces.iter().enumerate() {
        let segments =
            match segment_at_silence(&piece.notes, piece.audio.duration(), cfg.segment_len) {
                Ok(s) => s,
                Err(e) => {
                    build.failures.push((piece.name.clone(), e));
                    continue;
                }
            };
        for (si, segment) in segments.iter().enumerate() {
            if segment.notes.is_empty() {
                log::debug!("{} segment {si} holds no notes, skipped", piece.name);
                continue;
            }
            let stem = format!("{}_s{si:02}", piece.name);
            let seed = segment_seed(cfg.seed, pi, si);
            let result = (|| -> Result<DatasetTriplet> {
                let aligned = quantize_to_ticks(&segment.notes)?;
                let (unaligned, tempo_factor) = make_unaligned(&aligned, cfg, seed)?;
                let audio = piece.audio.slice_seconds(segment.start, segment.end);
                let triplet = DatasetTriplet {
                    audio: PathBuf::from(format!("{stem}.wav")),
                    aligned_midi: PathBuf::from(format!("{stem}.aligned.mid")),
                    unaligned_midi: PathBuf::from(format!("{stem}.unaligned.mid")),
                    split: Split::Train,
                    seed,
                    max_dev: cfg.max_dev,
                    tempo_factor,
                    group: piece.group.clone(),
                    note_id_map: note_id_map(&aligned, &unaligned),
                };
                write_wav(&audio, out_dir.join(&triplet.audio))?;
                write_midi(&aligned, out_dir.join(&triplet.aligned_midi))?;
                write_midi(&unaligned, out_dir.join(&triplet.unaligned_midi))?;
                Ok(triplet)
            })();
            match result {
                Ok(t) => build.triplets.push(t),
                Err(e) => build.failures.push((stem, e)),
            }
        }
    }
    write_manifest(&build.triplets, &out_dir.join(MANIFEST_FILE))?;
    Ok(build)
}

pub fn write_manifest(triplets: &[DatasetTriplet], path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(triplets)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<DatasetTriplet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Maps source-group tags to splits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitScheme {
    pub groups: BTreeMap<String, Split>,
    /// Split for tags missing from `groups`; `None` makes them an error.
    pub fallback: Option<Split>,
}

impl SplitScheme {
    /// Synthesized MAPS instruments train, ENSTDkAm validates, ENSTDkCl tests.
    pub fn maps() -> Self {
        let mut groups: BTreeMap<String, Split> = [
            "AkPnBcht", "AkPnBsdf", "AkPnCGdD", "AkPnStgb", "SptkBGAm", "SptkBGCl", "StbgTGd2",
        ]
        .into_iter()
        .map(|g| (g.to_string(), Split::Train))
        .collect();
        groups.insert("ENSTDkAm".into(), Split::Valid);
        groups.insert("ENSTDkCl".into(), Split::Test);
        SplitScheme {
            groups,
            fallback: None,
        }
    }

    pub fn all(split: Split) -> Self {
        SplitScheme {
            groups: BTreeMap::new(),
            fallback: Some(split),
        }
    }
}

/// Assigns one split per triplet according to its group tag. Segments of a
/// piece share the piece's tag and therefore its split.
pub fn split_dataset(triplets: &[DatasetTriplet], scheme: &SplitScheme) -> Result<Vec<Split>> {
    triplets
        .iter()
        .map(|t| {
            scheme
                .groups
                .get(&t.group)
                .copied()
                .or(scheme.fallback)
                .ok_or_else(|| {
                    Error::config(format!("group '{}' has no split assignment", t.group))
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{accuracy_report, onset_errors};
    use proptest::prelude::*;
    use rand::Rng;

    fn seq(notes: &[(u8, f64, f64)], duration: f64) -> NoteSequence {
        NoteSequence::from_tuples(notes, duration).unwrap()
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> NoteSequence {
        let notes: Vec<(u8, f64, f64)> = (0..n)
            .map(|_| {
                let on = rng.random_range(0.0..20.0);
                (
                    rng.random_range(21..=108),
                    on,
                    on + rng.random_range(0.005..2.0),
                )
            })
            .collect();
        seq(&notes, 0.0)
    }

    #[test]
    fn zero_deviation_is_identity() {
        let s = seq(&[(60, 0.5, 1.0), (64, 1.0, 1.5)], 2.0);
        let cfg = AugmentConfig {
            max_dev: 0.0,
            ..Default::default()
        };
        let out = perturb_timing(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn clamp_extends_short_notes() {
        let s = seq(&[(60, 1.000, 1.005)], 2.0);
        let out = apply_shifts(&s, &[(0.09, -0.09)], 0.010).unwrap();
        let n = out.notes()[0];
        assert!((n.onset - 1.09).abs() < 1e-12);
        assert!((n.duration() - 0.010).abs() < 1e-12);
    }

    #[test]
    fn negative_onsets_clamp_to_zero() {
        let s = seq(&[(60, 0.02, 0.5)], 1.0);
        let out = apply_shifts(&s, &[(-0.05, 0.0)], 0.010).unwrap();
        assert_eq!(out.notes()[0].onset, 0.0);
    }

    #[test]
    fn perturbation_stays_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dist in [ShiftDistribution::Uniform, ShiftDistribution::default()] {
            let cfg = AugmentConfig {
                distribution: dist,
                ..Default::default()
            };
            for _ in 0..1000 {
                let s = random_seq(&mut rng, 20);
                let out = perturb_timing(&s, &cfg, &mut rng).unwrap();
                assert_eq!(out.len(), s.len());
                for n in s.notes() {
                    let m = out.get(n.id).unwrap();
                    assert!((m.onset - n.onset).abs() <= cfg.max_dev + 1e-12);
                    assert!((m.offset - n.offset).abs() <= cfg.max_dev + cfg.min_duration + 1e-12);
                    assert!(m.duration() >= cfg.min_duration - 1e-12);
                }
            }
        }
    }

    #[test]
    fn unaligned_is_fully_accurate_at_max_dev() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = AugmentConfig::default();
        for i in 0..50 {
            let s = quantize_to_ticks(&random_seq(&mut rng, 30)).unwrap();
            let (u, _) = make_unaligned(&s, &cfg, i).unwrap();
            let report = accuracy_report(&onset_errors(&u, &s).unwrap()).unwrap();
            assert_eq!(report.accuracy_at(0.100), Some(100.0));
            assert_eq!(note_id_map(&s, &u).len(), s.len());
        }
    }

    #[test]
    fn tempo_scaling() {
        let s = seq(&[(60, 2.0, 3.0)], 4.0);
        assert_eq!(scale_tempo(&s, 1.0).unwrap(), s);
        let t = scale_tempo(&s, 1.1).unwrap();
        assert!((t.notes()[0].onset - 2.2).abs() < 1e-12);
        assert!((t.duration() - 4.4).abs() < 1e-12);
        assert!(scale_tempo(&s, 0.0).is_err());
        assert!(scale_tempo(&s, -1.0).is_err());
    }

    #[test]
    fn tempo_factor_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let f = sample_tempo_factor(0.05, &mut rng);
            assert!((0.95..=1.05).contains(&f));
        }
        assert_eq!(sample_tempo_factor(0.0, &mut rng), 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = AugmentConfig {
            max_dev: 0.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            max_tempo_factor: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn ids_are_a_bijection(seed in 0u64..1000, max_tempo in 0.0f64..0.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = quantize_to_ticks(&random_seq(&mut rng, 15)).unwrap();
            let cfg = AugmentConfig { max_tempo_factor: max_tempo, ..Default::default() };
            let (u, _) = make_unaligned(&s, &cfg, seed).unwrap();
            let map = note_id_map(&s, &u);
            prop_assert_eq!(map.len(), s.len());
            prop_assert_eq!(u.len(), s.len());
        }
    }

    /// 90 s piece that only falls silent at 29 s and 61 s.
    pub(crate) fn ninety_second_piece() -> Piece {
        let mut notes = Vec::new();
        for (a, b) in [(0.0, 29.0), (29.0, 61.0), (61.0, 90.0)] {
            notes.push((40u8, a, b));
            let mut t: f64 = a;
            while t < b - 1e-9 {
                notes.push((64, t, (t + 0.5f64).min(b)));
                t += 0.5;
            }
        }
        let notes = seq(&notes, 90.0);
        Piece {
            name: "ninety".into(),
            group: "AkPnBcht".into(),
            audio: AudioBuffer::silence(90 * 16_000, 16_000),
            notes,
        }
    }

    #[test]
    fn builds_three_triplets_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = AugmentConfig {
            seed: 9,
            ..Default::default()
        };
        let piece = ninety_second_piece();
        let a = build_dataset(std::slice::from_ref(&piece), &cfg, &dir.path().join("a")).unwrap();
        let _ = build_dataset(std::slice::from_ref(&piece), &cfg, &dir.path().join("b")).unwrap();
        assert!(a.failures.is_empty());
        assert_eq!(a.triplets.len(), 3);
        for t in &a.triplets {
            let x = std::fs::read(dir.path().join("a").join(&t.unaligned_midi)).unwrap();
            let y = std::fs::read(dir.path().join("b").join(&t.unaligned_midi)).unwrap();
            assert_eq!(x, y);
        }
        let manifest = read_manifest(&dir.path().join("a").join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.len(), 3);
        let data = manifest[1].load(&dir.path().join("a")).unwrap();
        assert!((data.audio.duration() - 32.0).abs() < 1e-9);
        // without tempo scaling the duration moves by at most max_dev
        assert!((data.unaligned.duration() - data.aligned.duration()).abs() <= cfg.max_dev + 1e-9);
        let errors = onset_errors(&data.unaligned, &data.aligned).unwrap();
        assert!(errors.iter().all(|(_, e)| *e <= 0.1));
    }

    #[test]
    fn failures_do_not_abort_the_batch() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = ninety_second_piece();
        bad.name = "missing_dir/x".into();
        let good = ninety_second_piece();
        let out = build_dataset(&[bad, good], &AugmentConfig::default(), dir.path()).unwrap();
        assert_eq!(out.triplets.len(), 3);
        assert_eq!(out.failures.len(), 3);
    }

    fn triplet(group: &str) -> DatasetTriplet {
        DatasetTriplet {
            audio: "a.wav".into(),
            aligned_midi: "a.mid".into(),
            unaligned_midi: "u.mid".into(),
            split: Split::Train,
            seed: 0,
            max_dev: 0.1,
            tempo_factor: 1.0,
            group: group.into(),
            note_id_map: Vec::new(),
        }
    }

    #[test]
    fn maps_split_scheme() {
        let ts = vec![
            triplet("AkPnBcht"),
            triplet("ENSTDkAm"),
            triplet("ENSTDkCl"),
        ];
        let splits = split_dataset(&ts, &SplitScheme::maps()).unwrap();
        assert_eq!(splits, vec![Split::Train, Split::Valid, Split::Test]);
        assert!(split_dataset(&[triplet("unknown")], &SplitScheme::maps()).is_err());
        let all = split_dataset(&ts, &SplitScheme::all(Split::Train)).unwrap();
        assert!(all.iter().all(|&s| s == Split::Train));
    }

    #[test]
    fn segments_of_a_piece_share_a_split() {
        let dir = tempfile::tempdir().unwrap();
        let mut piece = ninety_second_piece();
        piece.group = "ENSTDkCl".into();
        let build = build_dataset(&[piece], &AugmentConfig::default(), dir.path()).unwrap();
        let splits = split_dataset(&build.triplets, &SplitScheme::maps()).unwrap();
        assert_eq!(splits, vec![Split::Test; 3]);
    }
}
