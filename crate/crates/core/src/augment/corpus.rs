//! Random piano-like pieces rendered with the built-in synthesizer, used as
//! a desk-scale stand-in for recorded corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{segment_seed, Piece};
use crate::error::Result;
use crate::features::{render_notes_to_audio, PIPELINE_SAMPLE_RATE};
use crate::symbolic::{quantize_to_ticks, Note, NoteSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub pieces: usize,
    /// Length of each piece in seconds.
    pub duration: f64,
    pub seed: u64,
    /// Lowest and highest pitch used.
    pub pitch_range: (u8, u8),
    /// Probability that a melody slot is a rest.
    pub rest_probability: f64,
    /// Group tag given to every piece.
    pub group: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            pieces: 10,
            duration: 30.0,
            seed: 0,
            pitch_range: (43, 84),
            rest_probability: 0.15,
            group: "synthetic".into(),
        }
    }
}

/// One random piece: a melody over a sparse accompaniment on an eighth-note
/// grid with occasional phrase breaks of silence.
pub fn synthetic_piece(cfg: &CorpusConfig, index: usize) -> Result<Piece> {
    let mut rng = ChaCha8Rng::seed_from_u64(segment_seed(cfg.seed, index, usize::MAX));
    let (lo, hi) = cfg.pitch_range;
    let split = lo + (hi - lo) / 2;
    let beat: f64 = rng.random_range(0.40..0.70);
    let eighth = beat / 2.0;
    let mut notes: Vec<Note> = Vec::new();
    // time until which each pitch is sounding, to avoid same-pitch overlaps
    let mut busy = [0.0f64; 128];
    let duration = cfg.duration;
    let push = |notes: &mut Vec<Note>,
                busy: &mut [f64; 128],
                pitch: u8,
                onset: f64,
                offset: f64,
                vel: u8| {
        if onset >= busy[pitch as usize] && offset <= duration {
            busy[pitch as usize] = offset;
            let id = notes.len() as u32;
            notes.push(Note::new(id, pitch, onset, offset, vel));
        }
    };

    let mut melody_pitch = rng.random_range(split..=hi);
    let mut t = rng.random_range(0.0..0.5);
    let mut next_break = t + rng.random_range(4.0..9.0);
    while t < cfg.duration {
        if t >= next_break {
            // phrase break: every voice rests
            t += rng.random_range(0.4..0.9)
                + busy.iter().fold(0.0f64, |m, &b| m.max(b - t)).max(0.0);
            next_break = t + rng.random_range(4.0..9.0);
            continue;
        }
        let slots = rng.random_range(1..=3usize);
        let length = slots as f64 * eighth;
        if !rng.random_bool(cfg.rest_probability) {
            let step: i32 = rng.random_range(-4..=4);
            melody_pitch = (melody_pitch as i32 + step).clamp(split as i32, hi as i32) as u8;
            let vel = rng.random_range(55..=110);
            let dur = length * rng.random_range(0.6..1.0);
            push(&mut notes, &mut busy, melody_pitch, t, t + dur, vel);
        }
        // accompaniment on beats
        let on_beat = ((t / beat).fract() < 1e-6) || ((t / beat).fract() > 1.0 - 1e-6);
        if on_beat && rng.random_bool(0.6) {
            let root = rng.random_range(lo..split);
            let chord: &[u8] = match rng.random_range(0..3) {
                0 => &[0],
                1 => &[0, 7],
                _ => &[0, 4, 7],
            };
            let dur = beat * rng.random_range(0.8..2.0);
            let vel = rng.random_range(45..=95);
            for &iv in chord {
                let p = root.saturating_add(iv).min(hi);
                push(&mut notes, &mut busy, p, t, t + dur, vel);
            }
        }
        t += length;
        // keep the grid aligned to eighths
        t = (t / eighth).round() * eighth;
    }
    let notes = quantize_to_ticks(&NoteSequence::new(notes, cfg.duration)?)?;
    let audio = render_notes_to_audio(&notes, PIPELINE_SAMPLE_RATE);
    Ok(Piece {
        name: format!("synth{index:04}"),
        group: cfg.group.clone(),
        audio,
        notes,
    })
}

pub fn synthetic_corpus(cfg: &CorpusConfig) -> Result<Vec<Piece>> {
    (0..cfg.pieces).map(|i| synthetic_piece(cfg, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::segment_at_silence;

    #[test]
    fn pieces_are_deterministic_and_segmentable() {
        let cfg = CorpusConfig {
            pieces: 2,
            duration: 40.0,
            seed: 4,
            ..Default::default()
        };
        let a = synthetic_corpus(&cfg).unwrap();
        let b = synthetic_corpus(&cfg).unwrap();
        assert_eq!(a[1].notes, b[1].notes);
        assert_eq!(a[1].audio, b[1].audio);
        assert_ne!(a[0].notes, a[1].notes);
        for piece in &a {
            assert!(piece.notes.len() > 40);
            assert_eq!(piece.audio.len(), 40 * 16_000);
            let segs = segment_at_silence(&piece.notes, piece.audio.duration(), 10.0).unwrap();
            assert!(segs.len() >= 3, "{} segments", segs.len());
            for n in piece.notes.notes() {
                assert!((43..=84).contains(&n.pitch));
            }
        }
    }
}
