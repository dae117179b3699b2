//! Symbolic note data: notes, sequences, piano rolls and silence-based
//! segmentation.

mod midi;

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use midi::{
    parse_midi, parse_midi_bytes, quantize_to_ticks, write_midi, write_midi_bytes, MidiImport,
    TICKS_PER_SECOND,
};

/// Lowest piano pitch (A0).
pub const MIN_PITCH: u8 = 21;
/// Highest piano pitch (C8).
pub const MAX_PITCH: u8 = 108;
/// Number of piano keys, i.e. piano-roll columns.
pub const NUM_PITCHES: usize = 88;

/// Frame rates supported for piano rolls and features.
pub const SUPPORTED_FPS: [u32; 4] = [25, 50, 100, 200];

/// Stable identity of a note, preserved through augmentation and alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoteId(pub u32);

impl std::fmt::Display for NoteId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub id: NoteId,
    pub pitch: u8,
    /// Seconds.
    pub onset: f64,
    /// Seconds, strictly after `onset`.
    pub offset: f64,
    pub velocity: u8,
}

impl Note {
    pub fn new(id: u32, pitch: u8, onset: f64, offset: f64, velocity: u8) -> Self {
        Note {
            id: NoteId(id),
            pitch,
            onset,
            offset,
            velocity,
        }
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    /// Column of this note in a piano roll.
    pub fn column(&self) -> usize {
        (self.pitch - MIN_PITCH) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_PITCH..=MAX_PITCH).contains(&self.pitch) {
            return Err(Error::invalid(format!(
                "note {} has pitch {} outside {MIN_PITCH}..={MAX_PITCH}",
                self.id, self.pitch
            )));
        }
        if !self.onset.is_finite() || self.onset < 0.0 {
            return Err(Error::invalid(format!(
                "note {} has invalid onset {}",
                self.id, self.onset
            )));
        }
        if !self.offset.is_finite() || self.offset <= self.onset {
            return Err(Error::invalid(format!(
                "note {} has offset {} not after onset {}",
                self.id, self.offset, self.onset
            )));
        }
        if !(1..=127).contains(&self.velocity) {
            return Err(Error::invalid(format!(
                "note {} has velocity {}",
                self.id, self.velocity
            )));
        }
        Ok(())
    }
}

/// Notes sorted by `(onset, pitch)` together with the total duration of the
/// piece they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteSequence {
    notes: Vec<Note>,
    duration: f64,
}

impl Default for NoteSequence {
    fn default() -> Self {
        NoteSequence::empty(0.0)
    }
}

impl NoteSequence {
    /// Validates and sorts `notes`. The duration is raised to the largest
    /// offset if needed.
    pub fn new(mut notes: Vec<Note>, duration: f64) -> Result<Self> {
        let mut seen = HashSet::with_capacity(notes.len());
        for note in &notes {
            note.validate()?;
            if !seen.insert(note.id) {
                return Err(Error::invalid(format!("duplicate note id {}", note.id)));
            }
        }
        if !duration.is_finite() || duration < 0.0 {
            return Err(Error::invalid(format!("invalid duration {duration}")));
        }
        sort_notes(&mut notes);
        let max_offset = notes.iter().map(|n| n.offset).fold(0.0, f64::max);
        Ok(NoteSequence {
            notes,
            duration: duration.max(max_offset),
        })
    }

    /// Builds a sequence assigning ids `0..n` in the given order.
    pub fn from_tuples(notes: &[(u8, f64, f64)], duration: f64) -> Result<Self> {
        let notes = notes
            .iter()
            .enumerate()
            .map(|(i, &(pitch, onset, offset))| Note::new(i as u32, pitch, onset, offset, 80))
            .collect();
        NoteSequence::new(notes, duration)
    }

    pub fn empty(duration: f64) -> Self {
        NoteSequence {
            notes: Vec::new(),
            duration: duration.max(0.0),
        }
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn into_notes(self) -> Vec<Note> {
        self.notes
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn get(&self, id: NoteId) -> Option<&Note> {
        self.notes.iter().find(|n| n.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NoteId> + '_ {
        self.notes.iter().map(|n| n.id)
    }

    /// Applies `f` to every note and rebuilds the sequence with the given
    /// duration (raised to the largest offset).
    pub fn map_notes(&self, duration: f64, f: impl FnMut(&Note) -> Note) -> Result<Self> {
        NoteSequence::new(self.notes.iter().map(f).collect(), duration)
    }
}

pub(crate) fn sort_notes(notes: &mut [Note]) {
    notes.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.id.cmp(&b.id))
    });
}

/// Frame index of a time in seconds.
pub fn time_to_frame(t: f64, fps: u32) -> usize {
    (t * fps as f64).round().max(0.0) as usize
}

/// Number of frames covering `duration` seconds, `ceil(duration * fps)`.
pub fn frame_count(duration: f64, fps: u32) -> usize {
    let x = duration * fps as f64;
    // absorb representation error such as 0.3 * 100 = 30.000000000000004
    (x - 1e-9).ceil().max(0.0) as usize
}

pub fn check_fps(fps: u32) -> Result<()> {
    if SUPPORTED_FPS.contains(&fps) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "unsupported frame rate {fps}; expected one of {SUPPORTED_FPS:?}"
        )))
    }
}

/// Binary frame x pitch matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    pub frames: Array2<u8>,
    pub fps: u32,
}

impl PianoRoll {
    pub fn zeros(n_frames: usize, fps: u32) -> Self {
        PianoRoll {
            frames: Array2::zeros((n_frames, NUM_PITCHES)),
            fps,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_active(&self, frame: usize, pitch: u8) -> bool {
        self.frames[[frame, (pitch - MIN_PITCH) as usize]] != 0
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.frames.mapv(f64::from)
    }

    /// Maximal runs of active frames per pitch as `(pitch, start, end)` with
    /// `end` exclusive, ordered by pitch then start.
    pub fn runs(&self) -> Vec<(u8, usize, usize)> {
        let mut out = Vec::new();
        for col in 0..NUM_PITCHES {
            let column = self.frames.column(col);
            let mut start = None;
            for (r, &v) in column.iter().enumerate() {
                match (v != 0, start) {
                    (true, None) => start = Some(r),
                    (false, Some(s)) => {
                        out.push((col as u8 + MIN_PITCH, s, r));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                out.push((col as u8 + MIN_PITCH, s, column.len()));
            }
        }
        out
    }
}

/// Rasterizes `seq` into a piano roll at `fps`.
///
/// A note covers frames `round(onset*fps) .. round(offset*fps)` (at least one
/// frame). Where a note starts right after an earlier note of the same pitch
/// the preceding frame is cleared so that both onsets stay visible, unless
/// that frame is itself an onset frame.
pub fn to_piano_roll(seq: &NoteSequence, fps: u32) -> Result<PianoRoll> {
    check_fps(fps)?;
    let n = frame_count(seq.duration(), fps);
    let mut roll = PianoRoll::zeros(n, fps);
    if n == 0 {
        return Ok(roll);
    }
    let spans: Vec<(usize, usize, usize)> = seq
        .notes()
        .iter()
        .map(|note| {
            let start = time_to_frame(note.onset, fps).min(n - 1);
            let end = time_to_frame(note.offset, fps).min(n).max(start + 1);
            (note.column(), start, end)
        })
        .collect();
    let mut onset_frames: HashSet<(usize, usize)> = HashSet::with_capacity(spans.len());
    for &(col, start, end) in &spans {
        roll.frames
            .column_mut(col)
            .slice_mut(ndarray::s![start..end])
            .fill(1);
        onset_frames.insert((col, start));
    }
    for &(col, start, _) in &spans {
        if start == 0 {
            continue;
        }
        let prev = start - 1;
        if roll.frames[[prev, col]] != 0 && !onset_frames.contains(&(col, prev)) {
            roll.frames[[prev, col]] = 0;
        }
    }
    Ok(roll)
}

/// A part of a piece produced by [`segment_at_silence`].
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Notes re-based to the segment start.
    pub notes: NoteSequence,
    pub start: f64,
    pub end: f64,
}

/// Instants at which no note sounds, as closed intervals `[from, to]`.
fn silent_intervals(seq: &NoteSequence, total: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut sounding_until = 0.0_f64;
    for note in seq.notes() {
        if note.onset >= sounding_until {
            out.push((sounding_until, note.onset));
        }
        sounding_until = sounding_until.max(note.offset);
    }
    if total >= sounding_until {
        out.push((sounding_until, total));
    }
    out
}

/// Splits a piece into parts of roughly `target_len` seconds, cutting only
/// where no note sounds.
///
/// Each cut is placed at the silent instant closest to `start + target_len`
/// within `[start + 0.5 target, start + 1.5 target]`; without such an instant
/// the segment runs to the next silent instant (or the end).
pub fn segment_at_silence(
    seq: &NoteSequence,
    audio_len: f64,
    target_len: f64,
) -> Result<Vec<Segment>> {
    if !(target_len > 0.0) {
        return Err(Error::invalid(format!(
            "segment target length must be positive, got {target_len}"
        )));
    }
    let total = audio_len.max(seq.duration());
    let silences = silent_intervals(seq, total);
    let mut cuts = vec![0.0];
    let mut start = 0.0;
    // a cut must leave at least half a target length behind it
    let last_cut = total - 0.5 * target_len;
    while total - start > target_len {
        let ideal = start + target_len;
        let (lo, hi) = (start + 0.5 * target_len, start + 1.5 * target_len);
        let mut best: Option<f64> = None;
        for &(a, b) in &silences {
            let candidate = ideal.clamp(a, b);
            if candidate < lo || candidate > hi || candidate > last_cut {
                continue;
            }
            if best.is_none_or(|c| (candidate - ideal).abs() < (c - ideal).abs()) {
                best = Some(candidate);
            }
        }
        let cut = match best {
            Some(c) => c,
            None => silences
                .iter()
                .map(|&(a, _)| a.max(hi))
                .filter(|&c| c < total && silences.iter().any(|&(a, b)| a <= c && c <= b))
                .fold(total, f64::min),
        };
        if cut > last_cut {
            break;
        }
        cuts.push(cut);
        start = cut;
    }
    cuts.push(total);

    let mut out = Vec::with_capacity(cuts.len() - 1);
    for w in cuts.windows(2) {
        let (s, e) = (w[0], w[1]);
        let last = e >= total;
        let notes: Vec<Note> = seq
            .notes()
            .iter()
            .filter(|n| n.onset >= s && (n.onset < e || (last && n.onset <= e)))
            .map(|n| Note {
                onset: n.onset - s,
                offset: n.offset - s,
                ..*n
            })
            .collect();
        out.push(Segment {
            notes: NoteSequence::new(notes, e - s)?,
            start: s,
            end: e,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(notes: &[(u8, f64, f64)], duration: f64) -> NoteSequence {
        NoteSequence::from_tuples(notes, duration).unwrap()
    }

    fn active_frames(roll: &PianoRoll, pitch: u8) -> Vec<usize> {
        (0..roll.n_frames())
            .filter(|&r| roll.is_active(r, pitch))
            .collect()
    }

    #[test]
    fn rejects_invalid_notes() {
        assert!(NoteSequence::from_tuples(&[(20, 0.0, 1.0)], 1.0).is_err());
        assert!(NoteSequence::from_tuples(&[(109, 0.0, 1.0)], 1.0).is_err());
        assert!(NoteSequence::from_tuples(&[(60, 1.0, 1.0)], 1.0).is_err());
        assert!(NoteSequence::new(vec![Note::new(0, 60, 0.0, 1.0, 0)], 1.0).is_err());
        let dup = vec![
            Note::new(3, 60, 0.0, 1.0, 64),
            Note::new(3, 62, 0.0, 1.0, 64),
        ];
        assert!(NoteSequence::new(dup, 1.0).is_err());
    }

    #[test]
    fn sorted_by_onset_then_pitch() {
        let s = seq(&[(64, 1.0, 2.0), (60, 1.0, 2.0), (70, 0.5, 0.7)], 0.0);
        let order: Vec<u8> = s.notes().iter().map(|n| n.pitch).collect();
        assert_eq!(order, vec![70, 60, 64]);
        assert_eq!(s.duration(), 2.0);
    }

    #[test]
    fn single_note_roll() {
        let roll = to_piano_roll(&seq(&[(60, 0.30, 1.05)], 1.2), 100).unwrap();
        assert_eq!(roll.frames.dim(), (120, 88));
        assert_eq!(active_frames(&roll, 60), (30..105).collect::<Vec<_>>());
        assert_eq!(roll.frames.iter().map(|&v| v as usize).sum::<usize>(), 75);
    }

    #[test]
    fn back_to_back_notes_get_a_gap() {
        let roll = to_piano_roll(&seq(&[(60, 0.0, 1.0), (60, 1.0, 2.0)], 2.0), 100).unwrap();
        let active = active_frames(&roll, 60);
        let expected: Vec<usize> = (0..99).chain(100..200).collect();
        assert_eq!(active, expected);
    }

    #[test]
    fn gap_never_clears_an_onset_frame() {
        // one-frame note directly followed by another note of the same pitch
        let roll = to_piano_roll(&seq(&[(60, 0.10, 0.11), (60, 0.11, 0.3)], 0.5), 100).unwrap();
        assert!(roll.is_active(10, 60));
        assert!(roll.is_active(11, 60));
    }

    #[test]
    fn different_pitches_do_not_gap() {
        let roll = to_piano_roll(&seq(&[(60, 0.0, 1.0), (62, 1.0, 2.0)], 2.0), 100).unwrap();
        assert!(roll.is_active(99, 60));
        assert!(roll.is_active(100, 62));
    }

    #[test]
    fn empty_roll() {
        let roll = to_piano_roll(&NoteSequence::empty(1.0), 100).unwrap();
        assert_eq!(roll.frames.dim(), (100, 88));
        assert!(roll.frames.iter().all(|&v| v == 0));
    }

    #[test]
    fn zero_width_note_keeps_one_frame() {
        let roll = to_piano_roll(&seq(&[(60, 0.50, 0.51)], 1.0), 25).unwrap();
        assert_eq!(active_frames(&roll, 60), vec![13]);
    }

    #[test]
    fn unsupported_fps() {
        assert!(to_piano_roll(&NoteSequence::empty(1.0), 30).is_err());
    }

    #[test]
    fn frame_count_is_exact() {
        assert_eq!(frame_count(0.3, 100), 30);
        assert_eq!(frame_count(0.301, 100), 31);
        assert_eq!(frame_count(10.0, 25), 250);
    }

    #[test]
    fn runs_recover_note_count() {
        let s = seq(
            &[
                (60, 0.0, 0.5),
                (60, 0.5, 1.0),
                (60, 1.2, 1.3),
                (72, 0.1, 0.9),
            ],
            1.5,
        );
        let roll = to_piano_roll(&s, 100).unwrap();
        assert_eq!(roll.runs().len(), 4);
    }

    /// Notes filling `[a, b)` with one-second notes.
    fn filler(notes: &mut Vec<(u8, f64, f64)>, a: f64, b: f64) {
        let mut t = a;
        while t < b - 1e-9 {
            let e = (t + 1.0).min(b);
            notes.push((60, t, e));
            t = e;
        }
    }

    #[test]
    fn segments_at_nearest_silences() {
        // something sounds everywhere except at the instants 29 s and 61 s
        let mut notes = Vec::new();
        for (a, b) in [(0.0, 29.0), (29.0, 61.0), (61.0, 90.0)] {
            filler(&mut notes, a, b);
            // a long overlapping note keeps the interior sounding
            notes.push((40, a, b));
        }
        let s = seq(&notes, 90.0);
        let segs = segment_at_silence(&s, 90.0, 30.0).unwrap();
        let lens: Vec<f64> = segs.iter().map(|g| g.end - g.start).collect();
        assert_eq!(lens.len(), 3);
        for (got, want) in lens.iter().zip([29.0, 32.0, 29.0]) {
            assert!((got - want).abs() < 1e-9, "{lens:?}");
        }
        let total: usize = segs.iter().map(|g| g.notes.len()).sum();
        assert_eq!(total, s.len());
        assert_eq!(segs[1].notes.notes()[0].onset, 0.0);
    }

    #[test]
    fn short_piece_is_one_segment() {
        let s = seq(&[(60, 1.0, 2.0)], 10.0);
        let segs = segment_at_silence(&s, 10.0, 30.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start, segs[0].end), (0.0, 10.0));
    }

    #[test]
    fn no_silence_means_no_cut() {
        let s = seq(&[(60, 0.0, 90.0)], 90.0);
        let segs = segment_at_silence(&s, 90.0, 30.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].end, 90.0);
    }

    #[test]
    fn short_remainder_stays_with_last_segment() {
        // notes every second with short gaps; 0.7 s of release tail
        let notes: Vec<(u8, f64, f64)> = (0..20).map(|k| (60, k as f64, k as f64 + 0.8)).collect();
        let s = seq(&notes, 20.7);
        let segs = segment_at_silence(&s, 20.7, 10.0).unwrap();
        assert!(segs.iter().all(|g| g.end - g.start >= 5.0));
        assert_eq!(segs.last().unwrap().end, 20.7);
    }

    #[test]
    fn extends_to_next_silence_beyond_window() {
        // sound until 50 s, silence afterwards
        let s = seq(&[(60, 0.0, 50.0), (62, 55.0, 58.0)], 60.0);
        let segs = segment_at_silence(&s, 60.0, 20.0).unwrap();
        assert_eq!(segs[0].end, 50.0);
    }
}
