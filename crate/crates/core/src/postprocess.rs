//! Turning frame activations back into an aligned note sequence.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::{Note, NoteId, NoteSequence, MIN_PITCH, NUM_PITCHES};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A run of active frames `start_frame..end_frame` in one pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteBlock {
    pub pitch: u8,
    pub start_frame: usize,
    pub end_frame: usize,
    pub fps: u32,
}

impl NoteBlock {
    pub fn start(&self) -> f64 {
        self.start_frame as f64 / self.fps as f64
    }

    pub fn end(&self) -> f64 {
        self.end_frame as f64 / self.fps as f64
    }
}

/// Binarizes `act` at `>= threshold` and returns every maximal run per
/// pitch, sorted by pitch then start.
pub fn threshold_and_segment(
    act: &Array2<f64>,
    fps: u32,
    threshold: f64,
) -> Result<Vec<NoteBlock>> {
    if act.ncols() != NUM_PITCHES {
        return Err(Error::invalid(format!(
            "activation map needs {NUM_PITCHES} columns, got {}",
            act.ncols()
        )));
    }
    let mut blocks = Vec::new();
    for (k, column) in act.columns().into_iter().enumerate() {
        let mut start = None;
        for (t, &v) in column.iter().enumerate() {
            match (v >= threshold, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    blocks.push(block(k, s, t, fps));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            blocks.push(block(k, s, column.len(), fps));
        }
    }
    Ok(blocks)
}

fn block(column: usize, start_frame: usize, end_frame: usize, fps: u32) -> NoteBlock {
    NoteBlock {
        pitch: MIN_PITCH + column as u8,
        start_frame,
        end_frame,
        fps,
    }
}

/// Order-preserving assignment pairing every element of the shorter side
/// with one of the longer side, minimizing the summed cost. Returns, for
/// each index of the shorter side, its partner on the longer side.
fn monotone_assignment(
    short: usize,
    long: usize,
    cost: impl Fn(usize, usize) -> f64,
) -> Vec<usize> {
    // best[i][j]: first i of short matched within first j of long
    let w = long + 1;
    let mut best = vec![f64::INFINITY; (short + 1) * w];
    for j in 0..=long {
        best[j] = 0.0;
    }
    for i in 1..=short {
        for j in i..=long {
            let pair = best[(i - 1) * w + j - 1] + cost(i - 1, j - 1);
            let skip = best[i * w + j - 1];
            best[i * w + j] = pair.min(skip);
        }
    }
    let mut partner = vec![0; short];
    let (mut i, mut j) = (short, long);
    while i > 0 {
        let pair = best[(i - 1) * w + j - 1] + cost(i - 1, j - 1);
        if pair <= best[i * w + j - 1] {
            partner[i - 1] = j - 1;
            i -= 1;
        }
        j -= 1;
    }
    partner
}

/// For every input note, the block it is matched to. Matching runs per
/// pitch and preserves temporal order; with equal counts the k-th note
/// takes the k-th block, otherwise the pairing minimizes the total
/// onset-to-start distance.
pub fn match_notes(blocks: &[NoteBlock], input: &NoteSequence) -> Vec<(NoteId, Option<NoteBlock>)> {
    let mut by_pitch: BTreeMap<u8, (Vec<&Note>, Vec<&NoteBlock>)> = BTreeMap::new();
    for n in input.notes() {
        by_pitch.entry(n.pitch).or_default().0.push(n);
    }
    for b in blocks {
        if let Some(entry) = by_pitch.get_mut(&b.pitch) {
            entry.1.push(b);
        }
    }
    let mut matched: BTreeMap<NoteId, NoteBlock> = BTreeMap::new();
    for (notes, mut pitch_blocks) in by_pitch.into_values() {
        // notes are already in onset order
        pitch_blocks.sort_by_key(|b| b.start_frame);
        let (n, m) = (notes.len(), pitch_blocks.len());
        if n == m {
            for (note, b) in notes.iter().zip(&pitch_blocks) {
                matched.insert(note.id, **b);
            }
        } else if n < m {
            let partner = monotone_assignment(n, m, |i, j| {
                (notes[i].onset - pitch_blocks[j].start()).abs()
            });
            for (i, j) in partner.into_iter().enumerate() {
                matched.insert(notes[i].id, *pitch_blocks[j]);
            }
        } else if m > 0 {
            let partner = monotone_assignment(m, n, |j, i| {
                (notes[i].onset - pitch_blocks[j].start()).abs()
            });
            for (j, i) in partner.into_iter().enumerate() {
                matched.insert(notes[i].id, *pitch_blocks[j]);
            }
        }
    }
    input
        .notes()
        .iter()
        .map(|n| (n.id, matched.get(&n.id).copied()))
        .collect()
}

/// Matched notes take their block's times; unmatched notes keep their
/// input times.
pub fn update_sequence(
    input: &NoteSequence,
    mapping: &[(NoteId, Option<NoteBlock>)],
) -> Result<NoteSequence> {
    let lookup: BTreeMap<NoteId, NoteBlock> = mapping
        .iter()
        .filter_map(|(id, b)| b.map(|b| (*id, b)))
        .collect();
    input.map_notes(input.duration(), |n| match lookup.get(&n.id) {
        Some(b) => Note {
            onset: b.start(),
            offset: b.end(),
            ..*n
        },
        None => *n,
    })
}

/// Threshold, segment, match and update in one step.
pub fn activations_to_notes(
    act: &Array2<f64>,
    fps: u32,
    threshold: f64,
    input: &NoteSequence,
) -> Result<NoteSequence> {
    let blocks = threshold_and_segment(act, fps, threshold)?;
    let mapping = match_notes(&blocks, input);
    update_sequence(input, &mapping)
}
