//! Standard MIDI File reading (format 0/1) and writing (format 0).
//!
//! Written files use 480 ticks per quarter at a fixed 120 BPM and tag every
//! note-on with a preceding text event carrying the note id, so identities
//! survive a round trip through disk. Files without tags get ids in
//! `(onset, pitch)` order.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use super::{sort_notes, Note, NoteId, NoteSequence, MAX_PITCH, MIN_PITCH};
use crate::error::{Error, Result};

const PPQ: u16 = 480;
const TEMPO_USEC_PER_QUARTER: u32 = 500_000;
/// Tick rate of written files: 480 PPQ at 120 BPM.
pub const TICKS_PER_SECOND: f64 = 960.0;
const ID_TAG_PREFIX: &str = "pianosync:id=";

/// Result of reading a MIDI file.
#[derive(Debug, Clone)]
pub struct MidiImport {
    pub sequence: NoteSequence,
    /// Notes outside the piano range that were skipped.
    pub dropped_out_of_range: usize,
}

pub fn parse_midi(path: impl AsRef<Path>) -> Result<NoteSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let import = parse_midi_bytes(&bytes)?;
    if import.dropped_out_of_range > 0 {
        log::warn!(
            "{}: dropped {} notes outside the piano range",
            path.display(),
            import.dropped_out_of_range
        );
    }
    Ok(import.sequence)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::MidiParse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(self.err(format!("need {n} bytes, data ends early")));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varlen(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::MidiParse {
            offset: start,
            message: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

enum Timing {
    Ppq(u16),
    /// Seconds per tick.
    Smpte(f64),
}

#[derive(Debug)]
struct RawNote {
    tag: Option<u32>,
    pitch: u8,
    velocity: u8,
    on_tick: u64,
    off_tick: u64,
}

struct TrackData {
    notes: Vec<RawNote>,
    tempos: Vec<(u64, u32)>,
    end_tick: u64,
}

fn read_track(r: &mut Reader<'_>, end: usize) -> Result<TrackData> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8, Option<u32>)>> = HashMap::new();
    let mut pending_tag: Option<u32> = None;
    let mut notes = Vec::new();
    let mut tempos = Vec::new();

    while r.pos < end {
        tick += u64::from(r.varlen()?);
        let status_pos = r.pos;
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| Error::MidiParse {
                offset: status_pos,
                message: "data byte without running status".into(),
            })?
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.varlen()? as usize;
                let data = r.bytes(len)?;
                match kind {
                    0x2f => break,
                    0x51 if len == 3 => {
                        let usec = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        tempos.push((tick, usec));
                    }
                    0x01 => {
                        if let Some(rest) = std::str::from_utf8(data)
                            .ok()
                            .and_then(|s| s.strip_prefix(ID_TAG_PREFIX))
                        {
                            pending_tag = rest.trim().parse().ok();
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.varlen()? as usize;
                r.bytes(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x80 | 0x90 => {
                        let key = r.u8()?;
                        let vel = r.u8()?;
                        if key > 127 || vel > 127 {
                            return Err(Error::MidiParse {
                                offset: status_pos,
                                message: "data byte out of range".into(),
                            });
                        }
                        if status & 0xf0 == 0x90 && vel > 0 {
                            open.entry((channel, key)).or_default().push_back((
                                tick,
                                vel,
                                pending_tag.take(),
                            ));
                        } else if let Some((on_tick, velocity, tag)) =
                            open.get_mut(&(channel, key)).and_then(|q| q.pop_front())
                        {
                            notes.push(RawNote {
                                tag,
                                pitch: key,
                                velocity,
                                on_tick,
                                off_tick: tick,
                            });
                        }
                    }
                    0xc0 | 0xd0 => {
                        r.u8()?;
                    }
                    _ => {
                        r.bytes(2)?;
                    }
                }
            }
            _ => {
                return Err(Error::MidiParse {
                    offset: status_pos,
                    message: format!("unsupported status byte {status:#04x}"),
                })
            }
        }
    }
    if r.pos > end {
        return Err(r.err("event runs past the end of its track chunk"));
    }
    // notes still sounding at the end of the track end there
    for ((_, key), queue) in open {
        for (on_tick, velocity, tag) in queue {
            notes.push(RawNote {
                tag,
                pitch: key,
                velocity,
                on_tick,
                off_tick: tick,
            });
        }
    }
    r.pos = end;
    Ok(TrackData {
        notes,
        tempos,
        end_tick: tick,
    })
}

/// Converts ticks to seconds under a merged tempo map.
struct TempoMap {
    ppq: f64,
    /// `(tick, seconds at tick, microseconds per quarter from here on)`
    points: Vec<(u64, f64, f64)>,
}

impl TempoMap {
    fn new(ppq: u16, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|&(t, _)| t);
        let mut map = TempoMap {
            ppq: f64::from(ppq),
            points: vec![(0, 0.0, f64::from(TEMPO_USEC_PER_QUARTER))],
        };
        for (tick, usec) in changes {
            let seconds = map.seconds(tick);
            if map.points.last().is_some_and(|p| p.0 == tick) {
                map.points.pop();
            }
            map.points.push((tick, seconds, f64::from(usec)));
        }
        map
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self.points.partition_point(|&(t, _, _)| t <= tick) - 1;
        let (t0, s0, usec) = self.points[idx];
        // single rounding so that tick / 960 comes back exactly at 120 BPM
        s0 + ((tick - t0) as f64 * usec) / (1e6 * self.ppq)
    }
}

pub fn parse_midi_bytes(data: &[u8]) -> Result<MidiImport> {
    let mut r = Reader { data, pos: 0 };
    if r.bytes(4)? != b"MThd" {
        return Err(Error::MidiParse {
            offset: 0,
            message: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err("header chunk shorter than 6 bytes"));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let n_tracks = r.u16()?;
    let division = r.u16()?;
    if format > 1 {
        return Err(Error::MidiParse {
            offset: header_start,
            message: format!("unsupported SMF format {format}"),
        });
    }
    r.pos = header_start + header_len;
    let timing = if division & 0x8000 != 0 {
        let fps = -((division >> 8) as u8 as i8) as f64;
        let per_frame = (division & 0xff) as f64;
        if fps <= 0.0 || per_frame <= 0.0 {
            return Err(Error::MidiParse {
                offset: header_start + 4,
                message: "invalid SMPTE division".into(),
            });
        }
        Timing::Smpte(1.0 / (fps * per_frame))
    } else {
        if division == 0 {
            return Err(Error::MidiParse {
                offset: header_start + 4,
                message: "zero ticks per quarter note".into(),
            });
        }
        Timing::Ppq(division)
    };

    let mut tracks = Vec::new();
    while tracks.len() < n_tracks as usize && r.pos < data.len() {
        let chunk_pos = r.pos;
        let id = r.bytes(4)?;
        let len = r.u32()? as usize;
        let end = r.pos + len;
        if end > data.len() {
            return Err(Error::MidiParse {
                offset: chunk_pos,
                message: format!("chunk length {len} exceeds file size"),
            });
        }
        if id != b"MTrk" {
            r.pos = end;
            continue;
        }
        tracks.push(read_track(&mut r, end)?);
    }

    let to_seconds: Box<dyn Fn(u64) -> f64> = match timing {
        Timing::Ppq(ppq) => {
            let map = TempoMap::new(ppq, tracks.iter().flat_map(|t| t.tempos.clone()).collect());
            Box::new(move |tick| map.seconds(tick))
        }
        Timing::Smpte(spt) => Box::new(move |tick| tick as f64 * spt),
    };

    let mut dropped = 0;
    let mut raw: Vec<RawNote> = Vec::new();
    let mut end_tick = 0;
    for track in tracks {
        end_tick = end_tick.max(track.end_tick);
        for note in track.notes {
            if (MIN_PITCH..=MAX_PITCH).contains(&note.pitch) {
                raw.push(note);
            } else {
                dropped += 1;
            }
        }
    }

    let tags_usable = !raw.is_empty() && raw.iter().all(|n| n.tag.is_some()) && {
        let mut tags: Vec<u32> = raw.iter().filter_map(|n| n.tag).collect();
        tags.sort_unstable();
        tags.windows(2).all(|w| w[0] != w[1])
    };

    let mut notes: Vec<Note> = raw
        .iter()
        .map(|n| {
            let onset = to_seconds(n.on_tick);
            let mut offset = to_seconds(n.off_tick);
            if offset <= onset {
                // zero-length note: keep it one tick long
                offset = to_seconds(n.on_tick + 1);
            }
            Note {
                id: NoteId(n.tag.unwrap_or(0)),
                pitch: n.pitch,
                onset,
                offset,
                velocity: n.velocity.max(1),
            }
        })
        .collect();
    if !tags_usable {
        sort_notes(&mut notes);
        for (i, note) in notes.iter_mut().enumerate() {
            note.id = NoteId(i as u32);
        }
    }
    let duration = to_seconds(end_tick);
    Ok(MidiImport {
        sequence: NoteSequence::new(notes, duration)?,
        dropped_out_of_range: dropped,
    })
}

fn push_varlen(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

fn to_tick(seconds: f64) -> u64 {
    (seconds * TICKS_PER_SECOND).round().max(0.0) as u64
}

/// Serializes a sequence as a format-0 SMF.
pub fn write_midi_bytes(seq: &NoteSequence) -> Vec<u8> {
    // (tick, class, note index, payload); at one tick all note-offs come
    // first, then each note's id tag directly followed by its note-on
    let mut events: Vec<(u64, u8, u64, Vec<u8>)> = Vec::new();
    // overlapping notes of one pitch go to separate channels so that
    // note-offs pair up unambiguously; busy[pitch][channel] = tick when free
    let mut busy = vec![[0u64; 16]; 128];
    for (i, note) in seq.notes().iter().enumerate() {
        let on = to_tick(note.onset);
        let off = to_tick(note.offset).max(on + 1);
        let slots = &mut busy[note.pitch as usize];
        let channel = (0..16).find(|&c| slots[c] <= on).unwrap_or(0);
        slots[channel] = off;
        let channel = channel as u8;
        let mut tag = vec![0xff, 0x01];
        let text = format!("{ID_TAG_PREFIX}{}", note.id.0);
        push_varlen(&mut tag, text.len() as u32);
        tag.extend_from_slice(text.as_bytes());
        events.push((on, 1, 2 * i as u64, tag));
        events.push((
            on,
            1,
            2 * i as u64 + 1,
            vec![0x90 | channel, note.pitch, note.velocity],
        ));
        events.push((off, 0, i as u64, vec![0x80 | channel, note.pitch, 0]));
    }
    events.sort_by_key(|e| (e.0, e.1, e.2));

    let mut track = Vec::new();
    // tempo 120 BPM
    track.extend_from_slice(&[0x00, 0xff, 0x51, 0x03]);
    track.extend_from_slice(&TEMPO_USEC_PER_QUARTER.to_be_bytes()[1..]);
    let mut last = 0u64;
    for (tick, _, _, payload) in &events {
        push_varlen(&mut track, (tick - last) as u32);
        track.extend_from_slice(payload);
        last = *tick;
    }
    let end = to_tick(seq.duration()).max(last);
    push_varlen(&mut track, (end - last) as u32);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&PPQ.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

pub fn write_midi(seq: &NoteSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_midi_bytes(seq)).map_err(|e| Error::io(path, e))
}

/// Snaps every note time to the tick grid of written files.
pub fn quantize_to_ticks(seq: &NoteSequence) -> Result<NoteSequence> {
    let q = |t: f64| to_tick(t) as f64 / TICKS_PER_SECOND;
    let notes = seq
        .notes()
        .iter()
        .map(|n| {
            let onset = q(n.onset);
            let offset = q(n.offset).max(onset + 1.0 / TICKS_PER_SECOND);
            Note {
                onset,
                offset,
                ..*n
            }
        })
        .collect();
    NoteSequence::new(notes, q(seq.duration()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Hand-assembled format-1 file: tempo track + note track at 96 PPQ.
    fn handmade(events: &[u8], ppq: u16, tempo_usec: u32) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes());
        out.extend_from_slice(&2u16.to_be_bytes());
        out.extend_from_slice(&ppq.to_be_bytes());
        let mut tempo = vec![0x00, 0xff, 0x51, 0x03];
        tempo.extend_from_slice(&tempo_usec.to_be_bytes()[1..]);
        tempo.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        for chunk in [tempo, events.to_vec()] {
            out.extend_from_slice(b"MTrk");
            out.extend_from_slice(&(chunk.len() as u32).to_be_bytes());
            out.extend_from_slice(&chunk);
        }
        out
    }

    #[test]
    fn parses_single_note_with_tempo() {
        // 96 PPQ, 60 BPM: one tick = 1/96 s; on at 48 ticks (0.5 s), off at 96 (1.0 s)
        let ev = [
            0x30, 0x90, 60, 100, 0x30, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let seq = parse_midi_bytes(&handmade(&ev, 96, 1_000_000))
            .unwrap()
            .sequence;
        assert_eq!(seq.len(), 1);
        let n = seq.notes()[0];
        assert_eq!(
            (n.pitch, n.onset, n.offset, n.velocity),
            (60, 0.5, 1.0, 100)
        );
    }

    #[test]
    fn velocity_zero_is_note_off() {
        // running status: second event is "60 0"
        let ev = [0x00, 0x90, 60, 90, 0x60, 60, 0, 0x00, 0xff, 0x2f, 0x00];
        let seq = parse_midi_bytes(&handmade(&ev, 96, 500_000))
            .unwrap()
            .sequence;
        assert_eq!(seq.len(), 1);
        assert!((seq.notes()[0].offset - 0.5).abs() < 1e-12);
    }

    #[test]
    fn drops_out_of_range_pitch() {
        let ev = [
            0x00, 0x90, 109, 90, 0x00, 0x90, 60, 90, 0x60, 0x80, 109, 0, 0x00, 0x80, 60, 0, 0x00,
            0xff, 0x2f, 0x00,
        ];
        let import = parse_midi_bytes(&handmade(&ev, 96, 500_000)).unwrap();
        assert_eq!(import.dropped_out_of_range, 1);
        assert_eq!(import.sequence.len(), 1);
    }

    #[test]
    fn truncated_chunk_reports_offset() {
        let mut bytes = handmade(&[0x00, 0x90, 60, 90, 0x00, 0xff, 0x2f, 0x00], 96, 500_000);
        bytes.truncate(bytes.len() - 3);
        match parse_midi_bytes(&bytes) {
            Err(Error::MidiParse { offset, .. }) => assert!(offset > 14),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header() {
        assert!(matches!(
            parse_midi_bytes(b"RIFF0000"),
            Err(Error::MidiParse { offset: 0, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_midi("/nonexistent/file.mid"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn empty_sequence_round_trip() {
        let seq = parse_midi_bytes(&write_midi_bytes(&NoteSequence::empty(0.0)))
            .unwrap()
            .sequence;
        assert!(seq.is_empty());
    }

    #[test]
    fn single_note_round_trip() {
        let seq = NoteSequence::from_tuples(&[(60, 0.5, 1.0)], 1.0).unwrap();
        let back = parse_midi_bytes(&write_midi_bytes(&seq)).unwrap().sequence;
        assert!((back.notes()[0].onset - 0.5).abs() <= 1.05e-3);
        assert!((back.notes()[0].offset - 1.0).abs() <= 1.05e-3);
    }

    #[test]
    fn ids_survive_round_trip() {
        let notes = vec![
            Note::new(42, 60, 0.5, 1.0, 80),
            Note::new(7, 60, 1.0, 1.5, 80),
            Note::new(9, 64, 0.2, 0.3, 80),
        ];
        let seq = NoteSequence::new(notes, 2.0).unwrap();
        let back = parse_midi_bytes(&write_midi_bytes(&seq)).unwrap().sequence;
        let ids: Vec<u32> = back.notes().iter().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![9, 42, 7]);
        assert!((back.duration() - 2.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn round_trip_within_one_tick(
            raw in prop::collection::vec((21u8..=108, 0.0f64..60.0, 0.002f64..5.0, 1u8..=127), 0..100)
        ) {
            let notes: Vec<Note> = raw
                .iter()
                .enumerate()
                .map(|(i, &(p, on, dur, v))| Note::new(i as u32, p, on, on + dur, v))
                .collect();
            let seq = NoteSequence::new(notes, 0.0).unwrap();
            let back = parse_midi_bytes(&write_midi_bytes(&seq)).unwrap().sequence;
            prop_assert_eq!(back.len(), seq.len());
            let tick = 1.0 / TICKS_PER_SECOND;
            for note in seq.notes() {
                let other = back.get(note.id).unwrap();
                prop_assert_eq!(other.pitch, note.pitch);
                prop_assert_eq!(other.velocity, note.velocity);
                prop_assert!((other.onset - note.onset).abs() <= tick);
                prop_assert!((other.offset - note.offset).abs() <= tick);
            }
        }
    }

    #[test]
    fn quantized_sequences_round_trip_exactly() {
        let seq =
            NoteSequence::from_tuples(&[(60, 0.123456, 0.5), (61, 1.0001, 1.2)], 2.0).unwrap();
        let q = quantize_to_ticks(&seq).unwrap();
        let back = parse_midi_bytes(&write_midi_bytes(&q)).unwrap().sequence;
        assert_eq!(back, q);
    }
}
