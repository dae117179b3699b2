use super::AudioBuffer;
use crate::symbolic::NoteSequence;

const HARMONICS: usize = 4;
const DECAY_SECONDS: f64 = 0.3;
const ATTACK_SECONDS: f64 = 0.005;
const RELEASE_SECONDS: f64 = 0.010;
const PEAK: f64 = 0.5;

/// Equal-tempered frequency of a MIDI pitch.
pub fn pitch_frequency(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

/// Deterministic additive piano stand-in.
///
/// Every note sounds four harmonics (amplitude `1/h`) under a 5 ms linear
/// attack and an exponential decay with a 0.3 s time constant, scaled by
/// `velocity / 127`. At the offset a 10 ms linear release fades the note
/// out. The mix is peak-normalized to 0.5.
pub fn render_notes_to_audio(seq: &NoteSequence, sample_rate: u32) -> AudioBuffer {
    let sr = sample_rate as f64;
    let len = (seq.duration() * sr).round() as usize;
    let mut out = vec![0.0; len];
    for note in seq.notes() {
        let f0 = pitch_frequency(note.pitch);
        let gain = note.velocity as f64 / 127.0;
        let start = (note.onset * sr).round() as usize;
        let sounding = ((note.offset - note.onset) * sr).round() as usize;
        let release = (RELEASE_SECONDS * sr).round() as usize;
        let end = (start + sounding + release).min(len);
        let partials: Vec<(f64, f64)> = (1..=HARMONICS)
            .map(|h| (f0 * h as f64, 1.0 / h as f64))
            .filter(|&(f, _)| f < sr / 2.0)
            .collect();
        for (i, sample) in out.iter_mut().enumerate().take(end).skip(start) {
            let n = i - start;
            let t = n as f64 / sr;
            let mut env = (t / ATTACK_SECONDS).min(1.0) * (-t / DECAY_SECONDS).exp();
            if n >= sounding {
                env *= 1.0 - (n - sounding) as f64 / release as f64;
            }
            let tone: f64 = partials
                .iter()
                .map(|&(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum();
            *sample += gain * env * tone;
        }
    }
    let peak = out.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        for x in &mut out {
            *x *= PEAK / peak;
        }
    }
    AudioBuffer {
        samples: out,
        sample_rate,
    }
}
