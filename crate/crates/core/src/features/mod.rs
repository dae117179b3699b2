//! Audio buffers, resampling, spectral features and the test synthesizer.

mod cqt;
mod mel;
mod synth;

use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::PianoRoll;

pub use cqt::{compute_cqt, CqtParams};
pub use mel::compute_mel;
pub use synth::{pitch_frequency, render_notes_to_audio};

/// Sample rate of the whole feature pipeline.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;
/// Compression factor of [`log_scale`].
pub const LOG_GAMMA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("audio contains non-finite samples"));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        AudioBuffer {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Samples in `[start, end)` seconds, zero-filled past the end.
    pub fn slice_seconds(&self, start: f64, end: f64) -> AudioBuffer {
        let sr = self.sample_rate as f64;
        let a = (start * sr).round().max(0.0) as usize;
        let b = (end * sr).round().max(0.0) as usize;
        let mut samples = vec![0.0; b.saturating_sub(a)];
        if a < self.samples.len() {
            let avail = &self.samples[a..b.min(self.samples.len())];
            samples[..avail.len()].copy_from_slice(avail);
        }
        AudioBuffer {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a PCM 16-bit or 32-bit float WAV file, mixing channels down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Int, bits) if bits <= 32 => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
        (format, bits) => {
            return Err(Error::invalid(format!(
                "unsupported WAV encoding {format:?} with {bits} bits"
            )))
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes mono PCM 16-bit WAV.
pub fn write_wav(audio: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for &x in &audio.samples {
        writer.write_sample((x.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    if audio.is_empty() {
        return Err(Error::invalid("cannot resample empty audio"));
    }
    if audio.sample_rate == target_rate {
        return Ok(audio.clone());
    }
    const ZERO_CROSSINGS: f64 = 24.0;
    let src = audio.sample_rate as f64;
    let dst = target_rate as f64;
    let ratio = dst / src;
    let out_len = (audio.len() as f64 * ratio).round() as usize;
    // cutoff relative to the input Nyquist frequency
    let cutoff = ratio.min(1.0) * 0.95;
    let half_width = ZERO_CROSSINGS / cutoff;
    let input = &audio.samples;
    let samples = (0..out_len)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = (center - half_width).ceil().max(0.0) as usize;
            let hi = ((center + half_width).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let t = k as f64 - center;
                let window = 0.5 + 0.5 * (std::f64::consts::PI * t / half_width).cos();
                acc += x * cutoff * sinc(cutoff * t) * window;
            }
            acc
        })
        .collect();
    AudioBuffer::new(samples, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Cqt,
    Mel,
    Chroma,
    Dlnco,
}

impl FeatureKind {
    pub fn bins(self) -> usize {
        match self {
            FeatureKind::Cqt | FeatureKind::Mel => 88,
            FeatureKind::Chroma | FeatureKind::Dlnco => 12,
        }
    }
}

/// Real-valued frame x bin matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub fps: u32,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, fps: u32, kind: FeatureKind) -> Result<Self> {
        if values.ncols() != kind.bins() {
            return Err(Error::invalid(format!(
                "{kind:?} features need {} bins, got {}",
                kind.bins(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(FeatureMatrix { values, fps, kind })
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    /// Averages groups of `factor` consecutive frames.
    pub fn downsample(&self, factor: usize) -> FeatureMatrix {
        FeatureMatrix {
            values: average_frames(&self.values, factor),
            fps: self.fps / factor as u32,
            kind: self.kind,
        }
    }
}

pub(crate) fn average_frames(values: &Array2<f64>, factor: usize) -> Array2<f64> {
    if factor <= 1 {
        return values.clone();
    }
    let n = values.nrows().div_ceil(factor);
    let mut out = Array2::zeros((n, values.ncols()));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let block = values.slice(s![i * factor..((i + 1) * factor).min(values.nrows()), ..]);
        row.assign(&block.mean_axis(ndarray::Axis(0)).unwrap());
    }
    out
}

/// Elementwise `ln(1 + 10 x)`.
pub fn log_scale(feat: &FeatureMatrix) -> Result<FeatureMatrix> {
    if feat.values.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("log scaling needs non-negative magnitudes"));
    }
    Ok(FeatureMatrix {
        values: feat.values.mapv(|x| (LOG_GAMMA * x).ln_1p()),
        ..feat.clone()
    })
}

/// Zero-pads a roll and a feature matrix at the end to a common length.
pub fn pad_pair(roll: &PianoRoll, feat: &FeatureMatrix) -> Result<(PianoRoll, FeatureMatrix)> {
    if roll.fps != feat.fps {
        return Err(Error::invalid(format!(
            "frame rate mismatch: piano roll {} fps, features {} fps",
            roll.fps, feat.fps
        )));
    }
    let n = roll.n_frames().max(feat.n_frames());
    let mut frames = Array2::zeros((n, roll.frames.ncols()));
    frames
        .slice_mut(s![..roll.n_frames(), ..])
        .assign(&roll.frames);
    let mut values = Array2::zeros((n, feat.values.ncols()));
    values
        .slice_mut(s![..feat.n_frames(), ..])
        .assign(&feat.values);
    Ok((
        PianoRoll {
            frames,
            fps: roll.fps,
        },
        FeatureMatrix {
            values,
            fps: feat.fps,
            kind: feat.kind,
        },
    ))
}

/// Dominant frequency of a signal by FFT peak picking; used by tests.
#[cfg(test)]
pub(crate) fn dominant_frequency(audio: &AudioBuffer) -> (f64, f64) {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = audio.len();
    let mut buf: Vec<Complex<f64>> = audio
        .samples
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, _) = buf[..n / 2]
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap();
    let bin_hz = audio.sample_rate as f64 / n as f64;
    (k as f64 * bin_hz, bin_hz)
}

#[cfg(test)]
pub(crate) fn sine(freq: f64, seconds: f64, sample_rate: u32) -> AudioBuffer {
    let n = (seconds * sample_rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sample_rate as f64).sin())
        .collect();
    AudioBuffer::new(samples, sample_rate).unwrap()
}
