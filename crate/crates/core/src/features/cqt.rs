use ndarray::Array2;

use super::{AudioBuffer, FeatureKind, FeatureMatrix, PIPELINE_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqtParams {
    pub hop: usize,
    pub bins: usize,
    pub bins_per_octave: usize,
    pub fmin: f64,
}

impl Default for CqtParams {
    fn default() -> Self {
        CqtParams {
            hop: 160,
            bins: 88,
            bins_per_octave: 12,
            fmin: 27.5,
        }
    }
}

impl CqtParams {
    pub fn center_frequency(&self, bin: usize) -> f64 {
        self.fmin * 2f64.powf(bin as f64 / self.bins_per_octave as f64)
    }
}

/// Hann-windowed complex exponential for one bin, split in real and
/// imaginary parts and normalized by the window sum.
struct Kernel {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

fn kernels(params: &CqtParams, sample_rate: f64) -> Vec<Kernel> {
    let q = 1.0 / (2f64.powf(1.0 / params.bins_per_octave as f64) - 1.0);
    (0..params.bins)
        .map(|k| {
            let f = params.center_frequency(k);
            let len = ((q * sample_rate / f).ceil() as usize).max(1);
            let window: Vec<f64> = (0..len)
                .map(|n| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * (n as f64 + 0.5) / len as f64).cos()
                })
                .collect();
            let norm: f64 = window.iter().sum();
            let mid = (len as f64 - 1.0) / 2.0;
            let (cos, sin) = window
                .iter()
                .enumerate()
                .map(|(n, w)| {
                    let phase = 2.0 * std::f64::consts::PI * f * (n as f64 - mid) / sample_rate;
                    (w * phase.cos() / norm, -w * phase.sin() / norm)
                })
                .unzip();
            Kernel { cos, sin }
        })
        .collect()
}

/// Constant-Q magnitude spectrogram by direct filtering.
///
/// Frame `r` covers samples `[r*hop, (r+1)*hop)` and every bin's window is
/// centered on the middle of that span. A sinusoid of amplitude `a` at a
/// bin's center frequency yields a magnitude of about `a / 2`.
pub fn compute_cqt(audio: &AudioBuffer, params: &CqtParams) -> Result<FeatureMatrix> {
    if audio.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "CQT expects {PIPELINE_SAMPLE_RATE} Hz audio, got {} Hz",
            audio.sample_rate
        )));
    }
    if params.hop == 0 || !(audio.sample_rate as usize).is_multiple_of(params.hop) {
        return Err(Error::invalid(format!(
            "hop {} does not divide the sample rate",
            params.hop
        )));
    }
    if params.bins != FeatureKind::Cqt.bins() {
        return Err(Error::invalid("the pipeline CQT has 88 bins"));
    }
    let sr = audio.sample_rate as f64;
    if params.center_frequency(params.bins - 1) >= sr / 2.0 {
        return Err(Error::invalid(
            "highest CQT bin exceeds the Nyquist frequency",
        ));
    }
    let kernels = kernels(params, sr);
    let max_len = kernels.iter().map(|k| k.cos.len()).max().unwrap_or(1);
    let n_frames = audio.len().div_ceil(params.hop);

    // zero padding on both sides so every window lies inside the buffer
    let pad = max_len / 2 + params.hop;
    let mut padded = vec![0.0; audio.len() + 2 * pad];
    padded[pad..pad + audio.len()].copy_from_slice(&audio.samples);

    let mut values = Array2::zeros((n_frames, params.bins));
    for (r, mut row) in values.rows_mut().into_iter().enumerate() {
        let center = pad + r * params.hop + params.hop / 2;
        for (bin, kernel) in kernels.iter().enumerate() {
            let len = kernel.cos.len();
            let start = center - len / 2;
            let x = &padded[start..start + len];
            let (mut re, mut im) = (0.0, 0.0);
            for ((s, c), si) in x.iter().zip(&kernel.cos).zip(&kernel.sin) {
                re += s * c;
                im += s * si;
            }
            row[bin] = (re * re + im * im).sqrt();
        }
    }
    FeatureMatrix::new(
        values,
        audio.sample_rate / params.hop as u32,
        FeatureKind::Cqt,
    )
}
