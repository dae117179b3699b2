use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioBuffer, FeatureKind, FeatureMatrix, PIPELINE_SAMPLE_RATE};
use crate::error::{Error, Result};

const N_FFT: usize = 2048;
const N_BANDS: usize = 88;
const F_LOW: f64 = 27.5;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters `[band][fft bin]` on the HTK mel scale.
fn filterbank(sample_rate: f64) -> Array2<f64> {
    let f_high = sample_rate / 2.0;
    let (m_lo, m_hi) = (hz_to_mel(F_LOW), hz_to_mel(f_high));
    let edges: Vec<f64> = (0..N_BANDS + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (N_BANDS + 1) as f64))
        .collect();
    let n_bins = N_FFT / 2 + 1;
    Array2::from_shape_fn((N_BANDS, n_bins), |(band, k)| {
        let f = k as f64 * sample_rate / N_FFT as f64;
        let (lo, mid, hi) = (edges[band], edges[band + 1], edges[band + 2]);
        if f <= lo || f >= hi {
            0.0
        } else if f <= mid {
            (f - lo) / (mid - lo)
        } else {
            (hi - f) / (hi - mid)
        }
    })
}

/// Mel magnitude spectrogram with 88 bands from 27.5 Hz to Nyquist, framed
/// exactly like [`super::compute_cqt`].
pub fn compute_mel(audio: &AudioBuffer, hop: usize) -> Result<FeatureMatrix> {
    if audio.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "mel spectrogram expects {PIPELINE_SAMPLE_RATE} Hz audio, got {} Hz",
            audio.sample_rate
        )));
    }
    if hop == 0 || !(audio.sample_rate as usize).is_multiple_of(hop) {
        return Err(Error::invalid(format!(
            "hop {hop} does not divide the sample rate"
        )));
    }
    let fb = filterbank(audio.sample_rate as f64);
    let window: Vec<f64> = (0..N_FFT)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / N_FFT as f64).cos())
        .collect();
    let norm: f64 = window.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(N_FFT);
    let n_frames = audio.len().div_ceil(hop);
    let pad = N_FFT / 2 + hop;
    let mut padded = vec![0.0; audio.len() + 2 * pad];
    padded[pad..pad + audio.len()].copy_from_slice(&audio.samples);

    let mut values = Array2::zeros((n_frames, N_BANDS));
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut magnitude = ndarray::Array1::zeros(N_FFT / 2 + 1);
    for r in 0..n_frames {
        let start = pad + r * hop + hop / 2 - N_FFT / 2;
        for (slot, (x, w)) in buf.iter_mut().zip(padded[start..].iter().zip(&window)) {
            *slot = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (m, c) in magnitude.iter_mut().zip(&buf) {
            *m = 2.0 * c.norm() / norm;
        }
        values.row_mut(r).assign(&fb.dot(&magnitude));
    }
    FeatureMatrix::new(values, audio.sample_rate / hop as u32, FeatureKind::Mel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn thirty_seconds_gives_3000_frames() {
        let m = compute_mel(&AudioBuffer::silence(480_000, 16_000), 160).unwrap();
        assert_eq!(m.values.dim(), (3000, 88));
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_fills_every_band() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples = (0..16_000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let m = compute_mel(&AudioBuffer::new(samples, 16_000).unwrap(), 160).unwrap();
        assert!(m.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn every_band_has_support() {
        let fb = filterbank(16_000.0);
        for band in fb.rows() {
            assert!(band.iter().any(|&w| w > 0.0));
        }
    }
}
