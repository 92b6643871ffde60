//! Short-time Fourier transform with Hann windowing.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub window_length_samples: usize,
    pub hop_samples: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_length_samples: super::DEFAULT_WINDOW,
            hop_samples: super::DEFAULT_HOP,
            fft_size: super::DEFAULT_FFT,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length_samples == 0 || self.hop_samples == 0 || self.fft_size == 0 {
            return Err(Error::config("STFT framing values must be positive"));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::config(format!(
                "fft_size must be a power of two, got {}",
                self.fft_size
            )));
        }
        if self.window_length_samples > self.fft_size {
            return Err(Error::config(format!(
                "window ({}) exceeds fft_size ({})",
                self.window_length_samples, self.fft_size
            )));
        }
        if self.hop_samples > self.window_length_samples {
            return Err(Error::config(format!(
                "hop ({}) exceeds window ({})",
                self.hop_samples, self.window_length_samples
            )));
        }
        Ok(())
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.window_length_samples {
            0
        } else {
            (num_samples - self.window_length_samples) / self.hop_samples + 1
        }
    }
}

/// One-sided power spectrogram, row-major `[bin][frame]`.
#[derive(Debug, Clone)]
pub struct PowerSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub power: Vec<f64>,
}

/// Per frame: Hann window, zero-pad to `fft_size`, magnitude-squared of the
/// one-sided DFT.
pub fn stft_power(samples: &[f32], cfg: &StftConfig) -> Result<PowerSpectrogram> {
    cfg.validate()?;
    let win_len = cfg.window_length_samples;
    if samples.len() < win_len {
        return Err(Error::config(format!(
            "input has {} samples but one STFT window needs at least {win_len}",
            samples.len()
        )));
    }
    let frames = cfg.num_frames(samples.len());
    let bins = cfg.fft_size / 2 + 1;

    // Periodic Hann window.
    let window: Vec<f64> = (0..win_len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / win_len as f64).cos()))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut power = vec![0.0f64; bins * frames];

    for t in 0..frames {
        let start = t * cfg.hop_samples;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = if n < win_len {
                Complex::new(samples[start + n] as f64 * window[n], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, row) in power.chunks_exact_mut(frames).enumerate().take(bins) {
            row[t] = buf[k].norm_sqr();
        }
    }

    Ok(PowerSpectrogram { bins, frames, power })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_output() {
        let cfg = StftConfig::default();
        let spec = stft_power(&vec![0.0; 4_000], &cfg).unwrap();
        assert!(spec.power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn three_second_framing() {
        let cfg = StftConfig::default();
        let spec = stft_power(&vec![0.1; 48_000], &cfg).unwrap();
        assert_eq!(spec.frames, 298);
        assert_eq!(spec.bins, 257);
    }

    #[test]
    fn too_short_input_advises_minimum_length() {
        let cfg = StftConfig::default();
        let err = stft_power(&vec![0.0; 100], &cfg).unwrap_err();
        assert!(err.to_string().contains("400"), "{err}");
    }

    #[test]
    fn bin_center_sine_dominates_expected_bin() {
        let cfg = StftConfig::default();
        let rate = 16_000.0f64;
        // Bin centers sit at k * rate / fft_size; pick k = 32 -> 1000 Hz.
        let f = 32.0 * rate / cfg.fft_size as f64;
        let samples: Vec<f32> = (0..16_000)
            .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / rate).sin() as f32 * 0.8)
            .collect();
        let spec = stft_power(&samples, &cfg).unwrap();
        let expected_bin = (f * cfg.fft_size as f64 / rate).round() as usize;
        for t in 0..spec.frames {
            let mut best = 0;
            let mut best_p = -1.0;
            for k in 0..spec.bins {
                let p = spec.power[k * spec.frames + t];
                if p > best_p {
                    best_p = p;
                    best = k;
                }
            }
            assert_eq!(best, expected_bin, "frame {t}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = StftConfig::default();
        cfg.fft_size = 500; // not a power of two
        assert!(cfg.validate().is_err());
        let mut cfg = StftConfig::default();
        cfg.window_length_samples = 1_024;
        assert!(cfg.validate().is_err());
        let mut cfg = StftConfig::default();
        cfg.hop_samples = 401;
        assert!(cfg.validate().is_err());
    }
}
