//! Feature extraction: STFT power spectra, Mel spectrograms and MFCCs.

mod dct;
mod feature;
mod mel;
mod stft;

pub use dct::dct_ortho_matrix;
pub use feature::{
    read_feature_file, write_feature_file, FeatureKind, FeatureMatrix, FeatureStats,
};
pub use mel::{
    hz_to_mel, mel_center_frequencies, mel_filterbank, mel_to_hz, LOG_FLOOR,
};
pub use stft::{stft_power, PowerSpectrogram, StftConfig, WindowKind};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Default analysis framing: 25 ms window, 10 ms hop at 16 kHz, 512-point FFT.
pub const DEFAULT_WINDOW: usize = 400;
pub const DEFAULT_HOP: usize = 160;
pub const DEFAULT_FFT: usize = 512;
pub const DEFAULT_N_MELS: usize = 64;
pub const DEFAULT_N_MFCC: usize = 13;
pub const DEFAULT_F_MIN: f64 = 0.0;
pub const DEFAULT_F_MAX: f64 = 8_000.0;

/// Mel filterbank projection of the power spectrogram, log-compressed to dB
/// with a 1e-10 floor.
pub fn mel_spectrogram(
    clip: &AudioClip,
    cfg: &StftConfig,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> Result<FeatureMatrix> {
    let spec = stft_power(&clip.samples, cfg)?;
    let fb = mel_filterbank(n_mels, cfg.fft_size, clip.sample_rate_hz, f_min, f_max)?;
    let bins = spec.bins;
    let frames = spec.frames;
    let mut values = vec![0.0f64; n_mels * frames];
    for m in 0..n_mels {
        let row = &fb[m * bins..(m + 1) * bins];
        for t in 0..frames {
            let mut acc = 0.0;
            for (k, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    acc += w * spec.power[k * frames + t];
                }
            }
            values[m * frames + t] = 10.0 * acc.max(LOG_FLOOR).log10();
        }
    }
    let fingerprint = feature::fingerprint_mel(clip.sample_rate_hz, cfg, n_mels, f_min, f_max);
    Ok(FeatureMatrix {
        kind: FeatureKind::MelSpectrogram,
        bands: n_mels,
        frames,
        values,
        fingerprint,
    })
}

/// MFCCs: orthonormal DCT-II over per-frame log-Mel energies, truncated to
/// the first `n_mfcc` coefficients.
pub fn mfcc(
    clip: &AudioClip,
    cfg: &StftConfig,
    n_mels: usize,
    n_mfcc: usize,
    f_min: f64,
    f_max: f64,
) -> Result<FeatureMatrix> {
    if n_mfcc > n_mels {
        return Err(Error::config(format!(
            "n_mfcc ({n_mfcc}) must not exceed n_mels ({n_mels})"
        )));
    }
    let mel = mel_spectrogram(clip, cfg, n_mels, f_min, f_max)?;
    let dct = dct_ortho_matrix(n_mels);
    let frames = mel.frames;
    let mut values = vec![0.0f64; n_mfcc * frames];
    for t in 0..frames {
        for k in 0..n_mfcc {
            let mut acc = 0.0;
            for n in 0..n_mels {
                acc += dct[k * n_mels + n] * mel.values[n * frames + t];
            }
            values[k * frames + t] = acc;
        }
    }
    let fingerprint =
        feature::fingerprint_mfcc(clip.sample_rate_hz, cfg, n_mels, n_mfcc, f_min, f_max);
    Ok(FeatureMatrix {
        kind: FeatureKind::Mfcc,
        bands: n_mfcc,
        frames,
        values,
        fingerprint,
    })
}

/// Per-band standardization: `(value - mean) / max(std, 1e-8)`.
/// Stats must come from the training split only.
pub fn normalize_features(m: &FeatureMatrix, stats: &FeatureStats) -> Result<FeatureMatrix> {
    if stats.mean.len() != m.bands {
        return Err(Error::shape(format!(
            "normalization stats have {} bands, feature matrix has {}",
            stats.mean.len(),
            m.bands
        )));
    }
    let mut values = Vec::with_capacity(m.values.len());
    for b in 0..m.bands {
        let mean = stats.mean[b];
        let denom = stats.std[b].max(1e-8);
        for t in 0..m.frames {
            values.push((m.values[b * m.frames + t] - mean) / denom);
        }
    }
    Ok(FeatureMatrix {
        kind: m.kind,
        bands: m.bands,
        frames: m.frames,
        values,
        fingerprint: feature::fingerprint_normalized(&m.fingerprint, stats),
    })
}
