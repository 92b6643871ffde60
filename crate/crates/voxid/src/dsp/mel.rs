//! Mel scale mapping and triangular filterbank construction.

use crate::error::{Error, Result};

/// Power values below this floor are clamped before log compression.
pub const LOG_FLOOR: f64 = 1e-10;

/// HTK-style mapping: `mel = 2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// The `n_mels` filter center frequencies: mel-equidistant points between
/// `hz_to_mel(f_min)` and `hz_to_mel(f_max)`, mapped back to Hz.
pub fn mel_center_frequencies(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    edge_frequencies(n_mels, f_min, f_max)[1..=n_mels].to_vec()
}

/// The `n_mels + 2` triangle edge points (left edge, centers, right edge).
fn edge_frequencies(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let mel_min = hz_to_mel(f_min);
    let mel_max = hz_to_mel(f_max);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_min + (mel_max - mel_min) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank, row-major `[n_mels][fft_size / 2 + 1]`,
/// peak-normalized so every filter's maximum weight is exactly 1.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate_hz: u32,
    f_min: f64,
    f_max: f64,
) -> Result<Vec<f64>> {
    if n_mels < 2 {
        return Err(Error::config(format!("n_mels must be at least 2, got {n_mels}")));
    }
    let nyquist = sample_rate_hz as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(Error::config(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got f_min={f_min}, f_max={f_max}"
        )));
    }

    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate_hz as f64 / fft_size as f64;
    let edges = edge_frequencies(n_mels, f_min, f_max);

    // Two centers landing in the same FFT bin make an empty filter.
    for m in 0..n_mels - 1 {
        let a = (edges[m + 1] / bin_hz).round() as i64;
        let b = (edges[m + 2] / bin_hz).round() as i64;
        if a == b {
            return Err(Error::config(format!(
                "degenerate mel spacing: filters {m} and {} share FFT bin {a} \
                 (centers {:.2} Hz and {:.2} Hz)",
                m + 1,
                edges[m + 1],
                edges[m + 2]
            )));
        }
    }

    let mut fb = vec![0.0f64; n_mels * bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut fb[m * bins..(m + 1) * bins];
        let mut peak = 0.0f64;
        for (k, slot) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            *slot = w;
            peak = peak.max(w);
        }
        if peak == 0.0 {
            return Err(Error::config(format!(
                "degenerate mel filter {m}: no FFT bin falls inside ({left:.2}, {right:.2}) Hz"
            )));
        }
        for slot in row.iter_mut() {
            *slot /= peak;
        }
    }
    Ok(fb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_formula_values() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 781.1723).abs() < 1e-3);
        assert!((hz_to_mel(1000.0) - 999.9855).abs() < 1e-2);
    }

    #[test]
    fn hz_mel_roundtrip_over_speech_band() {
        for i in 0..=800 {
            let f = i as f64 * 10.0;
            let back = mel_to_hz(hz_to_mel(f));
            let rel = if f == 0.0 { back.abs() } else { (back - f).abs() / f };
            assert!(rel < 1e-9, "f={f}, back={back}");
        }
    }

    #[test]
    fn every_filter_peaks_at_one() {
        let fb = mel_filterbank(64, 512, 16_000, 0.0, 8_000.0).unwrap();
        let bins = 257;
        for m in 0..64 {
            let peak = fb[m * bins..(m + 1) * bins]
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            assert_eq!(peak, 1.0, "filter {m}");
        }
    }

    #[test]
    fn centers_are_mel_to_hz_of_linspace() {
        let centers = mel_center_frequencies(2, 100.0, 4_000.0);
        let m_lo = hz_to_mel(100.0);
        let m_hi = hz_to_mel(4_000.0);
        let want0 = mel_to_hz(m_lo + (m_hi - m_lo) / 3.0);
        let want1 = mel_to_hz(m_lo + 2.0 * (m_hi - m_lo) / 3.0);
        assert!((centers[0] - want0).abs() < 1e-9);
        assert!((centers[1] - want1).abs() < 1e-9);
    }

    #[test]
    fn band_is_fully_covered() {
        let fb = mel_filterbank(64, 512, 16_000, 0.0, 8_000.0).unwrap();
        let bins = 257;
        let bin_hz = 16_000.0 / 512.0;
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            if f > 0.0 && f < 8_000.0 {
                let covered = (0..64).any(|m| fb[m * bins + k] > 0.0);
                assert!(covered, "bin {k} ({f} Hz) uncovered");
            }
        }
    }

    #[test]
    fn colliding_centers_are_rejected_with_filter_names() {
        // 64 filters squeezed below 200 Hz put many centers into FFT bin 0/1.
        let err = mel_filterbank(64, 512, 16_000, 0.0, 200.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("filters"), "{msg}");
    }
}
