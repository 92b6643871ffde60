//! Feature matrices, extraction fingerprints and the `VXF1` container file.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::stft::StftConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    MelSpectrogram,
    Mfcc,
}

impl FeatureKind {
    pub fn code(&self) -> u32 {
        match self {
            FeatureKind::MelSpectrogram => 0,
            FeatureKind::Mfcc => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::MelSpectrogram),
            1 => Some(FeatureKind::Mfcc),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::MelSpectrogram => "mel_spectrogram",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

/// 2-D time-frequency feature array, row-major `[band][frame]`, plus the
/// fingerprint of every parameter that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub bands: usize,
    pub frames: usize,
    pub values: Vec<f64>,
    pub fingerprint: String,
}

impl FeatureMatrix {
    pub fn at(&self, band: usize, frame: usize) -> f64 {
        self.values[band * self.frames + frame]
    }
}

/// Per-band normalization statistics, computed over the training split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Single-pass population mean/std per band over a set of matrices.
    pub fn compute(mats: &[FeatureMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::config("cannot compute stats over an empty set"))?;
        let bands = first.bands;
        let mut sum = vec![0.0f64; bands];
        let mut sum_sq = vec![0.0f64; bands];
        let mut count = vec![0u64; bands];
        for m in mats {
            if m.bands != bands {
                return Err(Error::shape(format!(
                    "stats over mixed band counts: {} vs {bands}",
                    m.bands
                )));
            }
            for b in 0..bands {
                for t in 0..m.frames {
                    let v = m.values[b * m.frames + t];
                    sum[b] += v;
                    sum_sq[b] += v * v;
                }
                count[b] += m.frames as u64;
            }
        }
        let mut mean = vec![0.0f64; bands];
        let mut std = vec![0.0f64; bands];
        for b in 0..bands {
            let n = count[b] as f64;
            mean[b] = sum[b] / n;
            std[b] = (sum_sq[b] / n - mean[b] * mean[b]).max(0.0).sqrt();
        }
        Ok(FeatureStats { mean, std })
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.mean.iter().chain(self.std.iter()) {
            h.update(v.to_le_bytes());
        }
        hex_prefix(&h.finalize())
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn base_fingerprint(kind: &str, sample_rate_hz: u32, cfg: &StftConfig, tail: &str) -> String {
    let mut h = Sha256::new();
    h.update(
        format!(
            "kind={kind};rate={sample_rate_hz};window={};hop={};fft={};win_fn=hann;{tail}",
            cfg.window_length_samples, cfg.hop_samples, cfg.fft_size
        )
        .as_bytes(),
    );
    hex_prefix(&h.finalize())
}

pub(super) fn fingerprint_mel(
    sample_rate_hz: u32,
    cfg: &StftConfig,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> String {
    base_fingerprint(
        "mel_spectrogram",
        sample_rate_hz,
        cfg,
        &format!("n_mels={n_mels};f_min={f_min};f_max={f_max};log_floor=1e-10"),
    )
}

pub(super) fn fingerprint_mfcc(
    sample_rate_hz: u32,
    cfg: &StftConfig,
    n_mels: usize,
    n_mfcc: usize,
    f_min: f64,
    f_max: f64,
) -> String {
    base_fingerprint(
        "mfcc",
        sample_rate_hz,
        cfg,
        &format!("n_mels={n_mels};n_mfcc={n_mfcc};f_min={f_min};f_max={f_max};log_floor=1e-10"),
    )
}

pub(super) fn fingerprint_normalized(base: &str, stats: &FeatureStats) -> String {
    let mut h = Sha256::new();
    h.update(format!("{base};norm={}", stats.digest()).as_bytes());
    hex_prefix(&h.finalize())
}

const MAGIC: &[u8; 4] = b"VXF1";

/// Writes the `VXF1` container: magic, u32 LE {kind, bands, frames},
/// float32 LE row-major values, then the UTF-8 fingerprint.
pub fn write_feature_file(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut out = Vec::with_capacity(16 + m.values.len() * 4 + m.fingerprint.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&m.kind.code().to_le_bytes());
    out.extend_from_slice(&(m.bands as u32).to_le_bytes());
    out.extend_from_slice(&(m.frames as u32).to_le_bytes());
    for &v in &m.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(m.fingerprint.as_bytes());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            detail: "bad `VXF1` magic".into(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let kind = FeatureKind::from_code(word(4)).ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        detail: format!("unknown feature kind code {}", word(4)),
    })?;
    let bands = word(8) as usize;
    let frames = word(12) as usize;
    let data_len = bands * frames * 4;
    if bytes.len() < 16 + data_len {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            detail: format!(
                "truncated values: need {data_len} bytes, have {}",
                bytes.len() - 16
            ),
        });
    }
    let values: Vec<f64> = bytes[16..16 + data_len]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let fingerprint = String::from_utf8(bytes[16 + data_len..].to_vec()).map_err(|_| {
        Error::Decode {
            path: path.to_path_buf(),
            detail: "fingerprint is not valid UTF-8".into(),
        }
    })?;
    Ok(FeatureMatrix {
        kind,
        bands,
        frames,
        values,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.vxf");
        let m = FeatureMatrix {
            kind: FeatureKind::Mfcc,
            bands: 2,
            frames: 3,
            values: vec![0.5, -1.25, 3.0, 0.0, 7.5, -0.125],
            fingerprint: "abc123".into(),
        };
        write_feature_file(&p, &m).unwrap();
        let back = read_feature_file(&p).unwrap();
        assert_eq!(back.kind, m.kind);
        assert_eq!((back.bands, back.frames), (2, 3));
        assert_eq!(back.values, m.values); // exact: values chosen representable in f32
        assert_eq!(back.fingerprint, "abc123");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.vxf");
        fs::write(&p, b"VXF2\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(read_feature_file(&p).is_err());
    }

    #[test]
    fn distinct_params_distinct_fingerprints() {
        let cfg = StftConfig::default();
        let a = fingerprint_mel(16_000, &cfg, 64, 0.0, 8_000.0);
        let b = fingerprint_mel(16_000, &cfg, 32, 0.0, 8_000.0);
        let c = fingerprint_mfcc(16_000, &cfg, 64, 13, 0.0, 8_000.0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
