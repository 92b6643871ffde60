//! Audio ingestion: WAV decoding, resampling, chunking and pre-emphasis.
//!
//! All clips are mono with amplitudes in [-1, 1]. The pipeline sample rate
//! is fixed at 16 kHz; corpora at other rates are resampled on ingest.

mod metadata;
mod wav;

pub use metadata::{Gender, MetadataTable, SpeakerMetadata};
pub use wav::{load_wav, write_wav_pcm16};

use crate::error::{Error, Result};

/// Sample rate every corpus is normalized to before feature extraction.
pub const PIPELINE_RATE_HZ: u32 = 16_000;

/// Default pre-emphasis coefficient applied before spectral analysis.
pub const PREEMPHASIS_ALPHA: f64 = 0.97;

/// A mono audio segment with speaker/metadata labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate_hz: u32,
        speaker_id: impl Into<String>,
        utterance_id: impl Into<String>,
    ) -> Self {
        AudioClip {
            samples,
            sample_rate_hz,
            speaker_id: speaker_id.into(),
            utterance_id: utterance_id.into(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Checks the type invariants: nonempty, finite, within [-1, 1], rate > 0.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::config(format!(
                "clip {} has no samples",
                self.utterance_id
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::config(format!(
                "clip {} has zero sample rate",
                self.utterance_id
            )));
        }
        for (i, &s) in self.samples.iter().enumerate() {
            if !s.is_finite() || !(-1.0..=1.0).contains(&s) {
                return Err(Error::config(format!(
                    "clip {} sample {} out of range: {}",
                    self.utterance_id, i, s
                )));
            }
        }
        Ok(())
    }
}

/// Linear-interpolation resampling. Output length is
/// `round(input_length * target / source)`; equal rates pass through bit-exact.
pub fn resample(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip> {
    if target_rate_hz == 0 {
        return Err(Error::config("target sample rate must be positive"));
    }
    if clip.sample_rate_hz == target_rate_hz {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let n_in = src.len();
    let ratio = target_rate_hz as f64 / clip.sample_rate_hz as f64;
    let n_out = (n_in as f64 * ratio).round() as usize;
    let step = clip.sample_rate_hz as f64 / target_rate_hz as f64;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let pos = i as f64 * step;
        let idx = (pos.floor() as usize).min(n_in - 1);
        let next = (idx + 1).min(n_in - 1);
        let frac = (pos - idx as f64) as f32;
        out.push(src[idx] + frac * (src[next] - src[idx]));
    }
    Ok(AudioClip {
        samples: out,
        sample_rate_hz: target_rate_hz,
        speaker_id: clip.speaker_id.clone(),
        utterance_id: clip.utterance_id.clone(),
    })
}

/// Splits a clip into consecutive non-overlapping windows of exactly
/// `chunk_seconds`; the trailing remainder is dropped. A clip shorter than
/// one window yields an empty list.
pub fn chunk_fixed(clip: &AudioClip, chunk_seconds: f64) -> Result<Vec<AudioClip>> {
    if chunk_seconds <= 0.0 {
        return Err(Error::config("chunk_seconds must be positive"));
    }
    let window = (chunk_seconds * clip.sample_rate_hz as f64).round() as usize;
    if window == 0 {
        return Err(Error::config("chunk window rounds to zero samples"));
    }
    let mut chunks = Vec::new();
    for (k, slice) in clip.samples.chunks_exact(window).enumerate() {
        chunks.push(AudioClip {
            samples: slice.to_vec(),
            sample_rate_hz: clip.sample_rate_hz,
            speaker_id: clip.speaker_id.clone(),
            utterance_id: format!("{}-{}", clip.utterance_id, k),
        });
    }
    Ok(chunks)
}

/// First-order high-pass filter: `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn preemphasis(clip: &AudioClip, alpha: f64) -> Result<AudioClip> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config(format!(
            "pre-emphasis alpha must be in [0, 1), got {alpha}"
        )));
    }
    let x = &clip.samples;
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
        for n in 1..x.len() {
            y.push(x[n] - (alpha as f32) * x[n - 1]);
        }
    }
    Ok(AudioClip {
        samples: y,
        sample_rate_hz: clip.sample_rate_hz,
        speaker_id: clip.speaker_id.clone(),
        utterance_id: clip.utterance_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f32>, rate: u32) -> AudioClip {
        AudioClip::new(samples, rate, "spk", "utt")
    }

    #[test]
    fn resample_identity_is_bit_exact() {
        let c = clip(vec![0.1, -0.2, 0.3], 16_000);
        let r = resample(&c, 16_000).unwrap();
        assert_eq!(r.samples, c.samples);
    }

    #[test]
    fn resample_doubles_with_midpoints() {
        let c = clip(vec![0.0, 1.0, 0.0, -1.0], 8_000);
        let r = resample(&c, 16_000).unwrap();
        assert_eq!(r.samples.len(), 8);
        assert!((r.samples[1] - 0.5).abs() < 1e-6);
        assert!((r.samples[2] - 1.0).abs() < 1e-6);
        assert!((r.samples[3] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn resample_length_arithmetic() {
        let c = clip(vec![0.0; 48_000], 48_000);
        let r = resample(&c, 16_000).unwrap();
        assert_eq!(r.samples.len(), 16_000);
    }

    #[test]
    fn resample_down_up_roundtrip_length_within_one() {
        for n in [37usize, 1000, 4801] {
            let c = clip((0..n).map(|i| (i as f32).sin() * 0.5).collect(), 16_000);
            let up = resample(&c, 32_000).unwrap();
            let back = resample(&up, 16_000).unwrap();
            let diff = back.samples.len() as i64 - n as i64;
            assert!(diff.abs() <= 1, "length {} -> {}", n, back.samples.len());
        }
    }

    #[test]
    fn chunk_drops_trailing_remainder() {
        let c = clip(vec![0.0; 120_000], 16_000); // 7.5 s
        let chunks = chunk_fixed(&c, 3.0).unwrap();
        assert_eq!(chunks.len(), 2);
        assert!(chunks.iter().all(|ch| ch.samples.len() == 48_000));
        assert_eq!(chunks[0].utterance_id, "utt-0");
        assert_eq!(chunks[1].utterance_id, "utt-1");
    }

    #[test]
    fn chunk_exact_boundary_yields_one() {
        let c = clip(vec![0.0; 48_000], 16_000);
        assert_eq!(chunk_fixed(&c, 3.0).unwrap().len(), 1);
    }

    #[test]
    fn chunk_too_short_yields_empty() {
        let c = clip(vec![0.0; 32_000], 16_000); // 2 s
        assert!(chunk_fixed(&c, 3.0).unwrap().is_empty());
    }

    #[test]
    fn chunks_concatenate_to_input_prefix() {
        let samples: Vec<f32> = (0..10_000).map(|i| ((i * 37) % 201) as f32 / 200.0).collect();
        let c = clip(samples.clone(), 1_000);
        let chunks = chunk_fixed(&c, 3.0).unwrap();
        let concat: Vec<f32> = chunks.iter().flat_map(|ch| ch.samples.clone()).collect();
        assert_eq!(&samples[..concat.len()], &concat[..]);
    }

    #[test]
    fn preemphasis_zero_alpha_is_identity() {
        let c = clip(vec![0.3, -0.5, 0.7], 16_000);
        let y = preemphasis(&c, 0.0).unwrap();
        assert_eq!(y.samples, c.samples);
    }

    #[test]
    fn preemphasis_hand_recurrence() {
        let c = clip(vec![1.0, 1.0, 1.0], 16_000);
        let y = preemphasis(&c, 0.97).unwrap();
        assert!((y.samples[0] - 1.0).abs() < 1e-7);
        assert!((y.samples[1] - 0.03).abs() < 1e-6);
        assert!((y.samples[2] - 0.03).abs() < 1e-6);
    }

    #[test]
    fn preemphasis_dc_signal() {
        let c = clip(vec![0.5; 64], 16_000);
        let y = preemphasis(&c, 0.97).unwrap();
        for &v in &y.samples[1..] {
            assert!((v - 0.03 * 0.5).abs() < 1e-6);
        }
    }
}
