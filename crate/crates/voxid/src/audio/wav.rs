//! Minimal RIFF/WAVE reader and writer for the encodings the pipeline uses:
//! PCM 16-bit and IEEE float 32-bit, mono or stereo.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const SUPPORTED: &str = "PCM 16-bit, IEEE float 32-bit";

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, chunk: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Decode {
                path: self.path.to_path_buf(),
                detail: format!("truncated `{chunk}` chunk"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, chunk: &str) -> Result<u16> {
        let b = self.take(2, chunk)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, chunk: &str) -> Result<u32> {
        let b = self.take(4, chunk)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes a WAV file into a mono [`AudioClip`]. Stereo files are downmixed
/// by channel mean; 16-bit samples are scaled by 1/32768.
///
/// The clip's `utterance_id` is the file stem; `speaker_id` is left empty
/// for the caller to fill from metadata.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };

    let magic = cur.take(4, "RIFF")?;
    if magic != b"RIFF" {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            detail: format!(
                "bad `RIFF` chunk magic: {:?}",
                String::from_utf8_lossy(magic)
            ),
        });
    }
    let _riff_size = cur.u32("RIFF")?;
    let wave = cur.take(4, "WAVE")?;
    if wave != b"WAVE" {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            detail: format!("bad `WAVE` form type: {:?}", String::from_utf8_lossy(wave)),
        });
    }

    let mut format_tag: Option<u16> = None;
    let mut channels = 0u16;
    let mut sample_rate = 0u32;
    let mut bits_per_sample = 0u16;
    let mut data: Option<&[u8]> = None;

    while cur.pos + 8 <= bytes.len() {
        let id = cur.take(4, "chunk header")?.to_vec();
        let size = cur.u32("chunk header")? as usize;
        match &id[..] {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Decode {
                        path: path.to_path_buf(),
                        detail: format!("`fmt ` chunk too short: {size} bytes"),
                    });
                }
                let start = cur.pos;
                format_tag = Some(cur.u16("fmt ")?);
                channels = cur.u16("fmt ")?;
                sample_rate = cur.u32("fmt ")?;
                cur.u32("fmt ")?; // byte rate
                cur.u16("fmt ")?; // block align
                bits_per_sample = cur.u16("fmt ")?;
                cur.pos = start + size + (size & 1);
            }
            b"data" => {
                data = Some(cur.take(size, "data")?);
                cur.pos += size & 1;
            }
            _ => {
                // skip unknown chunks (LIST, fact, ...)
                cur.take(size, "chunk body")?;
                cur.pos += size & 1;
            }
        }
    }

    let format_tag = format_tag.ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        detail: "missing `fmt ` chunk".into(),
    })?;
    let data = data.ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        detail: "missing `data` chunk".into(),
    })?;
    if sample_rate == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            detail: "`fmt ` chunk declares zero sample rate".into(),
        });
    }
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("{channels} channels"),
            supported: format!("{SUPPORTED}, 1 or 2 channels"),
        });
    }

    let interleaved: Vec<f32> = match (format_tag, bits_per_sample) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => {
            let mut out = Vec::with_capacity(data.len() / 4);
            for b in data.chunks_exact(4) {
                let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                if !v.is_finite() {
                    return Err(Error::Decode {
                        path: path.to_path_buf(),
                        detail: "non-finite sample in `data` chunk".into(),
                    });
                }
                out.push(v.clamp(-1.0, 1.0));
            }
            out
        }
        (tag, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("format tag {tag}, {bits} bits per sample"),
                supported: SUPPORTED.into(),
            })
        }
    };

    let samples = if channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|fr| (fr[0] + fr[1]) / 2.0)
            .collect()
    } else {
        interleaved
    };

    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioClip::new(samples, sample_rate, "", stem))
}

/// Writes mono samples as a 16-bit PCM WAV file. Samples are clamped to
/// [-1, 1] and scaled by 32768 (round, saturating at i16 bounds) so that
/// a file written from `load_wav` output round-trips bit-exactly.
pub fn write_wav_pcm16(path: &Path, samples: &[f32], sample_rate_hz: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) as f64 * 32768.0).round();
        let q = v.clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw_pcm16(path: &Path, rate: u32, channels: u16, samples: &[i16]) {
        let data_len = (samples.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for &s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        fs::write(path, out).unwrap();
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.wav");
        write_raw_pcm16(&p, 16_000, 1, &[0, 16_384, -32_768]);
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.sample_rate_hz, 16_000);
        assert_eq!(clip.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(clip.utterance_id, "m");
    }

    #[test]
    fn stereo_downmix_is_channel_mean() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw_pcm16(&p, 8_000, 2, &[32_767, 0]);
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.samples.len(), 1);
        assert!((clip.samples[0] - 0.49999).abs() < 1e-4);
    }

    #[test]
    fn rifx_magic_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let mut bytes = b"RIFX".to_vec();
        bytes.extend_from_slice(&[0u8; 40]);
        fs::write(&p, bytes).unwrap();
        let err = load_wav(&p).unwrap_err();
        match err {
            Error::Decode { detail, .. } => assert!(detail.contains("RIFF"), "{detail}"),
            other => panic!("expected decode error, got {other}"),
        }
    }

    #[test]
    fn unsupported_encoding_lists_supported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.wav");
        // mu-law (format tag 7), 8 bits
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&40u32.to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&7u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&8_000u32.to_le_bytes());
        out.extend_from_slice(&8_000u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&8u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&[0u8, 0u8]);
        fs::write(&p, out).unwrap();
        let err = load_wav(&p).unwrap_err();
        match err {
            Error::UnsupportedFormat { supported, .. } => {
                assert!(supported.contains("PCM 16-bit"));
                assert!(supported.contains("float 32-bit"));
            }
            other => panic!("expected unsupported-format error, got {other}"),
        }
    }

    #[test]
    fn float32_wav_decodes_and_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let samples: [f32; 3] = [0.25, -0.75, 1.5];
        let data_len = (samples.len() * 4) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&3u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&16_000u32.to_le_bytes());
        out.extend_from_slice(&(16_000u32 * 4).to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&32u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        fs::write(&p, out).unwrap();
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.samples, vec![0.25, -0.75, 1.0]);
    }

    #[test]
    fn writer_roundtrips_pcm16_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let raw: Vec<i16> = (0..1000).map(|i| ((i * 7919) % 65536 - 32768) as i16).collect();
        write_raw_pcm16(&p, 16_000, 1, &raw);
        let clip = load_wav(&p).unwrap();
        let p2 = dir.path().join("rt2.wav");
        write_wav_pcm16(&p2, &clip.samples, clip.sample_rate_hz).unwrap();
        let clip2 = load_wav(&p2).unwrap();
        assert_eq!(clip.samples, clip2.samples);
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }
}
