//! Minimal RIFF/WAVE codec: 16-bit PCM only, mono or stereo in (stereo is
//! averaged down to mono), canonical 44-byte-header mono files out.

use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Integer PCM audio as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcmAudio {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read a PCM16 WAV file. Unknown chunks are skipped; stereo is mixed to mono
/// by the truncating integer average `(left + right) / 2`.
pub fn read_wav(path: &Path) -> Result<PcmAudio> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(Error::MalformedWav(format!(
                "chunk {} runs past end of file",
                String::from_utf8_lossy(id)
            )));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::MalformedWav("fmt chunk shorter than 16 bytes".into()));
                }
                fmt = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {} // fact chunks, LIST metadata, etc.
        }
        // Chunk bodies are word-aligned; odd sizes carry one pad byte.
        pos = body_start + size + (size & 1);
    }

    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;
    if format != 1 {
        return Err(Error::UnsupportedWav(format!("format tag {format}, only PCM (1)")));
    }
    if bits != 16 {
        return Err(Error::UnsupportedWav(format!("{bits}-bit samples, only 16")));
    }
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedWav(format!("{channels} channels, only 1 or 2")));
    }
    if sample_rate == 0 {
        return Err(Error::MalformedWav("zero sample rate".into()));
    }
    let frame = 2 * channels as usize;
    if data.len() % frame != 0 {
        return Err(Error::MalformedWav(format!(
            "data chunk of {} bytes is not a whole number of {frame}-byte frames",
            data.len()
        )));
    }

    let n = data.len() / frame;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let s = if channels == 1 {
            i16::from_le_bytes([data[2 * i], data[2 * i + 1]])
        } else {
            let l = i16::from_le_bytes([data[4 * i], data[4 * i + 1]]) as i32;
            let r = i16::from_le_bytes([data[4 * i + 2], data[4 * i + 3]]) as i32;
            ((l + r) / 2) as i16
        };
        samples.push(s);
    }
    Ok(PcmAudio { samples, sample_rate })
}

/// Write mono PCM16 with the canonical 44-byte header.
pub fn write_wav(path: &Path, audio: &PcmAudio) -> Result<()> {
    if audio.sample_rate == 0 {
        return Err(Error::invalid("sample rate must be nonzero"));
    }
    let data_len = audio.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &audio.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// i16 → float in [−1, 1): divide by 32768.
pub fn pcm_to_waveform<T: Scalar>(audio: &PcmAudio) -> Result<Waveform<T>> {
    let scale = T::of_f64(1.0 / 32768.0);
    let samples = audio.samples.iter().map(|&s| T::of_f64(s as f64) * scale).collect();
    Waveform::new(samples, audio.sample_rate)
}

/// Float → i16: scale by 32768, round half away from zero, clamp to i16.
pub fn waveform_to_pcm<T: Scalar>(wave: &Waveform<T>) -> PcmAudio {
    let samples = wave
        .samples()
        .iter()
        .map(|&v| {
            let scaled = v.as_f64() * 32768.0;
            scaled.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect();
    PcmAudio { samples, sample_rate: wave.sample_rate() }
}

/// Read a WAV straight into a float waveform, optionally enforcing a rate.
pub fn load_waveform<T: Scalar>(path: &Path, expected_rate: Option<u32>) -> Result<Waveform<T>> {
    let pcm = read_wav(path)?;
    if let Some(expected) = expected_rate {
        if pcm.sample_rate != expected {
            return Err(Error::SampleRateMismatch { found: pcm.sample_rate, expected });
        }
    }
    pcm_to_waveform(&pcm)
}

/// Quantize a float waveform and write it as mono PCM16.
pub fn save_waveform<T: Scalar>(path: &Path, wave: &Waveform<T>) -> Result<()> {
    write_wav(path, &waveform_to_pcm(wave))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn mono_round_trip_is_byte_identical() {
        let dir = tmp();
        let p1 = dir.path().join("a.wav");
        let p2 = dir.path().join("b.wav");
        let audio = PcmAudio {
            samples: vec![0, 1, -1, i16::MAX, i16::MIN, 12345, -12345],
            sample_rate: 22_050,
        };
        write_wav(&p1, &audio).unwrap();
        let back = read_wav(&p1).unwrap();
        assert_eq!(back, audio);
        write_wav(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn header_is_exactly_44_bytes() {
        let dir = tmp();
        let p = dir.path().join("a.wav");
        write_wav(&p, &PcmAudio { samples: vec![7; 10], sample_rate: 8000 }).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 44 + 20);
    }

    #[test]
    fn stereo_averages_with_integer_truncation() {
        let dir = tmp();
        let p = dir.path().join("s.wav");
        // Hand-build a stereo file: pairs (l, r) → (l+r)/2 truncated toward 0.
        let pairs: [(i16, i16); 4] = [(100, 200), (-3, -4), (1, 2), (-1, -2)];
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36 + 16u32).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        for (l, r) in pairs {
            bytes.extend_from_slice(&l.to_le_bytes());
            bytes.extend_from_slice(&r.to_le_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        let audio = read_wav(&p).unwrap();
        assert_eq!(audio.samples, vec![150, -3, 1, -1]);
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let dir = tmp();
        let p = dir.path().join("a.wav");
        write_wav(&p, &PcmAudio { samples: vec![5, -5], sample_rate: 8000 }).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // Splice a LIST chunk (odd-sized, so with a pad byte) before fmt.
        let mut spliced = bytes[..12].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&3u32.to_le_bytes());
        spliced.extend_from_slice(b"abc\0");
        spliced.extend_from_slice(&bytes[12..]);
        let riff_len = (spliced.len() - 8) as u32;
        spliced[4..8].copy_from_slice(&riff_len.to_le_bytes());
        std::fs::write(&p, spliced).unwrap();
        assert_eq!(read_wav(&p).unwrap().samples, vec![5, -5]);
    }

    #[test]
    fn malformed_and_unsupported_files_error_distinctly() {
        let dir = tmp();
        let p = dir.path().join("bad.wav");

        std::fs::write(&p, b"not a wav").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::MalformedWav(_))));

        // 8-bit format tag → unsupported, not malformed.
        write_wav(&p, &PcmAudio { samples: vec![1], sample_rate: 8000 }).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[34..36].copy_from_slice(&8u16.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedWav(_))));
    }

    #[test]
    fn float_conversion_rounds_half_away_and_clamps() {
        let wave = Waveform::new(
            vec![0.0f64, 1.0, -1.0, 2.0, -2.0, 0.5 / 32768.0, -0.5 / 32768.0],
            8000,
        )
        .unwrap();
        let pcm = waveform_to_pcm(&wave);
        assert_eq!(pcm.samples, vec![0, i16::MAX, -32768, i16::MAX, i16::MIN, 1, -1]);

        // Quantize → dequantize stays within half a step.
        let back: Waveform<f64> = pcm_to_waveform(&pcm).unwrap();
        assert!((back.samples()[5] - 1.0 / 32768.0).abs() < 1e-12);
    }

    #[test]
    fn rate_check_on_load() {
        let dir = tmp();
        let p = dir.path().join("a.wav");
        write_wav(&p, &PcmAudio { samples: vec![0; 8], sample_rate: 16_000 }).unwrap();
        assert!(load_waveform::<f64>(&p, Some(16_000)).is_ok());
        assert!(matches!(
            load_waveform::<f64>(&p, Some(22_050)),
            Err(Error::SampleRateMismatch { found: 16_000, expected: 22_050 })
        ));
    }
}
