//! RIFF/WAVE reading and writing.
//!
//! Reads 16-bit PCM and 32-bit IEEE float, mono or stereo (multi-channel is
//! downmixed by per-frame mean). Writes 16-bit PCM mono only.

use std::path::Path;

use crate::error::{Error, Result};

use super::Waveform;

fn u16le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let bytes = std::fs::read(&path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav(format!("{}: not a RIFF/WAVE file", path.as_ref().display())));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32le(&bytes[pos + 4..pos + 8]) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Wav("truncated fmt chunk".into()));
                }
                fmt = Some((u16le(&body[0..2]), u16le(&body[2..4]), u32le(&body[4..8]), u16le(&body[14..16])));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1); // chunks are word-aligned
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if channels == 0 || rate == 0 {
        return Err(Error::Wav("fmt chunk has zero channels or rate".into()));
    }
    let ch = channels as usize;

    let interleaved: Vec<f32> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        _ => {
            return Err(Error::Wav(format!(
                "unsupported encoding: format tag {format}, {bits} bits (need PCM16 or float32)"
            )))
        }
    };

    let frames = interleaved.len() / ch;
    let samples: Vec<f32> = if ch == 1 {
        interleaved
    } else {
        (0..frames)
            .map(|f| interleaved[f * ch..(f + 1) * ch].iter().sum::<f32>() / ch as f32)
            .collect()
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Wav("non-finite sample in file".into()));
    }
    Ok(Waveform { samples, sample_rate: rate })
}

pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    if w.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invalid("save_wav: non-finite sample".into()));
    }
    let n = w.samples.len();
    let data_len = n * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}
