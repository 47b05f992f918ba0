//! Minimal RIFF/WAVE reader and writer for mono 16-bit PCM.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Decoded PCM-16 mono audio.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wav {
    pub sample_rate: u32,
    pub samples: Vec<i16>,
}

impl Wav {
    /// Samples scaled by 1/32768 into `[-1, 1)`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64 / 32768.0).collect()
    }

    /// Rounds unit-range values to PCM-16, clamping to the representable range.
    pub fn from_unit(sample_rate: u32, values: &[f64]) -> Self {
        let samples = values
            .iter()
            .map(|v| (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            .collect();
        Self { sample_rate, samples }
    }
}

fn fmt_err(msg: String) -> Error {
    Error::Format(msg)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn parse_wav(bytes: &[u8]) -> Result<Wav> {
    if bytes.len() < 12 {
        return Err(fmt_err(format!("file is {} bytes, too short for a RIFF header", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(fmt_err(format!("RIFF.chunk_id = {:?}, expected \"RIFF\"", String::from_utf8_lossy(&bytes[0..4]))));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(fmt_err(format!("RIFF.format = {:?}, expected \"WAVE\"", String::from_utf8_lossy(&bytes[8..12]))));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fmt_err(format!("chunk {:?} size {size} runs past end of file", String::from_utf8_lossy(id))))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(fmt_err(format!("fmt.chunk_size = {}, expected at least 16", body.len())));
                }
                fmt = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let (format_tag, channels, sample_rate, bits) = fmt.ok_or_else(|| fmt_err("missing fmt chunk".into()))?;
    if format_tag != 1 {
        return Err(fmt_err(format!("fmt.audio_format = {format_tag}, expected 1 (PCM)")));
    }
    if channels != 1 {
        return Err(fmt_err(format!("fmt.num_channels = {channels}, expected 1 (mono)")));
    }
    if bits != 16 {
        return Err(fmt_err(format!("fmt.bits_per_sample = {bits}, expected 16")));
    }
    let data = data.ok_or_else(|| fmt_err("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(fmt_err(format!("data.chunk_size = {}, not a whole number of 16-bit samples", data.len())));
    }
    let samples = data.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
    Ok(Wav { sample_rate, samples })
}

pub fn encode_wav(wav: &Wav) -> Vec<u8> {
    let data_len = (wav.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wav.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wav.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &wav.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Wav> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_wav(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_wav(path: impl AsRef<Path>, wav: &Wav) -> Result<()> {
    fs::write(path, encode_wav(wav))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_with(format: u16, channels: u16, bits: u16) -> Vec<u8> {
        let mut b = encode_wav(&Wav {
            sample_rate: 16000,
            samples: vec![0, 1, -1, 32767, -32768, 100],
        });
        b[20..22].copy_from_slice(&format.to_le_bytes());
        b[22..24].copy_from_slice(&channels.to_le_bytes());
        b[34..36].copy_from_slice(&bits.to_le_bytes());
        b
    }

    #[test]
    fn round_trip_and_unit_range() {
        let wav = Wav {
            sample_rate: 8000,
            samples: vec![-32768, -1, 0, 1, 32767],
        };
        let back = parse_wav(&encode_wav(&wav)).unwrap();
        assert_eq!(back, wav);
        let unit = back.to_unit();
        assert_eq!(unit[0], -1.0);
        assert!(unit.iter().all(|v| (-1.0..1.0).contains(v)));
        assert_eq!(unit[4], 32767.0 / 32768.0);
    }

    #[test]
    fn rejects_non_pcm_multichannel_and_depth() {
        let msg = |b: Vec<u8>| parse_wav(&b).unwrap_err().to_string();
        assert!(msg(header_with(3, 1, 16)).contains("fmt.audio_format"));
        assert!(msg(header_with(1, 2, 16)).contains("fmt.num_channels"));
        assert!(msg(header_with(1, 1, 24)).contains("fmt.bits_per_sample"));
        assert!(msg(b"RIFX\0\0\0\0WAVE".to_vec()).contains("RIFF.chunk_id"));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut b = encode_wav(&Wav {
            sample_rate: 16000,
            samples: vec![5, -5],
        });
        // splice a LIST chunk with odd size (padded) before data
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), b"abc\0"].concat();
        b.splice(36..36, list);
        let wav = parse_wav(&b).unwrap();
        assert_eq!(wav.samples, vec![5, -5]);
    }
}
