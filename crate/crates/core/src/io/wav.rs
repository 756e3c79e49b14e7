use std::path::Path;

use super::{read_all, write_atomic};
use crate::error::{Error, Result};
use crate::types::AudioClip;

fn chunk(bytes: &[u8], at: usize) -> Option<(&[u8], &[u8], usize)> {
    let id = bytes.get(at..at + 4)?;
    let len = u32::from_le_bytes(bytes.get(at + 4..at + 8)?.try_into().ok()?) as usize;
    let body = bytes.get(at + 8..(at + 8 + len).min(bytes.len()))?;
    Some((id, body, at + 8 + len + (len & 1)))
}

/// Decodes mono or multi-channel RIFF/WAVE with 16-bit PCM or 32-bit float
/// samples; channels are averaged.
pub fn read_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while let Some((id, body, next)) = chunk(bytes, at) {
        match id {
            b"fmt " if body.len() >= 16 => {
                let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
                fmt = Some((u16_at(0), u16_at(2), rate, u16_at(14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        at = next;
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| Error::Format("WAVE file lacks a fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("WAVE file lacks a data chunk".into()))?;
    if channels == 0 {
        return Err(Error::Format("WAVE file declares zero channels".into()));
    }
    let interleaved: Vec<f32> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")).clamp(-1.0, 1.0))
            .collect(),
        _ => {
            return Err(Error::Format(format!(
                "unsupported WAVE encoding (format {format}, {bits} bits)"
            )))
        }
    };
    let mono = interleaved
        .chunks_exact(channels as usize)
        .map(|c| c.iter().sum::<f32>() / channels as f32)
        .collect();
    AudioClip::new(rate, mono)
}

/// Mono 16-bit PCM.
pub fn write_wav(audio: &AudioClip) -> Vec<u8> {
    let n = audio.samples().len();
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + 2 * n as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate().to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(2 * n as u32).to_le_bytes());
    for s in audio.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav_file(path: &Path) -> Result<AudioClip> {
    read_wav(&read_all(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_wav_file(path: &Path, audio: &AudioClip) -> Result<()> {
    write_atomic(path, &write_wav(audio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SAMPLE_RATE;

    #[test]
    fn pcm_round_trip() {
        let s: Vec<f32> = (0..1000).map(|i| ((i as f32) * 0.05).sin() * 0.8).collect();
        let a = AudioClip::new(SAMPLE_RATE, s.clone()).unwrap();
        let back = read_wav(&write_wav(&a)).unwrap();
        assert_eq!(back.sample_rate(), SAMPLE_RATE);
        for (x, y) in s.iter().zip(back.samples()) {
            assert!((x - y).abs() < 1.0 / 32767.0);
        }
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(read_wav(b"RIFF\0\0\0\0WAVE").is_err());
        assert!(read_wav(b"hello").is_err());
    }
}
