use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};
use crate::numeric::Real;

fn codec_name(tag: u16) -> String {
    match tag {
        0x0001 => "PCM".into(),
        0x0002 => "Microsoft ADPCM".into(),
        0x0003 => "IEEE float".into(),
        0x0006 => "A-law".into(),
        0x0007 => "mu-law".into(),
        0x0011 => "IMA ADPCM".into(),
        0x0055 => "MPEG Layer 3".into(),
        0xFFFE => "WAVE_FORMAT_EXTENSIBLE".into(),
        other => format!("format tag 0x{other:04X}"),
    }
}

/// Reads the format tag from the `fmt ` chunk, if one can be found.
fn sniff_format_tag(bytes: &[u8]) -> Option<u16> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        if id == b"fmt " && pos + 10 <= bytes.len() {
            return Some(u16::from_le_bytes([bytes[pos + 8], bytes[pos + 9]]));
        }
        pos += 8 + size + (size & 1);
    }
    None
}

/// Decodes a RIFF/WAVE byte buffer (16-bit PCM or 32-bit float, mono or
/// stereo). Stereo is averaged to mono; integer samples are scaled by 1/32768.
pub fn decode_wav<T: Real>(bytes: &[u8]) -> Result<AudioClip<T>, AudioError> {
    let reader = match WavReader::new(Cursor::new(bytes)) {
        Ok(r) => r,
        Err(hound::Error::Unsupported) => {
            let codec = sniff_format_tag(bytes).map(codec_name).unwrap_or_else(|| "unknown codec".into());
            return Err(AudioError::Unsupported(codec));
        }
        Err(e) => return Err(AudioError::Malformed(e.to_string())),
    };
    let spec = reader.spec();
    if !(1..=2).contains(&spec.channels) {
        return Err(AudioError::Unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| AudioError::Malformed(e.to_string()))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| AudioError::Malformed(e.to_string()))?,
        (SampleFormat::Int, bits) => return Err(AudioError::Unsupported(format!("PCM {bits}-bit"))),
        (SampleFormat::Float, bits) => return Err(AudioError::Unsupported(format!("IEEE float {bits}-bit"))),
    };
    let mono: Vec<T> = if spec.channels == 2 {
        interleaved.chunks_exact(2).map(|c| T::lit((c[0] + c[1]) / 2.0)).collect()
    } else {
        interleaved.into_iter().map(T::lit).collect()
    };
    AudioClip::peak_limited(mono, spec.sample_rate)
}

pub fn read_wav<T: Real>(path: &Path) -> Result<AudioClip<T>, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io { path: path.display().to_string(), source })?;
    decode_wav(&bytes)
}

/// Duration of a WAV file from its header, without decoding samples.
pub fn wav_duration(path: &Path) -> Result<f64, AudioError> {
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => AudioError::Io { path: path.display().to_string(), source },
        other => AudioError::Malformed(other.to_string()),
    })?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

/// Encodes a clip as mono 16-bit PCM.
pub fn encode_wav_pcm16<T: Real>(clip: &AudioClip<T>) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::with_capacity(44 + 2 * clip.len()));
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in clip.samples() {
            let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn write_wav_pcm16<T: Real>(path: &Path, clip: &AudioClip<T>) -> Result<(), AudioError> {
    std::fs::write(path, encode_wav_pcm16(clip))
        .map_err(|source| AudioError::Io { path: path.display().to_string(), source })
}
