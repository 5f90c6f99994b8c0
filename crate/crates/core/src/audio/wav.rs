use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported => AudioError::UnsupportedCodec("unsupported WAVE format".into()),
        hound::Error::TooWide => AudioError::UnsupportedCodec("sample width too wide".into()),
        hound::Error::InvalidSampleFormat => {
            AudioError::UnsupportedCodec("invalid sample format".into())
        }
        hound::Error::FormatError(msg) => AudioError::MalformedHeader(msg.to_string()),
        hound::Error::UnfinishedSample => AudioError::MalformedHeader("truncated sample".into()),
        hound::Error::IoError(e) => AudioError::MalformedHeader(format!("truncated data: {e}")),
    }
}

/// Decode a RIFF/WAVE byte stream (PCM 16-bit or IEEE float 32-bit, mono or
/// stereo) into a mono clip. Stereo frames are averaged.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let mut reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedCodec(format!("{channels} channels")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(AudioError::UnsupportedCodec(format!("{format:?} {bits}-bit")));
        }
    };
    if interleaved.is_empty() {
        return Err(AudioError::EmptyPayload);
    }
    if interleaved.len() % channels != 0 {
        return Err(AudioError::MalformedHeader("partial sample frame".into()));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let bytes = std::fs::read(path)?;
    decode_wav(&bytes)
}

/// 16-bit PCM mono encoding; samples are clipped to [-1, 1].
pub fn encode_wav_pcm16(clip: &AudioClip) -> Result<Vec<u8>, AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut buf, spec).map_err(map_hound)?;
        for &s in clip.samples() {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), AudioError> {
    std::fs::write(path, encode_wav_pcm16(clip)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(format_tag: u16, channels: u16, rate: u32, bits: u16, data_len: u32) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut h = Vec::new();
        h.extend_from_slice(b"RIFF");
        h.extend_from_slice(&(36 + data_len).to_le_bytes());
        h.extend_from_slice(b"WAVE");
        h.extend_from_slice(b"fmt ");
        h.extend_from_slice(&16u32.to_le_bytes());
        h.extend_from_slice(&format_tag.to_le_bytes());
        h.extend_from_slice(&channels.to_le_bytes());
        h.extend_from_slice(&rate.to_le_bytes());
        h.extend_from_slice(&(rate * block as u32).to_le_bytes());
        h.extend_from_slice(&block.to_le_bytes());
        h.extend_from_slice(&bits.to_le_bytes());
        h.extend_from_slice(b"data");
        h.extend_from_slice(&data_len.to_le_bytes());
        h
    }

    #[test]
    fn pcm16_scaling() {
        let mut bytes = header(1, 1, 8000, 16, 6);
        for v in [0i16, 32767, -32768] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.sample_rate(), 8000);
        assert_eq!(clip.samples(), &[0.0, 32767.0 / 32768.0, -1.0]);
        assert!((clip.samples()[1] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn stereo_is_averaged() {
        let mut bytes = header(3, 2, 44100, 32, 8);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[0.5]);
    }

    #[test]
    fn truncated_data_chunk_is_malformed() {
        // 44-byte header announcing 1000 data bytes that are not there
        let bytes = header(1, 1, 44100, 16, 1000);
        assert_eq!(bytes.len(), 44);
        assert!(matches!(decode_wav(&bytes), Err(AudioError::MalformedHeader(_))));
    }

    #[test]
    fn garbage_header_is_malformed() {
        assert!(matches!(
            decode_wav(b"RIFX\0\0\0\0WAVEfmt "),
            Err(AudioError::MalformedHeader(_))
        ));
    }

    #[test]
    fn unsupported_codecs() {
        let mut pcm8 = header(1, 1, 8000, 8, 2);
        pcm8.extend_from_slice(&[128, 129]);
        assert!(matches!(decode_wav(&pcm8), Err(AudioError::UnsupportedCodec(_))));

        let mut pcm24 = header(1, 1, 8000, 24, 3);
        pcm24.extend_from_slice(&[0, 0, 0]);
        assert!(matches!(decode_wav(&pcm24), Err(AudioError::UnsupportedCodec(_))));
    }

    #[test]
    fn empty_payload() {
        let bytes = header(1, 1, 44100, 16, 0);
        assert!(matches!(decode_wav(&bytes), Err(AudioError::EmptyPayload)));
    }

    #[test]
    fn pcm16_roundtrip_within_quantization() {
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.05).sin() * 0.8).collect();
        let clip = AudioClip::new(samples.clone(), 22050).unwrap();
        let back = decode_wav(&encode_wav_pcm16(&clip).unwrap()).unwrap();
        assert_eq!(back.sample_rate(), 22050);
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }
}
