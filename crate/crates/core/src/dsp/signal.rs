use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono time-domain audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Reads a mono PCM WAV file (16-bit integer or 32-bit float).
    pub fn read_wav(path: &Path) -> Result<Self> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::format(
                path,
                format!("expected mono audio, found {} channels", spec.channels),
            ));
        }
        let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => reader
                .samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<Result<_, _>>()?,
            (hound::SampleFormat::Int, bits @ (24 | 32)) => {
                let scale = (1u64 << (bits - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<Result<_, _>>()?
            }
            (hound::SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()?,
            (fmt, bits) => {
                return Err(Error::format(
                    path,
                    format!("unsupported WAV sample format {fmt:?}/{bits} bits"),
                ))
            }
        };
        Self::new(samples, spec.sample_rate)
    }

    /// Writes 32-bit float mono WAV.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample(s as f32)?;
        }
        writer.finalize()?;
        Ok(())
    }

    /// Writes 16-bit PCM mono WAV, clipping to [-1, 1).
    pub fn write_wav_pcm16(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v)?;
        }
        writer.finalize()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(AudioSignal::new(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(AudioSignal::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn wav_round_trip_float_and_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let sig = AudioSignal::new(vec![0.0, 0.25, -0.5, 0.125], 16_000).unwrap();
        let f = dir.path().join("f.wav");
        sig.write_wav(&f).unwrap();
        assert_eq!(AudioSignal::read_wav(&f).unwrap(), sig);

        let p = dir.path().join("p.wav");
        sig.write_wav_pcm16(&p).unwrap();
        let back = AudioSignal::read_wav(&p).unwrap();
        for (a, b) in back.samples().iter().zip(sig.samples()) {
            assert!((a - b).abs() < 1.0 / 32768.0);
        }
    }
}
