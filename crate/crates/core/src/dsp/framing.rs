use serde::{Deserialize, Serialize};

use super::signal::AudioSignal;
use crate::error::{Error, Result};

/// How the first and last frames are placed relative to the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Frames lie entirely inside the signal.
    Valid,
    /// Half a frame of zeros is added on each side, so frame `i` is centred
    /// on sample `i * hop`.
    #[default]
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Frame length in seconds.
    pub frame_len: f64,
    /// Frame advance in seconds.
    pub hop: f64,
    #[serde(default)]
    pub padding: Padding,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.024,
            hop: 0.004,
            padding: Padding::Centered,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_len > 0.0 && self.hop > 0.0) {
            return Err(Error::InvalidArgument(
                "frame length and hop must be positive".into(),
            ));
        }
        if self.frame_len < self.hop {
            return Err(Error::InvalidArgument(format!(
                "frame length {} s is shorter than hop {} s",
                self.frame_len, self.hop
            )));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_len * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        ((self.hop * sample_rate as f64).round() as usize).max(1)
    }

    fn pad(&self, frame: usize) -> usize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Centered => frame / 2,
        }
    }

    /// `floor((padded_len - frame) / hop) + 1`, or zero when no frame fits.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> usize {
        let frame = self.frame_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if len < frame || frame == 0 {
            return 0;
        }
        let padded = len + 2 * self.pad(frame);
        (padded - frame) / hop + 1
    }
}

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

/// Precomputed framing geometry for one sample rate.
#[derive(Debug, Clone)]
pub struct Framer {
    frame: usize,
    hop: usize,
    pad: usize,
    window: Vec<f64>,
}

impl Framer {
    pub fn new(config: &FrameConfig, sample_rate: u32) -> Result<Self> {
        config.validate()?;
        let frame = config.frame_samples(sample_rate);
        if frame == 0 {
            return Err(Error::InvalidArgument("frame rounds to zero samples".into()));
        }
        Ok(Self {
            frame,
            hop: config.hop_samples(sample_rate),
            pad: config.pad(frame),
            window: hamming(frame),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn count(&self, len: usize) -> usize {
        if len < self.frame {
            return 0;
        }
        (len + 2 * self.pad - self.frame) / self.hop + 1
    }

    /// Writes the windowed frame `index` of `samples` into `out`.
    pub fn windowed_frame_into(&self, samples: &[f64], index: usize, out: &mut [f64]) {
        let start = (index * self.hop) as isize - self.pad as isize;
        for (j, (o, w)) in out.iter_mut().zip(&self.window).enumerate() {
            let pos = start + j as isize;
            let s = if pos >= 0 && (pos as usize) < samples.len() {
                samples[pos as usize]
            } else {
                0.0
            };
            *o = s * w;
        }
    }

    pub fn windowed_frame(&self, samples: &[f64], index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.frame];
        self.windowed_frame_into(samples, index, &mut out);
        out
    }
}

/// Splits the signal into Hamming-windowed frames.
pub fn frame_signal(signal: &AudioSignal, config: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    let framer = Framer::new(config, signal.sample_rate())?;
    let n = framer.count(signal.len());
    if n == 0 {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            needed: framer.frame_len(),
        });
    }
    Ok((0..n)
        .map(|i| framer.windowed_frame(signal.samples(), i))
        .collect())
}
