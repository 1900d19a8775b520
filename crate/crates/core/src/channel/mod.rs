//! Synthetic corrupted channels: image-source reverberation plus white noise.

mod room;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use room::{image_source_ir, ImpulseResponse, IrMetadata, RoomSpec};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};

/// Default echo cutoff in seconds.
pub const DEFAULT_MAX_ECHO: f64 = 0.064;

/// A linear channel: impulse response plus stationary white noise at a fixed
/// SNR. `target_snr_db = None` disables the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub impulse: ImpulseResponse,
    pub target_snr_db: Option<f64>,
    pub noise_seed: u64,
}

/// Channel output together with the realized noise variance (per sample).
#[derive(Debug, Clone)]
pub struct ChannelOutput {
    pub signal: AudioSignal,
    pub noise_variance: f64,
    /// Mean square of the convolved, noise-free signal.
    pub convolved_power: f64,
}

impl ChannelOutput {
    /// `10 log10(P_convolved / P_noise)` as realized.
    pub fn realized_snr_db(&self) -> f64 {
        10.0 * (self.convolved_power / self.noise_variance).log10()
    }
}

impl ChannelSpec {
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            impulse: ImpulseResponse::identity(sample_rate),
            target_snr_db: None,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(snr) = self.target_snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidArgument("target SNR must be finite".into()));
            }
        }
        if self.impulse.taps.is_empty() || self.impulse.taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("impulse response must be non-empty and finite".into()));
        }
        Ok(())
    }
}

/// Linear convolution truncated to `signal.len()` samples.
pub fn convolve_same(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 || taps.is_empty() {
        return vec![0.0; n];
    }
    if taps.len() * n <= 20_000_000 || taps.len() <= 16 {
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let kmax = taps.len().min(i + 1);
            let mut acc = 0.0;
            for k in 0..kmax {
                acc += taps[k] * signal[i - k];
            }
            *o = acc;
        }
        return out;
    }
    let size = (n + taps.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    a.resize(size, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = taps.iter().map(|&x| Complex::new(x, 0.0)).collect();
    b.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}

/// Seeded noise generator for utterance `index` of a corpus.
pub fn noise_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Convolves with the channel's impulse response and adds Gaussian white
/// noise whose realized power puts the output exactly at the target SNR
/// relative to the whole-utterance power of the convolved signal.
pub fn apply_channel(
    signal: &AudioSignal,
    channel: &ChannelSpec,
    utterance_index: u64,
) -> Result<ChannelOutput> {
    channel.validate()?;
    if signal.sample_rate() != channel.impulse.sample_rate {
        return Err(Error::RateMismatch {
            signal: signal.sample_rate(),
            channel: channel.impulse.sample_rate,
        });
    }
    let mut out = convolve_same(signal.samples(), &channel.impulse.taps);
    let n = out.len();
    let convolved_power = if n == 0 {
        0.0
    } else {
        out.iter().map(|x| x * x).sum::<f64>() / n as f64
    };
    let mut noise_variance = 0.0;
    if let Some(snr) = channel.target_snr_db {
        let target = convolved_power / 10f64.powf(snr / 10.0);
        if target > 0.0 && n > 0 {
            let mut rng = noise_rng(channel.noise_seed, utterance_index);
            let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let realized = raw.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let gain = (target / realized).sqrt();
            for (o, r) in out.iter_mut().zip(&raw) {
                *o += gain * r;
            }
            noise_variance = target;
        }
    }
    Ok(ChannelOutput {
        signal: AudioSignal::new(out, signal.sample_rate())?,
        noise_variance,
        convolved_power,
    })
}

/// JSON sidecar stored next to an impulse-response WAV; carries the exact
/// taps so reloading is lossless.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrFile {
    pub metadata: IrMetadata,
    pub taps: Vec<f64>,
}

/// Writes `<stem>.wav` and `<stem>.json`.
pub fn save_ir(ir: &ImpulseResponse, meta: &IrMetadata, wav_path: &Path) -> Result<()> {
    ir.write_wav(wav_path)?;
    let json_path = wav_path.with_extension("json");
    let file = IrFile {
        metadata: meta.clone(),
        taps: ir.taps.clone(),
    };
    std::fs::write(&json_path, serde_json::to_string_pretty(&file)?)
        .map_err(|e| Error::io(&json_path, e))
}

/// Loads an impulse response from its JSON sidecar, or from a bare WAV.
pub fn load_ir(path: &Path) -> Result<ImpulseResponse> {
    let json_path = path.with_extension("json");
    if json_path.exists() {
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let file: IrFile = serde_json::from_str(&text)?;
        return Ok(ImpulseResponse {
            taps: file.taps,
            sample_rate: file.metadata.sample_rate,
        });
    }
    ImpulseResponse::read_wav(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_signal(len: usize, seed: u64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    fn hard_channel(snr: Option<f64>) -> ChannelSpec {
        ChannelSpec {
            impulse: image_source_ir(&RoomSpec::hard_close(), DEFAULT_MAX_ECHO, 16_000)
                .unwrap()
                .0,
            target_snr_db: snr,
            noise_seed: 42,
        }
    }

    #[test]
    fn identity_channel_is_identity() {
        let sig = random_signal(5000, 1);
        let out = apply_channel(&sig, &ChannelSpec::identity(16_000), 0).unwrap();
        assert_eq!(out.signal, sig);
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let sig = random_signal(40_000, 2);
        let taps = hard_channel(None).impulse.taps;
        let fast = convolve_same(sig.samples(), &taps);
        let mut slow = vec![0.0; sig.len()];
        for i in 0..sig.len() {
            for k in 0..taps.len().min(i + 1) {
                slow[i] += taps[k] * sig.samples()[i - k];
            }
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn realized_snr_hits_target() {
        let sig = random_signal(16_000, 3);
        for snr in [16.0, 20.0, 0.0, 35.5] {
            let out = apply_channel(&sig, &hard_channel(Some(snr)), 7).unwrap();
            let clean = apply_channel(&sig, &hard_channel(None), 7).unwrap();
            let noise: Vec<f64> = out
                .signal
                .samples()
                .iter()
                .zip(clean.signal.samples())
                .map(|(a, b)| a - b)
                .collect();
            let p_noise = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
            let measured = 10.0 * (clean.signal.power() / p_noise).log10();
            assert!((measured - snr).abs() < 0.1, "{measured} vs {snr}");
            assert!((out.realized_snr_db() - snr).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical_and_index_changes_noise() {
        let sig = random_signal(4000, 4);
        let ch = hard_channel(Some(16.0));
        let a = apply_channel(&sig, &ch, 3).unwrap();
        let b = apply_channel(&sig, &ch, 3).unwrap();
        assert_eq!(a.signal, b.signal);
        let c = apply_channel(&sig, &ch, 4).unwrap();
        assert_ne!(a.signal, c.signal);
    }

    #[test]
    fn noiseless_channel_is_linear() {
        let a = random_signal(30_000, 5);
        let b = random_signal(30_000, 6);
        let ch = hard_channel(None);
        let sum = AudioSignal::new(
            a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect(),
            16_000,
        )
        .unwrap();
        let ya = apply_channel(&a, &ch, 0).unwrap().signal;
        let yb = apply_channel(&b, &ch, 0).unwrap().signal;
        let ys = apply_channel(&sum, &ch, 0).unwrap().signal;
        for i in 0..ys.len() {
            assert!((ys.samples()[i] - ya.samples()[i] - yb.samples()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let sig = AudioSignal::silence(100, 8000);
        assert!(matches!(
            apply_channel(&sig, &hard_channel(None), 0),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn ir_sidecar_round_trip_is_exact() {
        let (ir, meta) = image_source_ir(&RoomSpec::hard_close(), 0.064, 16_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ir.wav");
        save_ir(&ir, &meta, &p).unwrap();
        assert_eq!(load_ir(&p).unwrap(), ir);
    }
}
