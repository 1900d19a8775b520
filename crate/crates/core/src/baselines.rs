//! Reference normalizations: cepstral mean normalization and power-domain
//! spectral subtraction.

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioSignal, CepstralTrajectory, FilterbankPowers, Frontend, MelFilterbank};
use crate::error::{Error, Result};

/// Default spectral-subtraction floor as a fraction of the noisy power.
pub const DEFAULT_FLOOR_RATIO: f64 = 0.01;

/// Subtracts the per-coefficient utterance mean from every frame.
pub fn cmn(traj: &CepstralTrajectory) -> Result<CepstralTrajectory> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mean = frame_mean(traj.frames());
    let frames = traj
        .frames()
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    CepstralTrajectory::with_dim(frames, traj.hop(), traj.dim())
}

pub(crate) fn frame_mean(frames: &[Vec<f64>]) -> Vec<f64> {
    let n = frames.first().map_or(0, |f| f.len());
    let mut mean = vec![0.0; n];
    for f in frames {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= frames.len() as f64);
    mean
}

/// `p_i <- max(p_i - n_i, floor_ratio * p_i)` for every frame and element.
pub fn spectral_subtract(
    powers: &[FilterbankPowers],
    noise_powers: &[f64],
    floor_ratio: f64,
) -> Result<Vec<FilterbankPowers>> {
    if noise_powers.iter().any(|n| !(*n >= 0.0)) {
        return Err(Error::InvalidArgument("noise powers must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&floor_ratio) {
        return Err(Error::InvalidArgument(format!("floor ratio {floor_ratio} outside [0, 1]")));
    }
    powers
        .iter()
        .map(|p| {
            if p.powers.len() != noise_powers.len() {
                return Err(Error::ElementCountMismatch {
                    expected: p.powers.len(),
                    got: noise_powers.len(),
                });
            }
            Ok(FilterbankPowers {
                powers: p
                    .powers
                    .iter()
                    .zip(noise_powers)
                    .map(|(&x, &n)| (x - n).max(floor_ratio * x))
                    .collect(),
                frame_index: p.frame_index,
            })
        })
        .collect()
}

/// Expected per-element power of white noise with per-sample variance
/// `noise_variance` after windowing and the filterbank:
/// `sigma^2 * sum(w^2) * area_i`.
pub fn oracle_noise_estimate(noise_variance: f64, filterbank: &MelFilterbank, window: &[f64]) -> Vec<f64> {
    let energy: f64 = window.iter().map(|w| w * w).sum();
    filterbank
        .areas()
        .into_iter()
        .map(|a| noise_variance * energy * a)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsOptions {
    pub floor_ratio: f64,
    /// Multiplier on the noise estimate (1 = plain subtraction).
    pub over_subtraction: f64,
}

impl Default for SsOptions {
    fn default() -> Self {
        Self {
            floor_ratio: DEFAULT_FLOOR_RATIO,
            over_subtraction: 1.0,
        }
    }
}

/// Spectral subtraction with the oracle noise estimate, then MFCC.
pub fn ss_cepstra(
    frontend: &Frontend,
    signal: &AudioSignal,
    noise_variance: f64,
    options: &SsOptions,
) -> Result<CepstralTrajectory> {
    let powers = frontend.powers(signal)?;
    let noise: Vec<f64> = oracle_noise_estimate(noise_variance, frontend.filterbank(), frontend.framer().window())
        .into_iter()
        .map(|n| n * options.over_subtraction)
        .collect();
    let cleaned = spectral_subtract(&powers, &noise, options.floor_ratio)?;
    frontend.cepstra(&cleaned)
}

/// Spectral subtraction in the filterbank-power domain, then MFCC, then
/// CMN.
pub fn cmn_ss(
    frontend: &Frontend,
    signal: &AudioSignal,
    noise_variance: f64,
    options: &SsOptions,
) -> Result<CepstralTrajectory> {
    cmn(&ss_cepstra(frontend, signal, noise_variance, options)?)
}
