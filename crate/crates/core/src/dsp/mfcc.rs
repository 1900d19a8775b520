use std::f64::consts::PI;

use super::mel::FilterbankPowers;
use crate::error::{Error, Result};

/// Relative log floor: powers are clamped at this fraction of the utterance
/// maximum before the logarithm.
pub const RELATIVE_LOG_FLOOR: f64 = 1e-10;
/// Floor used when the whole utterance is silent.
pub const ABSOLUTE_LOG_FLOOR: f64 = 1e-12;

/// Log floor for an utterance whose largest element power is `max_power`.
pub fn log_floor(max_power: f64) -> f64 {
    if max_power > 0.0 {
        RELATIVE_LOG_FLOOR * max_power
    } else {
        ABSOLUTE_LOG_FLOOR
    }
}

pub fn utterance_log_floor(frames: &[FilterbankPowers]) -> f64 {
    let max = frames
        .iter()
        .flat_map(|f| f.powers.iter())
        .cloned()
        .fold(0.0, f64::max);
    log_floor(max)
}

/// Orthonormal type-II DCT restricted to the first `n_out` outputs.
#[derive(Debug, Clone)]
pub struct Dct {
    n_in: usize,
    rows: Vec<Vec<f64>>,
}

impl Dct {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self> {
        if n_out > n_in || n_in == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {n_out} coefficients of a {n_in}-point DCT"
            )));
        }
        let n = n_in as f64;
        let rows = (0..n_out)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..n_in)
                    .map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .collect()
            })
            .collect();
        Ok(Self { n_in, rows })
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.n_in);
        self.rows
            .iter()
            .map(|r| r.iter().zip(input).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Cepstral vector from one frame of filterbank powers.
pub fn mfcc(powers: &FilterbankPowers, n_coeffs: usize, floor: f64) -> Result<Vec<f64>> {
    let dct = Dct::new(powers.powers.len(), n_coeffs)?;
    Ok(mfcc_with(&dct, powers, floor))
}

pub(crate) fn mfcc_with(dct: &Dct, powers: &FilterbankPowers, floor: f64) -> Vec<f64> {
    let logs: Vec<f64> = powers.powers.iter().map(|&p| p.max(floor).ln()).collect();
    dct.apply(&logs)
}
