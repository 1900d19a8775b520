use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Parameters of a triangular mel filterbank; serialized as a JSON sidecar
/// next to every trajectory so the front end can be rebuilt exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterbankConfig {
    pub n_filters: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl FilterbankConfig {
    pub fn new(sample_rate: u32, fft_size: usize) -> Self {
        Self {
            n_filters: 24,
            fft_size,
            sample_rate,
            low_hz: 0.0,
            high_hz: sample_rate as f64 / 2.0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.n_filters == 0 || self.fft_size < 2 {
            return Err(Error::InvalidArgument(
                "filterbank needs at least one filter and an FFT size >= 2".into(),
            ));
        }
        if !(self.low_hz >= 0.0 && self.low_hz < self.high_hz && self.high_hz <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "filterbank edges [{}, {}] must satisfy 0 <= low < high <= {nyquist}",
                self.low_hz, self.high_hz
            )));
        }
        Ok(())
    }

    /// Band edges in Hz: `n_filters + 2` points equally spaced in mel.
    pub fn edges_hz(&self) -> Vec<f64> {
        let lo = hz_to_mel(self.low_hz);
        let hi = hz_to_mel(self.high_hz);
        let n = self.n_filters + 1;
        (0..=n)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
            .collect()
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read_sidecar(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Triangular unity-peak filter profile evaluated at `f`.
pub fn triangle(f: f64, lo: f64, center: f64, hi: f64) -> f64 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= center {
        (f - lo) / (center - lo)
    } else {
        (hi - f) / (hi - center)
    }
}

/// Filter profiles tabulated on the FFT bin frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    config: FilterbankConfig,
    /// Row `i` is filter `i` over all bins.
    weights: Vec<Vec<f64>>,
}

/// Filterbank element powers of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankPowers {
    pub powers: Vec<f64>,
    pub frame_index: usize,
}

impl MelFilterbank {
    pub fn new(config: FilterbankConfig) -> Result<Self> {
        config.validate()?;
        let edges = config.edges_hz();
        let bin_hz = config.sample_rate as f64 / config.fft_size as f64;
        let weights = (0..config.n_filters)
            .map(|i| {
                (0..config.n_bins())
                    .map(|k| triangle(k as f64 * bin_hz, edges[i], edges[i + 1], edges[i + 2]))
                    .collect()
            })
            .collect();
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &FilterbankConfig {
        &self.config
    }

    pub fn n_filters(&self) -> usize {
        self.config.n_filters
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `sum_k M_i(f_k)` for every filter.
    pub fn areas(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.iter().sum()).collect()
    }

    pub fn mel_energies(&self, spectrum: &[f64], frame_index: usize) -> Result<FilterbankPowers> {
        if spectrum.len() != self.n_bins() {
            return Err(Error::ConfigMismatch(format!(
                "spectrum has {} bins, filterbank is tabulated on {}",
                spectrum.len(),
                self.n_bins()
            )));
        }
        let powers = self
            .weights
            .iter()
            .map(|w| w.iter().zip(spectrum).map(|(m, p)| m * p).sum::<f64>().max(0.0))
            .collect();
        Ok(FilterbankPowers {
            powers,
            frame_index,
        })
    }
}

/// Applies `filterbank` to one power spectrum.
pub fn mel_energies(
    spectrum: &[f64],
    filterbank: &MelFilterbank,
    frame_index: usize,
) -> Result<FilterbankPowers> {
    filterbank.mel_energies(spectrum, frame_index)
}
