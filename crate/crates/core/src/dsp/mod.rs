//! Audio to MFCC trajectory front end.

mod framing;
mod mel;
mod mfcc;
mod signal;
mod spectrum;
mod trajectory;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use framing::{frame_signal, hamming, FrameConfig, Framer, Padding};
pub use mel::{
    hz_to_mel, mel_energies, mel_to_hz, triangle, FilterbankConfig, FilterbankPowers,
    MelFilterbank,
};
pub use mfcc::{log_floor, mfcc, utterance_log_floor, Dct, ABSOLUTE_LOG_FLOOR, RELATIVE_LOG_FLOOR};
pub use signal::{AudioSignal, DEFAULT_SAMPLE_RATE};
pub use spectrum::{fft_size_for, power_spectrum, SpectrumAnalyzer};
pub use trajectory::{CepstralTrajectory, GappedTrajectory};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub frame: FrameConfig,
    pub n_filters: usize,
    pub n_coeffs: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            frame: FrameConfig::default(),
            n_filters: 24,
            n_coeffs: 20,
        }
    }
}

/// Hamming-windowed FFT, mel filterbank, log and DCT.
#[derive(Debug, Clone)]
pub struct Frontend {
    config: FrontendConfig,
    framer: Framer,
    analyzer: SpectrumAnalyzer,
    filterbank: MelFilterbank,
    dct: Dct,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        let framer = Framer::new(&config.frame, config.sample_rate)?;
        let fft_size = fft_size_for(framer.frame_len());
        let analyzer = SpectrumAnalyzer::new(fft_size)?;
        let fb_config = FilterbankConfig {
            n_filters: config.n_filters,
            ..FilterbankConfig::new(config.sample_rate, fft_size)
        };
        let filterbank = MelFilterbank::new(fb_config)?;
        let dct = Dct::new(config.n_filters, config.n_coeffs)?;
        Ok(Self {
            config,
            framer,
            analyzer,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn framer(&self) -> &Framer {
        &self.framer
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn fft_size(&self) -> usize {
        self.analyzer.fft_size()
    }

    fn check_rate(&self, signal: &AudioSignal) -> Result<()> {
        if signal.sample_rate() != self.config.sample_rate {
            return Err(Error::RateMismatch {
                signal: signal.sample_rate(),
                channel: self.config.sample_rate,
            });
        }
        Ok(())
    }

    /// Filterbank powers for every frame of the signal.
    pub fn powers(&self, signal: &AudioSignal) -> Result<Vec<FilterbankPowers>> {
        self.check_rate(signal)?;
        let n = self.framer.count(signal.len());
        if n == 0 {
            return Err(Error::SignalTooShort {
                len: signal.len(),
                needed: self.framer.frame_len(),
            });
        }
        (0..n)
            .into_par_iter()
            .map_init(
                || {
                    (
                        vec![0.0; self.framer.frame_len()],
                        Vec::new(),
                        vec![0.0; self.analyzer.n_bins()],
                    )
                },
                |(frame, buf, spec), i| {
                    self.framer.windowed_frame_into(signal.samples(), i, frame);
                    self.analyzer.power_spectrum_into(frame, buf, spec)?;
                    self.filterbank.mel_energies(spec, i)
                },
            )
            .collect()
    }

    /// Cepstra from precomputed powers, using one log floor for the utterance.
    pub fn cepstra(&self, powers: &[FilterbankPowers]) -> Result<CepstralTrajectory> {
        let floor = utterance_log_floor(powers);
        let frames = powers
            .par_iter()
            .map(|p| mfcc::mfcc_with(&self.dct, p, floor))
            .collect();
        CepstralTrajectory::with_dim(frames, self.config.frame.hop, self.config.n_coeffs)
    }

    pub fn process(&self, signal: &AudioSignal) -> Result<CepstralTrajectory> {
        let powers = self.powers(signal)?;
        self.cepstra(&powers)
    }
}
