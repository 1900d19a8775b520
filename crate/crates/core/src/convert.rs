//! Channel conversion `x = s^-1[s'(x')]`: corrupted frames are mapped into
//! s-coordinates by the corrupted-channel scale, then back to cepstral space
//! through the clean-channel scale.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{CepstralTrajectory, GappedTrajectory};
use crate::error::{Error, Result};
use crate::pca::PcaModel;
use crate::scale::ScaleField;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvertOptions {
    /// Map frames whose s falls outside the target scale to the nearest
    /// usable lattice node instead of leaving a gap.
    pub nearest_s: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Converted,
    /// The frame lies outside the source scale's lattice.
    OutsideSourceDomain,
    /// Its s-coordinates fall outside the target scale's range.
    OutsideTargetRange,
    /// Outside the target range, replaced by the nearest usable node.
    Clamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionReport {
    pub converted: GappedTrajectory,
    pub status: Vec<FrameStatus>,
    /// Converted through a cell touching extrapolated nodes (either scale).
    pub extrapolated: Vec<bool>,
    pub n_out_of_range: usize,
    pub fraction_oor: f64,
}

/// JSON summary of a conversion, including the per-frame validity mask
/// consumed by evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionSummary {
    pub total: usize,
    pub n_converted: usize,
    pub n_out_of_range: usize,
    pub n_outside_source_domain: usize,
    pub n_outside_target_range: usize,
    pub n_clamped: usize,
    pub n_extrapolated: usize,
    pub fraction_oor: f64,
    pub valid: Vec<bool>,
}

impl ConversionReport {
    pub fn total(&self) -> usize {
        self.status.len()
    }

    /// Frames converted without clamping.
    pub fn mask(&self) -> Vec<bool> {
        self.status.iter().map(|s| *s == FrameStatus::Converted).collect()
    }

    fn count(&self, st: FrameStatus) -> usize {
        self.status.iter().filter(|s| **s == st).count()
    }

    pub fn summary(&self) -> ConversionSummary {
        ConversionSummary {
            total: self.total(),
            n_converted: self.count(FrameStatus::Converted),
            n_out_of_range: self.n_out_of_range,
            n_outside_source_domain: self.count(FrameStatus::OutsideSourceDomain),
            n_outside_target_range: self.count(FrameStatus::OutsideTargetRange),
            n_clamped: self.count(FrameStatus::Clamped),
            n_extrapolated: self.extrapolated.iter().filter(|e| **e).count(),
            fraction_oor: self.fraction_oor,
            valid: self.mask(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl ConversionSummary {
    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Converts each frame of `traj` from the `from` scale's channel to the `to`
/// scale's channel.
pub fn channel_convert(
    traj: &CepstralTrajectory,
    from: &ScaleField,
    to: &ScaleField,
    options: &ConvertOptions,
) -> Result<ConversionReport> {
    if from.dim() != to.dim() {
        return Err(Error::IncompatibleScales(format!(
            "source scale is {}-D, target scale is {}-D",
            from.dim(),
            to.dim()
        )));
    }
    if traj.dim() != from.dim() {
        return Err(Error::DimMismatch {
            expected: from.dim(),
            got: traj.dim(),
        });
    }
    let results: Vec<(Option<Vec<f64>>, FrameStatus, bool)> = traj
        .frames()
        .par_iter()
        .map(|x| {
            let r = match from.rescale_flagged(x) {
                Ok(r) => r,
                Err(_) => return (None, FrameStatus::OutsideSourceDomain, false),
            };
            match to.inverse_rescale(&r.s) {
                Ok(y) => {
                    let ext = r.extrapolated
                        || to.rescale_flagged(&y).map(|b| b.extrapolated).unwrap_or(false);
                    (Some(y), FrameStatus::Converted, ext)
                }
                Err(_) if options.nearest_s => (to.nearest_in_range(&r.s), FrameStatus::Clamped, r.extrapolated),
                Err(_) => (None, FrameStatus::OutsideTargetRange, r.extrapolated),
            }
        })
        .collect();
    let mut frames = Vec::with_capacity(results.len());
    let mut status = Vec::with_capacity(results.len());
    let mut extrapolated = Vec::with_capacity(results.len());
    for (f, s, e) in results {
        frames.push(f);
        status.push(s);
        extrapolated.push(e);
    }
    let n_out_of_range = status.iter().filter(|s| **s != FrameStatus::Converted).count();
    let fraction_oor = if status.is_empty() {
        0.0
    } else {
        n_out_of_range as f64 / status.len() as f64
    };
    Ok(ConversionReport {
        converted: GappedTrajectory {
            frames,
            hop: traj.hop(),
            dim: traj.dim(),
        },
        status,
        extrapolated,
        n_out_of_range,
        fraction_oor,
    })
}

/// Reconstructs converted frames through the clean PCA model; gaps stay
/// gaps.
pub fn lift_to_full_dim(report: &ConversionReport, pca: &PcaModel) -> Result<GappedTrajectory> {
    if pca.n_components() != report.converted.dim {
        return Err(Error::DimMismatch {
            expected: pca.n_components(),
            got: report.converted.dim,
        });
    }
    let frames = report
        .converted
        .frames
        .iter()
        .map(|f| f.as_ref().map(|s| pca.reconstruct_vec(s)).transpose())
        .collect::<Result<Vec<_>>>()?;
    Ok(GappedTrajectory {
        frames,
        hop: report.converted.hop,
        dim: pca.dim(),
    })
}
