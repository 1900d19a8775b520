use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::SsOptions;
use crate::channel::{RoomSpec, DEFAULT_MAX_ECHO};
use crate::convert::ConvertOptions;
use crate::dsp::FrontendConfig;
use crate::error::{Error, Result};
use crate::geometry::{FillPolicy, MetricOptions};
use crate::scale::{ScaleParams, SegmentSpec};
use crate::synth::{ReferenceSelector, SynthSpec};

/// Declarative description of one end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Drives channel noise and the synthetic generator.
    pub seed: u64,
    pub frontend: FrontendConfig,
    pub source: SourceConfig,
    pub sets: FittingSets,
    pub channel: ChannelConfig,
    /// Principal components retained per channel.
    pub components: usize,
    pub geometry: GeometryConfig,
    pub reference: ReferenceConfig,
    pub scale: ScaleParams,
    /// Rings of lattice nodes added by extrapolation.
    pub extrapolate: usize,
    pub convert: ConvertOptions,
    pub baselines: SsOptions,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frontend: FrontendConfig::default(),
            source: SourceConfig::default(),
            sets: FittingSets::default(),
            channel: ChannelConfig::default(),
            components: 2,
            geometry: GeometryConfig::default(),
            reference: ReferenceConfig::default(),
            scale: ScaleParams::default(),
            extrapolate: 3,
            convert: ConvertOptions::default(),
            baselines: SsOptions::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

/// Where utterances come from. Utterances are addressed by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Generated audio. The run seed replaces the generator's own seed.
    Synth(SynthSpec),
    /// WAV files, one utterance each; relative paths resolve against the
    /// config file's directory.
    Files(Vec<PathBuf>),
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synth(SynthSpec {
            n_utterances: 24,
            ..SynthSpec::default()
        })
    }
}

impl SourceConfig {
    pub fn n_utterances(&self) -> usize {
        match self {
            SourceConfig::Synth(s) => s.n_utterances,
            SourceConfig::Files(f) => f.len(),
        }
    }
}

/// Utterance indices used for each role. The two fitting sets must not
/// share an utterance, and evaluation must not reuse clean fitting data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FittingSets {
    pub clean_fit: Vec<usize>,
    pub corrupted_fit: Vec<usize>,
    pub evaluate: Vec<usize>,
}

impl Default for FittingSets {
    fn default() -> Self {
        Self {
            clean_fit: (0..12).collect(),
            corrupted_fit: (12..24).collect(),
            evaluate: vec![12, 13, 14],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// `null` means no reverberation.
    pub room: Option<RoomSpec>,
    pub max_echo_s: f64,
    /// `null` means no additive noise.
    pub snr_db: Option<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            room: Some(RoomSpec::hard_close()),
            max_echo_s: DEFAULT_MAX_ECHO,
            snr_db: Some(16.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub cells: Vec<usize>,
    /// Fractional padding of the grid around the fitted trajectory.
    pub margin: f64,
    pub metric: MetricOptions,
    pub fill: FillPolicy,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            cells: vec![32, 32],
            margin: 0.05,
            metric: MetricOptions::default(),
            fill: FillPolicy {
                smooth_sigma: Some(2.0),
                ..FillPolicy::default()
            },
        }
    }
}

/// How reference segments are found. Segment utterance indices refer to
/// positions within `sets.clean_fit`; the corrupted reference uses the
/// channel's rendering of exactly those segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    /// Automatic selection from the synthetic control path.
    pub selector: Option<ReferenceSelector>,
    /// Explicit segments; takes precedence over `selector`.
    pub segments: Option<SegmentSpec>,
    /// Seconds per scale unit; overrides any value in `segments`.
    pub time_unit: Option<f64>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            selector: Some(ReferenceSelector::default()),
            segments: None,
            time_unit: Some(0.0075),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub bins: usize,
    /// Cepstral coefficient drawn in the trace overlay.
    pub trace_coefficient: usize,
    /// Frame range of the first evaluation utterance drawn in the overlay.
    pub trace_frames: [usize; 2],
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            bins: 40,
            trace_coefficient: 1,
            trace_frames: [0, 500],
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        path: path.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| invalid(&e.path().to_string(), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative audio paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let SourceConfig::Files(files) = &mut cfg.source {
            let base = path.parent().unwrap_or(Path::new("."));
            for f in files.iter_mut() {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.source.n_utterances();
        let sets = [
            ("sets.clean_fit", &self.sets.clean_fit),
            ("sets.corrupted_fit", &self.sets.corrupted_fit),
            ("sets.evaluate", &self.sets.evaluate),
        ];
        for (path, set) in sets {
            if set.is_empty() {
                return Err(invalid(path, "must list at least one utterance"));
            }
            if let Some(&bad) = set.iter().find(|&&u| u >= n) {
                return Err(invalid(path, format!("utterance {bad} does not exist ({n} available)")));
            }
            if set.iter().collect::<BTreeSet<_>>().len() != set.len() {
                return Err(invalid(path, "lists an utterance twice"));
            }
        }
        let clean: BTreeSet<_> = self.sets.clean_fit.iter().collect();
        if let Some(u) = self.sets.corrupted_fit.iter().find(|u| clean.contains(u)) {
            return Err(invalid(
                "sets.corrupted_fit",
                format!("utterance {u} is also in clean_fit; fitting sets must be disjoint"),
            ));
        }
        if let Some(u) = self.sets.evaluate.iter().find(|u| clean.contains(u)) {
            return Err(invalid("sets.evaluate", format!("utterance {u} is also in clean_fit")));
        }
        if self.components == 0 || self.components > crate::pca::MAX_COMPONENTS {
            return Err(invalid("components", format!("must be in 1..={}", crate::pca::MAX_COMPONENTS)));
        }
        if self.geometry.cells.len() != self.components {
            return Err(invalid("geometry.cells", "needs one entry per component"));
        }
        if self.geometry.cells.iter().any(|&c| c < 3) {
            return Err(invalid("geometry.cells", "every axis needs at least 3 cells"));
        }
        if !(self.geometry.margin >= 0.0) {
            return Err(invalid("geometry.margin", "must be non-negative"));
        }
        if !(self.scale.step > 0.0) {
            return Err(invalid("scale.step", "must be positive"));
        }
        if let Some(t) = self.reference.time_unit {
            if !(t > 0.0) {
                return Err(invalid("reference.time_unit", "must be positive"));
            }
        }
        match (&self.reference.segments, &self.reference.selector, &self.source) {
            (Some(seg), _, _) => {
                if seg.vectors.len() != self.components {
                    return Err(invalid("reference.segments.vectors", "needs one list per component"));
                }
                let m = self.sets.clean_fit.len();
                if let Some(s) = seg.origin.iter().chain(seg.vectors.iter().flatten()).find(|s| s.utterance >= m) {
                    return Err(invalid(
                        "reference.segments",
                        format!("utterance position {} exceeds clean_fit length {m}", s.utterance),
                    ));
                }
            }
            (None, Some(sel), SourceConfig::Synth(_)) => {
                if sel.directions.len() != self.components {
                    return Err(invalid("reference.selector.directions", "needs one direction per component"));
                }
            }
            (None, Some(_), SourceConfig::Files(_)) => {
                return Err(invalid("reference.selector", "needs a synthetic source; give segments for audio files"));
            }
            (None, None, _) => return Err(invalid("reference", "give either segments or selector")),
        }
        if let Some(snr) = self.channel.snr_db {
            if !snr.is_finite() {
                return Err(invalid("channel.snr_db", "must be finite"));
            }
        }
        if self.evaluate.bins == 0 {
            return Err(invalid("evaluate.bins", "must be positive"));
        }
        if self.evaluate.trace_coefficient >= self.frontend.n_coeffs {
            return Err(invalid("evaluate.trace_coefficient", "exceeds the number of coefficients"));
        }
        Ok(())
    }
}
