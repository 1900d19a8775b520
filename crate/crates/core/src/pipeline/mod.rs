//! End-to-end run: front end, channel, reduction, geometry, scales,
//! conversion, baselines and evaluation, with every artifact persisted and
//! listed in a hashed manifest.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    ChannelConfig, EvaluateConfig, FittingSets, GeometryConfig, PipelineConfig, ReferenceConfig, SourceConfig,
};

use crate::baselines::{cmn, cmn_ss};
use crate::channel::{apply_channel, image_source_ir, save_ir, ChannelSpec, ImpulseResponse, IrMetadata};
use crate::convert::{channel_convert, lift_to_full_dim, ConversionReport};
use crate::dsp::{AudioSignal, CepstralTrajectory, Frontend};
use crate::error::{Error, Result};
use crate::eval::{distance_distribution_gapped, emit_plots, table_report, DistanceReport, HistogramSpec, Table, TraceSet};
use crate::geometry::{christoffel, estimate_metric_multi, smooth_and_fill, GridSpec};
use crate::pca::{fit_pca, PcaModel};
use crate::scale::{build_scale, derive_reference, extrapolate, isocline_svg, ReferenceFrame, ScaleField, SegmentSpec};
use crate::synth::SynthSpec;

pub const CONDITIONS: [&str; 3] = ["CMN", "CMN + SS", "CHANNEL CONVERSION"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<ManifestEntry>,
}

/// Key results of a run, also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub config_hash: String,
    pub seed: u64,
    /// Distances between reduced cepstra.
    pub reduced: Table,
    /// Distances between full-dimensional cepstra.
    pub full: Table,
    pub n_frames: usize,
    pub n_converted: usize,
    pub fraction_oor: f64,
    pub clean_variance_ratio: f64,
    pub corrupted_variance_ratio: f64,
    pub realized_snr_db: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub summary: PipelineSummary,
    pub manifest: Manifest,
}

/// Candidate frames (gaps allowed) with their clean counterparts.
type Paired = (Vec<Option<Vec<f64>>>, Vec<Vec<f64>>);

struct Utterance {
    signal: AudioSignal,
    control: Option<Vec<[f64; 2]>>,
}

struct ChannelSide {
    pca: PcaModel,
    scale: ScaleField,
}

/// Writes files below the run directory.
struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn text(&self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    }

    fn json(&self, rel: &str, value: &impl Serialize) -> Result<()> {
        self.text(rel, &serde_json::to_string_pretty(value)?)
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn load_sources(cfg: &PipelineConfig, needed: &[usize], frame_rate: f64) -> Result<BTreeMap<usize, Utterance>> {
    let mut out = BTreeMap::new();
    match &cfg.source {
        SourceConfig::Synth(spec) => {
            let spec = SynthSpec {
                seed: cfg.seed,
                sample_rate: cfg.frontend.sample_rate,
                ..spec.clone()
            };
            for (&i, u) in needed.iter().zip(spec.corpus(needed, frame_rate)?) {
                out.insert(
                    i,
                    Utterance {
                        signal: u.signal,
                        control: Some(u.control),
                    },
                );
            }
        }
        SourceConfig::Files(files) => {
            for &i in needed {
                let signal = AudioSignal::read_wav(&files[i])?;
                if signal.sample_rate() != cfg.frontend.sample_rate {
                    return Err(Error::RateMismatch {
                        signal: signal.sample_rate(),
                        channel: cfg.frontend.sample_rate,
                    });
                }
                out.insert(i, Utterance { signal, control: None });
            }
        }
    }
    Ok(out)
}

fn build_channel(cfg: &PipelineConfig) -> Result<(ChannelSpec, Option<IrMetadata>)> {
    let fs = cfg.frontend.sample_rate;
    let (impulse, meta) = match &cfg.channel.room {
        Some(room) => {
            let (ir, meta) = image_source_ir(room, cfg.channel.max_echo_s, fs)?;
            (ir, Some(meta))
        }
        None => (ImpulseResponse::identity(fs), None),
    };
    Ok((
        ChannelSpec {
            impulse,
            target_snr_db: cfg.channel.snr_db,
            noise_seed: cfg.seed,
        },
        meta,
    ))
}

fn reference_segments(cfg: &PipelineConfig, controls: &[Option<&[[f64; 2]]>], lens: &[usize]) -> Result<SegmentSpec> {
    let mut spec = match (&cfg.reference.segments, &cfg.reference.selector) {
        (Some(seg), _) => seg.clone(),
        (None, Some(sel)) => {
            let ctrl: Vec<&[[f64; 2]]> = controls
                .iter()
                .map(|c| c.ok_or_else(|| Error::InvalidArgument("selector needs control paths".into())))
                .collect::<Result<_>>()?;
            sel.select(&ctrl, lens)?
        }
        (None, None) => return Err(Error::InvalidArgument("no reference source".into())),
    };
    if cfg.reference.time_unit.is_some() {
        spec.time_unit = cfg.reference.time_unit;
    }
    Ok(spec)
}

/// PCA, metric, connection and scale for one channel.
fn fit_side(
    cfg: &PipelineConfig,
    fit: &[CepstralTrajectory],
    reference_trajs: &[CepstralTrajectory],
    segments: &SegmentSpec,
    name: &str,
    art: &Artifacts,
) -> Result<ChannelSide> {
    let all = stage("reduce", CepstralTrajectory::concat(fit))?;
    let pca = stage("reduce", fit_pca(&all, cfg.components))?;
    stage("reduce", pca.save_json(&art.path(&format!("{name}/pca.json"))?))?;
    let reduced: Vec<CepstralTrajectory> = stage("reduce", fit.iter().map(|t| pca.project(t)).collect())?;
    log::info!("{name}: top-{} variance ratio {:.3}", cfg.components, pca.cumulative_ratio());

    let g = &cfg.geometry;
    let grid = stage(
        "metric",
        GridSpec::covering(reduced.iter().flat_map(|t| t.frames().iter().map(|f| f.as_slice())), &g.cells, g.margin),
    )?;
    let raw = stage("metric", estimate_metric_multi(&reduced, &grid, &g.metric))?;
    let metric = stage("metric", smooth_and_fill(&raw, &g.fill))?;
    stage("metric", metric.save(&art.path(&format!("{name}/metric.bin"))?))?;
    stage("metric", metric.write_eigen_csv(&art.path(&format!("{name}/metric_eigen.csv"))?))?;
    let conn = stage("connection", christoffel(&metric))?;
    stage("connection", conn.save(&art.path(&format!("{name}/connection.bin"))?))?;

    let ref_reduced: Vec<CepstralTrajectory> =
        stage("reference", reference_trajs.iter().map(|t| pca.project(t)).collect())?;
    let reference: ReferenceFrame = stage("reference", derive_reference(&ref_reduced, segments))?;
    art.json(&format!("{name}/reference.json"), &reference)?;

    let built = stage("scale", build_scale(&conn, &reference, &cfg.scale))?;
    let scale = extrapolate(&built, cfg.extrapolate);
    stage("scale", scale.save(&art.path(&format!("{name}/scale.bin"))?))?;
    let background: Vec<Vec<f64>> = reduced.iter().flat_map(|t| t.frames().iter().step_by(4).cloned()).collect();
    art.text(&format!("{name}/scale.svg"), &isocline_svg(&scale, &background))?;
    log::info!(
        "{name}: scale with {} valid and {} extrapolated nodes",
        scale.n_valid(),
        scale.n_extrapolated()
    );
    Ok(ChannelSide { pca, scale })
}

fn manifest(root: &Path, config_hash: &str, seed: u64) -> Result<Manifest> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let mut artifacts = Vec::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        if rel == "manifest.json" {
            continue;
        }
        let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
        artifacts.push(ManifestEntry {
            path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    Ok(Manifest {
        config_hash: config_hash.to_string(),
        seed,
        artifacts,
    })
}

fn mean_removed(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().cloned().collect();
    let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    values.iter().map(|v| v.map(|x| x - mean)).collect()
}

/// Runs every stage and writes artifacts into `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let config_hash = cfg.hash()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let art = Artifacts { root: out.to_path_buf() };
    art.text("config.json", &cfg.to_json()?)?;

    let frontend = stage("frontend", Frontend::new(cfg.frontend.clone()))?;
    let hop_s = frontend.framer().hop() as f64 / cfg.frontend.sample_rate as f64;

    let sets = &cfg.sets;
    let mut needed: Vec<usize> = sets.clean_fit.iter().chain(&sets.corrupted_fit).chain(&sets.evaluate).cloned().collect();
    needed.sort_unstable();
    needed.dedup();
    let sources = stage("source", load_sources(cfg, &needed, 1.0 / hop_s))?;

    let (channel, ir_meta) = stage("channel", build_channel(cfg))?;
    let ir_path = art.path("channel/ir.wav")?;
    match &ir_meta {
        Some(meta) => stage("channel", save_ir(&channel.impulse, meta, &ir_path))?,
        None => stage("channel", channel.impulse.write_wav(&ir_path))?,
    }

    // Clean cepstra for the clean fitting set and evaluation, corrupted
    // cepstra for everything else that passes through the channel.
    let mut clean = BTreeMap::new();
    for &u in sets.clean_fit.iter().chain(&sets.evaluate) {
        let t = stage("frontend", frontend.process(&sources[&u].signal))?;
        stage("frontend", t.write_csv(&art.path(&format!("trajectories/clean_{u:03}.csv"))?))?;
        clean.insert(u, t);
    }
    let mut corrupted = BTreeMap::new();
    let mut corrupted_signals = BTreeMap::new();
    let mut snrs = Vec::new();
    for &u in &needed {
        let co = stage("channel", apply_channel(&sources[&u].signal, &channel, u as u64))?;
        if channel.target_snr_db.is_some() {
            snrs.push(co.realized_snr_db());
        }
        let t = stage("frontend", frontend.process(&co.signal))?;
        stage("frontend", t.write_csv(&art.path(&format!("trajectories/corrupted_{u:03}.csv"))?))?;
        corrupted.insert(u, t);
        corrupted_signals.insert(u, (co.signal, co.noise_variance));
    }

    let controls: Vec<Option<&[[f64; 2]]>> = sets.clean_fit.iter().map(|u| sources[u].control.as_deref()).collect();
    let lens: Vec<usize> = sets.clean_fit.iter().map(|u| clean[u].len()).collect();
    let segments = stage("reference", reference_segments(cfg, &controls, &lens))?;
    art.json("reference_segments.json", &segments)?;

    let clean_fit: Vec<CepstralTrajectory> = sets.clean_fit.iter().map(|u| clean[u].clone()).collect();
    let corrupted_fit: Vec<CepstralTrajectory> = sets.corrupted_fit.iter().map(|u| corrupted[u].clone()).collect();
    // Corrupted renderings of the clean reference sounds.
    let corrupted_refs: Vec<CepstralTrajectory> = sets.clean_fit.iter().map(|u| corrupted[u].clone()).collect();
    let clean_side = fit_side(cfg, &clean_fit, &clean_fit, &segments, "clean", &art)?;
    let corrupted_side = fit_side(cfg, &corrupted_fit, &corrupted_refs, &segments, "corrupted", &art)?;

    // Per-utterance conversion and baselines, pooled for evaluation.
    let mut pooled: [Paired; 6] = Default::default();
    let (mut n_frames, mut n_converted, mut n_oor) = (0usize, 0usize, 0usize);
    let mut trace = None;
    for (pos, &u) in sets.evaluate.iter().enumerate() {
        let reduced_in = stage("convert", corrupted_side.pca.project(&corrupted[&u]))?;
        let report: ConversionReport = stage(
            "convert",
            channel_convert(&reduced_in, &corrupted_side.scale, &clean_side.scale, &cfg.convert),
        )?;
        stage("convert", report.write_json(&art.path(&format!("convert/report_{u:03}.json"))?))?;
        stage("convert", report.converted.write_csv(&art.path(&format!("convert/converted_{u:03}.csv"))?))?;
        let lifted = stage("convert", lift_to_full_dim(&report, &clean_side.pca))?;
        let mask = report.mask();
        n_frames += report.total();
        n_converted += mask.iter().filter(|&&m| m).count();
        n_oor += report.total() - mask.iter().filter(|&&m| m).count();

        let (sig, noise) = &corrupted_signals[&u];
        let clean_cmn = stage("baselines", cmn(&clean[&u]))?;
        let corr_cmn = stage("baselines", cmn(&corrupted[&u]))?;
        let corr_ss = stage("baselines", cmn_ss(&frontend, sig, *noise, &cfg.baselines))?;
        stage("baselines", corr_cmn.write_csv(&art.path(&format!("baselines/cmn_{u:03}.csv"))?))?;
        stage("baselines", corr_ss.write_csv(&art.path(&format!("baselines/cmn_ss_{u:03}.csv"))?))?;

        let pca = &clean_side.pca;
        let project = |t: &CepstralTrajectory| -> Result<Vec<Vec<f64>>> {
            t.frames().iter().map(|f| pca.project_direction(f)).collect()
        };
        let clean_cmn_r = stage("evaluate", project(&clean_cmn))?;
        let clean_r = stage("evaluate", pca.project(&clean[&u]))?;
        let gate = |frames: Vec<Option<Vec<f64>>>| -> Vec<Option<Vec<f64>>> {
            frames.into_iter().zip(&mask).map(|(f, &m)| if m { f } else { None }).collect()
        };
        let wrap = |t: Vec<Vec<f64>>| gate(t.into_iter().map(Some).collect());
        let parts: [Paired; 6] = [
            (wrap(stage("evaluate", project(&corr_cmn))?), clean_cmn_r.clone()),
            (wrap(stage("evaluate", project(&corr_ss))?), clean_cmn_r),
            (gate(report.converted.frames.clone()), clean_r.frames().to_vec()),
            (wrap(corr_cmn.frames().to_vec()), clean_cmn.frames().to_vec()),
            (wrap(corr_ss.frames().to_vec()), clean_cmn.frames().to_vec()),
            (gate(lifted.frames.clone()), clean[&u].frames().to_vec()),
        ];
        for (acc, (a, b)) in pooled.iter_mut().zip(parts) {
            acc.0.extend(a);
            acc.1.extend(b);
        }

        if pos == 0 {
            let c = cfg.evaluate.trace_coefficient;
            let [lo, hi] = cfg.evaluate.trace_frames;
            let hi = hi.min(clean_cmn.len());
            let lo = lo.min(hi);
            let conv: Vec<Option<f64>> = lifted.frames.iter().map(|f| f.as_ref().map(|v| v[c])).collect();
            let conv = mean_removed(&conv);
            trace = Some(TraceSet {
                label: format!("utterance {u}, coefficient c{c}, frames {lo}..{hi}"),
                clean: clean_cmn.frames()[lo..hi].iter().map(|f| f[c]).collect(),
                corrupted: corr_cmn.frames()[lo..hi].iter().map(|f| f[c]).collect(),
                converted: conv[lo..hi].to_vec(),
            });
        }
    }

    let hist = HistogramSpec {
        bins: cfg.evaluate.bins,
        max: None,
    };
    let mut reports: Vec<(String, DistanceReport)> = Vec::new();
    for (a, b) in &pooled {
        let a: Vec<Option<&[f64]>> = a.iter().map(|f| f.as_deref()).collect();
        reports.push((String::new(), stage("evaluate", distance_distribution_gapped(&a, b, None, &hist))?));
    }
    let names = CONDITIONS.iter().chain(CONDITIONS.iter());
    for ((name, _), n) in reports.iter_mut().zip(names) {
        *name = n.to_string();
    }
    let (reduced_reports, full_reports) = reports.split_at(3);
    let reduced = table_report(reduced_reports);
    let full = table_report(full_reports);
    for (name, table) in [("reduced", &reduced), ("full", &full)] {
        art.text(&format!("tables/{name}.txt"), &table.to_text())?;
        art.text(&format!("tables/{name}.json"), &table.to_json()?)?;
    }
    let traces: Vec<TraceSet> = trace.into_iter().collect();
    stage("plots", emit_plots(&out.join("plots/reduced"), reduced_reports, &traces, cfg.evaluate.bins))?;
    stage("plots", emit_plots(&out.join("plots/full"), full_reports, &[], cfg.evaluate.bins))?;

    let summary = PipelineSummary {
        config_hash: config_hash.clone(),
        seed: cfg.seed,
        reduced,
        full,
        n_frames,
        n_converted,
        fraction_oor: if n_frames == 0 { 0.0 } else { n_oor as f64 / n_frames as f64 },
        clean_variance_ratio: clean_side.pca.cumulative_ratio(),
        corrupted_variance_ratio: corrupted_side.pca.cumulative_ratio(),
        realized_snr_db: snrs,
    };
    art.json("summary.json", &summary)?;

    let manifest = stage("manifest", manifest(out, &config_hash, cfg.seed))?;
    art.json("manifest.json", &manifest)?;
    Ok(PipelineOutcome { summary, manifest })
}
