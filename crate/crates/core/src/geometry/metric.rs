use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::{multilinear_corners, GridSpec};
use crate::container::Container;
use crate::dsp::CepstralTrajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    /// Cells averaging fewer velocity samples than this are invalid.
    pub min_count: usize,
    /// Drop velocity samples whose direction turns sharply relative to a
    /// neighbouring frame (trajectory edges where the straight-line velocity
    /// estimate is biased).
    pub exclude_high_curvature: bool,
    /// Turn angle, in degrees, above which a sample is dropped.
    pub curvature_threshold_deg: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            min_count: 8,
            exclude_high_curvature: false,
            curvature_threshold_deg: 60.0,
        }
    }
}

/// Per-cell contravariant metric (mean velocity outer product), its inverse,
/// sample counts and validity.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub grid: GridSpec,
    /// `n*n` entries per cell, row-major.
    pub g_contra: Vec<f64>,
    /// Inverse of `g_contra` on valid cells, zero elsewhere.
    pub g_cov: Vec<f64>,
    pub count: Vec<u64>,
    pub valid: Vec<bool>,
    /// Cells made valid by filling rather than estimation.
    pub filled: Vec<bool>,
    pub options: MetricOptions,
}

/// Smallest-to-largest eigenvalue ratio below which a cell is singular.
const MIN_EIGEN_RATIO: f64 = 1e-9;

pub(crate) fn invert_spd(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mat = DMatrix::from_row_slice(n, n, m);
    let eig = mat.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > MIN_EIGEN_RATIO * max) {
        return None;
    }
    let inv = mat.try_inverse()?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Symmetrize away round-off.
            out[i * n + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
        }
    }
    Some(out)
}

pub(crate) fn sym_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = DMatrix::from_row_slice(n, n, m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Which velocity samples survive the curvature filter.
fn curvature_keep(vel: &[Vec<f64>], threshold_deg: f64) -> Vec<bool> {
    let cos_thr = threshold_deg.to_radians().cos();
    let turn_ok = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return true;
        }
        dot / (na * nb) >= cos_thr
    };
    (0..vel.len())
        .map(|t| {
            (t == 0 || turn_ok(&vel[t - 1], &vel[t]))
                && (t + 1 == vel.len() || turn_ok(&vel[t], &vel[t + 1]))
        })
        .collect()
}

/// Averages `v v^T` of forward-difference velocities over the grid cell
/// containing each step's midpoint.
pub fn estimate_metric(
    traj: &CepstralTrajectory,
    grid: &GridSpec,
    options: &MetricOptions,
) -> Result<MetricField> {
    estimate_metric_multi(std::slice::from_ref(traj), grid, options)
}

/// Same as [`estimate_metric`] over several utterances; no velocity is
/// formed across utterance boundaries.
pub fn estimate_metric_multi(
    trajs: &[CepstralTrajectory],
    grid: &GridSpec,
    options: &MetricOptions,
) -> Result<MetricField> {
    if trajs.iter().all(|t| t.len() < 2) {
        return Err(Error::EmptyTrajectory);
    }
    let mut acc = MetricAccumulator::new(grid, options)?;
    for traj in trajs {
        acc.add(traj)?;
    }
    Ok(acc.finish())
}

/// Running per-cell sums behind [`estimate_metric_multi`], for corpora too
/// large to hold in memory at once. Each added trajectory is an independent
/// piece: chunks of one long recording should overlap by one frame so no
/// step is lost. Accumulators built in parallel combine with
/// [`MetricAccumulator::merge`].
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    grid: GridSpec,
    options: MetricOptions,
    sums: Vec<f64>,
    count: Vec<u64>,
}

impl MetricAccumulator {
    pub fn new(grid: &GridSpec, options: &MetricOptions) -> Result<Self> {
        grid.validate()?;
        let n = grid.dim();
        Ok(Self {
            grid: grid.clone(),
            options: options.clone(),
            sums: vec![0.0; grid.n_cells() * n * n],
            count: vec![0u64; grid.n_cells()],
        })
    }

    pub fn add(&mut self, traj: &CepstralTrajectory) -> Result<()> {
        let n = self.grid.dim();
        if traj.dim() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: traj.dim(),
            });
        }
        if traj.len() < 2 {
            return Ok(());
        }
        let frames = traj.frames();
        let hop = traj.hop();
        let vel: Vec<Vec<f64>> = frames
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b - a) / hop).collect())
            .collect();
        let keep = if self.options.exclude_high_curvature {
            curvature_keep(&vel, self.options.curvature_threshold_deg)
        } else {
            vec![true; vel.len()]
        };
        let mut mid = vec![0.0; n];
        for (t, v) in vel.iter().enumerate() {
            if !keep[t] {
                continue;
            }
            for a in 0..n {
                mid[a] = 0.5 * (frames[t][a] + frames[t + 1][a]);
            }
            let Some(c) = self.grid.cell_of(&mid) else { continue };
            let base = c * n * n;
            for i in 0..n {
                for j in 0..n {
                    self.sums[base + i * n + j] += v[i] * v[j];
                }
            }
            self.count[c] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricAccumulator) -> Result<()> {
        if other.grid != self.grid {
            return Err(Error::ConfigMismatch("accumulators cover different grids".into()));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(self) -> MetricField {
        let n = self.grid.dim();
        let cells = self.grid.n_cells();
        let mut g_contra = vec![0.0; cells * n * n];
        let mut g_cov = vec![0.0; cells * n * n];
        let mut valid = vec![false; cells];
        for c in 0..cells {
            if self.count[c] == 0 {
                continue;
            }
            let base = c * n * n;
            for k in 0..n * n {
                g_contra[base + k] = self.sums[base + k] / self.count[c] as f64;
            }
            if (self.count[c] as usize) < self.options.min_count {
                continue;
            }
            if let Some(inv) = invert_spd(&g_contra[base..base + n * n], n) {
                g_cov[base..base + n * n].copy_from_slice(&inv);
                valid[c] = true;
            }
        }
        MetricField {
            grid: self.grid,
            g_contra,
            g_cov,
            count: self.count,
            valid,
            filled: vec![false; cells],
            options: self.options,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MetricHeader {
    grid: GridSpec,
    options: MetricOptions,
}

impl MetricField {
    /// Field whose covariant metric at each cell centre is `g_cov(center)`.
    /// Every cell is valid with a nominal count of `min_count`.
    pub fn from_covariant_fn(grid: &GridSpec, g_cov_fn: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let n = grid.dim();
        let cells = grid.n_cells();
        let mut g_contra = vec![0.0; cells * n * n];
        let mut g_cov = vec![0.0; cells * n * n];
        for c in 0..cells {
            let cov = g_cov_fn(&grid.center(c));
            if cov.len() != n * n {
                return Err(Error::DimMismatch {
                    expected: n * n,
                    got: cov.len(),
                });
            }
            let inv = invert_spd(&cov, n).ok_or_else(|| {
                Error::InvalidArgument(format!("metric at cell {c} is not positive definite"))
            })?;
            g_cov[c * n * n..(c + 1) * n * n].copy_from_slice(&cov);
            g_contra[c * n * n..(c + 1) * n * n].copy_from_slice(&inv);
        }
        let options = MetricOptions::default();
        Ok(Self {
            grid: grid.clone(),
            g_contra,
            g_cov,
            count: vec![options.min_count as u64; cells],
            valid: vec![true; cells],
            filled: vec![false; cells],
            options,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn contra(&self, cell: usize) -> &[f64] {
        let nn = self.dim() * self.dim();
        &self.g_contra[cell * nn..(cell + 1) * nn]
    }

    pub fn cov(&self, cell: usize) -> &[f64] {
        let nn = self.dim() * self.dim();
        &self.g_cov[cell * nn..(cell + 1) * nn]
    }

    /// Covariant metric interpolated between valid cell centres.
    pub fn interpolate_cov(&self, x: &[f64]) -> Option<Vec<f64>> {
        let nn = self.dim() * self.dim();
        let corners = multilinear_corners(&self.grid, x)?;
        let mut out = vec![0.0; nn];
        for (c, w) in corners {
            if !self.valid[c] {
                return None;
            }
            for (o, g) in out.iter_mut().zip(self.cov(c)) {
                *o += w * g;
            }
        }
        Some(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = MetricHeader {
            grid: self.grid.clone(),
            options: self.options.clone(),
        };
        Container::new("metric", &header)?
            .with_f64("g_contra", self.g_contra.clone())
            .with_f64("g_cov", self.g_cov.clone())
            .with_f64("count", self.count.iter().map(|&c| c as f64).collect())
            .with_u8("valid", self.valid.iter().map(|&v| v as u8).collect())
            .with_u8("filled", self.filled.iter().map(|&v| v as u8).collect())
            .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Container::load_kind(path, "metric")?;
        let h: MetricHeader = c.header_as()?;
        let cells = h.grid.n_cells();
        let nn = h.grid.dim() * h.grid.dim();
        let missing = |name: &str| Error::format(path, format!("missing or malformed `{name}`"));
        let g_contra = c.take_f64("g_contra").filter(|v| v.len() == cells * nn).ok_or_else(|| missing("g_contra"))?;
        let g_cov = c.take_f64("g_cov").filter(|v| v.len() == cells * nn).ok_or_else(|| missing("g_cov"))?;
        let count = c.take_f64("count").filter(|v| v.len() == cells).ok_or_else(|| missing("count"))?;
        let valid = c.take_u8("valid").filter(|v| v.len() == cells).ok_or_else(|| missing("valid"))?;
        let filled = c.take_u8("filled").filter(|v| v.len() == cells).ok_or_else(|| missing("filled"))?;
        Ok(Self {
            grid: h.grid,
            g_contra,
            g_cov,
            count: count.into_iter().map(|c| c as u64).collect(),
            valid: valid.into_iter().map(|v| v != 0).collect(),
            filled: filled.into_iter().map(|v| v != 0).collect(),
            options: h.options,
        })
    }

    /// One row per cell: index, centre, count, validity and the eigenvalues
    /// of the contravariant metric (ascending).
    pub fn write_eigen_csv(&self, path: &Path) -> Result<()> {
        let n = self.dim();
        let mut out = Vec::new();
        let mut header = vec!["cell".to_string()];
        header.extend((0..n).map(|a| format!("x{a}")));
        header.extend(["count".to_string(), "valid".to_string()]);
        header.extend((0..n).map(|a| format!("lambda{a}")));
        writeln!(out, "{}", header.join(",")).unwrap();
        for c in 0..self.grid.n_cells() {
            let mut row = vec![c.to_string()];
            row.extend(self.grid.center(c).iter().map(|x| x.to_string()));
            row.push(self.count[c].to_string());
            row.push((self.valid[c] as u8).to_string());
            row.extend(sym_eigenvalues(self.contra(c), n).iter().map(|x| x.to_string()));
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
