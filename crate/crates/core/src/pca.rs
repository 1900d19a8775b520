//! Principal-component reduction of cepstral trajectories.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dsp::CepstralTrajectory;
use crate::error::{Error, Result};

/// Largest number of retained components supported downstream.
pub const MAX_COMPONENTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `N`, ordered by decreasing variance.
    pub basis: Vec<Vec<f64>>,
    /// Fraction of total variance carried by each retained component.
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    /// Model that keeps all `dim` coordinates unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            basis: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            explained_variance_ratio: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    pub fn project_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self
            .basis
            .iter()
            .map(|b| b.iter().zip(x).zip(&self.mean).map(|((b, x), m)| b * (x - m)).sum())
            .collect())
    }

    /// Projects a difference vector (no mean removal).
    pub fn project_direction(&self, d: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: d.len(),
            });
        }
        Ok(self
            .basis
            .iter()
            .map(|b| b.iter().zip(d).map(|(b, x)| b * x).sum())
            .collect())
    }

    pub fn reconstruct_vec(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.n_components() {
            return Err(Error::DimMismatch {
                expected: self.n_components(),
                got: s.len(),
            });
        }
        let mut out = self.mean.clone();
        for (coef, b) in s.iter().zip(&self.basis) {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += coef * bi;
            }
        }
        Ok(out)
    }

    pub fn project(&self, traj: &CepstralTrajectory) -> Result<CepstralTrajectory> {
        if traj.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: traj.dim(),
            });
        }
        let frames = traj
            .frames()
            .iter()
            .map(|f| self.project_vec(f))
            .collect::<Result<Vec<_>>>()?;
        CepstralTrajectory::with_dim(frames, traj.hop(), self.n_components())
    }

    pub fn reconstruct(&self, reduced: &CepstralTrajectory) -> Result<CepstralTrajectory> {
        if reduced.dim() != self.n_components() {
            return Err(Error::DimMismatch {
                expected: self.n_components(),
                got: reduced.dim(),
            });
        }
        let frames = reduced
            .frames()
            .iter()
            .map(|f| self.reconstruct_vec(f))
            .collect::<Result<Vec<_>>>()?;
        CepstralTrajectory::with_dim(frames, reduced.hop(), self.dim())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Eigen-decomposition of the frame covariance, keeping the top `k`
/// directions. Basis vectors are sign-normalized so their largest-magnitude
/// entry is positive.
pub fn fit_pca(traj: &CepstralTrajectory, k: usize) -> Result<PcaModel> {
    let n = traj.len();
    let dim = traj.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {k} components of {dim}-dimensional data"
        )));
    }
    if n <= k {
        return Err(Error::RankDeficient {
            rank: n.saturating_sub(1),
            requested: k,
        });
    }
    let mut mean = vec![0.0; dim];
    for f in traj.frames() {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for f in traj.frames() {
        for ((c, x), m) in centered.iter_mut().zip(f).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let lmax = eig.eigenvalues[order[0]].max(0.0);
    let tol = 1e-12 * lmax.max(f64::MIN_POSITIVE);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();
    if rank < k || total <= 0.0 {
        return Err(Error::RankDeficient { rank, requested: k });
    }
    let basis: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().cloned().collect();
            let pivot = v
                .iter()
                .cloned()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(_, x)| x)
                .unwrap_or(1.0);
            if pivot < 0.0 {
                for x in &mut v {
                    *x = -*x;
                }
            }
            v
        })
        .collect();
    let explained_variance_ratio = order[..k]
        .iter()
        .map(|&i| (eig.eigenvalues[i].max(0.0) / total).clamp(0.0, 1.0))
        .collect();
    Ok(PcaModel {
        mean,
        basis,
        explained_variance_ratio,
    })
}
