use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{multilinear_corners, GridSpec};
use super::metric::MetricField;
use crate::container::Container;
use crate::error::{Error, Result};

/// Levi-Civita connection coefficients at cell centres.
///
/// `gamma` holds `n^3` entries per cell laid out as `[k][i][j]`, with
/// `gamma[k][i][j] == gamma[k][j][i]` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionField {
    pub grid: GridSpec,
    pub gamma: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Derivative of a cell-centred quantity along `axis`: central where both
/// neighbours are valid, second-order one-sided where possible at region
/// edges, first-order one-sided otherwise.
fn derivative(m: &MetricField, c: usize, axis: usize, comp: usize) -> Option<f64> {
    let nn = m.dim() * m.dim();
    let w = m.grid.width(axis);
    let val = |cell: usize| m.g_cov[cell * nn + comp];
    let valid = |d: isize| m.grid.neighbor(c, axis, d).filter(|&j| m.valid[j]);
    match (valid(-1), valid(1)) {
        (Some(lo), Some(hi)) => Some((val(hi) - val(lo)) / (2.0 * w)),
        (None, Some(hi)) => Some(match valid(2) {
            Some(hi2) => (-3.0 * val(c) + 4.0 * val(hi) - val(hi2)) / (2.0 * w),
            None => (val(hi) - val(c)) / w,
        }),
        (Some(lo), None) => Some(match valid(-2) {
            Some(lo2) => (3.0 * val(c) - 4.0 * val(lo) + val(lo2)) / (2.0 * w),
            None => (val(c) - val(lo)) / w,
        }),
        (None, None) => None,
    }
}

/// Christoffel symbols of the second kind from the covariant metric and its
/// inverse (the contravariant field).
pub fn christoffel(metric: &MetricField) -> Result<ConnectionField> {
    let n = metric.dim();
    let nn = n * n;
    let cells = metric.grid.n_cells();
    let mut gamma = vec![0.0; cells * n * nn];
    let mut valid = vec![false; cells];
    // dg[l][i][j] = d_l g_ij
    let mut dg = vec![0.0; n * nn];
    'cells: for c in 0..cells {
        if !metric.valid[c] {
            continue;
        }
        for l in 0..n {
            for comp in 0..nn {
                match derivative(metric, c, l, comp) {
                    Some(d) => dg[l * nn + comp] = d,
                    None => continue 'cells,
                }
            }
        }
        let ginv = metric.contra(c);
        let base = c * n * nn;
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        let bracket = dg[i * nn + l * n + j] + dg[j * nn + l * n + i] - dg[l * nn + i * n + j];
                        acc += ginv[k * n + l] * bracket;
                    }
                    let v = 0.5 * acc;
                    gamma[base + k * nn + i * n + j] = v;
                    gamma[base + k * nn + j * n + i] = v;
                }
            }
        }
        valid[c] = true;
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::RegionTooSmall);
    }
    Ok(ConnectionField {
        grid: metric.grid.clone(),
        gamma,
        valid,
    })
}

#[derive(Serialize, Deserialize)]
struct ConnectionHeader {
    grid: GridSpec,
}

impl ConnectionField {
    /// Connection that vanishes on every cell.
    pub fn flat(grid: &GridSpec) -> Self {
        let n = grid.dim();
        Self {
            grid: grid.clone(),
            gamma: vec![0.0; grid.n_cells() * n * n * n],
            valid: vec![true; grid.n_cells()],
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn at_cell(&self, cell: usize) -> &[f64] {
        let n3 = self.dim().pow(3);
        &self.gamma[cell * n3..(cell + 1) * n3]
    }

    /// Multilinear interpolation between valid cell centres; `None` when any
    /// supporting corner is invalid or off-grid.
    pub fn interpolate_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        let Some(corners) = multilinear_corners(&self.grid, x) else {
            return false;
        };
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, w) in corners {
            if !self.valid[c] {
                return false;
            }
            if w == 0.0 {
                continue;
            }
            for (o, g) in out.iter_mut().zip(self.at_cell(c)) {
                *o += w * g;
            }
        }
        true
    }

    pub fn interpolate(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.dim().pow(3)];
        self.interpolate_into(x, &mut out).then_some(out)
    }

    /// Whether `x` has all interpolation corners valid.
    pub fn covers(&self, x: &[f64]) -> bool {
        multilinear_corners(&self.grid, x)
            .map(|cs| cs.iter().all(|&(c, _)| self.valid[c]))
            .unwrap_or(false)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Container::new("connection", &ConnectionHeader { grid: self.grid.clone() })?
            .with_f64("gamma", self.gamma.clone())
            .with_u8("valid", self.valid.iter().map(|&v| v as u8).collect())
            .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Container::load_kind(path, "connection")?;
        let h: ConnectionHeader = c.header_as()?;
        let cells = h.grid.n_cells();
        let n3 = h.grid.dim().pow(3);
        let gamma = c
            .take_f64("gamma")
            .filter(|v| v.len() == cells * n3)
            .ok_or_else(|| Error::format(path, "missing or malformed `gamma`"))?;
        let valid = c
            .take_u8("valid")
            .filter(|v| v.len() == cells)
            .ok_or_else(|| Error::format(path, "missing or malformed `valid`"))?;
        Ok(Self {
            grid: h.grid,
            gamma,
            valid: valid.into_iter().map(|v| v != 0).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // y = psi(x) with a Jacobian that stays invertible on [-1, 1]^2.
    fn jac(x: &[f64]) -> [[f64; 2]; 2] {
        [[1.0 + 0.3 * x[0] * x[0], 0.3 * x[1]], [-0.4 * x[0], 1.0]]
    }

    // hess[a][i][j] = d^2 psi_a / dx_i dx_j
    fn hess(x: &[f64]) -> [[[f64; 2]; 2]; 2] {
        [[[0.6 * x[0], 0.0], [0.0, 0.3]], [[-0.4, 0.0], [0.0, 0.0]]]
    }

    fn pullback_cov(x: &[f64]) -> Vec<f64> {
        let j = jac(x);
        let mut g = vec![0.0; 4];
        for a in 0..2 {
            for b in 0..2 {
                g[a * 2 + b] = (0..2).map(|c| j[c][a] * j[c][b]).sum();
            }
        }
        g
    }

    fn pullback_gamma(x: &[f64]) -> Vec<f64> {
        let j = jac(x);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        let h = hess(x);
        let mut out = vec![0.0; 8];
        for k in 0..2 {
            for i in 0..2 {
                for jj in 0..2 {
                    out[k * 4 + i * 2 + jj] = (0..2).map(|a| inv[k][a] * h[a][i][jj]).sum();
                }
            }
        }
        out
    }

    fn max_error(cells: usize) -> f64 {
        let g = GridSpec::new(vec![[-1.0, 1.0], [-1.0, 1.0]], vec![cells, cells]).unwrap();
        let m = MetricField::from_covariant_fn(&g, pullback_cov).unwrap();
        let conn = christoffel(&m).unwrap();
        (0..g.n_cells())
            .flat_map(|c| {
                let truth = pullback_gamma(&g.center(c));
                conn.at_cell(c)
                    .iter()
                    .zip(truth)
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_metric_has_zero_connection() {
        let g = GridSpec::new(vec![[0.0, 1.0], [0.0, 2.0]], vec![10, 12]).unwrap();
        let m = MetricField::from_covariant_fn(&g, |_| vec![3.0, 1.0, 1.0, 2.0]).unwrap();
        let conn = christoffel(&m).unwrap();
        assert!(conn.gamma.iter().all(|&x| x == 0.0));
        assert_eq!(conn.n_valid(), g.n_cells());
    }

    #[test]
    fn pullback_converges_at_second_order() {
        let e: Vec<f64> = [32, 64, 128].iter().map(|&c| max_error(c)).collect();
        assert!(e[0] < 1e-2, "{e:?}");
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "{e:?}");
        }
    }

    #[test]
    fn index_symmetry_is_exact() {
        let g = GridSpec::new(vec![[-1.0, 1.0], [-1.0, 1.0]], vec![16, 16]).unwrap();
        let m = MetricField::from_covariant_fn(&g, |x| {
            vec![2.0 + x[0].sin(), 0.3 * x[0] * x[1], 0.3 * x[0] * x[1], 1.5 + x[1] * x[1]]
        })
        .unwrap();
        let conn = christoffel(&m).unwrap();
        for c in 0..g.n_cells() {
            let gm = conn.at_cell(c);
            for k in 0..2 {
                assert_eq!(gm[k * 4 + 1].to_bits(), gm[k * 4 + 2].to_bits());
            }
        }
    }

    #[test]
    fn isolated_cells_are_too_small() {
        let g = GridSpec::new(vec![[0.0, 1.0], [0.0, 1.0]], vec![4, 4]).unwrap();
        let mut m = MetricField::from_covariant_fn(&g, |_| vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        for c in 0..g.n_cells() {
            m.valid[c] = c == 5;
        }
        assert!(matches!(christoffel(&m), Err(Error::RegionTooSmall)));
    }

    #[test]
    fn interpolation_needs_valid_corners() {
        let g = GridSpec::new(vec![[0.0, 1.0], [0.0, 1.0]], vec![8, 8]).unwrap();
        let mut conn = ConnectionField::flat(&g);
        assert!(conn.covers(&[0.5, 0.5]));
        conn.valid[g.cell_of(&[0.45, 0.45]).unwrap()] = false;
        assert!(!conn.covers(&[0.5, 0.5]));
        assert!(conn.interpolate(&[0.5, 0.5]).is_none());
    }

    #[test]
    fn container_round_trip() {
        let g = GridSpec::new(vec![[-1.0, 1.0], [-1.0, 1.0]], vec![8, 8]).unwrap();
        let m = MetricField::from_covariant_fn(&g, pullback_cov).unwrap();
        let conn = christoffel(&m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conn");
        conn.save(&p).unwrap();
        assert_eq!(ConnectionField::load(&p).unwrap(), conn);
    }
}
