use serde::{Deserialize, Serialize};

use super::metric::{invert_spd, MetricField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FillPolicy {
    /// Fill invalid cells from their valid neighbours.
    pub fill: bool,
    /// Minimum fraction of in-grid neighbours that must be valid before a
    /// cell is filled.
    pub min_valid_fraction: f64,
    /// Filling passes; each pass may use cells filled by the previous one.
    pub passes: usize,
    /// Gaussian smoothing width in cells applied to valid cells' covariant
    /// metric; `None` leaves estimated cells untouched.
    pub smooth_sigma: Option<f64>,
}

impl Default for FillPolicy {
    fn default() -> Self {
        Self {
            fill: true,
            min_valid_fraction: 0.5,
            passes: 1,
            smooth_sigma: None,
        }
    }
}

/// Offsets of the full `3^n - 1` neighbourhood.
fn neighbour_offsets(n: usize) -> Vec<Vec<isize>> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let off: Vec<isize> = (0..n)
            .map(|_| {
                let d = (c % 3) as isize - 1;
                c /= 3;
                d
            })
            .collect();
        if off.iter().any(|&d| d != 0) {
            out.push(off);
        }
    }
    out
}

fn offset_cell(m: &MetricField, idx: &[usize], off: &[isize]) -> Option<usize> {
    let mut j = Vec::with_capacity(idx.len());
    for a in 0..idx.len() {
        let v = idx[a] as isize + off[a];
        if v < 0 || v >= m.grid.cells[a] as isize {
            return None;
        }
        j.push(v as usize);
    }
    Some(m.grid.ravel(&j))
}

fn gaussian_smooth(m: &mut MetricField, sigma: f64) {
    let n = m.dim();
    let nn = n * n;
    let radius = (3.0 * sigma).ceil() as isize;
    let span = (2 * radius + 1) as usize;
    let mut offsets = Vec::new();
    for code in 0..span.pow(n as u32) {
        let mut c = code;
        let off: Vec<isize> = (0..n)
            .map(|_| {
                let d = (c % span) as isize - radius;
                c /= span;
                d
            })
            .collect();
        let r2: f64 = off.iter().map(|&d| (d * d) as f64).sum();
        offsets.push((off, (-0.5 * r2 / (sigma * sigma)).exp()));
    }
    let src = m.g_cov.clone();
    for c in 0..m.grid.n_cells() {
        if !m.valid[c] {
            continue;
        }
        let idx = m.grid.unravel(c);
        let mut acc = vec![0.0; nn];
        let mut wsum = 0.0;
        for (off, w) in &offsets {
            if let Some(j) = offset_cell(m, &idx, off) {
                if m.valid[j] {
                    for k in 0..nn {
                        acc[k] += w * src[j * nn + k];
                    }
                    wsum += w;
                }
            }
        }
        for k in 0..nn {
            m.g_cov[c * nn + k] = acc[k] / wsum;
        }
    }
}

/// Fills sparse cells and optionally smooths the covariant metric.
///
/// A cell is filled with the inverse-distance weighted mean of its valid
/// neighbours' covariant metric when enough of them are valid. Filled cells
/// are flagged in `filled`. Averages of positive-definite matrices stay
/// positive-definite, so every resulting valid cell is invertible.
pub fn smooth_and_fill(metric: &MetricField, policy: &FillPolicy) -> Result<MetricField> {
    if metric.n_valid() == 0 {
        return Err(Error::NoValidCells);
    }
    let mut m = metric.clone();
    let n = m.dim();
    let nn = n * n;
    if let Some(sigma) = policy.smooth_sigma {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("smoothing sigma must be positive".into()));
        }
        gaussian_smooth(&mut m, sigma);
    }
    if policy.fill {
        let offsets: Vec<(Vec<isize>, f64)> = neighbour_offsets(n)
            .into_iter()
            .map(|o| {
                let d = o.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
                (o, 1.0 / d)
            })
            .collect();
        for _ in 0..policy.passes {
            let mut updates = Vec::new();
            for c in 0..m.grid.n_cells() {
                if m.valid[c] {
                    continue;
                }
                let idx = m.grid.unravel(c);
                let mut in_grid = 0usize;
                let mut n_valid = 0usize;
                let mut acc = vec![0.0; nn];
                let mut wsum = 0.0;
                for (off, w) in &offsets {
                    let Some(j) = offset_cell(&m, &idx, off) else { continue };
                    in_grid += 1;
                    if m.valid[j] {
                        n_valid += 1;
                        for k in 0..nn {
                            acc[k] += w * m.g_cov[j * nn + k];
                        }
                        wsum += w;
                    }
                }
                if n_valid > 0 && n_valid as f64 >= policy.min_valid_fraction * in_grid as f64 {
                    acc.iter_mut().for_each(|a| *a /= wsum);
                    updates.push((c, acc));
                }
            }
            if updates.is_empty() {
                break;
            }
            for (c, cov) in updates {
                let Some(contra) = invert_spd(&cov, n) else { continue };
                m.g_cov[c * nn..(c + 1) * nn].copy_from_slice(&cov);
                m.g_contra[c * nn..(c + 1) * nn].copy_from_slice(&contra);
                m.valid[c] = true;
                m.filled[c] = true;
            }
        }
    }
    if policy.smooth_sigma.is_some() {
        for c in 0..m.grid.n_cells() {
            if m.valid[c] {
                match invert_spd(&m.g_cov[c * nn..(c + 1) * nn], n) {
                    Some(contra) => m.g_contra[c * nn..(c + 1) * nn].copy_from_slice(&contra),
                    None => m.valid[c] = false,
                }
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::GridSpec;
    use crate::geometry::metric::sym_eigenvalues;

    fn analytic(x: &[f64]) -> Vec<f64> {
        let a = 1.0 + 0.3 * x[0] * x[0];
        let b = 2.0 + 0.5 * x[1];
        let c = 0.2 * x[0] * x[1];
        vec![a, c, c, b]
    }

    fn field() -> MetricField {
        let g = GridSpec::new(vec![[-1.0, 1.0], [-1.0, 1.0]], vec![16, 16]).unwrap();
        MetricField::from_covariant_fn(&g, analytic).unwrap()
    }

    #[test]
    fn all_valid_is_unchanged() {
        let m = field();
        assert_eq!(smooth_and_fill(&m, &FillPolicy::default()).unwrap(), m);
    }

    #[test]
    fn single_hole_surrounded_by_equals_gets_their_value() {
        let g = GridSpec::new(vec![[0.0, 1.0], [0.0, 1.0]], vec![8, 8]).unwrap();
        let mut m = MetricField::from_covariant_fn(&g, |_| vec![2.0, 0.5, 0.5, 3.0]).unwrap();
        let hole = g.ravel(&[3, 4]);
        m.valid[hole] = false;
        m.g_cov[hole * 4..hole * 4 + 4].fill(0.0);
        let f = smooth_and_fill(&m, &FillPolicy::default()).unwrap();
        assert!(f.valid[hole] && f.filled[hole]);
        for (a, b) in f.cov(hole).iter().zip([2.0, 0.5, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(f.filled.iter().filter(|x| **x).count(), 1);
    }

    #[test]
    fn checkerboard_fill_tracks_analytic_metric() {
        let mut m = field();
        for c in 0..m.grid.n_cells() {
            let idx = m.grid.unravel(c);
            if (idx[0] + idx[1]) % 2 == 1 {
                m.valid[c] = false;
            }
        }
        let f = smooth_and_fill(&m, &FillPolicy::default()).unwrap();
        let mut checked = 0;
        for c in 0..f.grid.n_cells() {
            if !m.valid[c] && f.valid[c] {
                let truth = analytic(&f.grid.center(c));
                for (a, b) in f.cov(c).iter().zip(&truth) {
                    let scale = truth.iter().map(|x| x.abs()).fold(0.0, f64::max);
                    assert!((a - b).abs() <= 0.05 * scale, "{a} vs {b}");
                }
                checked += 1;
            }
        }
        // Every interior hole has four valid edge neighbours out of eight.
        assert!(checked >= 14 * 14 / 2);
    }

    #[test]
    fn smoothing_keeps_positive_definiteness() {
        let m = field();
        let policy = FillPolicy {
            smooth_sigma: Some(1.5),
            ..FillPolicy::default()
        };
        let f = smooth_and_fill(&m, &policy).unwrap();
        for c in 0..f.grid.n_cells() {
            assert!(f.valid[c]);
            assert!(sym_eigenvalues(f.cov(c), 2)[0] > 0.0);
        }
    }

    #[test]
    fn nothing_valid_is_an_error() {
        let mut m = field();
        m.valid.iter_mut().for_each(|v| *v = false);
        assert!(matches!(
            smooth_and_fill(&m, &FillPolicy::default()),
            Err(Error::NoValidCells)
        ));
    }
}
