use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform rectangular grid of neighbourhoods over a box in reduced
/// cepstral space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Per-axis `[min, max]`.
    pub bounds: Vec<[f64; 2]>,
    /// Per-axis cell count.
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: Vec<[f64; 2]>, cells: Vec<usize>) -> Result<Self> {
        let g = Self { bounds, cells };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() || self.bounds.len() != self.cells.len() {
            return Err(Error::InvalidArgument(
                "grid bounds and cell counts must be non-empty and the same length".into(),
            ));
        }
        for (a, (b, &c)) in self.bounds.iter().zip(&self.cells).enumerate() {
            if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "grid axis {a}: min {} must be below max {}",
                    b[0], b[1]
                )));
            }
            if c < 4 {
                return Err(Error::InvalidArgument(format!(
                    "grid axis {a}: need at least 4 cells, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Tight bounding box of `points` expanded by `margin` (fraction of the
    /// extent) on every side.
    pub fn covering<'a>(
        points: impl IntoIterator<Item = &'a [f64]>,
        cells: &[usize],
        margin: f64,
    ) -> Result<Self> {
        let dim = cells.len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut any = false;
        for p in points {
            if p.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            any = true;
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !any {
            return Err(Error::EmptyTrajectory);
        }
        let bounds = (0..dim)
            .map(|a| {
                let ext = (hi[a] - lo[a]).max(1e-12);
                [lo[a] - margin * ext, hi[a] + margin * ext]
            })
            .collect();
        Self::new(bounds, cells.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.bounds[axis][1] - self.bounds[axis][0]) / self.cells[axis] as f64
    }

    pub fn min_width(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).fold(f64::INFINITY, f64::min)
    }

    /// Row-major flat index (last axis fastest).
    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            flat = flat * self.cells[a] + i;
        }
        flat
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.cells[a];
            flat /= self.cells[a];
        }
        idx
    }

    /// Stride of `axis` in the flat index.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells[axis + 1..].iter().product()
    }

    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for a in 0..self.dim() {
            let u = (x[a] - self.bounds[a][0]) / self.width(a);
            if !(u >= 0.0) || u >= self.cells[a] as f64 {
                return None;
            }
            flat = flat * self.cells[a] + u as usize;
        }
        Some(flat)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.bounds[a][0] + (i as f64 + 0.5) * self.width(a))
            .collect()
    }

    /// Continuous coordinate in which cell centres sit on the integers.
    pub fn center_coords(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| (x[a] - self.bounds[a][0]) / self.width(a) - 0.5)
            .collect()
    }

    /// Flat index of the neighbour of `flat` offset by `delta` along `axis`.
    pub fn neighbor(&self, flat: usize, axis: usize, delta: isize) -> Option<usize> {
        let i = (flat / self.stride(axis)) % self.cells[axis];
        let j = i as isize + delta;
        if j < 0 || j >= self.cells[axis] as isize {
            return None;
        }
        Some((flat as isize + delta * self.stride(axis) as isize) as usize)
    }
}

/// Corners and weights for multilinear interpolation between cell centres.
/// Returns `None` when any corner falls outside the grid.
pub(crate) fn multilinear_corners(grid: &GridSpec, x: &[f64]) -> Option<Vec<(usize, f64)>> {
    let n = grid.dim();
    let u = grid.center_coords(x);
    let mut base = Vec::with_capacity(n);
    let mut frac = Vec::with_capacity(n);
    for a in 0..n {
        if !u[a].is_finite() {
            return None;
        }
        let mut b = u[a].floor();
        // A point exactly on the last centre still interpolates within the grid.
        if b as isize == grid.cells[a] as isize - 1 && u[a] == b {
            b -= 1.0;
        }
        if b < 0.0 || b as usize + 1 >= grid.cells[a] {
            return None;
        }
        base.push(b as usize);
        frac.push(u[a] - b);
    }
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0..(1usize << n) {
        let mut flat = 0;
        let mut w = 1.0;
        for a in 0..n {
            let bit = (mask >> a) & 1;
            flat = flat * grid.cells[a] + base[a] + bit;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        out.push((flat, w));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ravel_unravel_round_trip() {
        let g = GridSpec::new(vec![[0.0, 1.0], [0.0, 2.0], [-1.0, 1.0]], vec![4, 5, 6]).unwrap();
        for flat in 0..g.n_cells() {
            assert_eq!(g.ravel(&g.unravel(flat)), flat);
        }
        assert_eq!(g.stride(0), 30);
        assert_eq!(g.stride(2), 1);
    }

    #[test]
    fn cell_lookup_and_centres() {
        let g = GridSpec::new(vec![[0.0, 4.0], [0.0, 8.0]], vec![4, 4]).unwrap();
        assert_eq!(g.cell_of(&[0.5, 0.5]), Some(0));
        assert_eq!(g.cell_of(&[3.9, 7.9]), Some(15));
        assert_eq!(g.cell_of(&[4.0, 1.0]), None);
        assert_eq!(g.cell_of(&[-0.1, 1.0]), None);
        assert_eq!(g.center(5), vec![1.5, 3.0]);
        assert_eq!(g.neighbor(5, 0, 1), Some(9));
        assert_eq!(g.neighbor(5, 1, -1), Some(4));
        assert_eq!(g.neighbor(4, 1, -1), None);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(vec![[1.0, 0.0]], vec![8]).is_err());
        assert!(GridSpec::new(vec![[0.0, 1.0]], vec![3]).is_err());
        assert!(GridSpec::new(vec![[0.0, 1.0]], vec![8, 8]).is_err());
    }

    #[test]
    fn covering_box_has_margin() {
        let pts = [vec![0.0, 0.0], vec![10.0, 2.0]];
        let g = GridSpec::covering(pts.iter().map(|p| p.as_slice()), &[64, 64], 0.05).unwrap();
        assert_eq!(g.bounds, vec![[-0.5, 10.5], [-0.1, 2.1]]);
    }

    #[test]
    fn multilinear_weights_reproduce_linear_functions() {
        let g = GridSpec::new(vec![[0.0, 1.0], [0.0, 1.0]], vec![8, 8]).unwrap();
        let f = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1] + 0.5;
        let x = [0.37, 0.61];
        let corners = multilinear_corners(&g, &x).unwrap();
        let v: f64 = corners.iter().map(|&(c, w)| w * f(&g.center(c))).sum();
        assert!((v - f(&x)).abs() < 1e-12);
        assert!(multilinear_corners(&g, &[0.01, 0.5]).is_none());
    }
}
