use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reference::ReferenceFrame;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::geometry::{transport_along_itself, ConnectionField, FrameState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleParams {
    /// Lattice spacing in s-units.
    pub step: f64,
    /// Optional per-axis `[min, max]` s-range; sweeps stop at its edges.
    pub extent: Option<Vec<[f64; 2]>>,
    /// Axis sweep order; defaults to `0, 1, ..., n-1`.
    pub sweep_order: Option<Vec<usize>>,
    /// Empty nodes added around the swept lattice for later extrapolation.
    pub pad: usize,
    /// Safety cap on nodes per sweep direction.
    pub max_nodes: usize,
    /// RK4 step in coordinate units; defaults to a tenth of a grid cell.
    pub transport_step: Option<f64>,
    /// Stop sweeps where the lattice would fold over instead of failing.
    pub prune_folds: bool,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self {
            step: 0.25,
            extent: None,
            sweep_order: None,
            pad: 3,
            max_nodes: 4000,
            transport_step: None,
            prune_folds: true,
        }
    }
}

/// The fitted coordinate map: a lattice of s-coordinates with the
/// x-position of every node.
#[derive(Debug, Clone)]
pub struct ScaleField {
    pub reference: ReferenceFrame,
    pub step: f64,
    pub sweep_order: Vec<usize>,
    /// Integer s-index of the first node along each axis.
    pub lo: Vec<i64>,
    pub shape: Vec<usize>,
    /// `n` coordinates per node, row-major over `shape` (last axis fastest).
    pub positions: Vec<f64>,
    pub valid: Vec<bool>,
    pub extrapolated: Vec<bool>,
    locator: Locator,
}

impl PartialEq for ScaleField {
    fn eq(&self, o: &Self) -> bool {
        self.reference == o.reference
            && self.step == o.step
            && self.sweep_order == o.sweep_order
            && self.lo == o.lo
            && self.shape == o.shape
            && self.positions == o.positions
            && self.valid == o.valid
            && self.extrapolated == o.extrapolated
    }
}

/// Result of mapping a point into s-coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub s: Vec<f64>,
    /// The containing cell touches an extrapolated node.
    pub extrapolated: bool,
}

/// Uniform bucket grid over node positions listing the lattice cells whose
/// bounding boxes overlap each bucket.
#[derive(Debug, Clone, Default)]
struct Locator {
    lo: Vec<f64>,
    width: Vec<f64>,
    buckets_per_axis: Vec<usize>,
    buckets: Vec<Vec<u32>>,
}

fn mask_corner(base: &[usize], mask: usize) -> Vec<usize> {
    base.iter().enumerate().map(|(a, &b)| b + ((mask >> a) & 1)).collect()
}

fn det(m: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, m).determinant()
}

impl ScaleField {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn usable(&self, node: usize) -> bool {
        self.valid[node] || self.extrapolated[node]
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |f, (&i, &s)| f * s + i)
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    /// Node flat index for signed lattice offsets from the reference point.
    pub fn node_at(&self, s_index: &[i64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let i = s_index[a] - self.lo[a];
            if i < 0 || i >= self.shape[a] as i64 {
                return None;
            }
            idx.push(i as usize);
        }
        Some(self.ravel(&idx))
    }

    pub fn position(&self, node: usize) -> &[f64] {
        let n = self.dim();
        &self.positions[node * n..(node + 1) * n]
    }

    /// s-coordinates of a node.
    pub fn node_s(&self, node: usize) -> Vec<f64> {
        self.unravel(node)
            .iter()
            .enumerate()
            .map(|(a, &i)| (i as i64 + self.lo[a]) as f64 * self.step)
            .collect()
    }

    /// Per-axis `[min, max]` of s over usable nodes.
    pub fn s_range(&self) -> Vec<[f64; 2]> {
        let n = self.dim();
        let mut r = vec![[f64::INFINITY, f64::NEG_INFINITY]; n];
        for node in 0..self.n_nodes() {
            if self.usable(node) {
                for (a, s) in self.node_s(node).into_iter().enumerate() {
                    r[a][0] = r[a][0].min(s);
                    r[a][1] = r[a][1].max(s);
                }
            }
        }
        r
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn n_extrapolated(&self) -> usize {
        self.extrapolated.iter().filter(|v| **v).count()
    }

    fn orientation(&self) -> f64 {
        self.reference.matrix().determinant().signum()
    }

    /// Lattice cells (identified by their lowest-index corner) whose corners
    /// are all usable.
    fn cell_bases(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.n_nodes()).filter_map(move |node| {
            let idx = self.unravel(node);
            if idx.iter().zip(&self.shape).any(|(&i, &s)| i + 1 >= s) {
                return None;
            }
            (0..1usize << self.dim())
                .all(|m| self.usable(self.ravel(&mask_corner(&idx, m))))
                .then_some(idx)
        })
    }

    /// Whether the multilinear cell at `base` keeps the reference
    /// orientation at every corner.
    fn cell_is_oriented(&self, base: &[usize]) -> bool {
        let n = self.dim();
        let sign = self.orientation();
        let mut jac = vec![0.0; n * n];
        for mask in 0..1usize << n {
            let corner = mask_corner(base, mask);
            for a in 0..n {
                let mut lo = corner.clone();
                let mut hi = corner.clone();
                lo[a] = base[a];
                hi[a] = base[a] + 1;
                let (p, q) = (self.position(self.ravel(&lo)), self.position(self.ravel(&hi)));
                for i in 0..n {
                    jac[i * n + a] = q[i] - p[i];
                }
            }
            if !(det(&jac, n) * sign > 0.0) {
                return false;
            }
        }
        true
    }

    fn rebuild_locator(&mut self) {
        let n = self.dim();
        let bases: Vec<Vec<usize>> = self.cell_bases().collect();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut boxes = Vec::with_capacity(bases.len());
        for base in &bases {
            let mut blo = vec![f64::INFINITY; n];
            let mut bhi = vec![f64::NEG_INFINITY; n];
            for mask in 0..1usize << n {
                let p = self.position(self.ravel(&mask_corner(base, mask)));
                for a in 0..n {
                    blo[a] = blo[a].min(p[a]);
                    bhi[a] = bhi[a].max(p[a]);
                }
            }
            for a in 0..n {
                lo[a] = lo[a].min(blo[a]);
                hi[a] = hi[a].max(bhi[a]);
            }
            boxes.push((blo, bhi));
        }
        if bases.is_empty() {
            self.locator = Locator::default();
            return;
        }
        let per_axis = ((bases.len() as f64).powf(1.0 / n as f64).ceil() as usize).clamp(1, 512);
        let buckets_per_axis = vec![per_axis; n];
        let width: Vec<f64> = (0..n).map(|a| ((hi[a] - lo[a]) / per_axis as f64).max(1e-300)).collect();
        let mut buckets = vec![Vec::new(); per_axis.pow(n as u32)];
        let bucket_of = |x: f64, a: usize| (((x - lo[a]) / width[a]).floor().max(0.0) as usize).min(per_axis - 1);
        for (base, (blo, bhi)) in bases.iter().zip(&boxes) {
            let flat = self.ravel(base) as u32;
            let from: Vec<usize> = (0..n).map(|a| bucket_of(blo[a], a)).collect();
            let to: Vec<usize> = (0..n).map(|a| bucket_of(bhi[a], a)).collect();
            let mut cur = from.clone();
            loop {
                let b = cur.iter().fold(0, |f, &i| f * per_axis + i);
                buckets[b].push(flat);
                let mut a = n;
                loop {
                    if a == 0 {
                        break;
                    }
                    a -= 1;
                    if cur[a] < to[a] {
                        cur[a] += 1;
                        break;
                    }
                    cur[a] = from[a];
                }
                if cur == from {
                    break;
                }
            }
        }
        self.locator = Locator {
            lo,
            width,
            buckets_per_axis,
            buckets,
        };
    }

    /// Solves the multilinear cell map for local coordinates `u` with
    /// Newton's method.
    fn solve_cell(&self, base: &[usize], x: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        let corners: Vec<&[f64]> = (0..1usize << n)
            .map(|m| self.position(self.ravel(&mask_corner(base, m))))
            .collect();
        let mut u = vec![0.5; n];
        let mut f = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        for _ in 0..40 {
            f.iter_mut().for_each(|v| *v = 0.0);
            jac.iter_mut().for_each(|v| *v = 0.0);
            for (m, p) in corners.iter().enumerate() {
                let fac: Vec<f64> = (0..n).map(|a| if (m >> a) & 1 == 1 { u[a] } else { 1.0 - u[a] }).collect();
                let w: f64 = fac.iter().product();
                for i in 0..n {
                    f[i] += w * p[i];
                }
                for a in 0..n {
                    let mut dw = if (m >> a) & 1 == 1 { 1.0 } else { -1.0 };
                    for b in 0..n {
                        if b != a {
                            dw *= fac[b];
                        }
                    }
                    for i in 0..n {
                        jac[i * n + a] += dw * p[i];
                    }
                }
            }
            for i in 0..n {
                f[i] -= x[i];
            }
            let j = DMatrix::from_row_slice(n, n, &jac);
            let du = j.lu().solve(&nalgebra::DVector::from_column_slice(&f))?;
            let mut max = 0.0f64;
            for a in 0..n {
                u[a] -= du[a];
                max = max.max(du[a].abs());
            }
            if u.iter().any(|v| !v.is_finite() || v.abs() > 10.0) {
                return None;
            }
            if max < 1e-14 {
                break;
            }
        }
        const EPS: f64 = 1e-9;
        u.iter().all(|&v| (-EPS..=1.0 + EPS).contains(&v)).then_some(u)
    }

    /// Maps a point to s-coordinates with the extrapolation flag.
    pub fn rescale_flagged(&self, x: &[f64]) -> Result<Rescaled> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let loc = &self.locator;
        if loc.buckets.is_empty() {
            return Err(Error::OutsideScaleDomain(x.to_vec()));
        }
        let mut b = 0usize;
        for a in 0..n {
            let u = (x[a] - loc.lo[a]) / loc.width[a];
            let per = loc.buckets_per_axis[a];
            // Allow points a hair outside the box through to the exact test.
            if !(u > -1e-9 && u < per as f64 + 1e-9) {
                return Err(Error::OutsideScaleDomain(x.to_vec()));
            }
            b = b * per + (u.max(0.0) as usize).min(per - 1);
        }
        for &cell in &loc.buckets[b] {
            let base = self.unravel(cell as usize);
            if let Some(u) = self.solve_cell(&base, x) {
                let s = (0..n)
                    .map(|a| (base[a] as i64 + self.lo[a]) as f64 * self.step + u[a].clamp(0.0, 1.0) * self.step)
                    .collect();
                let extrapolated = (0..1usize << n).any(|m| self.extrapolated[self.ravel(&mask_corner(&base, m))]);
                return Ok(Rescaled { s, extrapolated });
            }
        }
        Err(Error::OutsideScaleDomain(x.to_vec()))
    }

    pub fn rescale(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.rescale_flagged(x).map(|r| r.s)
    }

    /// Multilinear interpolation of node positions at `s`.
    pub fn inverse_rescale(&self, s: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if s.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: s.len(),
            });
        }
        let mut base = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for a in 0..n {
            let u = s[a] / self.step - self.lo[a] as f64;
            if !u.is_finite() {
                return Err(Error::SOutOfRange(s.to_vec()));
            }
            let mut b = u.floor();
            if b as i64 == self.shape[a] as i64 - 1 && u == b {
                b -= 1.0;
            }
            if b < 0.0 || b as usize + 1 >= self.shape[a] {
                return Err(Error::SOutOfRange(s.to_vec()));
            }
            base.push(b as usize);
            frac.push(u - b);
        }
        let mut x = vec![0.0; n];
        for m in 0..1usize << n {
            let node = self.ravel(&mask_corner(&base, m));
            if !self.usable(node) {
                return Err(Error::SOutOfRange(s.to_vec()));
            }
            let w: f64 = (0..n).map(|a| if (m >> a) & 1 == 1 { frac[a] } else { 1.0 - frac[a] }).product();
            if w == 0.0 {
                continue;
            }
            for (xi, p) in x.iter_mut().zip(self.position(node)) {
                *xi += w * p;
            }
        }
        Ok(x)
    }

    /// Whether `s` falls on a cell with all corners usable.
    pub fn s_in_range(&self, s: &[f64]) -> bool {
        self.inverse_rescale(s).is_ok()
    }

    /// Point of the usable lattice nearest in s to `s` (clamped fallback).
    pub fn nearest_in_range(&self, s: &[f64]) -> Option<Vec<f64>> {
        let mut best: Option<(f64, usize)> = None;
        for node in 0..self.n_nodes() {
            if !self.usable(node) {
                continue;
            }
            let d: f64 = self.node_s(node).iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, node));
            }
        }
        best.map(|(_, node)| self.position(node).to_vec())
    }

    /// Builds a field from explicit node positions (row-major over `shape`,
    /// first node at s-index `lo`). Checks orientation on every fully valid
    /// cell.
    pub fn from_nodes(
        reference: ReferenceFrame,
        step: f64,
        lo: Vec<i64>,
        shape: Vec<usize>,
        positions: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = reference.dim();
        let nodes: usize = shape.iter().product();
        if shape.len() != n || positions.len() != nodes * n || valid.len() != nodes {
            return Err(Error::InvalidArgument("node arrays disagree with lattice shape".into()));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("scale step must be positive".into()));
        }
        let mut f = Self {
            reference,
            step,
            sweep_order: (0..n).collect(),
            lo,
            shape,
            positions,
            valid,
            extrapolated: vec![false; nodes],
            locator: Locator::default(),
        };
        f.check_folds()?;
        f.rebuild_locator();
        Ok(f)
    }

    fn check_folds(&self) -> Result<()> {
        for base in self.cell_bases() {
            if !self.cell_is_oriented(&base) {
                return Err(Error::FoldedLattice {
                    node: base.iter().enumerate().map(|(a, &i)| i as i64 + self.lo[a]).collect(),
                });
            }
        }
        Ok(())
    }

    /// Same field with a different lattice spacing label; node positions
    /// are untouched.
    pub fn relabeled(&self, step: f64) -> Self {
        let mut f = self.clone();
        f.step = step;
        f
    }
}

/// Nodes reached by one sweep line: signed offset and transported state.
fn sweep_line(
    conn: &ConnectionField,
    start: &FrameState,
    axis: usize,
    start_index: i64,
    params: &ScaleParams,
) -> Result<Vec<(i64, FrameState)>> {
    let mut out = vec![(0, start.clone())];
    let limit = params.extent.as_ref().map(|e| e[axis]);
    for dir in [1i64, -1] {
        let mut cur = start.clone();
        for k in 1..=params.max_nodes as i64 {
            let idx = start_index + dir * k;
            if let Some([lo, hi]) = limit {
                let s = idx as f64 * params.step;
                if s < lo - 1e-9 || s > hi + 1e-9 {
                    break;
                }
            }
            match transport_along_itself(conn, &cur, axis, dir as f64 * params.step, params.transport_step) {
                Ok(next) => {
                    out.push((dir * k, next.clone()));
                    cur = next;
                }
                Err(Error::PathLeavesValidRegion { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

fn cell_oriented(nodes: &HashMap<Vec<i64>, Vec<f64>>, base: &[i64], sign: f64) -> Option<bool> {
    let n = base.len();
    let corner = |m: usize| -> Vec<i64> { base.iter().enumerate().map(|(a, &b)| b + ((m >> a) & 1) as i64).collect() };
    for m in 0..1usize << n {
        nodes.get(&corner(m))?;
    }
    let mut jac = vec![0.0; n * n];
    for m in 0..1usize << n {
        let c = corner(m);
        for a in 0..n {
            let mut lo = c.clone();
            let mut hi = c.clone();
            lo[a] = base[a];
            hi[a] = base[a] + 1;
            let (p, q) = (&nodes[&lo], &nodes[&hi]);
            for i in 0..n {
                jac[i * n + a] = q[i] - p[i];
            }
        }
        if !(det(&jac, n) * sign > 0.0) {
            return Some(false);
        }
    }
    Some(true)
}

/// Lattice indices with the transported frame at each.
type Layer = Vec<(Vec<i64>, FrameState)>;

/// Drops the outermost corner of every folded cell, then every node whose
/// sweep ancestor was dropped, until no folded cell remains. Returns the
/// number of nodes removed.
fn prune_folds(nodes: &mut HashMap<Vec<i64>, Vec<f64>>, order: &[usize], sign: f64) -> usize {
    let before = nodes.len();
    let n = order.len();
    loop {
        let mut keys: Vec<&Vec<i64>> = nodes.keys().collect();
        keys.sort();
        let mut doomed = Vec::new();
        for base in keys {
            if cell_oriented(nodes, base, sign) == Some(false) {
                let far = (0..1usize << n)
                    .map(|m| base.iter().enumerate().map(|(a, &b)| b + ((m >> a) & 1) as i64).collect::<Vec<i64>>())
                    .max_by_key(|c| (c.iter().map(|v| v.abs()).sum::<i64>(), c.clone()))
                    .unwrap();
                doomed.push(far);
            }
        }
        if doomed.is_empty() {
            break;
        }
        for d in doomed {
            nodes.remove(&d);
        }
        // A node survives only if the node it was swept from survives.
        let mut keys: Vec<Vec<i64>> = nodes.keys().cloned().collect();
        keys.sort_by_key(|k| k.iter().map(|v| v.abs()).sum::<i64>());
        for k in keys {
            if let Some(&axis) = order.iter().rev().find(|&&a| k[a] != 0) {
                let mut parent = k.clone();
                parent[axis] -= k[axis].signum();
                if !nodes.contains_key(&parent) {
                    nodes.remove(&k);
                }
            }
        }
    }
    before - nodes.len()
}

/// Lays down the scale lattice by nested sweeps: along the first axis of the
/// sweep order from the reference point in both directions, then along the
/// second axis from every node of the first sweep, and so on. All frame
/// vectors are co-transported along every sweep.
pub fn build_scale(conn: &ConnectionField, reference: &ReferenceFrame, params: &ScaleParams) -> Result<ScaleField> {
    reference.validate()?;
    let n = conn.dim();
    if reference.dim() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: reference.dim(),
        });
    }
    if !(params.step > 0.0) {
        return Err(Error::InvalidArgument("scale step must be positive".into()));
    }
    let order = params.sweep_order.clone().unwrap_or_else(|| (0..n).collect());
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(format!("sweep order {order:?} is not a permutation")));
    }
    if let Some(e) = &params.extent {
        if e.len() != n || e.iter().any(|r| !(r[0] <= 0.0 && r[1] >= 0.0)) {
            return Err(Error::InvalidArgument("extent must bracket zero on every axis".into()));
        }
    }
    if !conn.covers(&reference.x0) {
        return Err(Error::ReferenceOutsideRegion(reference.x0.clone()));
    }
    let origin = FrameState {
        x: reference.x0.clone(),
        frame: reference.h.clone(),
    };
    let mut layer: Layer = vec![(vec![0; n], origin)];
    for &axis in &order {
        let next: Result<Vec<Layer>> = layer
            .par_iter()
            .map(|(idx, state)| {
                Ok(sweep_line(conn, state, axis, idx[axis], params)?
                    .into_iter()
                    .map(|(off, s)| {
                        let mut j = idx.clone();
                        j[axis] += off;
                        (j, s)
                    })
                    .collect())
            })
            .collect();
        layer = next?.into_iter().flatten().collect();
    }
    let mut nodes: HashMap<Vec<i64>, Vec<f64>> = layer.into_iter().map(|(i, s)| (i, s.x)).collect();
    if params.prune_folds {
        let sign = reference.matrix().determinant().signum();
        let removed = prune_folds(&mut nodes, &order, sign);
        if removed > 0 {
            log::info!("scale lattice: {removed} nodes beyond fold-over dropped");
        }
    }

    let pad = params.pad as i64;
    let mut lo = vec![i64::MAX; n];
    let mut hi = vec![i64::MIN; n];
    for idx in nodes.keys() {
        for a in 0..n {
            lo[a] = lo[a].min(idx[a]);
            hi[a] = hi[a].max(idx[a]);
        }
    }
    for a in 0..n {
        lo[a] -= pad;
        hi[a] += pad;
    }
    let shape: Vec<usize> = (0..n).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let total: usize = shape.iter().product();
    let mut positions = vec![0.0; total * n];
    let mut valid = vec![false; total];
    let ravel = |idx: &[i64]| (0..n).fold(0usize, |f, a| f * shape[a] + (idx[a] - lo[a]) as usize);
    for (idx, x) in &nodes {
        let flat = ravel(idx);
        positions[flat * n..(flat + 1) * n].copy_from_slice(x);
        valid[flat] = true;
    }
    let mut field = ScaleField::from_nodes(reference.clone(), params.step, lo, shape, positions, valid)?;
    field.sweep_order = order;
    log::info!(
        "scale lattice: {} valid nodes, shape {:?}",
        field.n_valid(),
        field.shape
    );
    Ok(field)
}

/// Fills empty nodes next to the lattice by linear extrapolation of node
/// positions along each s-axis, one ring per pass, for at most `margin`
/// rings. Extrapolated nodes that would fold a cell are withdrawn.
pub fn extrapolate(field: &ScaleField, margin: usize) -> ScaleField {
    let mut f = field.clone();
    let n = f.dim();
    let mut blocked = vec![false; f.n_nodes()];
    for _ in 0..margin {
        let mut ring = Vec::new();
        for node in 0..f.n_nodes() {
            if f.usable(node) || blocked[node] {
                continue;
            }
            let idx = f.unravel(node);
            let mut acc = vec![0.0; n];
            let mut k = 0usize;
            for a in 0..n {
                for d in [-1i64, 1] {
                    let behind = |step: i64| {
                        let j = idx[a] as i64 - d * step;
                        if j < 0 || j >= f.shape[a] as i64 {
                            return None;
                        }
                        let mut jj = idx.clone();
                        jj[a] = j as usize;
                        let flat = f.ravel(&jj);
                        f.usable(flat).then_some(flat)
                    };
                    if let (Some(p1), Some(p2)) = (behind(1), behind(2)) {
                        let (x1, x2) = (f.position(p1), f.position(p2));
                        for i in 0..n {
                            acc[i] += 2.0 * x1[i] - x2[i];
                        }
                        k += 1;
                    }
                }
            }
            if k > 0 {
                acc.iter_mut().for_each(|v| *v /= k as f64);
                ring.push((node, acc));
            }
        }
        if ring.is_empty() {
            break;
        }
        for (node, x) in &ring {
            f.positions[node * n..(node + 1) * n].copy_from_slice(x);
            f.extrapolated[*node] = true;
        }
        // Withdraw new nodes touching folded cells until none remain.
        loop {
            let mut bad = Vec::new();
            for base in f.cell_bases() {
                let corners: Vec<usize> = (0..1usize << n).map(|m| f.ravel(&mask_corner(&base, m))).collect();
                if corners.iter().any(|&c| f.extrapolated[c]) && !f.cell_is_oriented(&base) {
                    bad.extend(corners.into_iter().filter(|&c| f.extrapolated[c] && ring.iter().any(|(r, _)| *r == c)));
                }
            }
            if bad.is_empty() {
                break;
            }
            for c in bad {
                f.extrapolated[c] = false;
                f.positions[c * n..(c + 1) * n].iter_mut().for_each(|v| *v = 0.0);
                blocked[c] = true;
            }
        }
    }
    f.rebuild_locator();
    f
}

#[derive(Serialize, Deserialize)]
struct ScaleHeader {
    reference: ReferenceFrame,
    step: f64,
    sweep_order: Vec<usize>,
    lo: Vec<i64>,
    shape: Vec<usize>,
}

impl ScaleField {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ScaleHeader {
            reference: self.reference.clone(),
            step: self.step,
            sweep_order: self.sweep_order.clone(),
            lo: self.lo.clone(),
            shape: self.shape.clone(),
        };
        Container::new("scale", &header)?
            .with_f64("positions", self.positions.clone())
            .with_u8("valid", self.valid.iter().map(|&v| v as u8).collect())
            .with_u8("extrapolated", self.extrapolated.iter().map(|&v| v as u8).collect())
            .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Container::load_kind(path, "scale")?;
        let h: ScaleHeader = c.header_as()?;
        let nodes: usize = h.shape.iter().product();
        let n = h.shape.len();
        let positions = c
            .take_f64("positions")
            .filter(|v| v.len() == nodes * n)
            .ok_or_else(|| Error::format(path, "missing or malformed `positions`"))?;
        let valid = c
            .take_u8("valid")
            .filter(|v| v.len() == nodes)
            .ok_or_else(|| Error::format(path, "missing or malformed `valid`"))?;
        let extrapolated = c
            .take_u8("extrapolated")
            .filter(|v| v.len() == nodes)
            .ok_or_else(|| Error::format(path, "missing or malformed `extrapolated`"))?;
        let mut f = Self {
            reference: h.reference,
            step: h.step,
            sweep_order: h.sweep_order,
            lo: h.lo,
            shape: h.shape,
            positions,
            valid: valid.into_iter().map(|v| v != 0).collect(),
            extrapolated: extrapolated.into_iter().map(|v| v != 0).collect(),
            locator: Locator::default(),
        };
        f.rebuild_locator();
        Ok(f)
    }
}
