use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsp::CepstralTrajectory;
use crate::error::{Error, Result};

/// Largest tolerated condition number of the reference vector matrix.
pub const MAX_REFERENCE_CONDITION: f64 = 1e3;

/// Half-open frame range `[start, end)` of one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    #[serde(default)]
    pub utterance: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(utterance: usize, start: usize, end: usize) -> Self {
        Self { utterance, start, end }
    }
}

/// Brief trajectory segments defining the reference point and one
/// reference vector per reduced dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    /// Segments averaged for the reference point.
    pub origin: Vec<Segment>,
    /// One segment list per reference vector.
    pub vectors: Vec<Vec<Segment>>,
    /// Seconds per unit of the scale's parameter. Velocities are multiplied
    /// by it, so the default (the trajectory hop) makes a unit step of the
    /// scale equal to one frame's worth of motion.
    #[serde(default)]
    pub time_unit: Option<f64>,
    /// When set, every segment's midpoint must lie within this distance of
    /// the reference point.
    #[serde(default)]
    pub radius: Option<f64>,
}

/// Reference point and vectors at which the scale is anchored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    pub x0: Vec<f64>,
    /// `h[a]` is the a-th reference vector.
    pub h: Vec<Vec<f64>>,
}

impl ReferenceFrame {
    pub fn new(x0: Vec<f64>, h: Vec<Vec<f64>>) -> Result<Self> {
        let f = Self { x0, h };
        f.validate()?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Matrix whose columns are the reference vectors.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, a| self.h[a][i])
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.h.len() != n || self.h.iter().any(|v| v.len() != n) {
            return Err(Error::DimMismatch {
                expected: n,
                got: self.h.len(),
            });
        }
        if self.x0.iter().chain(self.h.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::DegenerateReference("non-finite reference".into()));
        }
        let cond = self.condition_number();
        if !(cond <= MAX_REFERENCE_CONDITION) {
            return Err(Error::DegenerateReference(format!(
                "reference vectors have condition number {cond:.3e}"
            )));
        }
        Ok(())
    }

    /// Pushes the frame forward through a map with value `f(x0)` and
    /// Jacobian `jac` (row-major `n*n`) at the reference point.
    pub fn pushed_forward(&self, fx0: Vec<f64>, jac: &[f64]) -> Result<Self> {
        let n = self.dim();
        let h = self
            .h
            .iter()
            .map(|v| (0..n).map(|i| (0..n).map(|j| jac[i * n + j] * v[j]).sum()).collect())
            .collect();
        Self::new(fx0, h)
    }
}

fn resolve<'a>(trajs: &'a [CepstralTrajectory], seg: &Segment, need_next: bool) -> Result<&'a CepstralTrajectory> {
    let traj = trajs.get(seg.utterance).ok_or_else(|| {
        Error::InvalidSegment(format!("utterance {} does not exist", seg.utterance))
    })?;
    let limit = if need_next { traj.len().saturating_sub(1) } else { traj.len() };
    if seg.start >= seg.end || seg.end > limit {
        return Err(Error::InvalidSegment(format!(
            "frames {}..{} not resolvable in utterance {} of {} frames",
            seg.start,
            seg.end,
            seg.utterance,
            traj.len()
        )));
    }
    Ok(traj)
}

fn midpoint(traj: &CepstralTrajectory, seg: &Segment) -> Vec<f64> {
    let n = traj.dim();
    let mut m = vec![0.0; n];
    for f in &traj.frames()[seg.start..seg.end] {
        for a in 0..n {
            m[a] += f[a];
        }
    }
    let k = (seg.end - seg.start) as f64;
    m.iter_mut().for_each(|x| *x /= k);
    m
}

/// Reference point as the mean position over the origin segments; each
/// reference vector as the mean forward-difference velocity over its
/// segments (frame `t` contributes `x[t+1] - x[t]`), times the time unit.
pub fn derive_reference(trajs: &[CepstralTrajectory], spec: &SegmentSpec) -> Result<ReferenceFrame> {
    let first = trajs.first().ok_or(Error::EmptyTrajectory)?;
    let n = first.dim();
    if spec.vectors.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: spec.vectors.len(),
        });
    }
    if spec.origin.is_empty() || spec.vectors.iter().any(|v| v.is_empty()) {
        return Err(Error::InvalidSegment("every segment list needs at least one segment".into()));
    }
    let mut x0 = vec![0.0; n];
    let mut count = 0usize;
    for seg in &spec.origin {
        let traj = resolve(trajs, seg, false)?;
        for f in &traj.frames()[seg.start..seg.end] {
            for a in 0..n {
                x0[a] += f[a];
            }
            count += 1;
        }
    }
    x0.iter_mut().for_each(|x| *x /= count as f64);

    let mut h = Vec::with_capacity(n);
    for segs in &spec.vectors {
        let mut v = vec![0.0; n];
        let mut count = 0usize;
        for seg in segs {
            let traj = resolve(trajs, seg, true)?;
            let unit = spec.time_unit.unwrap_or(traj.hop());
            if !(unit > 0.0) {
                return Err(Error::InvalidArgument("time unit must be positive".into()));
            }
            let frames = traj.frames();
            for t in seg.start..seg.end {
                for a in 0..n {
                    v[a] += (frames[t + 1][a] - frames[t][a]) / traj.hop() * unit;
                }
                count += 1;
            }
        }
        v.iter_mut().for_each(|x| *x /= count as f64);
        h.push(v);
    }

    if let Some(r) = spec.radius {
        for seg in spec.origin.iter().chain(spec.vectors.iter().flatten()) {
            let m = midpoint(&trajs[seg.utterance], seg);
            let d = m.iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d > r {
                return Err(Error::InvalidSegment(format!(
                    "segment {}..{} of utterance {} lies {d:.4} from the reference point (radius {r})",
                    seg.start, seg.end, seg.utterance
                )));
            }
        }
    }
    let frame = ReferenceFrame { x0, h };
    frame.validate()?;
    log::info!("reference condition number {:.3}", frame.condition_number());
    Ok(frame)
}
