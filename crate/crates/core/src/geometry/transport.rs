use super::connection::ConnectionField;
use crate::error::{Error, Result};

/// RK4 step as a fraction of the narrowest cell width.
pub const STEP_FRACTION: f64 = 0.1;

/// `out_k = sum_ij gamma[k][i][j] a_i b_j`
#[inline]
fn contract(gamma: &[f64], n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            let row = &gamma[k * n * n + i * n..k * n * n + (i + 1) * n];
            let bi: f64 = row.iter().zip(b).map(|(g, bj)| g * bj).sum();
            acc += a[i] * bi;
        }
        out[k] = acc;
    }
}

fn default_step(conn: &ConnectionField) -> f64 {
    STEP_FRACTION * conn.grid.min_width()
}

fn check_vectors(conn: &ConnectionField, vectors: &[Vec<f64>]) -> Result<()> {
    let n = conn.dim();
    for v in vectors {
        if v.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Parallel transports every vector in `vectors` along the polyline `path`
/// with the default step.
pub fn parallel_transport(
    vectors: &[Vec<f64>],
    path: &[Vec<f64>],
    conn: &ConnectionField,
) -> Result<Vec<Vec<f64>>> {
    parallel_transport_with_step(vectors, path, conn, default_step(conn))
}

/// As [`parallel_transport`] with an explicit maximum RK4 step length in
/// coordinate units.
pub fn parallel_transport_with_step(
    vectors: &[Vec<f64>],
    path: &[Vec<f64>],
    conn: &ConnectionField,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = conn.dim();
    check_vectors(conn, vectors)?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("transport step must be positive".into()));
    }
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty transport path".into()));
    }
    for p in path {
        if p.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    let mut gamma = vec![0.0; n * n * n];
    if !conn.interpolate_into(&path[0], &mut gamma) {
        return Err(Error::PathLeavesValidRegion { exit: path[0].clone() });
    }
    let m = vectors.len();
    let mut v: Vec<f64> = vectors.concat();
    let mut k = vec![vec![0.0; n * m]; 4];
    let mut tmp = vec![0.0; n * m];
    let mut x = vec![0.0; n];
    for seg in path.windows(2) {
        let (p0, p1) = (&seg[0], &seg[1]);
        let d: Vec<f64> = p1.iter().zip(p0).map(|(b, a)| b - a).collect();
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let steps = (len / step).ceil().max(1.0) as usize;
        let h = 1.0 / steps as f64;
        // dv/dlambda = -Gamma(x(lambda))(d, v) with x(lambda) = p0 + lambda d.
        let mut rhs = |lam: f64, state: &[f64], out: &mut [f64]| -> Result<()> {
            for a in 0..n {
                x[a] = p0[a] + lam * d[a];
            }
            if !conn.interpolate_into(&x, &mut gamma) {
                return Err(Error::PathLeavesValidRegion { exit: x.clone() });
            }
            for j in 0..m {
                contract(&gamma, n, &d, &state[j * n..(j + 1) * n], &mut out[j * n..(j + 1) * n]);
            }
            out.iter_mut().for_each(|o| *o = -*o);
            Ok(())
        };
        for s in 0..steps {
            let lam = s as f64 * h;
            rhs(lam, &v, &mut k[0])?;
            for i in 0..n * m {
                tmp[i] = v[i] + 0.5 * h * k[0][i];
            }
            rhs(lam + 0.5 * h, &tmp, &mut k[1])?;
            for i in 0..n * m {
                tmp[i] = v[i] + 0.5 * h * k[1][i];
            }
            rhs(lam + 0.5 * h, &tmp, &mut k[2])?;
            for i in 0..n * m {
                tmp[i] = v[i] + h * k[2][i];
            }
            rhs(lam + h, &tmp, &mut k[3])?;
            for i in 0..n * m {
                v[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
        }
    }
    Ok(v.chunks(n).map(|c| c.to_vec()).collect())
}

/// Position and co-transported frame after following `frame[axis]` along
/// itself for parameter length `length` (negative runs backwards).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub x: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
}

/// Integrates `dx/dl = h_axis`, `dh_b/dl = -Gamma(x)(h_axis, h_b)` for all
/// frame vectors `h_b` simultaneously.
pub fn transport_along_itself(
    conn: &ConnectionField,
    start: &FrameState,
    axis: usize,
    length: f64,
    max_step: Option<f64>,
) -> Result<FrameState> {
    let n = conn.dim();
    check_vectors(conn, &start.frame)?;
    if start.x.len() != n || start.frame.len() != n || axis >= n {
        return Err(Error::DimMismatch {
            expected: n,
            got: start.x.len(),
        });
    }
    let step = max_step.unwrap_or_else(|| default_step(conn));
    let speed = start.frame[axis].iter().map(|x| x * x).sum::<f64>().sqrt();
    let steps = ((length.abs() * speed) / step).ceil().max(1.0) as usize;
    let h = length / steps as f64;

    // State: x followed by the n frame vectors.
    let dim = n * (n + 1);
    let mut state: Vec<f64> = start.x.iter().cloned().chain(start.frame.concat()).collect();
    let mut gamma = vec![0.0; n * n * n];
    let mut k = vec![vec![0.0; dim]; 4];
    let mut tmp = vec![0.0; dim];
    let mut rhs = |s: &[f64], out: &mut [f64]| -> Result<()> {
        if !conn.interpolate_into(&s[..n], &mut gamma) {
            return Err(Error::PathLeavesValidRegion { exit: s[..n].to_vec() });
        }
        let ha = &s[n + axis * n..n + (axis + 1) * n];
        out[..n].copy_from_slice(ha);
        for b in 0..n {
            let (lo, hi) = (n + b * n, n + (b + 1) * n);
            contract(&gamma, n, ha, &s[lo..hi], &mut out[lo..hi]);
            out[lo..hi].iter_mut().for_each(|o| *o = -*o);
        }
        Ok(())
    };
    for _ in 0..steps {
        rhs(&state, &mut k[0])?;
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * h * k[0][i];
        }
        rhs(&tmp, &mut k[1])?;
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * h * k[1][i];
        }
        rhs(&tmp, &mut k[2])?;
        for i in 0..dim {
            tmp[i] = state[i] + h * k[2][i];
        }
        rhs(&tmp, &mut k[3])?;
        for i in 0..dim {
            state[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    }
    if !conn.covers(&state[..n]) {
        return Err(Error::PathLeavesValidRegion { exit: state[..n].to_vec() });
    }
    Ok(FrameState {
        x: state[..n].to_vec(),
        frame: state[n..].chunks(n).map(|c| c.to_vec()).collect(),
    })
}
