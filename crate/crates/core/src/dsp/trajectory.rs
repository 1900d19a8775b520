use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};

const MISSING: &str = "NA";

/// Time series of equal-length cepstral (or reduced) vectors at a fixed hop.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralTrajectory {
    frames: Vec<Vec<f64>>,
    hop: f64,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    dim: usize,
    hop: f64,
    n_frames: usize,
}

impl CepstralTrajectory {
    pub fn new(frames: Vec<Vec<f64>>, hop: f64) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        Self::with_dim(frames, hop, dim)
    }

    /// Like [`new`](Self::new) but keeps `dim` for empty trajectories.
    pub fn with_dim(frames: Vec<Vec<f64>>, hop: f64, dim: usize) -> Result<Self> {
        if !(hop > 0.0 && hop.is_finite()) {
            return Err(Error::InvalidArgument(format!("hop must be positive, got {hop}")));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: f.len(),
                });
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("frame {i} is not finite")));
            }
        }
        Ok(Self { frames, hop, dim })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Vec<f64>> {
        self.frames
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same frames replayed with a different hop.
    pub fn with_hop(&self, hop: f64) -> Result<Self> {
        Self::with_dim(self.frames.clone(), hop, self.dim)
    }

    /// Frames `range` as a new trajectory.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            frames: self.frames[range].to_vec(),
            hop: self.hop,
            dim: self.dim,
        }
    }

    /// Appends the frames of `other`; hops and dimensions must agree.
    pub fn concat(parts: &[CepstralTrajectory]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyTrajectory)?;
        let mut frames = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if p.dim != first.dim {
                return Err(Error::DimMismatch {
                    expected: first.dim,
                    got: p.dim,
                });
            }
            if (p.hop - first.hop).abs() > 1e-12 * first.hop {
                return Err(Error::InvalidArgument("cannot concatenate differing hops".into()));
            }
            frames.extend(p.frames.iter().cloned());
        }
        Ok(Self {
            frames,
            hop: first.hop,
            dim: first.dim,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Option<&[f64]>> = self.frames.iter().map(|f| Some(f.as_slice())).collect();
        write_rows(path, self.hop, self.dim, &rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let gapped = GappedTrajectory::read_csv(path)?;
        let frames = gapped
            .frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.ok_or_else(|| Error::format(path, format!("row {i} is missing"))))
            .collect::<Result<Vec<_>>>()?;
        Self::with_dim(frames, gapped.hop, gapped.dim)
    }

    pub fn to_container(&self) -> Result<Container> {
        let header = TrajectoryHeader {
            dim: self.dim,
            hop: self.hop,
            n_frames: self.frames.len(),
        };
        Ok(Container::new("trajectory", &header)?
            .with_f64("frames", self.frames.iter().flatten().cloned().collect()))
    }

    pub fn from_container(mut c: Container, origin: &Path) -> Result<Self> {
        let h: TrajectoryHeader = c.header_as()?;
        let flat = c
            .take_f64("frames")
            .ok_or_else(|| Error::format(origin, "missing frames section"))?;
        if flat.len() != h.dim * h.n_frames {
            return Err(Error::format(origin, "frame section size disagrees with header"));
        }
        let frames = if h.dim == 0 {
            vec![Vec::new(); h.n_frames]
        } else {
            flat.chunks(h.dim).map(<[f64]>::to_vec).collect()
        };
        Self::with_dim(frames, h.hop, h.dim)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load_kind(path, "trajectory")?, path)
    }

    /// Loads by extension: `.csv` as CSV, anything else as the binary container.
    pub fn load_any(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(path)
        } else {
            Self::load(path)
        }
    }

    pub fn save_any(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(path)
        } else {
            self.save(path)
        }
    }
}

/// Trajectory whose frames may be missing (written as `NA` in CSV).
#[derive(Debug, Clone, PartialEq)]
pub struct GappedTrajectory {
    pub frames: Vec<Option<Vec<f64>>>,
    pub hop: f64,
    pub dim: usize,
}

impl GappedTrajectory {
    pub fn n_missing(&self) -> usize {
        self.frames.iter().filter(|f| f.is_none()).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Option<&[f64]>> = self.frames.iter().map(|f| f.as_deref()).collect();
        write_rows(path, self.hop, self.dim, &rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let hop = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .and_then(|l| {
                l.split_whitespace()
                    .find_map(|kv| kv.strip_prefix("hop="))
                    .and_then(|v| v.parse::<f64>().ok())
            })
            .ok_or_else(|| Error::format(path, "first line must be `# hop=<seconds> ...`"))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(text.as_bytes());
        let dim = reader.headers()?.len();
        let mut frames = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.iter().all(|f| f.trim() == MISSING) {
                frames.push(None);
                continue;
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format(path, format!("bad number `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            frames.push(Some(row));
        }
        Ok(Self { frames, hop, dim })
    }
}

fn write_rows(path: &Path, hop: f64, dim: usize, rows: &[Option<&[f64]>]) -> Result<()> {
    let mut out = Vec::with_capacity(rows.len() * dim * 20);
    writeln!(out, "# hop={hop} dim={dim}").unwrap();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record((0..dim).map(|i| format!("c{i}")))?;
    for row in rows {
        match row {
            Some(r) => w.write_record(r.iter().map(|x| x.to_string()))?,
            None => w.write_record(std::iter::repeat_n(MISSING, dim))?,
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    drop(w);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
