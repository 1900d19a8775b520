//! Per-frame distance distributions, means with 99% confidence intervals,
//! comparison tables and plot emission.

mod plots;

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use plots::{emit_plots, histogram_svg, trace_svg, TraceSet};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSpec {
    pub bins: usize,
    /// Fixed upper edge; defaults to the largest distance.
    pub max: Option<f64>,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self { bins: 40, max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Values at or beyond the last edge land in the last bin, so counts
    /// always sum to the number of values.
    pub fn build(values: &[f64], spec: &HistogramSpec) -> Self {
        let bins = spec.bins.max(1);
        let top = spec
            .max
            .unwrap_or_else(|| values.iter().cloned().fold(0.0, f64::max))
            .max(f64::MIN_POSITIVE);
        let width = top / bins as f64;
        let edges = (0..=bins).map(|i| i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub per_frame: Vec<f64>,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub ci99_half_width: f64,
    pub min: f64,
    pub max: f64,
    /// Frames left out by the mask or by gaps.
    pub n_excluded: usize,
    pub histogram: Histogram,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl DistanceReport {
    pub fn from_distances(per_frame: Vec<f64>, n_excluded: usize, hist: &HistogramSpec) -> Result<Self> {
        let n = per_frame.len();
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        let mean = per_frame.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (per_frame.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let min = per_frame.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = per_frame.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            histogram: Histogram::build(&per_frame, hist),
            n,
            mean: mean.clamp(min, max),
            std,
            ci99_half_width: Z99 * std / (n as f64).sqrt(),
            min,
            max,
            n_excluded,
            per_frame,
        })
    }

    /// `mean±ci` with one decimal.
    pub fn formatted(&self) -> String {
        format!("{:.1}±{:.1}", self.mean, self.ci99_half_width)
    }
}

/// Euclidean distances between corresponding frames of `a` and `b` over
/// the frames selected by `mask` (all frames when `None`).
pub fn distance_distribution(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    mask: Option<&[bool]>,
    hist: &HistogramSpec,
) -> Result<DistanceReport> {
    let a: Vec<Option<&[f64]>> = a.iter().map(|f| Some(f.as_slice())).collect();
    distance_distribution_gapped(&a, b, mask, hist)
}

/// As [`distance_distribution`] where missing frames of `a` are excluded
/// like masked ones.
pub fn distance_distribution_gapped(
    a: &[Option<&[f64]>],
    b: &[Vec<f64>],
    mask: Option<&[bool]>,
    hist: &HistogramSpec,
) -> Result<DistanceReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    if let Some(m) = mask {
        if m.len() != a.len() {
            return Err(Error::LengthMismatch { a: a.len(), b: m.len() });
        }
    }
    let mut d = Vec::with_capacity(a.len());
    for t in 0..a.len() {
        if mask.is_none_or(|m| m[t]) {
            if let Some(x) = a[t] {
                if x.len() != b[t].len() {
                    return Err(Error::DimMismatch {
                        expected: b[t].len(),
                        got: x.len(),
                    });
                }
                d.push(euclid(x, &b[t]));
            }
        }
    }
    let excluded = a.len() - d.len();
    DistanceReport::from_distances(d, excluded, hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub ci99_half_width: f64,
    pub n_excluded: usize,
    pub formatted: String,
}

/// Comparison table in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub rows: Vec<TableRow>,
    /// Notes printed under the table (for example excluded frame counts).
    pub footer: Vec<String>,
}

pub fn table_report(reports: &[(String, DistanceReport)]) -> Table {
    let rows = reports
        .iter()
        .map(|(name, r)| TableRow {
            name: name.clone(),
            n: r.n,
            mean: r.mean,
            ci99_half_width: r.ci99_half_width,
            n_excluded: r.n_excluded,
            formatted: r.formatted(),
        })
        .collect::<Vec<_>>();
    let footer = rows
        .iter()
        .map(|r| format!("{}: {} of {} frames excluded", r.name, r.n_excluded, r.n + r.n_excluded))
        .collect();
    Table { rows, footer }
}

impl Table {
    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(4).max(9);
        let val_w = self.rows.iter().map(|r| r.formatted.chars().count()).max().unwrap_or(8).max(10);
        let mut s = String::new();
        writeln!(s, "{:<name_w$}  {:>8}  {:>val_w$}", "condition", "n", "mean±ci99").unwrap();
        for r in &self.rows {
            let pad = val_w - r.formatted.chars().count();
            writeln!(s, "{:<name_w$}  {:>8}  {}{}", r.name, r.n, " ".repeat(pad), r.formatted).unwrap();
        }
        for f in &self.footer {
            writeln!(s, "# {f}").unwrap();
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn row(&self, name: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect()
    }

    #[test]
    fn identical_inputs_have_zero_distance() {
        let a = random(20, 1);
        let r = distance_distribution(&a, &a, None, &HistogramSpec::default()).unwrap();
        assert_eq!((r.mean, r.ci99_half_width, r.n), (0.0, 0.0, 20));
        assert_eq!(r.formatted(), "0.0±0.0");
        assert_eq!(r.histogram.total(), 20);
    }

    #[test]
    fn constant_offset_gives_constant_distance() {
        let a = random(30, 2);
        let b: Vec<Vec<f64>> = a.iter().map(|f| vec![f[0] + 3.0, f[1] + 4.0, f[2]]).collect();
        let r = distance_distribution(&a, &b, None, &HistogramSpec::default()).unwrap();
        assert!(r.per_frame.iter().all(|d| (d - 5.0).abs() < 1e-12));
        assert!(r.std < 1e-12);
    }

    #[test]
    fn statistics_match_streaming_recomputation() {
        let (a, b) = (random(1000, 3), random(1000, 4));
        let mask: Vec<bool> = (0..1000).map(|i| i % 7 != 0).collect();
        let r = distance_distribution(&a, &b, Some(&mask), &HistogramSpec::default()).unwrap();
        // Welford accumulation.
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for t in (0..1000).filter(|&t| mask[t]) {
            let d = euclid(&a[t], &b[t]);
            n += 1.0;
            let delta = d - mean;
            mean += delta / n;
            m2 += delta * (d - mean);
        }
        assert_eq!(r.n as f64, n);
        assert!((r.mean - mean).abs() < 1e-12);
        assert!((r.ci99_half_width - Z99 * (m2 / (n - 1.0)).sqrt() / n.sqrt()).abs() < 1e-12);
        assert_eq!(r.n_excluded, 1000 - r.n);
        assert!(r.mean >= r.min && r.mean <= r.max);
        assert_eq!(r.histogram.total(), r.n);
    }

    #[test]
    fn distance_is_symmetric() {
        let (a, b) = (random(100, 5), random(100, 6));
        let ab = distance_distribution(&a, &b, None, &HistogramSpec::default()).unwrap();
        let ba = distance_distribution(&b, &a, None, &HistogramSpec::default()).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn ci_shrinks_as_inverse_root_n() {
        let (a, b) = (random(8000, 7), random(8000, 8));
        let full = distance_distribution(&a, &b, None, &HistogramSpec::default()).unwrap();
        let quarter = distance_distribution(&a[..2000], &b[..2000], None, &HistogramSpec::default()).unwrap();
        let ratio = quarter.ci99_half_width / full.ci99_half_width;
        assert!((ratio / 2.0 - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn errors_on_length_and_empty_mask() {
        let a = random(3, 9);
        assert!(matches!(
            distance_distribution(&a, &a[..2], None, &HistogramSpec::default()),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            distance_distribution(&a, &a, Some(&[false; 3]), &HistogramSpec::default()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn gaps_count_as_excluded() {
        let b = random(4, 10);
        let a: Vec<Option<&[f64]>> = vec![Some(&b[0]), None, Some(&b[2]), None];
        let r = distance_distribution_gapped(&a, &b, None, &HistogramSpec::default()).unwrap();
        assert_eq!((r.n, r.n_excluded), (2, 2));
    }

    fn fixed(mean: f64, ci: f64, n: usize) -> DistanceReport {
        DistanceReport {
            per_frame: vec![mean; n],
            n,
            mean,
            std: 0.0,
            ci99_half_width: ci,
            min: mean,
            max: mean,
            n_excluded: 0,
            histogram: Histogram::build(&vec![mean; n], &HistogramSpec::default()),
        }
    }

    #[test]
    fn table_formats_and_keeps_declaration_order() {
        assert_eq!(fixed(35.4, 0.9, 10).formatted(), "35.4±0.9");
        let t = table_report(&[
            ("CMN".into(), fixed(35.4, 0.9, 1430)),
            ("CMN + SS".into(), fixed(22.9, 0.6, 1430)),
            ("CHANNEL CONVERSION".into(), fixed(23.4, 1.0, 1144)),
        ]);
        let names: Vec<&str> = t.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["CMN", "CMN + SS", "CHANNEL CONVERSION"]);
        let text = t.to_text();
        assert!(text.contains("35.4±0.9") && text.contains("23.4±1.0"));
        let back: Table = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
