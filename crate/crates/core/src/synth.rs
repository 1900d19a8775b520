//! License-free stand-in for read speech: harmonic audio whose two formant
//! frequencies follow a 2-D control trajectory, so the cepstral trajectory
//! has a known low intrinsic dimension.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{AudioSignal, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scale::{Segment, SegmentSpec};

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Path of the two control parameters, each in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    /// `(sin(2π f1 t + φ1), sin(2π f2 t + φ2))` with seeded phases.
    Lissajous { freqs_hz: [f64; 2] },
    /// Constant-speed motion reflecting off the walls of the square, with
    /// heading `angle_deg` from the first axis and seeded start point.
    Billiard { speed: f64, angle_deg: f64 },
    /// Seeded sum of sinusoids per axis, normalized into [-1, 1].
    Smooth {
        components: usize,
        min_hz: f64,
        max_hz: f64,
    },
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Billiard {
            speed: 8.0,
            angle_deg: GOLDEN.atan().to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub sample_rate: u32,
    pub n_utterances: usize,
    pub utterance_seconds: f64,
    pub seed: u64,
    /// Peak-ish amplitude of the harmonic source; zero yields silence.
    pub amplitude: f64,
    pub f0_hz: f64,
    /// Range swept by the first formant as control 1 goes from -1 to 1.
    pub f1_range_hz: [f64; 2],
    pub f2_range_hz: [f64; 2],
    /// Fixed higher formants.
    pub fixed_formants_hz: Vec<f64>,
    pub bandwidth_hz: f64,
    /// Level of the spectral floor relative to a formant peak.
    pub floor: f64,
    /// Source level in dB as control 1 goes from -1 to 1 (louder open
    /// vowels); equal bounds give constant loudness.
    pub level_range_db: [f64; 2],
    pub control: ControlSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            n_utterances: 12,
            utterance_seconds: 80.0 / 12.0,
            seed: 0,
            amplitude: 0.1,
            f0_hz: 120.0,
            f1_range_hz: [400.0, 700.0],
            f2_range_hz: [1100.0, 1800.0],
            fixed_formants_hz: vec![2800.0, 3500.0],
            bandwidth_hz: 250.0,
            floor: 0.01,
            level_range_db: [-20.0, 0.0],
            control: ControlSpec::default(),
        }
    }
}

/// One synthetic sentence with its control path sampled at `control_rate`.
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub signal: AudioSignal,
    /// Control values at time `t / control_rate` for each index `t`.
    pub control: Vec<[f64; 2]>,
    pub control_rate: f64,
}

impl SynthUtterance {
    /// Control value at an arbitrary time (linear interpolation, clamped).
    pub fn control_at(&self, time: f64) -> [f64; 2] {
        let pos = (time * self.control_rate).max(0.0);
        let i = (pos.floor() as usize).min(self.control.len().saturating_sub(1));
        let j = (i + 1).min(self.control.len() - 1);
        let w = (pos - i as f64).clamp(0.0, 1.0);
        [
            self.control[i][0] * (1.0 - w) + self.control[j][0] * w,
            self.control[i][1] * (1.0 - w) + self.control[j][1] * w,
        ]
    }
}

/// Deterministic control generator shared by all utterances of a corpus.
#[derive(Debug, Clone)]
pub enum ControlPath {
    Sines { axes: [Vec<(f64, f64, f64)>; 2], norm: [f64; 2] },
    /// Unfolded start and per-axis velocity of a reflected straight line.
    Folded { start: [f64; 2], velocity: [f64; 2] },
}

/// Triangle wave of period 4 mapping the real line onto [-1, 1], with its
/// slope.
fn fold(u: f64) -> (f64, f64) {
    let p = (u + 1.0).rem_euclid(4.0);
    if p < 2.0 {
        (p - 1.0, 1.0)
    } else {
        (3.0 - p, -1.0)
    }
}

impl ControlPath {
    pub fn new(spec: &ControlSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        match *spec {
            ControlSpec::Lissajous { freqs_hz } => {
                if freqs_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                    return Err(Error::InvalidArgument("control frequencies must be positive".into()));
                }
                let axes = [0, 1].map(|a| vec![(1.0, freqs_hz[a], rng.gen_range(0.0..2.0 * PI))]);
                Ok(Self::Sines { axes, norm: [1.0, 1.0] })
            }
            ControlSpec::Billiard { speed, angle_deg } => {
                if !(speed.is_finite() && speed > 0.0 && angle_deg.is_finite()) {
                    return Err(Error::InvalidArgument("billiard speed must be positive".into()));
                }
                let th = angle_deg.to_radians();
                let start = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                Ok(Self::Folded {
                    start,
                    velocity: [speed * th.cos(), speed * th.sin()],
                })
            }
            ControlSpec::Smooth { components, min_hz, max_hz } => {
                if components == 0 || !(min_hz > 0.0 && max_hz >= min_hz) {
                    return Err(Error::InvalidArgument("smooth control needs components and 0 < min_hz <= max_hz".into()));
                }
                let axes = [0, 1].map(|_| {
                    (0..components)
                        .map(|_| {
                            (
                                rng.gen_range(0.5..1.0),
                                rng.gen_range(min_hz..=max_hz),
                                rng.gen_range(0.0..2.0 * PI),
                            )
                        })
                        .collect::<Vec<_>>()
                });
                let norm = [0, 1].map(|a| axes[a].iter().map(|c| c.0).sum::<f64>());
                Ok(Self::Sines { axes, norm })
            }
        }
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        match self {
            Self::Sines { axes, norm } => [0, 1].map(|a| {
                axes[a].iter().map(|&(amp, f, ph)| amp * (2.0 * PI * f * t + ph).sin()).sum::<f64>() / norm[a]
            }),
            Self::Folded { start, velocity } => [0, 1].map(|a| fold(start[a] + velocity[a] * t).0),
        }
    }

    /// Time derivative (one-sided at billiard reflections).
    pub fn velocity(&self, t: f64) -> [f64; 2] {
        match self {
            Self::Sines { axes, norm } => [0, 1].map(|a| {
                axes[a]
                    .iter()
                    .map(|&(amp, f, ph)| amp * 2.0 * PI * f * (2.0 * PI * f * t + ph).cos())
                    .sum::<f64>()
                    / norm[a]
            }),
            Self::Folded { start, velocity } => {
                [0, 1].map(|a| velocity[a] * fold(start[a] + velocity[a] * t).1)
            }
        }
    }
}

fn lorentz(f: f64, centre: f64, bw: f64) -> f64 {
    let u = (f - centre) / bw;
    1.0 / (1.0 + u * u)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.sample_rate == 0 || self.n_utterances == 0 {
            return bad("sample rate and utterance count must be positive");
        }
        if !(self.utterance_seconds > 0.0 && self.utterance_seconds.is_finite()) {
            return bad("utterance duration must be positive");
        }
        if !(self.f0_hz > 0.0 && self.f0_hz < self.sample_rate as f64 / 2.0) {
            return bad("f0 must lie below Nyquist");
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) || !(self.bandwidth_hz > 0.0) || !(self.floor >= 0.0) {
            return bad("amplitude, bandwidth and floor must be non-negative");
        }
        Ok(())
    }

    /// Start time of utterance `index` on the shared control path.
    pub fn start_time(&self, index: usize) -> f64 {
        index as f64 * self.utterance_seconds
    }

    fn envelope(&self, f: f64, c: [f64; 2]) -> f64 {
        let f1 = self.f1_range_hz[0] + (self.f1_range_hz[1] - self.f1_range_hz[0]) * 0.5 * (c[0] + 1.0);
        let f2 = self.f2_range_hz[0] + (self.f2_range_hz[1] - self.f2_range_hz[0]) * 0.5 * (c[1] + 1.0);
        let bw = self.bandwidth_hz;
        let mut e = lorentz(f, f1, bw) + lorentz(f, f2, bw);
        for &fk in &self.fixed_formants_hz {
            e += 0.3 * lorentz(f, fk, 1.5 * bw);
        }
        let db = self.level_range_db[0] + (self.level_range_db[1] - self.level_range_db[0]) * 0.5 * (c[0] + 1.0);
        (e + self.floor) * 10f64.powf(db / 20.0)
    }

    /// Renders utterance `index`; the control path is sampled at
    /// `control_rate` Hz (normally the frame rate).
    pub fn render(&self, index: usize, control_rate: f64) -> Result<SynthUtterance> {
        self.validate()?;
        let path = ControlPath::new(&self.control, self.seed)?;
        self.render_with(&path, index, control_rate)
    }

    pub fn render_with(&self, path: &ControlPath, index: usize, control_rate: f64) -> Result<SynthUtterance> {
        let fs = self.sample_rate as f64;
        let n = (self.utterance_seconds * fs).round() as usize;
        let t0 = self.start_time(index);
        let n_harm = ((fs / 2.0 - 1.0) / self.f0_hz).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

        // Harmonic amplitudes are updated every block and linearly ramped.
        const BLOCK: usize = 32;
        let mut samples = vec![0.0; n];
        if self.amplitude > 0.0 {
            let amps_at = |i: usize| -> Vec<f64> {
                let c = path.at(t0 + i as f64 / fs);
                (1..=n_harm).map(|h| self.envelope(h as f64 * self.f0_hz, c)).collect()
            };
            let scale = self.amplitude / (n_harm as f64).sqrt();
            let w = 2.0 * PI * self.f0_hz / fs;
            let mut a0 = amps_at(0);
            for start in (0..n).step_by(BLOCK) {
                let end = (start + BLOCK).min(n);
                let a1 = amps_at(end);
                for (h, (&p, (&lo, &hi))) in phases.iter().zip(a0.iter().zip(&a1)).enumerate() {
                    let wh = w * (h + 1) as f64;
                    for i in start..end {
                        let r = (i - start) as f64 / BLOCK as f64;
                        samples[i] += scale * (lo + (hi - lo) * r) * (wh * i as f64 + p).sin();
                    }
                }
                a0 = a1;
            }
        }
        let n_ctrl = (self.utterance_seconds * control_rate).floor() as usize + 1;
        let control = (0..n_ctrl).map(|k| path.at(t0 + k as f64 / control_rate)).collect();
        Ok(SynthUtterance {
            signal: AudioSignal::new(samples, self.sample_rate)?,
            control,
            control_rate,
        })
    }

    /// Renders utterances `indices` in parallel.
    pub fn corpus(&self, indices: &[usize], control_rate: f64) -> Result<Vec<SynthUtterance>> {
        use rayon::prelude::*;
        self.validate()?;
        let path = ControlPath::new(&self.control, self.seed)?;
        indices.par_iter().map(|&i| self.render_with(&path, i, control_rate)).collect()
    }
}

/// Picks reference segments from known control paths: the origin is every
/// frame within `radius` of `centre`; axis `a` uses the frames among those
/// whose control velocity points within `max_angle_deg` of `directions[a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSelector {
    pub centre: [f64; 2],
    pub radius: f64,
    pub directions: Vec<[f64; 2]>,
    pub max_angle_deg: f64,
}

impl Default for ReferenceSelector {
    fn default() -> Self {
        Self {
            centre: [0.0, 0.0],
            radius: 0.15,
            directions: vec![[1.0, GOLDEN], [1.0, -GOLDEN]],
            max_angle_deg: 30.0,
        }
    }
}

impl ReferenceSelector {
    /// `utterances[u]` is the control path of utterance `u` sampled at the
    /// frame rate; `n_frames[u]` bounds usable frame indices.
    pub fn select(&self, controls: &[&[[f64; 2]]], n_frames: &[usize]) -> Result<SegmentSpec> {
        let cos_max = self.max_angle_deg.to_radians().cos();
        let mut origin = Vec::new();
        let mut vectors = vec![Vec::new(); self.directions.len()];
        for (u, ctrl) in controls.iter().enumerate() {
            let limit = n_frames.get(u).copied().unwrap_or(ctrl.len()).min(ctrl.len());
            for t in 0..limit.saturating_sub(1) {
                let c = ctrl[t];
                let dx = [c[0] - self.centre[0], c[1] - self.centre[1]];
                if dx[0].hypot(dx[1]) > self.radius {
                    continue;
                }
                origin.push(Segment::new(u, t, t + 1));
                let v = [ctrl[t + 1][0] - c[0], ctrl[t + 1][1] - c[1]];
                let vn = v[0].hypot(v[1]);
                if vn == 0.0 {
                    continue;
                }
                for (a, d) in self.directions.iter().enumerate() {
                    let cos = (v[0] * d[0] + v[1] * d[1]) / (vn * d[0].hypot(d[1]));
                    if cos >= cos_max {
                        vectors[a].push(Segment::new(u, t, t + 1));
                    }
                }
            }
        }
        if origin.is_empty() || vectors.iter().any(|v| v.is_empty()) {
            return Err(Error::InvalidSegment(format!(
                "no reference frames within {} of {:?} for every direction",
                self.radius, self.centre
            )));
        }
        Ok(SegmentSpec {
            origin,
            vectors,
            time_unit: None,
            radius: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{Frontend, FrontendConfig};
    use crate::pca::fit_pca;

    fn short() -> SynthSpec {
        SynthSpec {
            n_utterances: 2,
            utterance_seconds: 0.5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn zero_amplitude_is_silence() {
        let u = SynthSpec { amplitude: 0.0, ..short() }.render(0, 250.0).unwrap();
        assert!(u.signal.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let a = short().render(1, 250.0).unwrap();
        let b = short().render(1, 250.0).unwrap();
        assert_eq!(a.signal.samples(), b.signal.samples());
        assert_eq!(a.control, b.control);
        let c = SynthSpec { seed: 9, ..short() }.render(1, 250.0).unwrap();
        assert_ne!(a.signal.samples(), c.signal.samples());
    }

    #[test]
    fn control_velocity_matches_finite_difference() {
        for spec in [ControlSpec::default(), ControlSpec::Smooth { components: 4, min_hz: 0.2, max_hz: 1.0 }] {
            let p = ControlPath::new(&spec, 3).unwrap();
            for &t in &[0.1, 2.0, 7.3] {
                let h = 1e-6;
                let (a, b, v) = (p.at(t - h), p.at(t + h), p.velocity(t));
                for k in 0..2 {
                    assert!(((b[k] - a[k]) / (2.0 * h) - v[k]).abs() < 1e-6);
                    assert!(p.at(t)[k].abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn cepstra_are_two_dimensional() {
        let spec = SynthSpec { n_utterances: 4, utterance_seconds: 5.0, ..SynthSpec::default() };
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let trajs: Vec<_> = spec
            .corpus(&[0, 1, 2, 3], 250.0)
            .unwrap()
            .iter()
            .map(|u| fe.process(&u.signal).unwrap())
            .collect();
        let all = crate::dsp::CepstralTrajectory::concat(&trajs).unwrap();
        let pca = fit_pca(&all, 2).unwrap();
        assert!(pca.cumulative_ratio() >= 0.9, "{}", pca.cumulative_ratio());
    }

    #[test]
    fn selector_finds_directional_segments() {
        let spec = SynthSpec { utterance_seconds: 80.0, amplitude: 0.0, ..short() };
        let u = spec.render(0, 250.0).unwrap();
        let sel = ReferenceSelector::default();
        let seg = sel.select(&[&u.control], &[u.control.len()]).unwrap();
        assert!(!seg.origin.is_empty());
        assert_eq!(seg.vectors.len(), 2);
        let far = ReferenceSelector { centre: [5.0, 5.0], ..sel };
        assert!(matches!(far.select(&[&u.control], &[u.control.len()]), Err(Error::InvalidSegment(_))));
    }
}
