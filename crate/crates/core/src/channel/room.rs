use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};

/// Shoebox room with a single frequency-independent wall reflectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Room extent along x, y, z in metres.
    pub dimensions: [f64; 3],
    /// Pressure reflection coefficient of every wall, in [0, 1).
    pub reflectivity: f64,
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
}

fn default_sound_speed() -> f64 {
    343.0
}

impl RoomSpec {
    /// Nominal 3 x 4 x 2.5 m room, source at (1.0, 1.5, 1.2) and the
    /// microphone displaced along x by `distance` metres.
    pub fn nominal(reflectivity: f64, distance: f64) -> Self {
        let src = [1.0, 1.5, 1.2];
        Self {
            dimensions: [3.0, 4.0, 2.5],
            reflectivity,
            source_pos: src,
            mic_pos: [src[0] + distance, src[1], src[2]],
            sound_speed: default_sound_speed(),
        }
    }

    /// Reverberant room, microphone 25 cm from the talker.
    pub fn hard_close() -> Self {
        Self::nominal(0.9, 0.25)
    }

    /// Softer room, microphone 112 cm from the talker.
    pub fn soft_distant() -> Self {
        Self::nominal(0.7, 1.12)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.reflectivity) {
            return Err(Error::DegenerateRoom(format!(
                "reflectivity {} outside [0, 1)",
                self.reflectivity
            )));
        }
        if !(self.sound_speed > 0.0) {
            return Err(Error::DegenerateRoom("sound speed must be positive".into()));
        }
        for axis in 0..3 {
            let l = self.dimensions[axis];
            if !(l > 0.0) {
                return Err(Error::DegenerateRoom(format!("dimension {axis} is not positive")));
            }
            for (name, p) in [("source", self.source_pos), ("mic", self.mic_pos)] {
                if !(p[axis] > 0.0 && p[axis] < l) {
                    return Err(Error::DegenerateRoom(format!(
                        "{name} coordinate {axis} = {} not strictly inside (0, {l})",
                        p[axis]
                    )));
                }
            }
        }
        if self.direct_distance() < 1e-9 {
            return Err(Error::DegenerateRoom("source and microphone coincide".into()));
        }
        Ok(())
    }

    pub fn direct_distance(&self) -> f64 {
        dist(&self.source_pos, &self.mic_pos)
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sampled channel impulse response; tap 0 is the direct path.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrMetadata {
    pub room: RoomSpec,
    pub max_echo: f64,
    pub sample_rate: u32,
    pub n_taps: usize,
    pub n_images: usize,
}

impl ImpulseResponse {
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            taps: vec![1.0],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Energy of all taps after the direct one.
    pub fn tail_energy(&self) -> f64 {
        self.taps.iter().skip(1).map(|t| t * t).sum()
    }

    pub fn write_wav(&self, path: &Path) -> Result<()> {
        AudioSignal::new(self.taps.clone(), self.sample_rate)?.write_wav(path)
    }

    pub fn read_wav(path: &Path) -> Result<Self> {
        let sig = AudioSignal::read_wav(path)?;
        let sample_rate = sig.sample_rate();
        Ok(Self {
            taps: sig.into_samples(),
            sample_rate,
        })
    }
}

/// Image-source impulse response (nearest-sample delays), normalized so the
/// direct path is a unit tap at t = 0. Only images arriving less than
/// `max_echo` seconds after the direct sound are kept.
pub fn image_source_ir(room: &RoomSpec, max_echo: f64, fs: u32) -> Result<(ImpulseResponse, IrMetadata)> {
    room.validate()?;
    if !(max_echo > 0.0) {
        return Err(Error::InvalidArgument("max echo time must be positive".into()));
    }
    let d0 = room.direct_distance();
    let c = room.sound_speed;
    let reach = d0 + c * max_echo;
    let fs_f = fs as f64;
    let mut taps = vec![0.0; (max_echo * fs_f).ceil() as usize + 1];
    let mut n_images = 0usize;

    let ranges: Vec<i64> = room
        .dimensions
        .iter()
        .map(|l| (reach / (2.0 * l)).ceil() as i64 + 1)
        .collect();

    for nx in -ranges[0]..=ranges[0] {
        for ny in -ranges[1]..=ranges[1] {
            for nz in -ranges[2]..=ranges[2] {
                for q in 0..8u8 {
                    let n = [nx, ny, nz];
                    let mut img = [0.0; 3];
                    let mut order = 0i64;
                    for axis in 0..3 {
                        let qa = ((q >> axis) & 1) as i64;
                        let l = room.dimensions[axis];
                        let s = room.source_pos[axis];
                        img[axis] = 2.0 * n[axis] as f64 * l + if qa == 1 { -s } else { s };
                        order += (2 * n[axis] - qa).abs();
                    }
                    let d = dist(&img, &room.mic_pos);
                    let delay = (d - d0) / c;
                    if delay >= max_echo {
                        continue;
                    }
                    let gain = room.reflectivity.powi(order as i32) * d0 / d;
                    if gain == 0.0 {
                        continue;
                    }
                    let idx = (delay * fs_f).round() as usize;
                    taps[idx] += gain;
                    n_images += 1;
                }
            }
        }
    }

    let direct = taps[0];
    for t in &mut taps {
        *t /= direct;
    }
    while taps.len() > 1 && taps.last() == Some(&0.0) {
        taps.pop();
    }
    let meta = IrMetadata {
        room: room.clone(),
        max_echo,
        sample_rate: fs,
        n_taps: taps.len(),
        n_images,
    };
    Ok((ImpulseResponse { taps, sample_rate: fs }, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anechoic_room_is_a_single_unit_tap() {
        let (ir, meta) = image_source_ir(&RoomSpec::nominal(0.0, 0.5), 0.064, 16_000).unwrap();
        assert_eq!(ir.taps, vec![1.0]);
        assert_eq!(meta.n_images, 1);
    }

    #[test]
    fn coincident_source_and_mic_is_degenerate() {
        let room = RoomSpec::nominal(0.5, 0.0);
        assert!(matches!(
            image_source_ir(&room, 0.064, 16_000),
            Err(Error::DegenerateRoom(_))
        ));
    }

    #[test]
    fn positions_outside_room_are_rejected() {
        let mut room = RoomSpec::nominal(0.5, 0.5);
        room.mic_pos[1] = 4.5;
        assert!(room.validate().is_err());
        let mut room = RoomSpec::nominal(1.0, 0.5);
        room.reflectivity = 1.0;
        assert!(room.validate().is_err());
    }

    #[test]
    fn first_order_wall_reflection_lands_at_its_delay() {
        // With reflectivity r, the floor image sits at z = -1.2, so its path
        // length is sqrt(d0^2 + 2.4^2) and its gain r * d0 / d.
        let room = RoomSpec::nominal(0.5, 0.25);
        let (ir, _) = image_source_ir(&room, 0.064, 16_000).unwrap();
        let d0: f64 = 0.25;
        let d = (d0 * d0 + 2.4 * 2.4).sqrt();
        let idx = ((d - d0) / 343.0 * 16_000.0).round() as usize;
        assert!(ir.taps[idx] >= 0.5 * d0 / d - 1e-12);
    }

    #[test]
    fn echoes_stay_inside_the_cutoff() {
        let (ir, _) = image_source_ir(&RoomSpec::hard_close(), 0.064, 16_000).unwrap();
        assert_eq!(ir.taps[0], 1.0);
        assert!(ir.len() <= (0.064f64 * 16_000.0).ceil() as usize + 1);
        assert!(ir.taps.iter().all(|t| t.is_finite() && *t >= 0.0));
    }

    #[test]
    fn tail_energy_grows_with_reflectivity() {
        let mut last = -1.0;
        for r in [0.0, 0.3, 0.5, 0.7, 0.9] {
            let (ir, _) = image_source_ir(&RoomSpec::nominal(r, 0.25), 0.064, 16_000).unwrap();
            let e = ir.tail_energy();
            assert!(e >= last);
            last = e;
        }
    }

    /// The "hard" configuration keeps proportionally more energy in its
    /// late tail than the "soft" one.
    #[test]
    fn hard_and_soft_rooms_differ_in_decay() {
        let (hard, _) = image_source_ir(&RoomSpec::hard_close(), 0.064, 16_000).unwrap();
        let (soft, _) = image_source_ir(&RoomSpec::soft_distant(), 0.064, 16_000).unwrap();
        let late_over_early = |ir: &ImpulseResponse| {
            let half = 512;
            let early: f64 = ir.taps[1..half].iter().map(|t| t * t).sum();
            let late: f64 = ir.taps[half..].iter().map(|t| t * t).sum();
            late / early
        };
        assert!(late_over_early(&hard) > late_over_early(&soft));
    }

    #[test]
    fn wav_round_trip() {
        let (ir, _) = image_source_ir(&RoomSpec::soft_distant(), 0.064, 16_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ir.wav");
        ir.write_wav(&p).unwrap();
        let back = ImpulseResponse::read_wav(&p).unwrap();
        for (a, b) in back.taps.iter().zip(&ir.taps) {
            assert!((a - b).abs() <= 1e-7 * b.abs().max(1e-3));
        }
    }
}
