use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest power of two that holds `frame_len` samples.
pub fn fft_size_for(frame_len: usize) -> usize {
    frame_len.max(1).next_power_of_two()
}

/// Real-input power spectrum of zero-padded frames.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    size: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("size", &self.size)
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(fft_size: usize) -> Result<Self> {
        if fft_size == 0 {
            return Err(Error::InvalidArgument("FFT size must be positive".into()));
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            size: fft_size,
            fft,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.size
    }

    pub fn n_bins(&self) -> usize {
        self.size / 2 + 1
    }

    /// `|X_k|^2` for `k = 0..=fft_size/2`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_bins()];
        let mut buf = Vec::with_capacity(self.size);
        self.power_spectrum_into(frame, &mut buf, &mut out)?;
        Ok(out)
    }

    pub fn power_spectrum_into(
        &self,
        frame: &[f64],
        buf: &mut Vec<Complex<f64>>,
        out: &mut [f64],
    ) -> Result<()> {
        if frame.is_empty() || frame.len() > self.size {
            return Err(Error::InvalidArgument(format!(
                "frame of {} samples does not fit FFT size {}",
                frame.len(),
                self.size
            )));
        }
        if out.len() != self.n_bins() {
            return Err(Error::ConfigMismatch(format!(
                "spectrum buffer has {} bins, expected {}",
                out.len(),
                self.n_bins()
            )));
        }
        buf.clear();
        buf.extend(frame.iter().map(|&x| Complex::new(x, 0.0)));
        buf.resize(self.size, Complex::new(0.0, 0.0));
        self.fft.process(buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.norm_sqr();
        }
        Ok(())
    }
}

/// Power spectrum of one frame at the next power-of-two FFT size.
pub fn power_spectrum(frame: &[f64]) -> Result<Vec<f64>> {
    SpectrumAnalyzer::new(fft_size_for(frame.len()))?.power_spectrum(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::framing::hamming;
    use std::f64::consts::PI;

    fn naive_power(frame: &[f64], n: usize) -> Vec<f64> {
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn fft_size_is_next_power_of_two() {
        assert_eq!(fft_size_for(384), 512);
        assert_eq!(fft_size_for(512), 512);
        assert_eq!(fft_size_for(1), 1);
    }

    #[test]
    fn zero_frame_gives_zero_spectrum() {
        let p = power_spectrum(&vec![0.0; 384]).unwrap();
        assert_eq!(p.len(), 257);
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut frame = vec![0.0; 384];
        frame[0] = 1.0;
        let p = power_spectrum(&frame).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn windowed_sine_matches_direct_dft_and_concentrates() {
        let n = 512;
        let bin = 40;
        let w = hamming(384);
        let frame: Vec<f64> = (0..384)
            .map(|t| (2.0 * PI * bin as f64 * t as f64 / n as f64).sin() * w[t])
            .collect();
        let fast = power_spectrum(&frame).unwrap();
        let slow = naive_power(&frame, n);
        let peak = slow.iter().cloned().fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * peak);
        }
        let argmax = fast
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, bin);
        // Hamming first sidelobe is about -43 dB; allow the 384/512 zero-pad a
        // little slack and check everything beyond the main lobe.
        let main_lobe = 2 * n / 384 + 1;
        for (k, &x) in fast.iter().enumerate() {
            if k.abs_diff(bin) > main_lobe {
                assert!(10.0 * (x / peak).log10() < -40.0, "bin {k}");
            }
        }
    }
}
