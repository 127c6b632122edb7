//! Multichannel waveforms, spectral transfer matrices and FFT helpers.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::units::fft_bin_frequencies;
use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized forward DFT.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan(buf.len(), false).process(buf);
    }
}

/// Inverse DFT including the `1/n` factor, so `ifft(fft(x)) == x`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n > 1 {
        plan(n, true).process(buf);
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut v = x.to_vec();
    fft_in_place(&mut v);
    v
}

pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut v = x.to_vec();
    ifft_in_place(&mut v);
    v
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Complex baseband samples for `S` channels sharing one sample clock.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelWaveform {
    samples: Vec<Vec<Complex64>>,
    pub sample_rate: f64,
    /// Absolute optical carrier of the baseband, metadata only.
    pub center_frequency: f64,
}

impl MultiChannelWaveform {
    pub fn new(
        samples: Vec<Vec<Complex64>>,
        sample_rate: f64,
        center_frequency: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("waveform needs at least one channel".into()));
        }
        let n = samples[0].len();
        if samples.iter().any(|c| c.len() != n) {
            return Err(Error::Domain("channels must share a sample count".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Domain(format!("bad sample rate {sample_rate}")));
        }
        if samples
            .iter()
            .flatten()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::Domain("waveform contains non-finite samples".into()));
        }
        Ok(MultiChannelWaveform {
            samples,
            sample_rate,
            center_frequency,
        })
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        &self.samples[c]
    }

    pub fn samples(&self) -> &[Vec<Complex64>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Vec<Complex64>> {
        self.samples
    }

    /// Mean `|x|^2` of channel `c`.
    pub fn channel_power(&self, c: usize) -> f64 {
        mean_power(&self.samples[c])
    }

    pub fn total_power(&self) -> f64 {
        (0..self.channels()).map(|c| self.channel_power(c)).sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        fft_bin_frequencies(self.len(), self.sample_rate).expect("waveform is non-empty")
    }

    /// Per-channel spectra (unnormalized DFT).
    pub fn spectra(&self) -> Vec<Vec<Complex64>> {
        self.samples.iter().map(|c| fft(c)).collect()
    }

    pub fn from_spectra(
        spectra: Vec<Vec<Complex64>>,
        sample_rate: f64,
        center_frequency: f64,
    ) -> Result<Self> {
        let samples = spectra
            .into_iter()
            .map(|mut s| {
                ifft_in_place(&mut s);
                s
            })
            .collect();
        Self::new(samples, sample_rate, center_frequency)
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        for v in self.samples.iter_mut().flatten() {
            *v *= factor;
        }
        self
    }
}

/// Per-frequency `S x S` complex transfer matrices on an FFT grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTransfer {
    pub freq_grid: Vec<f64>,
    pub matrices: Vec<DMatrix<Complex64>>,
}

impl SpectralTransfer {
    pub fn new(freq_grid: Vec<f64>, matrices: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if freq_grid.len() != matrices.len() {
            return Err(Error::Domain(format!(
                "{} frequencies but {} matrices",
                freq_grid.len(),
                matrices.len()
            )));
        }
        if let Some(first) = matrices.first() {
            let shape = first.shape();
            if matrices.iter().any(|m| m.shape() != shape) {
                return Err(Error::Domain("transfer matrices differ in shape".into()));
            }
        }
        Ok(SpectralTransfer {
            freq_grid,
            matrices,
        })
    }

    pub fn modes(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.freq_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_grid.is_empty()
    }

    /// Largest `||H^H H - I||_max` over the grid.
    pub fn unitarity_error(&self) -> f64 {
        self.matrices
            .iter()
            .map(|h| {
                let g = h.adjoint() * h;
                let n = g.nrows();
                let mut worst = 0.0f64;
                for r in 0..n {
                    for c in 0..n {
                        let target = if r == c { 1.0 } else { 0.0 };
                        worst = worst.max((g[(r, c)] - target).norm());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    /// Time-domain impulse responses of every matrix entry, indexed
    /// `[row * cols + col][tap]`. Requires `freq_grid` to be a full FFT grid.
    pub fn impulse_responses(&self) -> Vec<Vec<Complex64>> {
        let (rows, cols) = self.matrices.first().map_or((0, 0), |m| m.shape());
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let spectrum: Vec<Complex64> = self.matrices.iter().map(|m| m[(r, c)]).collect();
                out.push(ifft(&spectrum));
            }
        }
        out
    }
}
