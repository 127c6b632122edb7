//! Receiver DSP: dispersion compensation, frame synchronization, adaptive
//! MIMO equalization and pilot-aided carrier phase recovery.

mod cpr;
mod equalizer;
pub mod taps;

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::tx::SymbolFrame;
use crate::units::PS2_PER_KM;
use crate::waveform::{fft_in_place, ifft_in_place};
use crate::MultiChannelWaveform;

pub use cpr::{carrier_phase_recover, CprOutput};
pub use equalizer::{
    compose_inputs, fd_mimo_equalize, widely_linear_compose, EqualizedOutput, EqualizerConfig,
    EqualizerMode, EqualizerState, Schedule,
};

/// Lags either side of the correlation peak included in the timing estimate.
const SYNC_SPREAD: usize = 16;

/// Undo the link's scalar dispersion phase `exp(-j beta2/2 w^2 L)`.
pub fn cd_compensate(wave: &MultiChannelWaveform, beta2_ps2_per_km: f64, length_km: f64) -> MultiChannelWaveform {
    if beta2_ps2_per_km == 0.0 || length_km == 0.0 {
        return wave.clone();
    }
    let phase: Vec<Complex64> = wave
        .frequencies()
        .iter()
        .map(|f| {
            let w = TAU * f;
            Complex64::from_polar(1.0, 0.5 * beta2_ps2_per_km * PS2_PER_KM * w * w * length_km)
        })
        .collect();
    let spectra = wave
        .spectra()
        .into_iter()
        .map(|mut s| {
            s.iter_mut().zip(&phase).for_each(|(v, p)| *v *= p);
            s
        })
        .collect();
    MultiChannelWaveform::from_spectra(spectra, wave.sample_rate, wave.center_frequency)
        .expect("phase-only filter")
}

/// Symbol lag of the frame start: maximizes the pilot cross-correlation
/// energy summed over every (received, reference) channel pair, so it works
/// before the MIMO channel is undone.
pub fn find_frame_offset(wave: &MultiChannelWaveform, frame: &SymbolFrame, sps: usize) -> usize {
    let m = frame.len();
    let refs: Vec<Vec<Complex64>> = frame
        .symbols
        .iter()
        .map(|s| {
            let mut r: Vec<Complex64> = s
                .iter()
                .zip(&frame.pilot_mask)
                .map(|(v, p)| if *p { *v } else { Complex64::new(0.0, 0.0) })
                .collect();
            fft_in_place(&mut r);
            r
        })
        .collect();
    let mut metric = vec![0.0f64; m];
    for c in 0..wave.channels() {
        let mut x: Vec<Complex64> = wave.channel(c).iter().step_by(sps).take(m).copied().collect();
        x.resize(m, Complex64::new(0.0, 0.0));
        fft_in_place(&mut x);
        for r in &refs {
            // corr[l] = sum_n x[n + l] conj(p[n]) = IFFT(X * conj(P))
            let mut prod: Vec<Complex64> = x
                .iter()
                .zip(r.iter())
                .map(|(a, b)| a * b.conj())
                .collect();
            ifft_in_place(&mut prod);
            for (acc, v) in metric.iter_mut().zip(&prod) {
                *acc += v.norm_sqr();
            }
        }
    }
    let peak = metric
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    // the MIMO channel spreads the peak over its memory: take the
    // energy-weighted centre of the lags around the maximum
    let half = SYNC_SPREAD.min(m / 2) as isize;
    let (mut num, mut den) = (0.0, 0.0);
    for d in -half..=half {
        let w = metric[(peak as isize + d).rem_euclid(m as isize) as usize];
        num += d as f64 * w;
        den += w;
    }
    let offset = peak as isize + if den > 0.0 { (num / den).round() as isize } else { 0 };
    offset.rem_euclid(m as isize) as usize
}

/// Rotate every channel left by `symbols * sps` samples.
pub fn align(wave: &MultiChannelWaveform, symbols: usize, sps: usize) -> MultiChannelWaveform {
    let shift = (symbols * sps) % wave.len().max(1);
    let samples = wave
        .samples()
        .iter()
        .map(|c| {
            let mut v = c.clone();
            v.rotate_left(shift);
            v
        })
        .collect();
    MultiChannelWaveform::new(samples, wave.sample_rate, wave.center_frequency).expect("same shape")
}
