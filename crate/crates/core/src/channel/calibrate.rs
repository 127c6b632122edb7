//! Monte Carlo calibration of the section delay scale.
//!
//! The fiber is characterised by its SMD coefficient, i.e. the rms width of
//! the intensity impulse response per square-root km. How that maps onto the
//! per-section Gaussian delay spread depends on the section model, so the
//! scale factor is measured on long random links and frozen.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_link, LinkConfig, LinkRealization};
use crate::linalg::{self, identity, matmul, scale_rows};
use crate::units::PS;
use crate::{Result, Seed};

/// Section delay scale constants measured by [`calibrate_delay_scale`]
/// (1 x 100 km, 100 sections, 2000 links each; 400 for 12 and 24 modes).
const FROZEN: &[(usize, f64)] = &[
    (2, 1.4085),
    (4, 1.1561),
    (8, 1.0712),
    (12, 1.0436),
    (24, 1.0234),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayCalibration {
    pub modes: usize,
    pub value: f64,
    pub trials: usize,
    /// Ensemble rms width measured with unit calibration, ps.
    pub measured_width_ps: f64,
    pub target_width_ps: f64,
}

impl DelayCalibration {
    /// Frozen calibration for `modes`; mode counts not in the table fall
    /// back to `sqrt(S/(S-1))`, the expectation for mean-removed Gaussian
    /// section delays under full mixing.
    pub fn frozen(modes: usize) -> f64 {
        FROZEN
            .iter()
            .find(|(m, _)| *m == modes)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| (modes as f64 / (modes as f64 - 1.0)).sqrt())
    }
}

/// Rms width (ps) of the intensity impulse response summed over all input
/// and output modes, from frequency-domain moments averaged over
/// `freq_grid`. Dispersion is ignored.
///
/// Uses `int t^2 |h|^2 dt = int |H'|^2 df / (2 pi)^2` and
/// `int t |h|^2 dt = Re int H^* (j/2pi) H' df`, with `H'` propagated
/// alongside `H` section by section.
pub fn rms_delay_spread(link: &LinkRealization, freq_grid: &[f64]) -> f64 {
    let n = link.modes();
    let kernels: Vec<_> = link
        .spans
        .iter()
        .map(|span| {
            (
                span,
                span.sections
                    .iter()
                    .map(|s| (linalg::to_row_major(&s.coupling), s.delays_ps.clone()))
                    .collect::<Vec<_>>(),
                linalg::to_row_major(&span.mdl.matrix()),
                span.net_amplitude(),
            )
        })
        .collect();

    let sums = freq_grid
        .par_iter()
        .map(|&f| {
            let mut h = identity(n);
            let mut dh = vec![linalg::ZERO; n * n];
            let mut scratch = vec![linalg::ZERO; n * n];
            let mut d = vec![linalg::ZERO; n];

            let mut stage = |h: &mut Vec<Complex64>, dh: &mut Vec<Complex64>, delays: &[f64], phases: Option<&[f64]>| {
                // dh <- D (T h + dh), h <- D h with T = diag(-j 2 pi tau)
                for r in 0..n {
                    let t = Complex64::new(0.0, -TAU * delays[r] * PS);
                    for c in 0..n {
                        dh[r * n + c] += t * h[r * n + c];
                    }
                }
                for (r, dr) in d.iter_mut().enumerate() {
                    let ph = phases.map_or(0.0, |p| p[r]);
                    *dr = Complex64::from_polar(1.0, -TAU * f * delays[r] * PS + ph);
                }
                scale_rows(h, &d, n);
                scale_rows(dh, &d, n);
            };

            for (span, sections, mdl, amp) in &kernels {
                stage(&mut h, &mut dh, &span.input_delays_ps, Some(&span.input_phases));
                for (coupling, delays) in sections {
                    stage(&mut h, &mut dh, delays, None);
                    matmul(coupling, &h, &mut scratch, n);
                    std::mem::swap(&mut h, &mut scratch);
                    matmul(coupling, &dh, &mut scratch, n);
                    std::mem::swap(&mut dh, &mut scratch);
                }
                matmul(mdl, &h, &mut scratch, n);
                std::mem::swap(&mut h, &mut scratch);
                matmul(mdl, &dh, &mut scratch, n);
                std::mem::swap(&mut dh, &mut scratch);
                for v in h.iter_mut().chain(dh.iter_mut()) {
                    *v *= *amp;
                }
            }
            let energy: f64 = h.iter().map(|v| v.norm_sqr()).sum();
            let first: f64 = h
                .iter()
                .zip(&dh)
                .map(|(a, b)| (a.conj() * Complex64::new(0.0, 1.0 / TAU) * b).re)
                .sum();
            let second: f64 = dh.iter().map(|v| v.norm_sqr()).sum::<f64>() / (TAU * TAU);
            (energy, first, second)
        })
        .collect::<Vec<_>>()
        .into_iter()
        // sequential fold keeps the result independent of thread scheduling
        .fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let (energy, first, second) = sums;
    let mean = first / energy;
    let var = (second / energy - mean * mean).max(0.0);
    var.sqrt() / PS
}

/// Measure the section delay scale for `modes` on `trials` random
/// 100-section, 100-km links: the returned value makes the ensemble rms
/// impulse-response width equal `smd * sqrt(100 km)`.
pub fn calibrate_delay_scale(modes: usize, trials: usize, seed: &Seed) -> Result<DelayCalibration> {
    let smd = 5.3;
    let config = LinkConfig {
        modes,
        spans: 1,
        span_length_km: 100.0,
        sections_per_span: 100,
        smd_coeff_ps_per_sqrt_km: smd,
        delay_calibration: Some(1.0),
        sigma_g_db: 0.0,
        fiber_loss_db_per_km: 0.0,
        total_span_loss_db: 0.0,
        noiseless: true,
        beta2_ps2_per_km: 0.0,
        ..LinkConfig::default()
    };
    // frequencies spread well beyond the coherence bandwidth of a ~50 ps link
    let grid: Vec<f64> = (0..16).map(|k| (k as f64 - 7.5) * 37.3e9).collect();
    let widths_sq = (0..trials)
        .map(|t| {
            let link = build_link(&config, &seed.child(t as u64))?;
            Ok(rms_delay_spread(&link, &grid).powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    let measured = (widths_sq.iter().sum::<f64>() / trials as f64).sqrt();
    let target = smd * 100f64.sqrt();
    Ok(DelayCalibration {
        modes,
        value: target / measured,
        trials,
        measured_width_ps: measured,
        target_width_ps: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_section_spread_is_delay_std() {
        let cfg = LinkConfig {
            modes: 4,
            sections_per_span: 1,
            sigma_g_db: 0.0,
            noiseless: true,
            ..LinkConfig::default()
        };
        let link = build_link(&cfg, &Seed::new(11)).unwrap();
        let d = &link.spans[0].sections[0].delays_ps;
        let std = (d.iter().map(|x| x * x).sum::<f64>() / 4.0).sqrt();
        let w = rms_delay_spread(&link, &[0.0, 3e9, -40e9]);
        assert!((w - std).abs() < 1e-9 * std.max(1.0), "{w} vs {std}");
    }

    #[test]
    fn monte_carlo_reproduces_frozen_constant() {
        let c = calibrate_delay_scale(4, 300, &Seed::new(77)).unwrap();
        assert!((c.value / DelayCalibration::frozen(4) - 1.0).abs() < 0.04, "{c:?}");
    }

    #[test]
    fn frozen_fallback() {
        assert!((DelayCalibration::frozen(101) - (101.0f64 / 100.0).sqrt()).abs() < 1e-12);
    }
}

