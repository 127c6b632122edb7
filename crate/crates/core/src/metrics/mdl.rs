use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::draw_mdl_log_gains;
use crate::linalg::haar_unitary;
use crate::{Error, Result, Seed, SpectralTransfer};

const CLAMP_RELATIVE: f64 = 1e-12;

/// Population variance (dB^2) of the mean-removed log power gains of `h`.
fn log_gain_variance(h: &DMatrix<Complex64>) -> (f64, bool) {
    let s = h.clone().singular_values();
    let max = s.iter().fold(0.0f64, |m, v| m.max(v * v));
    let mut clamped = false;
    let g: Vec<f64> = s
        .iter()
        .map(|v| {
            let mut lambda = v * v;
            if lambda < CLAMP_RELATIVE * max {
                lambda = CLAMP_RELATIVE * max;
                clamped = true;
            }
            10.0 * lambda.log10()
        })
        .collect();
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    (g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n, clamped)
}

/// Root of the frequency-averaged variance of the mean-removed log
/// eigen-gains `10 log10 eig(H^H H)`, dB.
pub fn rms_mdl(h: &SpectralTransfer) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::Domain("empty transfer function".into()));
    }
    if h.matrices[0].nrows() != h.matrices[0].ncols() {
        return Err(Error::Domain("rms MDL needs square transfer matrices".into()));
    }
    let per_bin: Vec<(f64, bool)> = h.matrices.par_iter().map(log_gain_variance).collect();
    if per_bin.iter().any(|(_, c)| *c) {
        log::warn!("near-singular transfer matrix: eigen-gains clamped at 1e-12 of the largest");
    }
    let mean = per_bin.iter().map(|(v, _)| v).sum::<f64>() / per_bin.len() as f64;
    Ok(mean.sqrt())
}

/// Accumulated rms MDL (dB) of `spans` independent spans of per-span rms
/// `sigma_g_db` under strong coupling: `xi * sqrt(1 + xi^2 / 12)` with
/// `xi = sqrt(K) sigma_g`, evaluated in natural-log power units.
pub fn ho_kahn_sigma_rms(spans: usize, sigma_g_db: f64) -> f64 {
    let to_nat = std::f64::consts::LN_10 / 10.0;
    let xi = (spans as f64).sqrt() * sigma_g_db * to_nat;
    xi * (1.0 + xi * xi / 12.0).sqrt() / to_nat
}

/// Monte Carlo accumulation curve of the simulator's own span model:
/// every span is a Haar mixing followed by a lumped MDL stage with
/// log-gains of exact rms. Draws are frozen at construction (common random
/// numbers), so the curve is smooth and monotone in `sigma_g`.
#[derive(Clone, Debug)]
pub struct MdlAccumulationCurve {
    modes: usize,
    /// `[trial][span]` (mixing, unit-rms log gains)
    draws: Vec<Vec<(DMatrix<Complex64>, Vec<f64>)>>,
}

impl MdlAccumulationCurve {
    pub fn new(modes: usize, max_spans: usize, trials: usize, seed: &Seed) -> Result<Self> {
        if modes < 2 || max_spans == 0 || trials == 0 {
            return Err(Error::Domain("curve needs >= 2 modes, >= 1 span and >= 1 trial".into()));
        }
        let draws = (0..trials)
            .into_par_iter()
            .map(|t| {
                let ts = seed.child(t as u64);
                (0..max_spans)
                    .map(|k| {
                        let s = ts.child(k as u64);
                        let u = haar_unitary(&mut s.named("mixing").rng(), modes);
                        let g = draw_mdl_log_gains(&s.named("gains"), modes, 1.0)?;
                        Ok((u, g))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MdlAccumulationCurve { modes, draws })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn max_spans(&self) -> usize {
        self.draws[0].len()
    }

    /// Ensemble rms MDL after `spans` spans, as the root of the mean variance.
    pub fn sigma_rms(&self, spans: usize, sigma_g_db: f64) -> f64 {
        assert!(spans >= 1 && spans <= self.max_spans(), "span count outside tabulated range");
        let total: f64 = self
            .draws
            .par_iter()
            .map(|trial| {
                let mut h = DMatrix::<Complex64>::identity(self.modes, self.modes);
                for (u, g) in &trial[..spans] {
                    let mut next = u * h;
                    for (i, gi) in g.iter().enumerate() {
                        let a = 10f64.powf(gi * sigma_g_db / 20.0);
                        next.row_mut(i).iter_mut().for_each(|v| *v *= a);
                    }
                    h = next;
                }
                log_gain_variance(&h).0
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        (total / self.draws.len() as f64).sqrt()
    }
}

pub enum AccumulationModel<'a> {
    MonteCarlo(&'a MdlAccumulationCurve),
    ClosedForm,
}

impl AccumulationModel<'_> {
    fn eval(&self, spans: usize, sigma_g: f64) -> f64 {
        match self {
            AccumulationModel::MonteCarlo(c) => c.sigma_rms(spans, sigma_g),
            AccumulationModel::ClosedForm => ho_kahn_sigma_rms(spans, sigma_g),
        }
    }
}

/// Per-span rms MDL (dB) best explaining `(spans, sigma_rms dB)` points in
/// the least-squares sense.
pub fn fit_mdl_per_span(points: &[(usize, f64)], model: &AccumulationModel<'_>) -> Result<f64> {
    if points.is_empty() || points.iter().any(|(k, s)| *k == 0 || !(*s >= 0.0)) {
        return Err(Error::Fit("need points with spans >= 1 and finite non-negative MDL".into()));
    }
    if let AccumulationModel::MonteCarlo(c) = model {
        if let Some((k, _)) = points.iter().find(|(k, _)| *k > c.max_spans()) {
            return Err(Error::Fit(format!("{k} spans exceed the tabulated curve")));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.0);
    if sorted.windows(2).any(|w| w[1].0 > w[0].0 && w[1].1 < 0.9 * w[0].1) {
        log::warn!("rms MDL decreases with distance beyond noise tolerance");
    }
    let sse = |s: f64| -> f64 {
        points.iter().map(|&(k, y)| (model.eval(k, s) - y).powi(2)).sum()
    };
    let hi = points
        .iter()
        .map(|&(k, y)| y / (k as f64).sqrt())
        .fold(0.0f64, f64::max)
        * 2.0
        + 1e-3;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    while b - a > 1e-7 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = sse(d);
        }
    }
    let best = 0.5 * (a + b);
    Ok(if sse(0.0) <= sse(best) { 0.0 } else { best })
}
