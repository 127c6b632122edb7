//! Linear coupled-core fiber link model.
//!
//! A link is a chain of spans. Each span is a cascade of short fiber sections
//! (Haar-random mode coupling followed by per-mode group delays), a lumped
//! mode-dependent loss stage in a random eigenbasis, scalar loss and an
//! amplifier that restores the span loss and adds ASE. Chromatic dispersion
//! is a scalar phase common to all modes.

mod calibrate;
mod propagate;
mod section;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::haar_unitary;
use crate::{Error, Result, Seed};

pub use calibrate::{calibrate_delay_scale, rms_delay_spread, DelayCalibration};
pub use propagate::{apply_link, ase_noise_variance, link_transfer};
pub use section::{draw_mdl_log_gains, draw_section, FiberSection};

/// Launch power per spatial/polarization tributary of one wavelength:
/// 20 dBm per core shared by 31 wavelengths and 2 polarizations.
pub const DEFAULT_LAUNCH_POWER_DBM: f64 = 2.076;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Number of spatial x polarization channels, `2 * cores`.
    pub modes: usize,
    pub spans: usize,
    pub span_length_km: f64,
    pub sections_per_span: usize,
    pub smd_coeff_ps_per_sqrt_km: f64,
    /// Section delay scale; `None` picks the frozen value for `modes`.
    pub delay_calibration: Option<f64>,
    pub sigma_g_db: f64,
    pub fiber_loss_db_per_km: f64,
    /// Fan-in/out, splices, connectors and fiber together.
    pub total_span_loss_db: f64,
    pub noise_figure_db: f64,
    pub noiseless: bool,
    pub beta2_ps2_per_km: f64,
    /// Reuse one span realization for every recirculation.
    pub loop_reuse: bool,
    /// Static per-core skew in ps added once per span, mean-removed.
    pub core_skew_ps: Option<Vec<f64>>,
    pub launch_power_dbm: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            modes: 4,
            spans: 1,
            span_length_km: 53.5,
            sections_per_span: 50,
            smd_coeff_ps_per_sqrt_km: 5.3,
            delay_calibration: None,
            sigma_g_db: 0.35,
            fiber_loss_db_per_km: 0.176,
            total_span_loss_db: 12.1,
            noise_figure_db: 5.0,
            noiseless: false,
            beta2_ps2_per_km: -21.7,
            loop_reuse: false,
            core_skew_ps: None,
            launch_power_dbm: DEFAULT_LAUNCH_POWER_DBM,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.modes < 2 {
            return bad(format!("need at least 2 modes, got {}", self.modes));
        }
        if self.spans == 0 {
            return bad("link needs at least one span".into());
        }
        if self.sections_per_span == 0 {
            return bad("span needs at least one section".into());
        }
        if !(self.span_length_km > 0.0) {
            return bad(format!("span length must be positive, got {}", self.span_length_km));
        }
        if self.smd_coeff_ps_per_sqrt_km < 0.0 || self.sigma_g_db < 0.0 {
            return bad("SMD coefficient and sigma_g must be non-negative".into());
        }
        if self.fiber_loss_db_per_km < 0.0 || self.total_span_loss_db < 0.0 {
            return bad("losses must be non-negative".into());
        }
        if self.lumped_loss_db() < -1e-9 {
            return bad(format!(
                "total span loss {} dB is below fiber loss {} dB",
                self.total_span_loss_db,
                self.fiber_loss_db_per_km * self.span_length_km
            ));
        }
        if let Some(c) = self.delay_calibration {
            if !(c >= 0.0) {
                return bad(format!("delay calibration must be non-negative, got {c}"));
            }
        }
        if let Some(skew) = &self.core_skew_ps {
            if skew.len() * 2 != self.modes {
                return bad(format!(
                    "core skew has {} entries for {} cores",
                    skew.len(),
                    self.modes / 2
                ));
            }
        }
        Ok(())
    }

    /// Span loss not accounted for by the fiber attenuation.
    pub fn lumped_loss_db(&self) -> f64 {
        self.total_span_loss_db - self.fiber_loss_db_per_km * self.span_length_km
    }

    pub fn total_length_km(&self) -> f64 {
        self.spans as f64 * self.span_length_km
    }

    pub fn resolved_delay_calibration(&self) -> f64 {
        self.delay_calibration
            .unwrap_or_else(|| DelayCalibration::frozen(self.modes))
    }
}

/// Lumped mode-dependent loss: `V diag(10^(g/20)) V^H`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdlStage {
    pub log_gains_db: Vec<f64>,
    pub basis: DMatrix<Complex64>,
}

impl MdlStage {
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.log_gains_db.len();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(10f64.powf(self.log_gains_db[i] / 20.0), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        &self.basis * d * self.basis.adjoint()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanRealization {
    pub sections: Vec<FiberSection>,
    pub span_length_km: f64,
    pub fiber_loss_db_per_km: f64,
    pub lumped_loss_db: f64,
    pub mdl: MdlStage,
    pub amp_gain_db: f64,
    pub amp_noise_figure_db: f64,
    /// Per-mode delays applied at the span input (core skew), ps.
    pub input_delays_ps: Vec<f64>,
    /// Per-mode phases applied at the span input (loop reuse), rad.
    pub input_phases: Vec<f64>,
}

impl SpanRealization {
    pub fn total_loss_db(&self) -> f64 {
        self.fiber_loss_db_per_km * self.span_length_km + self.lumped_loss_db
    }

    /// Net amplitude factor of loss and amplifier.
    pub fn net_amplitude(&self) -> f64 {
        10f64.powf((self.amp_gain_db - self.total_loss_db()) / 20.0)
    }

    pub fn modes(&self) -> usize {
        self.mdl.log_gains_db.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkRealization {
    pub modes: usize,
    pub spans: Vec<SpanRealization>,
    pub smd_coeff_ps_per_sqrt_km: f64,
    pub beta2_ps2_per_km: f64,
    pub total_length_km: f64,
    pub noiseless: bool,
    pub launch_power_dbm: f64,
}

impl LinkRealization {
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// The first `k` spans as a link of their own.
    pub fn truncated(&self, k: usize) -> LinkRealization {
        let spans: Vec<SpanRealization> = self.spans.iter().take(k).cloned().collect();
        LinkRealization {
            total_length_km: spans.iter().map(|s| s.span_length_km).sum(),
            spans,
            ..self.clone()
        }
    }

    /// Link with every span's MDL removed.
    pub fn without_mdl(&self) -> LinkRealization {
        let mut out = self.clone();
        for s in &mut out.spans {
            s.mdl.log_gains_db.iter_mut().for_each(|g| *g = 0.0);
        }
        out
    }

    pub fn without_dispersion(&self) -> LinkRealization {
        LinkRealization {
            beta2_ps2_per_km: 0.0,
            ..self.clone()
        }
    }
}

fn mean_removed(mut v: Vec<f64>) -> Vec<f64> {
    if v.is_empty() {
        return v;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

fn draw_span(config: &LinkConfig, seed: &Seed, calibration: f64) -> Result<SpanRealization> {
    let section_length = config.span_length_km / config.sections_per_span as f64;
    let section_seed = seed.named("section");
    let sections = (0..config.sections_per_span)
        .map(|j| {
            draw_section(
                &section_seed.child(j as u64),
                config.modes,
                section_length,
                config.smd_coeff_ps_per_sqrt_km,
                calibration,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mdl_seed = seed.named("mdl");
    let log_gains = draw_mdl_log_gains(&mdl_seed, config.modes, config.sigma_g_db)?;
    let basis = haar_unitary(&mut mdl_seed.named("basis").rng(), config.modes);
    let input_delays_ps = match &config.core_skew_ps {
        Some(skew) => mean_removed((0..config.modes).map(|c| skew[c / 2]).collect()),
        None => vec![0.0; config.modes],
    };
    Ok(SpanRealization {
        sections,
        span_length_km: config.span_length_km,
        fiber_loss_db_per_km: config.fiber_loss_db_per_km,
        lumped_loss_db: config.lumped_loss_db().max(0.0),
        mdl: MdlStage {
            log_gains_db: log_gains,
            basis,
        },
        amp_gain_db: config.total_span_loss_db,
        amp_noise_figure_db: config.noise_figure_db,
        input_delays_ps,
        input_phases: vec![0.0; config.modes],
    })
}

/// Draw a complete link realization. Span `k` uses the seed stream
/// `seed/"span"/k`; with loop reuse every span copies span 0 and gets a fresh
/// per-core phase from `seed/"loop-phase"/k`.
pub fn build_link(config: &LinkConfig, seed: &Seed) -> Result<LinkRealization> {
    config.validate()?;
    let calibration = config.resolved_delay_calibration();
    let span_seed = seed.named("span");
    let spans = if config.loop_reuse {
        let base = draw_span(config, &span_seed.child(0), calibration)?;
        let phase_seed = seed.named("loop-phase");
        (0..config.spans)
            .map(|k| {
                let mut rng = phase_seed.child(k as u64).rng();
                let core_phases: Vec<f64> = (0..config.modes / 2)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect();
                let mut span = base.clone();
                span.input_phases = (0..config.modes).map(|c| core_phases[c / 2]).collect();
                span
            })
            .collect()
    } else {
        (0..config.spans)
            .map(|k| draw_span(config, &span_seed.child(k as u64), calibration))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(LinkRealization {
        modes: config.modes,
        total_length_km: spans.iter().map(|s| s.span_length_km).sum(),
        spans,
        smd_coeff_ps_per_sqrt_km: config.smd_coeff_ps_per_sqrt_km,
        beta2_ps2_per_km: config.beta2_ps2_per_km,
        noiseless: config.noiseless,
        launch_power_dbm: config.launch_power_dbm,
    })
}
