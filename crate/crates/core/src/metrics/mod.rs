//! Channel and transmission metrics: memory length, rms MDL, GMI and
//! bitrate accounting, plus the fits that summarise distance sweeps.

mod gmi;
mod mdl;
mod memory;
mod rate;

pub use gmi::{gmi, residual_snr_db, GmiEstimate};
pub use mdl::{fit_mdl_per_span, ho_kahn_sigma_rms, rms_mdl, AccumulationModel, MdlAccumulationCurve};
pub use memory::{fit_power_law, fit_sqrt_law, memory_length, memory_length_samples, PowerLawFit};
pub use rate::{net_rate, ngmi, FecFraming, FecTable, RateResult};

use serde::{Deserialize, Serialize};

/// Rates of one WDM channel (all spatial channels of one wavelength).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WdmChannelMetrics {
    pub center_freq_hz: f64,
    /// Mean GMI over spatial channels, bits/2D.
    pub gmi_2d: f64,
    pub ngmi: f64,
    pub net_rate_tbps: f64,
    pub achievable_rate_tbps: f64,
    pub code_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_wdm_channel: Vec<WdmChannelMetrics>,
    pub tau_m_ns: Option<f64>,
    pub sigma_rms_db: Option<f64>,
    pub fit_a_ps_per_sqrt_km: Option<f64>,
    pub fit_sigma_g_db: Option<f64>,
    pub config_echo: serde_json::Value,
    pub seed_echo: u64,
}

impl MetricsReport {
    pub fn total_net_tbps(&self) -> f64 {
        self.per_wdm_channel.iter().map(|c| c.net_rate_tbps).sum()
    }

    pub fn total_achievable_tbps(&self) -> f64 {
        self.per_wdm_channel.iter().map(|c| c.achievable_rate_tbps).sum()
    }
}
