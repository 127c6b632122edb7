use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::channel::{apply_link, build_link, link_transfer, LinkRealization};
use crate::metrics::{gmi, memory_length, net_rate, residual_snr_db, rms_mdl};
use crate::rx::taps::{fractional_response, TapDump};
use crate::rx::{align, carrier_phase_recover, cd_compensate, fd_mimo_equalize, find_frame_offset, EqualizerState};
use crate::tx::{
    apply_phase_noise, core_mux_emulate, draw_frame, mb_shape, rrc_modulate, wdm_assemble, wdm_extract,
    ShapedConstellation, WdmConfig,
};
use crate::units::{fft_bin_frequencies, REFERENCE_FREQUENCY_HZ};
use crate::{Error, Result, Seed};

/// Frequency samples used for the in-band rms MDL of the equalizer.
const MDL_BINS: usize = 256;

/// One simulated point: a link realization carrying one wavelength.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSpec {
    pub spans: usize,
    pub trial: usize,
    /// WDM slot index; `None` simulates the SUT alone.
    pub slot: Option<usize>,
    /// Data, noise, multiplexing and phase-noise randomness.
    pub seed: Seed,
    /// Link randomness; span `k` depends only on this seed and `k`, so
    /// shorter links are prefixes of longer ones.
    pub link_seed: Seed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub spans: usize,
    pub trial: usize,
    pub slot: Option<usize>,
    pub length_km: f64,
    pub center_freq_hz: f64,
    /// Symbols the received frame was rotated by before equalization.
    pub frame_offset: usize,
    /// Data-symbol SNR per channel after phase recovery, LS gain removed.
    pub residual_snr_db: Vec<f64>,
    /// Per spatial channel, bits/2D.
    pub gmi: Vec<f64>,
    pub gmi_2d: f64,
    pub ngmi: f64,
    pub code_rate: Option<f64>,
    pub net_rate_tbps: f64,
    pub achievable_rate_tbps: f64,
    /// Memory length of the converged equalizer.
    pub tau_m_ns: f64,
    /// Memory length of the dispersion-free link transfer function.
    pub link_tau_m_ns: f64,
    /// In-band rms MDL of the converged equalizer's response.
    pub sigma_rms_db: f64,
    pub link_sigma_rms_db: f64,
    /// Worst residual pilot phase variance over channels, rad^2.
    pub cpr_phase_var: f64,
    pub low_pilot_snr: bool,
}

/// Position of `slot` relative to the comb centre, Hz.
pub(crate) fn slot_offset_hz(config: &ExperimentConfig, slot: usize) -> f64 {
    (slot as f64 - (config.tx.n_wdm as f64 - 1.0) / 2.0) * config.tx.channel_spacing_hz
}

pub(crate) fn constellation(config: &ExperimentConfig) -> Result<ShapedConstellation> {
    mb_shape(config.tx.entropy_bits)
}

/// Transmit, propagate, receive and evaluate one point.
///
/// Returns the final equalizer state alongside the metrics so callers can
/// export taps.
pub fn simulate_point(config: &ExperimentConfig, spec: &PointSpec) -> Result<(PointResult, EqualizerState)> {
    let tx = &config.tx;
    let rx_cfg = &config.rx;
    let sps = rx_cfg.equalizer.sps;
    let modes = config.link.modes;
    let constellation = constellation(config)?;

    let mut frame = draw_frame(&spec.seed.named("frame"), &constellation, 2, config.run.symbols, tx.pilot_rate)?;
    frame.symbol_rate = tx.symbol_rate_hz;
    let wave = rrc_modulate(&frame, sps, tx.rolloff, tx.channel_spacing_hz)?;
    let mux = core_mux_emulate(&wave, &frame, modes, config.core_spacing_symbols(), &spec.seed.named("mux"))?;
    let frame = mux.frame;
    let wave = apply_phase_noise(&mux.wave, tx.linewidth_hz, &spec.seed.named("phase-noise"));

    let mut link_cfg = config.link.clone();
    link_cfg.spans = spec.spans;
    let link = build_link(&link_cfg, &spec.link_seed)?;

    let received = match spec.slot {
        None => apply_link(&wave, &link, &spec.seed.named("ase"))?,
        Some(_) => {
            let wdm = WdmConfig {
                n_channels: tx.n_wdm,
                spacing_hz: tx.channel_spacing_hz,
                dummy_relative_power_db: tx.dummy_relative_power_db,
            };
            let comb = wdm_assemble(&wave, tx.symbol_rate_hz, tx.rolloff, &wdm, &spec.seed.named("wdm"))?;
            let factor = comb.len() / wave.len();
            let out = apply_link(&comb, &link, &spec.seed.named("ase"))?;
            wdm_extract(&out, 0.0, tx.channel_spacing_hz, factor)?
        }
    };
    let received = cd_compensate(&received, link_cfg.beta2_ps2_per_km, link_cfg.total_length_km());
    let frame_offset = find_frame_offset(&received, &frame, sps);
    let received = align(&received, frame_offset, sps);

    let state = EqualizerState::new(&rx_cfg.equalizer, modes)?;
    let eq = fd_mimo_equalize(&received, &frame, state, &rx_cfg.schedule, &constellation)?;

    let tau_m_ns = memory_length(&eq.taps_time, tx.symbol_rate_hz, rx_cfg.tau_fraction)?;
    let (link_tau_m_ns, link_sigma_rms_db) = link_truth(config, &link)?;
    let band_edge = (1.0 - tx.rolloff) * tx.symbol_rate_hz / 2.0;
    let band: Vec<f64> = (0..MDL_BINS)
        .map(|k| band_edge * (2.0 * (k as f64 + 0.5) / MDL_BINS as f64 - 1.0))
        .collect();
    let sigma_rms_db = rms_mdl(&fractional_response(&eq.state, tx.symbol_rate_hz, &band))?;

    let m = frame.len();
    let mut gmis = Vec::with_capacity(modes);
    let mut snrs = Vec::with_capacity(modes);
    let mut cpr_phase_var: f64 = 0.0;
    let mut low_pilot_snr = false;
    for (c, out) in eq.symbols.iter().enumerate() {
        let cpr = carrier_phase_recover(
            out,
            &frame.pilot_mask,
            &frame.symbols[c],
            rx_cfg.cpr_window_pilots,
            rx_cfg.cpr_warn_rad2,
        );
        cpr_phase_var = cpr_phase_var.max(cpr.residual_phase_var);
        low_pilot_snr |= cpr.low_pilot_snr;
        let (sent, got): (Vec<_>, Vec<_>) = (eq.eval_start..m)
            .filter(|&k| !frame.pilot_mask[k])
            .map(|k| (frame.symbols[c][k], cpr.symbols[k]))
            .unzip();
        snrs.push(residual_snr_db(&sent, &got)?);
        gmis.push(gmi(&sent, &got, &constellation)?.gmi);
    }
    if low_pilot_snr {
        log::warn!(
            "point spans={} trial={}: residual pilot phase variance {cpr_phase_var:.3e} rad^2",
            spec.spans,
            spec.trial
        );
    }
    let rate = net_rate(
        &gmis,
        constellation.entropy_2d,
        constellation.bits_per_symbol(),
        tx.symbol_rate_hz,
        &rx_cfg.fec,
        rx_cfg.framing,
    )?;
    let result = PointResult {
        spans: spec.spans,
        trial: spec.trial,
        slot: spec.slot,
        length_km: link_cfg.total_length_km(),
        center_freq_hz: REFERENCE_FREQUENCY_HZ + spec.slot.map_or(0.0, |s| slot_offset_hz(config, s)),
        frame_offset,
        residual_snr_db: snrs,
        gmi_2d: gmis.iter().sum::<f64>() / gmis.len() as f64,
        gmi: gmis,
        ngmi: rate.ngmi,
        code_rate: rate.code_rate,
        net_rate_tbps: rate.net_tbps,
        achievable_rate_tbps: rate.achievable_tbps,
        tau_m_ns,
        link_tau_m_ns,
        sigma_rms_db,
        link_sigma_rms_db,
        cpr_phase_var,
        low_pilot_snr,
    };
    Ok((result, eq.state))
}

/// Memory length (ns) and in-band rms MDL (dB) of the link itself, on the
/// equalizer's window and sample grid.
fn link_truth(config: &ExperimentConfig, link: &LinkRealization) -> Result<(f64, f64)> {
    let sps = config.rx.equalizer.sps;
    let fs = sps as f64 * config.tx.symbol_rate_hz;
    let grid = fft_bin_frequencies(config.rx.equalizer.fft_size * sps, fs)?;
    let bare = link.without_dispersion();
    let h = link_transfer(&bare, &grid);
    let tau = memory_length(&h.impulse_responses(), fs, config.rx.tau_fraction)?;
    let band_edge = (1.0 - config.tx.rolloff) * config.tx.symbol_rate_hz / 2.0;
    let band: Vec<f64> = grid.iter().copied().filter(|f| f.abs() <= band_edge).collect();
    if band.is_empty() {
        return Err(Error::Config("signal band holds no frequency bins".into()));
    }
    let sigma = rms_mdl(&link_transfer(&bare, &band))?;
    Ok((tau, sigma))
}

pub(crate) fn tap_dump(config: &ExperimentConfig, state: &EqualizerState) -> TapDump {
    TapDump::from_state(state, config.tx.symbol_rate_hz)
}
