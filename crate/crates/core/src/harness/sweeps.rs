use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{config_hash, ExperimentConfig};
use super::pipeline::{simulate_point, slot_offset_hz, tap_dump, PointResult, PointSpec};
use crate::channel::{calibrate_delay_scale, DelayCalibration};
use crate::metrics::{
    fit_mdl_per_span, fit_power_law, fit_sqrt_law, AccumulationModel, MdlAccumulationCurve, MetricsReport,
    PowerLawFit, WdmChannelMetrics,
};
use crate::rx::taps::TapDump;
use crate::tx::occupied_band_hz;
use crate::units::REFERENCE_FREQUENCY_HZ;
use crate::{Error, Result, Seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Distance,
    Wdm,
    Stability,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Distance => "distance",
            SweepKind::Wdm => "wdm",
            SweepKind::Stability => "stability",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub spans: usize,
    pub trial: usize,
    pub slot: Option<usize>,
    pub error: String,
}

/// Fits over the successful points of a distance sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceFit {
    /// `tau_m = a * sqrt(L)` from the equalizer memory lengths, ps/sqrt(km).
    pub a_ps_per_sqrt_km: f64,
    pub power_law: PowerLawFit,
    /// Same fit on the link's own memory lengths.
    pub link_a_ps_per_sqrt_km: f64,
    pub link_power_law: PowerLawFit,
    /// Per-span MDL recovered from the equalizer's rms MDL.
    pub sigma_g_db: f64,
    pub link_sigma_g_db: f64,
}

/// Mean and sample standard deviation over stability trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    pub spans: usize,
    pub tau_m_mean_ns: f64,
    pub tau_m_std_ns: f64,
    pub sigma_rms_mean_db: f64,
    pub sigma_rms_std_db: f64,
    pub link_tau_m_mean_ns: f64,
    pub link_tau_m_std_ns: f64,
    pub link_sigma_rms_mean_db: f64,
    pub link_sigma_rms_std_db: f64,
}

/// Per-wavelength rows of one WDM span count. Slots that were not
/// waveform-simulated copy the metrics of the nearest simulated slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WdmTable {
    pub spans: usize,
    pub band_hz: f64,
    /// Slot that supplied each row's metrics.
    pub source_slot: Vec<usize>,
    pub report: MetricsReport,
    pub total_net_tbps: f64,
    pub total_achievable_tbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Successful points in sweep order.
    pub points: Vec<PointResult>,
    pub failures: Vec<PointFailure>,
    pub summary: MetricsReport,
    pub distance_fit: Option<DistanceFit>,
    pub wdm: Vec<WdmTable>,
    pub stability: Option<StabilityStats>,
    /// Final equalizer taps per point, kept only when `output.write_taps`.
    #[serde(skip)]
    pub taps: Vec<(String, TapDump)>,
}

impl SweepReport {
    fn new(kind: SweepKind, config: &ExperimentConfig) -> Self {
        let config = &config.experiment();
        SweepReport {
            kind,
            config_hash: config_hash(config),
            seed: config.run.master_seed,
            config: config.clone(),
            points: Vec::new(),
            failures: Vec::new(),
            summary: MetricsReport {
                per_wdm_channel: Vec::new(),
                tau_m_ns: None,
                sigma_rms_db: None,
                fit_a_ps_per_sqrt_km: None,
                fit_sigma_g_db: None,
                config_echo: serde_json::to_value(config).expect("config serializes"),
                seed_echo: config.run.master_seed,
            },
            distance_fit: None,
            wdm: Vec::new(),
            stability: None,
            taps: Vec::new(),
        }
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Simulate every spec concurrently; results keep spec order and one
/// failing point never stops the others.
fn run_points(config: &ExperimentConfig, specs: &[PointSpec], report: &mut SweepReport) -> Result<()> {
    let outcomes: Vec<_> = pool(config.run.workers)?.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| simulate_point(config, spec))).unwrap_or_else(|p| {
                    let msg = p
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| p.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "panic".into());
                    Err(Error::Domain(format!("point panicked: {msg}")))
                })
            })
            .collect()
    });
    for (spec, outcome) in specs.iter().zip(outcomes) {
        match outcome {
            Ok((point, state)) => {
                if config.output.write_taps {
                    let name = match spec.slot {
                        Some(s) => format!("taps_k{}_t{}_s{}.bin", spec.spans, spec.trial, s),
                        None => format!("taps_k{}_t{}.bin", spec.spans, spec.trial),
                    };
                    report.taps.push((name, tap_dump(config, &state)));
                }
                report.points.push(point);
            }
            Err(e) => {
                log::error!("point spans={} trial={} slot={:?} failed: {e}", spec.spans, spec.trial, spec.slot);
                report.failures.push(PointFailure {
                    spans: spec.spans,
                    trial: spec.trial,
                    slot: spec.slot,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = v.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Shifted by the first value, so identical samples give exactly zero.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let x0 = v[0];
    let d = v.iter().map(|x| x - x0).sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (x0, 0.0);
    }
    let var = v.iter().map(|x| (x - x0 - d).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (x0 + d, var.sqrt())
}

fn wdm_row(point: &PointResult, center_freq_hz: f64) -> WdmChannelMetrics {
    WdmChannelMetrics {
        center_freq_hz,
        gmi_2d: point.gmi_2d,
        ngmi: point.ngmi,
        net_rate_tbps: point.net_rate_tbps,
        achievable_rate_tbps: point.achievable_rate_tbps,
        code_rate: point.code_rate,
    }
}

/// Per span count and trial: transmit, equalize, and measure memory length
/// and rms MDL; then fit `a`, the power law and the per-span MDL.
pub fn run_distance_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let base = Seed::new(config.run.master_seed).named("distance");
    let specs: Vec<PointSpec> = config
        .run
        .spans
        .iter()
        .flat_map(|&k| {
            let base = &base;
            (0..config.run.trials).map(move |t| PointSpec {
                spans: k,
                trial: t,
                slot: None,
                seed: base.child(k as u64).child(t as u64),
                link_seed: base.named("link").child(t as u64),
            })
        })
        .collect();
    let mut report = SweepReport::new(SweepKind::Distance, config);
    run_points(config, &specs, &mut report)?;

    let longest = config.run.spans.iter().copied().max().unwrap_or(1);
    let at_longest: Vec<&PointResult> = report.points.iter().filter(|p| p.spans == longest).collect();
    report.summary.tau_m_ns = mean(at_longest.iter().map(|p| p.tau_m_ns));
    report.summary.sigma_rms_db = mean(at_longest.iter().map(|p| p.sigma_rms_db));
    match distance_fit(config, &report.points) {
        Ok(Some(fit)) => {
            report.summary.fit_a_ps_per_sqrt_km = Some(fit.a_ps_per_sqrt_km);
            report.summary.fit_sigma_g_db = Some(fit.sigma_g_db);
            report.distance_fit = Some(fit);
        }
        Ok(None) => log::warn!("fewer than two distinct span counts succeeded; skipping fits"),
        Err(e) => log::warn!("distance fits failed: {e}"),
    }
    Ok(report)
}

fn distance_fit(config: &ExperimentConfig, points: &[PointResult]) -> Result<Option<DistanceFit>> {
    let mut lengths: Vec<usize> = points.iter().map(|p| p.spans).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 2 {
        return Ok(None);
    }
    let taps: Vec<(f64, f64)> = points.iter().map(|p| (p.length_km, p.tau_m_ns)).collect();
    let link: Vec<(f64, f64)> = points.iter().map(|p| (p.length_km, p.link_tau_m_ns)).collect();
    let curve = MdlAccumulationCurve::new(
        config.link.modes,
        lengths[lengths.len() - 1],
        config.run.mdl_curve_trials,
        &Seed::new(config.run.master_seed).named("mdl-curve"),
    )?;
    let model = AccumulationModel::MonteCarlo(&curve);
    // the fit works on ensemble means per span count
    let per_k = |f: fn(&PointResult) -> f64| -> Vec<(usize, f64)> {
        lengths
            .iter()
            .map(|&k| (k, mean(points.iter().filter(|p| p.spans == k).map(f)).expect("k has points")))
            .collect()
    };
    Ok(Some(DistanceFit {
        a_ps_per_sqrt_km: fit_sqrt_law(&taps)?,
        power_law: fit_power_law(&taps)?,
        link_a_ps_per_sqrt_km: fit_sqrt_law(&link)?,
        link_power_law: fit_power_law(&link)?,
        sigma_g_db: fit_mdl_per_span(&per_k(|p| p.sigma_rms_db), &model)?,
        link_sigma_g_db: fit_mdl_per_span(&per_k(|p| p.link_sigma_rms_db), &model)?,
    }))
}

/// Waveform-simulated slots: `count` indices spread evenly over `n`.
pub(crate) fn simulated_slots(n: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![(n - 1) / 2];
    }
    let mut v: Vec<usize> = (0..count)
        .map(|j| ((j * (n - 1)) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    v.dedup();
    v
}

/// Per WDM span count: simulate the selected slots (each over its own link
/// realization, with ASE dummies in the neighbouring slots), then fill all
/// `n_wdm` rows and the totals.
pub fn run_wdm_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let base = Seed::new(config.run.master_seed).named("wdm");
    let slots = simulated_slots(config.tx.n_wdm, config.run.wdm_slots);
    let mut specs = Vec::new();
    for &k in &config.run.wdm_spans {
        for &s in &slots {
            for t in 0..config.run.trials {
                specs.push(PointSpec {
                    spans: k,
                    trial: t,
                    slot: Some(s),
                    seed: base.child(k as u64).child(t as u64).child(s as u64),
                    link_seed: base.named("link").child(t as u64).child(s as u64),
                });
            }
        }
    }
    let mut report = SweepReport::new(SweepKind::Wdm, config);
    run_points(config, &specs, &mut report)?;

    let band_hz = occupied_band_hz(config.tx.n_wdm, config.tx.channel_spacing_hz);
    for &k in &config.run.wdm_spans {
        // trial-averaged metrics of every simulated slot that succeeded
        let simulated: Vec<(usize, PointResult)> = slots
            .iter()
            .filter_map(|&s| {
                let pts: Vec<&PointResult> =
                    report.points.iter().filter(|p| p.spans == k && p.slot == Some(s)).collect();
                average_points(&pts).map(|p| (s, p))
            })
            .collect();
        if simulated.is_empty() {
            log::warn!("no WDM slot succeeded at {k} spans");
            continue;
        }
        let mut source_slot = Vec::with_capacity(config.tx.n_wdm);
        let mut rows = Vec::with_capacity(config.tx.n_wdm);
        for slot in 0..config.tx.n_wdm {
            let (src, p) = simulated
                .iter()
                .min_by_key(|(s, _)| s.abs_diff(slot))
                .expect("non-empty");
            source_slot.push(*src);
            rows.push(wdm_row(p, REFERENCE_FREQUENCY_HZ + slot_offset_hz(config, slot)));
        }
        let mut table_report = report.summary.clone();
        table_report.per_wdm_channel = rows;
        table_report.tau_m_ns = mean(simulated.iter().map(|(_, p)| p.tau_m_ns));
        table_report.sigma_rms_db = mean(simulated.iter().map(|(_, p)| p.sigma_rms_db));
        report.wdm.push(WdmTable {
            spans: k,
            band_hz,
            source_slot,
            total_net_tbps: table_report.total_net_tbps(),
            total_achievable_tbps: table_report.total_achievable_tbps(),
            report: table_report,
        });
    }
    if let Some(last) = report.wdm.last() {
        report.summary = last.report.clone();
    }
    Ok(report)
}

/// Trial average of one slot's points; code rate and NGMI are re-derived
/// from the averaged rates.
fn average_points(pts: &[&PointResult]) -> Option<PointResult> {
    let first = *pts.first()?;
    let n = pts.len() as f64;
    let avg = |f: fn(&PointResult) -> f64| pts.iter().map(|p| f(p)).sum::<f64>() / n;
    let mut out = first.clone();
    out.gmi_2d = avg(|p| p.gmi_2d);
    out.ngmi = avg(|p| p.ngmi);
    out.net_rate_tbps = avg(|p| p.net_rate_tbps);
    out.achievable_rate_tbps = avg(|p| p.achievable_rate_tbps);
    out.tau_m_ns = avg(|p| p.tau_m_ns);
    out.sigma_rms_db = avg(|p| p.sigma_rms_db);
    if pts.iter().any(|p| p.code_rate != first.code_rate) {
        out.code_rate = None;
    }
    Some(out)
}

/// Repeated measurements at `stability_spans`: every trial redraws the link
/// when `stability_redraw` is set, otherwise all trials share one link and
/// only data and noise change.
pub fn run_stability_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    if config.run.trials < 2 {
        return Err(Error::Config("stability sweep needs at least two trials".into()));
    }
    let base = Seed::new(config.run.master_seed).named("stability");
    let k = config.run.stability_spans;
    let specs: Vec<PointSpec> = (0..config.run.trials)
        .map(|t| PointSpec {
            spans: k,
            trial: t,
            slot: None,
            seed: base.child(t as u64),
            link_seed: base.named("link").child(if config.run.stability_redraw { t as u64 } else { 0 }),
        })
        .collect();
    let mut report = SweepReport::new(SweepKind::Stability, config);
    run_points(config, &specs, &mut report)?;
    if !report.points.is_empty() {
        let col = |f: fn(&PointResult) -> f64| report.points.iter().map(f).collect::<Vec<f64>>();
        let (tm, ts) = mean_std(&col(|p| p.tau_m_ns));
        let (sm, ss) = mean_std(&col(|p| p.sigma_rms_db));
        let (ltm, lts) = mean_std(&col(|p| p.link_tau_m_ns));
        let (lsm, lss) = mean_std(&col(|p| p.link_sigma_rms_db));
        report.summary.tau_m_ns = Some(tm);
        report.summary.sigma_rms_db = Some(sm);
        report.stability = Some(StabilityStats {
            spans: k,
            tau_m_mean_ns: tm,
            tau_m_std_ns: ts,
            sigma_rms_mean_db: sm,
            sigma_rms_std_db: ss,
            link_tau_m_mean_ns: ltm,
            link_tau_m_std_ns: lts,
            link_sigma_rms_mean_db: lsm,
            link_sigma_rms_std_db: lss,
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub seed: u64,
    pub trials: usize,
    pub entries: Vec<DelayCalibration>,
}

impl CalibrationReport {
    /// TOML table `[delay_calibration]` keyed by mode count.
    pub fn to_toml(&self) -> String {
        let mut s = format!(
            "# section delay scale per mode count (seed {}, {} links each)\n[delay_calibration]\n",
            self.seed, self.trials
        );
        for e in &self.entries {
            s.push_str(&format!("{} = {}\n", e.modes, e.value));
        }
        s
    }
}

/// Monte Carlo delay calibration for every configured mode count.
pub fn run_calibration(config: &ExperimentConfig) -> Result<CalibrationReport> {
    let base = Seed::new(config.run.master_seed).named("calibration");
    let trials = config.run.calibration_trials;
    let entries = pool(config.run.workers)?.install(|| {
        config
            .run
            .calibration_modes
            .par_iter()
            .map(|&s| calibrate_delay_scale(s, trials, &base.child(s as u64)))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CalibrationReport {
        seed: config.run.master_seed,
        trials,
        entries,
    })
}
