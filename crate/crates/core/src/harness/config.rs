use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::LinkConfig;
use crate::metrics::{FecFraming, FecTable};
use crate::rx::{EqualizerConfig, EqualizerState, Schedule};
use crate::tx::{CHANNEL_SPACING_HZ, SYMBOL_RATE_HZ};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variables `CCMCF_<SECTION>__<KEY>=<value>` override config
/// keys; `__` separates nesting levels and values are parsed as TOML
/// literals (falling back to a plain string).
pub const ENV_PREFIX: &str = "CCMCF_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxConfig {
    pub symbol_rate_hz: f64,
    pub channel_spacing_hz: f64,
    /// Target 2D entropy of the shaped constellation, bits.
    pub entropy_bits: f64,
    pub rolloff: f64,
    pub pilot_rate: f64,
    /// Channels in the WDM comb (band bookkeeping and slot positions).
    pub n_wdm: usize,
    /// Combined transmitter and local-oscillator linewidth; 0 disables.
    pub linewidth_hz: f64,
    pub dummy_relative_power_db: f64,
}

impl Default for TxConfig {
    fn default() -> Self {
        TxConfig {
            symbol_rate_hz: SYMBOL_RATE_HZ,
            channel_spacing_hz: CHANNEL_SPACING_HZ,
            entropy_bits: 4.688,
            rolloff: 0.05,
            pilot_rate: 1.0 / 64.0,
            n_wdm: 31,
            linewidth_hz: 10e3,
            dummy_relative_power_db: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxConfig {
    pub equalizer: EqualizerConfig,
    pub schedule: Schedule,
    pub cpr_window_pilots: usize,
    /// Residual pilot phase variance above which a point is flagged, rad^2.
    pub cpr_warn_rad2: f64,
    /// Power fraction defining the memory length.
    pub tau_fraction: f64,
    pub fec: FecTable,
    pub framing: FecFraming,
}

impl Default for RxConfig {
    fn default() -> Self {
        RxConfig {
            equalizer: EqualizerConfig::default(),
            schedule: Schedule::default(),
            cpr_window_pilots: 64,
            cpr_warn_rad2: 0.05,
            tau_fraction: 0.9,
            fec: FecTable::default(),
            framing: FecFraming::Joint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Symbols per frame.
    pub symbols: usize,
    pub trials: usize,
    /// Span counts of the distance sweep.
    pub spans: Vec<usize>,
    /// Span counts of the WDM sweep.
    pub wdm_spans: Vec<usize>,
    /// WDM slots simulated per span count, spread evenly over the comb.
    pub wdm_slots: usize,
    pub stability_spans: usize,
    /// Redraw the link for every stability trial; false repeats one draw.
    pub stability_redraw: bool,
    /// Monte Carlo trials behind the MDL accumulation curve.
    pub mdl_curve_trials: usize,
    pub calibration_modes: Vec<usize>,
    pub calibration_trials: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 1,
            symbols: 1 << 16,
            trials: 10,
            spans: vec![1, 4, 8, 19],
            wdm_spans: vec![1, 19],
            wdm_slots: 3,
            stability_spans: 8,
            stability_redraw: true,
            mdl_curve_trials: 200,
            calibration_modes: vec![2, 4, 8, 12, 24],
            calibration_trials: 400,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Also write the final equalizer taps of every point.
    pub write_taps: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            write_taps: false,
        }
    }
}

/// Complete experiment description. `link.modes` is the spatial channel
/// count S; `link.spans` is replaced by each sweep's span counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub link: LinkConfig,
    pub tx: TxConfig,
    pub rx: RxConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            link: LinkConfig::default(),
            tx: TxConfig::default(),
            rx: RxConfig::default(),
            run: RunConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Paper-scale run: 24 spatial channels and the full 31-slot comb, with
    /// a frame long enough to train the 24-output equalizer.
    pub fn apply_full(&mut self) {
        self.link.modes = 24;
        self.run.wdm_slots = self.tx.n_wdm;
        self.run.symbols = self.run.symbols.max(1 << 18);
        self.rx.schedule.training_fraction = self.rx.schedule.training_fraction.max(0.25);
    }

    /// Adaptive coefficients per equalizer output.
    pub fn coefficients_per_output(&self) -> usize {
        let eq = &self.rx.equalizer;
        let branches = match eq.mode {
            crate::rx::EqualizerMode::StrictlyLinear => 1,
            crate::rx::EqualizerMode::WidelyLinear => 2,
        };
        self.link.modes * eq.sps * branches * self.equalizer_taps()
    }

    fn equalizer_taps(&self) -> usize {
        let eq = &self.rx.equalizer;
        eq.taps.unwrap_or(eq.fft_size - eq.block_advance.unwrap_or(eq.fft_size / 2))
    }

    /// Symbols between core delays: beyond the equalizer's reach so the
    /// filter cannot exploit inter-core data correlation.
    pub fn core_spacing_symbols(&self) -> usize {
        let taps = self.equalizer_taps();
        let pilot = if self.tx.pilot_rate > 0.0 { (1.0 / self.tx.pilot_rate).floor() as usize } else { 1 };
        taps + pilot
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.link.validate()?;
        if !self.link.modes.is_multiple_of(2) {
            return bad(format!("modes must be even (2 per core), got {}", self.link.modes));
        }
        let tx = &self.tx;
        if !(tx.symbol_rate_hz > 0.0) || !(tx.channel_spacing_hz > 0.0) {
            return bad("symbol rate and spacing must be positive".into());
        }
        let max_rolloff = tx.channel_spacing_hz / tx.symbol_rate_hz - 1.0;
        if !(tx.rolloff > 0.0) || tx.rolloff > max_rolloff + 1e-12 {
            return bad(format!("roll-off {} must lie in (0, {max_rolloff:.4}]", tx.rolloff));
        }
        if !(0.0..1.0).contains(&tx.pilot_rate) {
            return bad(format!("pilot rate {} not in [0, 1)", tx.pilot_rate));
        }
        if tx.n_wdm == 0 || tx.linewidth_hz < 0.0 {
            return bad("need at least one WDM channel and a non-negative linewidth".into());
        }
        EqualizerState::new(&self.rx.equalizer, self.link.modes)?;
        self.rx.fec.validate()?;
        if !(self.rx.tau_fraction > 0.0 && self.rx.tau_fraction <= 1.0) {
            return bad("tau_fraction must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.rx.schedule.training_fraction) {
            return bad("training fraction must lie in [0, 1]".into());
        }
        if self.rx.cpr_window_pilots == 0 {
            return bad("CPR window needs at least one pilot".into());
        }
        let run = &self.run;
        if run.symbols < 2 * self.rx.equalizer.fft_size {
            return bad(format!(
                "{} symbols are fewer than two FFT blocks of {}",
                run.symbols, self.rx.equalizer.fft_size
            ));
        }
        // fewer training symbols than coefficients leaves the adaptation
        // underdetermined; it then locks onto noise
        let training = (self.rx.schedule.training_fraction * run.symbols as f64) as usize;
        if training < self.coefficients_per_output() {
            return bad(format!(
                "{training} training symbols cannot determine {} coefficients per output; \
                 lengthen the frame or shorten the equalizer",
                self.coefficients_per_output()
            ));
        }
        let cores = self.link.modes / 2;
        if cores > 1 && (cores - 1) * self.core_spacing_symbols() >= run.symbols {
            return bad(format!(
                "{cores} cores need {} symbols of delay diversity, frame has {}",
                (cores - 1) * self.core_spacing_symbols(),
                run.symbols
            ));
        }
        if run.trials == 0 || run.spans.is_empty() || run.spans.contains(&0) {
            return bad("need trials >= 1 and non-empty, non-zero span counts".into());
        }
        if run.wdm_spans.contains(&0) || run.wdm_slots == 0 || run.wdm_slots > tx.n_wdm {
            return bad(format!("wdm_slots must lie in 1..={}", tx.n_wdm));
        }
        if run.stability_spans == 0 {
            return bad("stability sweep needs at least one span".into());
        }
        if run.mdl_curve_trials == 0 || run.calibration_trials == 0 {
            return bad("Monte Carlo trial counts must be positive".into());
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// The config minus where results are written, which is not part of
    /// the experiment.
    pub fn experiment(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.output.dir = String::new();
        c
    }
}

/// Hex SHA-256 of the canonical JSON form of `config`, output directory
/// excluded.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(&config.experiment()).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let path: Vec<String> = key.split("__").map(|p| p.to_ascii_lowercase()).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key}")));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {p} is not a section")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

/// Read `path` (defaults when `None`), then apply `ENV_PREFIX` overrides
/// from `env`, then validate.
pub fn load_config<I>(path: Option<&Path>, env: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    let mut overrides: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_string(), v)))
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        apply_override(&mut root, &key, parse_env_value(&raw))?;
    }
    let config: ExperimentConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
