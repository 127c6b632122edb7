//! Frequency-domain adaptive MIMO equalizer.
//!
//! Overlap-save block processing at one sample per symbol on polyphase
//! inputs: a channel sampled at `sps` samples per symbol contributes `sps`
//! symbol-rate inputs (and their conjugates in widely-linear mode), so 24
//! channels at 2 sps give the 96 x 24 widely-linear structure. Weights are
//! adapted per block with a gradient-constrained, per-bin power-normalized
//! LMS update `W += mu * constrain(conj(X) E / P)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tx::{rrc_response, ShapedConstellation, SymbolFrame};
use crate::units::fft_bin_frequencies;
use crate::waveform::{fft_in_place, ifft, ifft_in_place};
use crate::{Error, MultiChannelWaveform, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const PHASE_PILOTS: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualizerMode {
    StrictlyLinear,
    /// Inputs are stacked with their complex conjugates, so the filter can
    /// undo I/Q mixing.
    WidelyLinear,
}

impl EqualizerMode {
    fn branches(self) -> usize {
        match self {
            EqualizerMode::StrictlyLinear => 1,
            EqualizerMode::WidelyLinear => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EqualizerConfig {
    pub fft_size: usize,
    /// Output symbols per block; defaults to `fft_size / 2`.
    pub block_advance: Option<usize>,
    /// Filter length in symbols; defaults to `fft_size - block_advance`.
    pub taps: Option<usize>,
    pub mu: f64,
    pub mode: EqualizerMode,
    pub sps: usize,
    /// Weight energy, relative to the initial weights, treated as divergence.
    pub divergence_limit: f64,
    /// Start from the root-raised-cosine matched filter of this roll-off on
    /// every channel's own inputs; `None` starts from a single center tap.
    pub init_rolloff: Option<f64>,
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        EqualizerConfig {
            fft_size: 2048,
            block_advance: None,
            taps: None,
            mu: 0.5,
            mode: EqualizerMode::StrictlyLinear,
            sps: 2,
            divergence_limit: 1e4,
            init_rolloff: Some(0.05),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// Leading fraction of the frame used data-aided.
    pub training_fraction: f64,
    /// Passes over the training segment before the final full pass.
    pub training_epochs: usize,
    /// Step-size multiplier in the decision-directed part of the final pass.
    pub tracking_mu_scale: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            training_fraction: 0.2,
            training_epochs: 10,
            tracking_mu_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerState {
    /// Per-bin weights, indexed `[out * n_in + in][bin]`.
    pub weights: Vec<Vec<Complex64>>,
    pub fft_size: usize,
    pub block_advance: usize,
    pub taps: usize,
    /// Output `n` estimates symbol `n` using inputs up to `n + decision_delay`.
    pub decision_delay: usize,
    pub mu: f64,
    pub mode: EqualizerMode,
    pub sps: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub divergence_limit: f64,
    initial_energy: f64,
    power: Vec<f64>,
}

impl EqualizerState {
    /// Identity-initialized equalizer for `channels` outputs.
    pub fn new(config: &EqualizerConfig, channels: usize) -> Result<Self> {
        let n = config.fft_size;
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Config(format!("FFT size {n} must be a power of two >= 4")));
        }
        let advance = config.block_advance.unwrap_or(n / 2);
        if advance == 0 || advance > n / 2 {
            return Err(Error::Config(format!(
                "block advance {advance} must be in 1..={} for overlap-save",
                n / 2
            )));
        }
        let taps = config.taps.unwrap_or(n - advance);
        if taps == 0 || taps > n - advance + 1 {
            return Err(Error::Config(format!(
                "{taps} taps do not fit FFT {n} with advance {advance}"
            )));
        }
        if config.sps == 0 || channels == 0 {
            return Err(Error::Config("need sps >= 1 and at least one channel".into()));
        }
        if !(config.mu > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {}", config.mu)));
        }
        let n_in = channels * config.sps * config.mode.branches();
        let delay = taps / 2;
        let mut weights = vec![vec![ZERO; n]; channels * n_in];
        for (p, resp) in initial_response(n, taps, delay, config.sps, config.init_rolloff)?
            .into_iter()
            .enumerate()
        {
            for o in 0..channels {
                let i = input_index(o, p, 0, config.sps, config.mode);
                weights[o * n_in + i] = resp.clone();
            }
        }
        let initial_energy: f64 = weights.iter().flatten().map(|w| w.norm_sqr()).sum();
        Ok(EqualizerState {
            weights,
            fft_size: n,
            block_advance: advance,
            taps,
            decision_delay: delay,
            mu: config.mu,
            mode: config.mode,
            sps: config.sps,
            n_in,
            n_out: channels,
            divergence_limit: config.divergence_limit,
            initial_energy,
            power: Vec::new(),
        })
    }

    pub fn weight_energy(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w.norm_sqr()).sum()
    }

    /// Time-domain taps `[in * n_out + out][tap]`, the inverse DFT of the
    /// weights.
    pub fn taps_time(&self) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(self.n_in * self.n_out);
        for i in 0..self.n_in {
            for o in 0..self.n_out {
                out.push(ifft(&self.weights[o * self.n_in + i]));
            }
        }
        out
    }

    /// Run the current filter over `wave` without adapting.
    pub fn filter(&self, wave: &MultiChannelWaveform) -> Result<Vec<Vec<Complex64>>> {
        let inputs = compose_inputs(wave, self.sps, self.mode)?;
        let mut scratch = self.clone();
        let m = inputs[0].len();
        let mut out = vec![vec![ZERO; m]; self.n_out];
        let mut work = Workspace::new(self);
        for b in 0..m.div_ceil(self.block_advance) {
            scratch.block(&inputs, b, &mut work, &mut out, None)?;
        }
        Ok(out)
    }

    fn block(
        &mut self,
        inputs: &[Vec<Complex64>],
        b: usize,
        work: &mut Workspace,
        out: &mut [Vec<Complex64>],
        adapt: Option<&Adapt<'_>>,
    ) -> Result<Option<f64>> {
        let n = self.fft_size;
        let adv = self.block_advance;
        let m = inputs[0].len();
        let n0 = b * adv;
        // window start so the last `adv` circular-convolution outputs are valid
        let start = (n0 + self.decision_delay + adv) as isize - n as isize;
        for (i, x) in inputs.iter().enumerate() {
            let u = &mut work.u[i];
            for (j, v) in u.iter_mut().enumerate() {
                *v = x[(start + j as isize).rem_euclid(m as isize) as usize];
            }
            fft_in_place(u);
        }
        for o in 0..self.n_out {
            let y = &mut work.y;
            y.fill(ZERO);
            for i in 0..self.n_in {
                for ((acc, w), u) in y.iter_mut().zip(&self.weights[o * self.n_in + i]).zip(&work.u[i]) {
                    *acc += w * u;
                }
            }
            ifft_in_place(y);
            for t in 0..adv {
                let idx = n0 + t;
                if idx < m {
                    out[o][idx] = y[n - adv + t];
                }
            }
        }
        let Some(adapt) = adapt else {
            return Ok(None);
        };

        // errors
        let mut mse = 0.0;
        let mut count = 0usize;
        for o in 0..self.n_out {
            let e = &mut work.e[o];
            e.fill(ZERO);
            let reference = &adapt.reference.symbols[o];
            let dd = n0 >= adapt.training_end;
            let phase = if dd {
                // pilot phasor averaged over roughly PHASE_PILOTS recent pilots
                let block_pilots = (n0..(n0 + adv).min(m)).filter(|&k| adapt.reference.pilot_mask[k]);
                let (acc, count) = block_pilots.fold((ZERO, 0usize), |(a, c), k| {
                    (a + out[o][k] * reference[k].conj(), c + 1)
                });
                let memory = (1.0 - count as f64 / PHASE_PILOTS).clamp(0.0, 0.99);
                work.phasor[o] = work.phasor[o] * memory + acc;
                let p = work.phasor[o];
                if p.norm() > 0.0 { p / p.norm() } else { Complex64::new(1.0, 0.0) }
            } else {
                Complex64::new(1.0, 0.0)
            };
            for t in 0..adv {
                let k = n0 + t;
                if k >= m {
                    break;
                }
                let y = out[o][k];
                let d = if !dd || adapt.reference.pilot_mask[k] {
                    reference[k]
                } else {
                    let c = adapt.constellation;
                    c.points[c.nearest(y * phase.conj())] * phase
                };
                let err = d - y;
                e[n - adv + t] = err;
                mse += err.norm_sqr();
                count += 1;
            }
            fft_in_place(e);
        }

        // per-bin input power, smoothed across blocks
        let inst: Vec<f64> = (0..n)
            .map(|k| work.u.iter().map(|u| u[k].norm_sqr()).sum())
            .collect();
        if self.power.len() != n {
            self.power = inst;
        } else {
            for (p, q) in self.power.iter_mut().zip(&inst) {
                *p = 0.8 * *p + 0.2 * q;
            }
        }
        let floor = 1e-3 * self.power.iter().sum::<f64>() / n as f64 + f64::MIN_POSITIVE;
        let inv: Vec<f64> = self.power.iter().map(|p| 1.0 / (p + floor)).collect();

        let mu = adapt.mu;
        for o in 0..self.n_out {
            for i in 0..self.n_in {
                let g = &mut work.g;
                for k in 0..n {
                    g[k] = work.u[i][k].conj() * work.e[o][k] * inv[k];
                }
                ifft_in_place(g);
                g[self.taps..].fill(ZERO);
                fft_in_place(g);
                for (w, d) in self.weights[o * self.n_in + i].iter_mut().zip(g.iter()) {
                    *w += mu * d;
                }
            }
        }
        let energy = self.weight_energy();
        if !energy.is_finite() || energy > self.divergence_limit * self.initial_energy {
            return Err(Error::Adaptation { block: b });
        }
        Ok(Some(mse / count.max(1) as f64))
    }
}

struct Adapt<'a> {
    reference: &'a SymbolFrame,
    constellation: &'a ShapedConstellation,
    training_end: usize,
    mu: f64,
}

struct Workspace {
    u: Vec<Vec<Complex64>>,
    e: Vec<Vec<Complex64>>,
    y: Vec<Complex64>,
    g: Vec<Complex64>,
    phasor: Vec<Complex64>,
}

impl Workspace {
    fn new(s: &EqualizerState) -> Self {
        let n = s.fft_size;
        Workspace {
            u: vec![vec![ZERO; n]; s.n_in],
            e: vec![vec![ZERO; n]; s.n_out],
            y: vec![ZERO; n],
            g: vec![ZERO; n],
            phasor: vec![ZERO; s.n_out],
        }
    }
}

/// Per-sample-phase weight spectra of one channel's initial filter.
fn initial_response(
    n: usize,
    taps: usize,
    delay: usize,
    sps: usize,
    rolloff: Option<f64>,
) -> Result<Vec<Vec<Complex64>>> {
    let mut out = vec![vec![ZERO; n]; sps];
    match rolloff {
        None => out[0][delay] = Complex64::new(1.0, 0.0),
        Some(beta) => {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::Config(format!("initial roll-off {beta} not in (0, 1]")));
            }
            // matched filter on the sps-times finer grid, symbol rate 1
            let fine = n * sps;
            let grid = fft_bin_frequencies(fine, sps as f64)?;
            let spectrum: Vec<Complex64> =
                grid.iter().map(|f| Complex64::new(rrc_response(*f, 1.0, beta), 0.0)).collect();
            let g = ifft(&spectrum);
            for (p, taps_p) in out.iter_mut().enumerate() {
                for (k, w) in taps_p.iter_mut().enumerate().take(taps) {
                    let lag = (k as isize - delay as isize) * sps as isize - p as isize;
                    *w = g[lag.rem_euclid(fine as isize) as usize];
                }
            }
        }
    }
    for taps_p in &mut out {
        fft_in_place(taps_p);
    }
    Ok(out)
}

fn input_index(channel: usize, phase: usize, branch: usize, sps: usize, mode: EqualizerMode) -> usize {
    (channel * sps + phase) * mode.branches() + branch
}

/// Polyphase symbol-rate input streams: input `(c*sps + p)*B + b` is sample
/// phase `p` of channel `c`, conjugated when `b == 1` (widely-linear only).
pub fn compose_inputs(
    wave: &MultiChannelWaveform,
    sps: usize,
    mode: EqualizerMode,
) -> Result<Vec<Vec<Complex64>>> {
    if sps == 0 || !wave.len().is_multiple_of(sps) {
        return Err(Error::Domain(format!(
            "{} samples are not a whole number of {sps}-sample symbols",
            wave.len()
        )));
    }
    let mut out = Vec::with_capacity(wave.channels() * sps * mode.branches());
    for c in 0..wave.channels() {
        for p in 0..sps {
            let stream: Vec<Complex64> = wave.channel(c).iter().skip(p).step_by(sps).copied().collect();
            if mode == EqualizerMode::WidelyLinear {
                let conj = stream.iter().map(|v| v.conj()).collect();
                out.push(stream);
                out.push(conj);
            } else {
                out.push(stream);
            }
        }
    }
    Ok(out)
}

/// Real-composite input stack of the widely-linear equalizer.
pub fn widely_linear_compose(wave: &MultiChannelWaveform, sps: usize) -> Result<Vec<Vec<Complex64>>> {
    compose_inputs(wave, sps, EqualizerMode::WidelyLinear)
}

#[derive(Clone, Debug)]
pub struct EqualizedOutput {
    /// One sample per symbol per output channel, from the final pass.
    pub symbols: Vec<Vec<Complex64>>,
    /// Per-output SNR against the reference over the decision-directed part
    /// of the final pass (whole frame if there is none).
    pub residual_snr_db: Vec<f64>,
    /// `[in * n_out + out][tap]`, see [`EqualizerState::taps_time`].
    pub taps_time: Vec<Vec<Complex64>>,
    /// Mean squared error of every adapted block, in processing order.
    pub mse_trace: Vec<f64>,
    /// First symbol of the decision-directed segment (0 if there is none);
    /// `residual_snr_db` covers symbols from here on.
    pub eval_start: usize,
    pub state: EqualizerState,
}

/// Adapt `state` on `wave` against `reference` and equalize the frame.
///
/// The training segment is processed data-aided `training_epochs` times;
/// the final pass covers the whole frame, data-aided on the training segment
/// and decision-directed (pilots still data-aided) afterwards.
pub fn fd_mimo_equalize(
    wave: &MultiChannelWaveform,
    reference: &SymbolFrame,
    mut state: EqualizerState,
    schedule: &Schedule,
    constellation: &ShapedConstellation,
) -> Result<EqualizedOutput> {
    let channels = wave.channels() * state.sps * state.mode.branches();
    if channels != state.n_in || reference.channels() != state.n_out {
        return Err(Error::Domain(format!(
            "equalizer is {}x{} but input gives {} streams and reference has {} channels",
            state.n_in,
            state.n_out,
            channels,
            reference.channels()
        )));
    }
    let inputs = compose_inputs(wave, state.sps, state.mode)?;
    let m = inputs[0].len();
    if reference.len() != m {
        return Err(Error::Domain(format!(
            "reference has {} symbols, waveform carries {m}",
            reference.len()
        )));
    }
    if !(0.0..=1.0).contains(&schedule.training_fraction) {
        return Err(Error::Config("training fraction must be in [0, 1]".into()));
    }
    let adv = state.block_advance;
    let blocks = m.div_ceil(adv);
    let training_blocks = ((schedule.training_fraction * m as f64 / adv as f64).ceil() as usize)
        .clamp(1, blocks);
    let training_end = if schedule.training_fraction >= 1.0 { m } else { training_blocks * adv };

    let mut out = vec![vec![ZERO; m]; state.n_out];
    let mut work = Workspace::new(&state);
    let mut trace = Vec::new();
    let train = Adapt {
        reference,
        constellation,
        training_end: usize::MAX,
        mu: state.mu,
    };
    for _ in 0..schedule.training_epochs {
        for b in 0..training_blocks {
            if let Some(mse) = state.block(&inputs, b, &mut work, &mut out, Some(&train))? {
                trace.push(mse);
            }
        }
    }
    for b in 0..blocks {
        let dd = b * adv >= training_end;
        let step = Adapt {
            reference,
            constellation,
            training_end,
            mu: if dd { state.mu * schedule.tracking_mu_scale } else { state.mu },
        };
        if let Some(mse) = state.block(&inputs, b, &mut work, &mut out, Some(&step))? {
            trace.push(mse);
        }
    }

    let eval_start = if training_end < m { training_end } else { 0 };
    let residual_snr_db = (0..state.n_out)
        .map(|o| {
            let (sig, err) = (eval_start..m).fold((0.0, 0.0), |(s, e), k| {
                let d = reference.symbols[o][k];
                (s + d.norm_sqr(), e + (out[o][k] - d).norm_sqr())
            });
            10.0 * (sig / err.max(f64::MIN_POSITIVE)).log10()
        })
        .collect();
    Ok(EqualizedOutput {
        symbols: out,
        residual_snr_db,
        taps_time: state.taps_time(),
        mse_trace: trace,
        eval_start,
        state,
    })
}
