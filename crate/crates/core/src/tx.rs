//! Transmitter: shaped 36QAM, framing, pulse shaping, core multiplexing and
//! WDM assembly.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::complex_gaussian;
use crate::waveform::{fft, fft_in_place, ifft_in_place, mean_power};
use crate::{Error, MultiChannelWaveform, Result, Seed};

pub const SYMBOL_RATE_HZ: f64 = 140e9;
pub const CHANNEL_SPACING_HZ: f64 = 150e9;

/// The 36 lowest-energy points of the odd-integer 64QAM grid, i.e. the
/// `{±1, ±3, ±5}²` square, unnormalized, row-major from `-5-5j`.
pub fn truncated_36qam_points() -> Vec<Complex64> {
    let levels = [-5.0, -3.0, -1.0, 1.0, 3.0, 5.0];
    let mut pts = Vec::with_capacity(36);
    for &im in &levels {
        for &re in &levels {
            pts.push(Complex64::new(re, im));
        }
    }
    pts
}

pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Maxwell-Boltzmann probabilities `p(x) ∝ exp(-nu |x|²)` on the unnormalized
/// truncated grid.
pub fn mb_probabilities(nu: f64) -> Vec<f64> {
    let pts = truncated_36qam_points();
    let min_e = 2.0;
    let w: Vec<f64> = pts.iter().map(|p| (-nu * (p.norm_sqr() - min_e)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Probabilistically shaped 36QAM scaled to unit mean energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapedConstellation {
    pub points: Vec<Complex64>,
    pub probs: Vec<f64>,
    /// Maxwell-Boltzmann rate on the unnormalized grid.
    pub nu: f64,
    pub entropy_2d: f64,
}

impl ShapedConstellation {
    pub fn from_nu(nu: f64) -> Self {
        let probs = mb_probabilities(nu);
        let raw = truncated_36qam_points();
        let energy: f64 = raw.iter().zip(&probs).map(|(x, p)| p * x.norm_sqr()).sum();
        let scale = 1.0 / energy.sqrt();
        ShapedConstellation {
            points: raw.into_iter().map(|x| x * scale).collect(),
            entropy_2d: entropy_bits(&probs),
            probs,
            nu,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * x.norm_sqr())
            .sum()
    }

    /// Bits per 2D symbol of the unshaped alphabet, `log2(36)`.
    pub fn bits_per_symbol(&self) -> f64 {
        (self.len() as f64).log2()
    }

    /// Index of the point closest to `y`.
    pub fn nearest(&self, y: Complex64) -> usize {
        // square grid: slice each axis independently
        let step = (self.points[1] - self.points[0]).re;
        let origin = self.points[0];
        let q = |v: f64| ((v / step).round().clamp(0.0, 5.0)) as usize;
        q(y.im - origin.im) * 6 + q(y.re - origin.re)
    }
}

/// Maxwell-Boltzmann shaping hitting `target_entropy_2d` bits.
///
/// Entropy falls monotonically from `log2 36` at `nu = 0` towards 2 bits (the
/// four innermost points) as `nu` grows, so targets at or below 2 bits are
/// infeasible as well.
pub fn mb_shape(target_entropy_2d: f64) -> Result<ShapedConstellation> {
    let max = 36f64.log2();
    if !(target_entropy_2d > 2.0) || target_entropy_2d > max + 1e-12 {
        return Err(Error::Infeasible(format!(
            "2D entropy {target_entropy_2d} outside (2, {max:.6}] for truncated 36QAM"
        )));
    }
    if target_entropy_2d >= max - 1e-12 {
        return Ok(ShapedConstellation::from_nu(0.0));
    }
    let h = |nu: f64| entropy_bits(&mb_probabilities(nu));
    let mut lo = 0.0;
    let mut hi = 0.01;
    while h(hi) > target_entropy_2d {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > target_entropy_2d {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(ShapedConstellation::from_nu(0.5 * (lo + hi)))
}

/// Per-channel symbol streams with a shared pilot grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFrame {
    pub symbols: Vec<Vec<Complex64>>,
    pub pilot_mask: Vec<bool>,
    pub symbol_rate: f64,
}

impl SymbolFrame {
    pub fn channels(&self) -> usize {
        self.symbols.len()
    }

    pub fn len(&self) -> usize {
        self.pilot_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilot_mask.is_empty()
    }

    pub fn pilot_period(&self) -> Option<usize> {
        let mut it = self.pilot_mask.iter().enumerate().filter(|(_, p)| **p).map(|(i, _)| i);
        let first = it.next()?;
        it.next().map(|second| second - first)
    }

    /// Non-pilot symbols of channel `c`.
    pub fn data(&self, c: usize) -> Vec<Complex64> {
        self.symbols[c]
            .iter()
            .zip(&self.pilot_mask)
            .filter(|(_, p)| !**p)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Draw i.i.d. shaped symbols; when `pilot_rate > 0` every
/// `floor(1/pilot_rate)`-th position (starting at 0) carries a unit-power
/// QPSK pilot.
pub fn draw_frame(
    seed: &Seed,
    constellation: &ShapedConstellation,
    channels: usize,
    symbols: usize,
    pilot_rate: f64,
) -> Result<SymbolFrame> {
    if symbols == 0 {
        return Err(Error::Domain("frame needs at least one symbol".into()));
    }
    if !(0.0..1.0).contains(&pilot_rate) {
        return Err(Error::Domain(format!("pilot rate {pilot_rate} not in [0, 1)")));
    }
    let period = if pilot_rate > 0.0 {
        Some((1.0 / pilot_rate).floor() as usize)
    } else {
        None
    };
    let pilot_mask: Vec<bool> = (0..symbols)
        .map(|n| period.is_some_and(|p| n % p == 0))
        .collect();
    let sampler = WeightedAliasIndex::new(constellation.probs.clone())
        .map_err(|e| Error::Domain(format!("bad probabilities: {e}")))?;
    let qpsk = std::f64::consts::FRAC_1_SQRT_2;
    let out = (0..channels)
        .map(|c| {
            let mut rng = seed.child(c as u64).rng();
            pilot_mask
                .iter()
                .map(|&pilot| {
                    if pilot {
                        let re = if rng.random::<bool>() { qpsk } else { -qpsk };
                        let im = if rng.random::<bool>() { qpsk } else { -qpsk };
                        Complex64::new(re, im)
                    } else {
                        constellation.points[sampler.sample(&mut rng)]
                    }
                })
                .collect()
        })
        .collect();
    Ok(SymbolFrame {
        symbols: out,
        pilot_mask,
        symbol_rate: SYMBOL_RATE_HZ,
    })
}

/// Square-root raised-cosine amplitude response at `f`.
pub fn rrc_response(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let f1 = (1.0 - rolloff) * symbol_rate / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate / 2.0;
    if af <= f1 {
        1.0
    } else if af >= f2 {
        0.0
    } else {
        (0.5 * (1.0 + (PI / (rolloff * symbol_rate) * (af - f1)).cos())).sqrt()
    }
}

fn check_rolloff(rolloff: f64, symbol_rate: f64, spacing: f64) -> Result<()> {
    let max = spacing / symbol_rate - 1.0;
    if !(rolloff > 0.0) || rolloff > max + 1e-12 {
        return Err(Error::Config(format!(
            "roll-off {rolloff} must lie in (0, {max:.4}] to fit the {:.0} GHz grid",
            spacing / 1e9
        )));
    }
    Ok(())
}

/// Circular RRC filtering of each channel in the frequency domain, scaled so
/// a single upsampled unit symbol peaks at exactly 1.
pub fn rrc_filter(wave: &MultiChannelWaveform, symbol_rate: f64, rolloff: f64) -> MultiChannelWaveform {
    let freqs = wave.frequencies();
    let h: Vec<f64> = freqs.iter().map(|f| rrc_response(*f, symbol_rate, rolloff)).collect();
    let peak = h.iter().sum::<f64>() / h.len() as f64;
    let spectra = wave
        .spectra()
        .into_iter()
        .map(|mut s| {
            for (v, g) in s.iter_mut().zip(&h) {
                *v *= g / peak;
            }
            s
        })
        .collect();
    MultiChannelWaveform::from_spectra(spectra, wave.sample_rate, wave.center_frequency)
        .expect("filtering keeps shape")
}

/// Upsample to `sps` samples per symbol and RRC-shape; each channel is then
/// scaled to unit mean power.
pub fn rrc_modulate(
    frame: &SymbolFrame,
    sps: usize,
    rolloff: f64,
    channel_spacing_hz: f64,
) -> Result<MultiChannelWaveform> {
    if sps < 2 {
        return Err(Error::Config(format!("need at least 2 samples per symbol, got {sps}")));
    }
    check_rolloff(rolloff, frame.symbol_rate, channel_spacing_hz)?;
    let n = frame.len() * sps;
    let up = frame
        .symbols
        .iter()
        .map(|syms| {
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            for (k, s) in syms.iter().enumerate() {
                v[k * sps] = *s;
            }
            v
        })
        .collect();
    let fs = frame.symbol_rate * sps as f64;
    let wave = rrc_filter(&MultiChannelWaveform::new(up, fs, 0.0)?, frame.symbol_rate, rolloff);
    let samples = wave
        .into_samples()
        .into_iter()
        .map(|mut c| {
            let p = mean_power(&c);
            if p > 0.0 {
                let g = 1.0 / p.sqrt();
                c.iter_mut().for_each(|v| *v *= g);
            }
            c
        })
        .collect();
    MultiChannelWaveform::new(samples, fs, 0.0)
}

/// Samples at symbol instants `offset + k*sps`.
pub fn sample_symbols(wave: &MultiChannelWaveform, sps: usize, offset: usize) -> Vec<Vec<Complex64>> {
    wave.samples()
        .iter()
        .map(|c| c.iter().skip(offset).step_by(sps).copied().collect())
        .collect()
}

fn rotate(v: &[Complex64], shift: usize) -> Vec<Complex64> {
    // y[n] = x[n - shift] circularly
    let n = v.len();
    let s = shift % n;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&v[n - s..]);
    out.extend_from_slice(&v[..n - s]);
    out
}

/// Result of splitting one X/Y tributary pair onto all cores.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreMux {
    pub wave: MultiChannelWaveform,
    /// Reference symbols per output channel after the core delays.
    pub frame: SymbolFrame,
    /// Per-core delay, symbols.
    pub delays_symbols: Vec<usize>,
}

/// Emulate a 1xN splitter plus delay lines: every core carries the same X/Y
/// pair, circularly delayed by a distinct multiple of `min_spacing_symbols`
/// (rounded up to the pilot period so pilots stay aligned across cores).
pub fn core_mux_emulate(
    wave: &MultiChannelWaveform,
    frame: &SymbolFrame,
    s_channels: usize,
    min_spacing_symbols: usize,
    seed: &Seed,
) -> Result<CoreMux> {
    if wave.channels() != 2 || frame.channels() != 2 {
        return Err(Error::Domain("core multiplexing expects one X/Y pair".into()));
    }
    if s_channels < 2 || !s_channels.is_multiple_of(2) {
        return Err(Error::Domain(format!("channel count {s_channels} must be even")));
    }
    let cores = s_channels / 2;
    let m = frame.len();
    let sps = wave.len() / m;
    let spacing = match frame.pilot_period() {
        Some(p) => min_spacing_symbols.div_ceil(p).max(1) * p,
        None => min_spacing_symbols.max(1),
    };
    if cores > 1 && (cores - 1) * spacing >= m {
        return Err(Error::Config(format!(
            "{cores} cores at {spacing}-symbol spacing exceed the {m}-symbol frame"
        )));
    }
    let mut slots: Vec<usize> = (0..cores).collect();
    if cores > 1 {
        slots.shuffle(&mut seed.rng());
    }
    let delays: Vec<usize> = slots.iter().map(|s| s * spacing).collect();
    let mut samples = Vec::with_capacity(s_channels);
    let mut symbols = Vec::with_capacity(s_channels);
    for d in &delays {
        for pol in 0..2 {
            samples.push(rotate(wave.channel(pol), d * sps));
            symbols.push(rotate(&frame.symbols[pol], *d));
        }
    }
    Ok(CoreMux {
        wave: MultiChannelWaveform::new(samples, wave.sample_rate, wave.center_frequency)?,
        frame: SymbolFrame {
            symbols,
            pilot_mask: frame.pilot_mask.clone(),
            symbol_rate: frame.symbol_rate,
        },
        delays_symbols: delays,
    })
}

/// Apply a common Wiener laser phase walk with Lorentzian `linewidth_hz`.
pub fn apply_phase_noise(wave: &MultiChannelWaveform, linewidth_hz: f64, seed: &Seed) -> MultiChannelWaveform {
    if linewidth_hz <= 0.0 {
        return wave.clone();
    }
    let step = Normal::new(0.0, (TAU * linewidth_hz / wave.sample_rate).sqrt()).expect("finite std");
    let mut rng = seed.rng();
    let mut phase = 0.0;
    let rot: Vec<Complex64> = (0..wave.len())
        .map(|_| {
            phase += step.sample(&mut rng);
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    let samples = wave
        .samples()
        .iter()
        .map(|c| c.iter().zip(&rot).map(|(a, b)| a * b).collect())
        .collect();
    MultiChannelWaveform::new(samples, wave.sample_rate, wave.center_frequency).expect("same shape")
}

pub fn occupied_band_hz(n_channels: usize, spacing_hz: f64) -> f64 {
    n_channels as f64 * spacing_hz
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WdmConfig {
    pub n_channels: usize,
    pub spacing_hz: f64,
    /// Dummy power per slot relative to the SUT, dB.
    pub dummy_relative_power_db: f64,
}

impl Default for WdmConfig {
    fn default() -> Self {
        WdmConfig {
            n_channels: 31,
            spacing_hz: CHANNEL_SPACING_HZ,
            dummy_relative_power_db: 0.0,
        }
    }
}

/// Waveform-level WDM neighbourhood of the SUT: the SUT in the centre slot
/// and ASE-like dummies (Gaussian noise with the SUT's spectral shape) in the
/// adjacent slots that exist. Only up to three slots are simulated; the rest
/// of the comb enters rate accounting analytically.
///
/// The output is upsampled by the smallest integer factor whose band covers
/// all simulated slots.
pub fn wdm_assemble(
    sut: &MultiChannelWaveform,
    symbol_rate: f64,
    rolloff: f64,
    config: &WdmConfig,
    seed: &Seed,
) -> Result<MultiChannelWaveform> {
    if config.n_channels == 0 {
        return Err(Error::Config("WDM comb needs at least one channel".into()));
    }
    check_rolloff(rolloff, symbol_rate, config.spacing_hz)?;
    if config.n_channels == 1 {
        return Ok(sut.clone());
    }
    let offsets: Vec<f64> = if config.n_channels == 2 {
        vec![config.spacing_hz]
    } else {
        vec![-config.spacing_hz, config.spacing_hz]
    };
    let span = config.spacing_hz * (offsets.len() + 1) as f64;
    let factor = (span / sut.sample_rate).ceil().max(1.0) as usize;
    let n = sut.len();
    let big = n * factor;
    let fs = sut.sample_rate * factor as f64;
    let freqs = crate::units::fft_bin_frequencies(big, fs)?;
    let rel = crate::units::db_to_linear(config.dummy_relative_power_db);
    let dummy_seed = seed.named("wdm-dummy");

    let spectra = sut
        .samples()
        .iter()
        .enumerate()
        .map(|(c, x)| {
            let small = fft(x);
            let mut out = vec![Complex64::new(0.0, 0.0); big];
            // zero-padded upsampling; the Nyquist bin of an even grid is split
            let half = n / 2;
            for k in 0..n {
                let dst = if 2 * k < n { k } else { big - (n - k) };
                out[dst] = small[k] * factor as f64;
            }
            if n.is_multiple_of(2) {
                let v = small[half] * factor as f64 / 2.0;
                out[big - half] = v;
                out[half] = v;
            }
            let sut_power = mean_power(x);
            for (i, off) in offsets.iter().enumerate() {
                let mut rng = dummy_seed.child(i as u64).child(c as u64).rng();
                let mut dummy: Vec<Complex64> = freqs
                    .iter()
                    .map(|f| complex_gaussian(&mut rng, 1.0) * rrc_response(f - off, symbol_rate, rolloff))
                    .collect();
                let mut t = dummy.clone();
                ifft_in_place(&mut t);
                let g = (rel * sut_power / mean_power(&t)).sqrt();
                dummy.iter_mut().for_each(|v| *v *= g);
                for (o, d) in out.iter_mut().zip(&dummy) {
                    *o += d;
                }
            }
            out
        })
        .collect();
    MultiChannelWaveform::from_spectra(spectra, fs, sut.center_frequency)
}

/// Receiver band-pass: keep `|f - offset| < spacing/2`, shift to baseband
/// and decimate by `factor`.
pub fn wdm_extract(
    wave: &MultiChannelWaveform,
    offset_hz: f64,
    spacing_hz: f64,
    factor: usize,
) -> Result<MultiChannelWaveform> {
    let n = wave.len();
    if factor == 0 || !n.is_multiple_of(factor) {
        return Err(Error::Domain(format!("cannot decimate {n} samples by {factor}")));
    }
    let small = n / factor;
    let fs = wave.sample_rate;
    let freqs = wave.frequencies();
    let df = fs / n as f64;
    let spectra = wave
        .samples()
        .iter()
        .map(|x| {
            let mut s = x.clone();
            fft_in_place(&mut s);
            let mut out = vec![Complex64::new(0.0, 0.0); small];
            for (k, f) in freqs.iter().enumerate() {
                let rel = f - offset_hz;
                if rel.abs() >= spacing_hz / 2.0 || 2.0 * rel.abs() >= fs / factor as f64 {
                    continue;
                }
                let dst = ((rel / df).round() as isize).rem_euclid(small as isize) as usize;
                out[dst] += s[k] / factor as f64;
            }
            out
        })
        .collect();
    MultiChannelWaveform::from_spectra(spectra, fs / factor as f64, wave.center_frequency + offset_hz)
}
