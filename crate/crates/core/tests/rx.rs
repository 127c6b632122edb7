use ccmcf::channel::{apply_link, build_link, link_transfer, LinkConfig};
use ccmcf::metrics::{gmi, memory_length, residual_snr_db};
use ccmcf::rx::taps::{fractional_response, TapDump};
use ccmcf::rx::*;
use ccmcf::tx::*;
use ccmcf::waveform::{fft, ifft};
use ccmcf::{haar_unitary, Complex64, MultiChannelWaveform, Seed, SpectralTransfer};
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;

const SPS: usize = 2;

struct Setup {
    constellation: ShapedConstellation,
    frame: SymbolFrame,
    wave: MultiChannelWaveform,
}

fn transmitter(modes: usize, log2_symbols: u32, seed: u64) -> Setup {
    let constellation = mb_shape(4.688).unwrap();
    let s = Seed::new(seed);
    let frame = draw_frame(&s.named("frame"), &constellation, 2, 1 << log2_symbols, 1.0 / 64.0).unwrap();
    let wave = rrc_modulate(&frame, SPS, 0.05, CHANNEL_SPACING_HZ).unwrap();
    if modes == 2 {
        return Setup { constellation, frame, wave };
    }
    let mux = core_mux_emulate(&wave, &frame, modes, 1024, &s.named("mux")).unwrap();
    Setup {
        constellation,
        frame: mux.frame,
        wave: mux.wave,
    }
}

fn white_noise(like: &MultiChannelWaveform, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = Seed::new(seed).rng();
    (0..like.channels())
        .map(|_| {
            (0..like.len())
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect()
        })
        .collect()
}

fn add_scaled(wave: &MultiChannelWaveform, noise: &[Vec<Complex64>], sigma: f64) -> MultiChannelWaveform {
    let samples = wave
        .samples()
        .iter()
        .zip(noise)
        .map(|(c, n)| c.iter().zip(n).map(|(a, b)| a + b * sigma).collect())
        .collect();
    MultiChannelWaveform::new(samples, wave.sample_rate, wave.center_frequency).unwrap()
}

/// Per-bin matrix multiply of a waveform.
fn apply_matrices(wave: &MultiChannelWaveform, h: &SpectralTransfer) -> MultiChannelWaveform {
    let spectra = wave.spectra();
    let n = wave.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; h.matrices[0].nrows()];
    for k in 0..n {
        let m = &h.matrices[k];
        for (r, o) in out.iter_mut().enumerate() {
            o[k] = (0..m.ncols()).map(|c| m[(r, c)] * spectra[c][k]).sum();
        }
    }
    MultiChannelWaveform::from_spectra(out, wave.sample_rate, wave.center_frequency).unwrap()
}

fn equalize(
    wave: &MultiChannelWaveform,
    setup: &Setup,
    config: EqualizerConfig,
) -> EqualizedOutput {
    let state = EqualizerState::new(&config, setup.frame.channels()).unwrap();
    fd_mimo_equalize(wave, &setup.frame, state, &Schedule::default(), &setup.constellation).unwrap()
}

/// Data symbols of channel `c` in the second half of the frame.
fn tail_data(frame: &SymbolFrame, out: &[Vec<Complex64>], c: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let start = frame.len() / 2;
    (start..frame.len())
        .filter(|&k| !frame.pilot_mask[k])
        .map(|k| (frame.symbols[c][k], out[c][k]))
        .unzip()
}

fn min_snr(frame: &SymbolFrame, out: &[Vec<Complex64>]) -> f64 {
    (0..frame.channels())
        .map(|c| {
            let (tx, rx) = tail_data(frame, out, c);
            residual_snr_db(&tx, &rx).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn identity_channel_converges_above_40_db() {
    let s = transmitter(4, 14, 1);
    let out = equalize(&s.wave, &s, EqualizerConfig { fft_size: 256, ..Default::default() });
    for snr in &out.residual_snr_db {
        assert!(*snr > 40.0, "{snr}");
    }
}

#[test]
fn unitary_channel_within_zero_forcing_oracle() {
    let s = transmitter(4, 15, 2);
    let cfg = LinkConfig {
        modes: 4,
        sigma_g_db: 0.0,
        noiseless: true,
        beta2_ps2_per_km: 0.0,
        ..Default::default()
    };
    let link = build_link(&cfg, &Seed::new(2).named("link")).unwrap();
    let clean = apply_link(&s.wave, &link, &Seed::new(0)).unwrap();
    let h = link_transfer(&link, &s.wave.frequencies());
    let inverse = SpectralTransfer::new(
        h.freq_grid.clone(),
        h.matrices.iter().map(|m| m.clone().try_inverse().unwrap()).collect(),
    )
    .unwrap();
    let noise = white_noise(&clean, 22);
    let oracle_snr = |sigma: f64| {
        let zf = apply_matrices(&add_scaled(&clean, &noise, sigma), &inverse);
        let mf = rrc_filter(&zf, SYMBOL_RATE_HZ, 0.05);
        min_snr(&s.frame, &sample_symbols(&mf, SPS, 0))
    };
    // scale the noise so the oracle sits at 18 dB
    let probe = oracle_snr(0.1);
    let sigma = 0.1 * 10f64.powf((probe - 18.0) / 20.0);
    let oracle = oracle_snr(sigma);
    assert!((oracle - 18.0).abs() < 0.05, "{oracle}");

    let rx = add_scaled(&clean, &noise, sigma);
    let out = equalize(&rx, &s, EqualizerConfig { fft_size: 256, ..Default::default() });
    let eq = min_snr(&s.frame, &out.symbols);
    assert!((eq - oracle).abs() < 0.3, "equalizer {eq} dB vs oracle {oracle} dB");
}

fn iq_swapped(wave: &MultiChannelWaveform, c: usize) -> MultiChannelWaveform {
    let mut samples = wave.samples().to_vec();
    samples[c].iter_mut().for_each(|v| *v = Complex64::new(v.im, v.re));
    MultiChannelWaveform::new(samples, wave.sample_rate, wave.center_frequency).unwrap()
}

fn channel_gmi(s: &Setup, out: &EqualizedOutput, c: usize) -> f64 {
    let (tx, rx) = tail_data(&s.frame, &out.symbols, c);
    // a stream uncorrelated with its reference carries no information
    gmi(&tx, &rx, &s.constellation).map_or(0.0, |g| g.gmi)
}

#[test]
fn widely_linear_undoes_iq_swap() {
    let s = transmitter(2, 14, 3);
    let rx = iq_swapped(&s.wave, 0);
    let base = EqualizerConfig { fft_size: 128, ..Default::default() };
    let sl = equalize(&rx, &s, base.clone());
    let wl = equalize(&rx, &s, EqualizerConfig { mode: EqualizerMode::WidelyLinear, ..base });
    assert_eq!(wl.state.n_in, 2 * 2 * 2);
    let (g_sl, g_wl) = (channel_gmi(&s, &sl, 0), channel_gmi(&s, &wl, 0));
    assert!(g_wl - g_sl > 1.0, "widely linear {g_wl}, strictly linear {g_sl}");
    assert!(g_wl > 4.6);
}

#[test]
fn widely_linear_matches_strictly_linear_without_iq_impairment() {
    let s = transmitter(2, 15, 4);
    let noise = white_noise(&s.wave, 44);
    let rx = add_scaled(&s.wave, &noise, 0.15);
    let base = EqualizerConfig { fft_size: 128, ..Default::default() };
    let sl = min_snr(&s.frame, &equalize(&rx, &s, base.clone()).symbols);
    let wl = min_snr(
        &s.frame,
        &equalize(&rx, &s, EqualizerConfig { mode: EqualizerMode::WidelyLinear, ..base }).symbols,
    );
    assert!((sl - wl).abs() < 0.2, "strictly {sl} dB, widely {wl} dB");
}

#[test]
fn widely_linear_dimensions_at_full_scale() {
    let cfg = EqualizerConfig { mode: EqualizerMode::WidelyLinear, ..Default::default() };
    let st = EqualizerState::new(&cfg, 24).unwrap();
    assert_eq!((st.n_in, st.n_out, st.fft_size), (96, 24, 2048));
}

#[test]
fn equalizer_config_is_validated() {
    let bad = |c: EqualizerConfig| EqualizerState::new(&c, 2).is_err();
    assert!(bad(EqualizerConfig { fft_size: 1000, ..Default::default() }));
    assert!(bad(EqualizerConfig { fft_size: 256, block_advance: Some(200), ..Default::default() }));
    assert!(bad(EqualizerConfig { fft_size: 256, taps: Some(200), ..Default::default() }));
    assert!(bad(EqualizerConfig { mu: 0.0, ..Default::default() }));
}

/// Two modes delayed by +-400 ps and then fully mixed.
fn long_memory_channel(wave: &MultiChannelWaveform) -> MultiChannelWaveform {
    let u = haar_unitary(&mut Seed::new(5).rng(), 2);
    let f = wave.frequencies();
    let delays = [400e-12, -400e-12];
    let h = SpectralTransfer::new(
        f.clone(),
        f.iter()
            .map(|fk| {
                let d = nalgebra::DMatrix::from_fn(2, 2, |i, j| {
                    if i == j {
                        Complex64::from_polar(1.0, -TAU * fk * delays[i])
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                &u * d
            })
            .collect(),
    )
    .unwrap();
    apply_matrices(wave, &h)
}

#[test]
fn fft_size_must_cover_channel_memory() {
    let s = transmitter(2, 16, 5);
    let noise = white_noise(&s.wave, 55);
    let rx = add_scaled(&long_memory_channel(&s.wave), &noise, 0.1);
    let long = min_snr(&s.frame, &equalize(&rx, &s, EqualizerConfig::default()).symbols);
    let short_cfg = EqualizerConfig { fft_size: 64, ..Default::default() };
    let short = match EqualizerState::new(&short_cfg, 2)
        .and_then(|st| fd_mimo_equalize(&rx, &s.frame, st, &Schedule::default(), &s.constellation))
    {
        Ok(o) => min_snr(&s.frame, &o.symbols),
        Err(_) => f64::NEG_INFINITY,
    };
    let awgn = min_snr(&s.frame, &sample_symbols(&rrc_filter(&add_scaled(&s.wave, &noise, 0.1), SYMBOL_RATE_HZ, 0.05), SPS, 0));
    assert!(long > awgn - 1.0, "2048-point equalizer {long} dB vs noise limit {awgn} dB");
    assert!(long - short > 3.0, "64-point equalizer {short} dB vs {long} dB");
}

#[test]
fn dispersion_compensation_is_exact_inverse() {
    let s = transmitter(2, 12, 6);
    let cfg = LinkConfig { modes: 2, spans: 2, noiseless: true, ..Default::default() };
    let link = build_link(&cfg, &Seed::new(6)).unwrap();
    let with_cd = apply_link(&s.wave, &link, &Seed::new(0)).unwrap();
    let without = apply_link(&s.wave, &link.without_dispersion(), &Seed::new(0)).unwrap();
    let comp = cd_compensate(&with_cd, cfg.beta2_ps2_per_km, cfg.total_length_km());
    for c in 0..2 {
        for (a, b) in comp.channel(c).iter().zip(without.channel(c)) {
            assert!((a - b).norm() < 1e-8);
        }
    }
    assert_eq!(cd_compensate(&s.wave, -21.7, 0.0), s.wave);
}

#[test]
fn dispersion_phase_at_band_edge() {
    // (beta2 / 2) w^2 L at 70 GHz over 1016.5 km, beta2 in s^2/km
    let w = TAU * 70e9;
    let phase = 0.5 * -21.7e-24 * w * w * 1016.5;
    assert!((phase - -2133.5).abs() < 0.1, "{phase}");
    // the compensator applies the opposite phase on a single tone
    let n = 4096;
    let fs = 280e9;
    let k = (70e9 / fs * n as f64).round() as usize;
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    spec[k] = Complex64::new(1.0, 0.0);
    let tone = MultiChannelWaveform::new(vec![ifft(&spec)], fs, 0.0).unwrap();
    let out = fft(cd_compensate(&tone, -21.7, 1016.5).channel(0));
    let f = k as f64 * fs / n as f64;
    let expect = Complex64::from_polar(1.0, 0.5 * -21.7e-24 * (TAU * f).powi(2) * 1016.5);
    assert!((out[k] - expect).norm() < 1e-6);
}

#[test]
fn frame_offset_is_recovered() {
    let s = transmitter(4, 13, 7);
    let cfg = LinkConfig { modes: 4, spans: 2, ..Default::default() };
    let link = build_link(&cfg, &Seed::new(7)).unwrap();
    let rx = apply_link(&s.wave, &link, &Seed::new(70)).unwrap();
    let rx = cd_compensate(&rx, cfg.beta2_ps2_per_km, cfg.total_length_km());
    let m = s.frame.len();
    for lag in [0usize, 1, 345, 4000] {
        let b2b = align(&s.wave, m - lag, SPS);
        assert_eq!(find_frame_offset(&b2b, &s.frame, SPS), lag);
        assert_eq!(align(&b2b, lag, SPS), s.wave);
        // the link smears timing over its memory; the estimate stays within
        // one symbol, which the equalizer absorbs
        let shifted = align(&rx, m - lag, SPS);
        let found = find_frame_offset(&shifted, &s.frame, SPS);
        let err = (found as isize - lag as isize + m as isize / 2).rem_euclid(m as isize) - m as isize / 2;
        assert!(err.abs() <= 1, "lag {lag} found {found}");
    }
}

#[test]
fn exported_taps_preserve_energy() {
    let s = transmitter(2, 13, 8);
    let out = equalize(&s.wave, &s, EqualizerConfig { fft_size: 256, ..Default::default() });
    let st = &out.state;
    for i in 0..st.n_in {
        for o in 0..st.n_out {
            let w: f64 = st.weights[o * st.n_in + i].iter().map(|v| v.norm_sqr()).sum();
            let t: f64 = out.taps_time[i * st.n_out + o].iter().map(|v| v.norm_sqr()).sum();
            assert!((w / st.fft_size as f64 - t).abs() <= 1e-9 * t.max(1.0));
        }
    }
}

#[test]
fn tap_dump_round_trips_through_a_file() {
    let s = transmitter(2, 12, 9);
    let out = equalize(&s.wave, &s, EqualizerConfig { fft_size: 64, ..Default::default() });
    let dump = TapDump::from_state(&out.state, SYMBOL_RATE_HZ);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("taps.bin");
    dump.write(&path).unwrap();
    let back = TapDump::read(&path).unwrap();
    assert_eq!(back, dump);
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, 32 + 16 * 4 * 2 * 64);
    assert!(TapDump::from_bytes(&dump.to_bytes()[..40]).is_err());
}

#[test]
fn strictly_linear_filter_is_linear() {
    let s = transmitter(2, 12, 10);
    let out = equalize(&s.wave, &s, EqualizerConfig { fft_size: 128, ..Default::default() });
    let alpha = Complex64::new(-0.7, 1.9);
    let y = out.state.filter(&s.wave).unwrap();
    let ya = out.state.filter(&s.wave.clone().scaled(alpha)).unwrap();
    for (a, b) in y.iter().flatten().zip(ya.iter().flatten()) {
        assert!((a * alpha - b).norm() < 1e-10 * (1.0 + b.norm()));
    }
}

#[test]
fn training_error_decreases_over_epochs() {
    let s = transmitter(4, 14, 11);
    let cfg = LinkConfig { modes: 4, spans: 1, ..Default::default() };
    let link = build_link(&cfg, &Seed::new(11)).unwrap();
    let rx = apply_link(&s.wave, &link, &Seed::new(110)).unwrap();
    let rx = cd_compensate(&rx, cfg.beta2_ps2_per_km, cfg.total_length_km());
    let out = equalize(&rx, &s, EqualizerConfig { fft_size: 256, ..Default::default() });
    let blocks = out.mse_trace.len() - s.frame.len() / 128;
    let per_epoch = blocks / Schedule::default().training_epochs;
    let means: Vec<f64> = out.mse_trace[..blocks]
        .chunks(per_epoch)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{means:?}");
    }
    assert!(means[means.len() - 1] < 0.01 * means[0]);
}

#[test]
fn diverging_step_size_reports_block() {
    let s = transmitter(2, 12, 12);
    let cfg = EqualizerConfig { fft_size: 64, mu: 50.0, ..Default::default() };
    let st = EqualizerState::new(&cfg, 2).unwrap();
    let r = fd_mimo_equalize(&s.wave, &s.frame, st, &Schedule::default(), &s.constellation);
    assert!(matches!(r, Err(ccmcf::Error::Adaptation { .. })));
}

#[test]
fn tap_memory_matches_link_memory() {
    let modes = 4;
    let s = transmitter(modes, 16, 13);
    let cfg = LinkConfig { modes, spans: 8, noiseless: true, sigma_g_db: 0.0, ..Default::default() };
    let link = build_link(&cfg, &Seed::new(13)).unwrap();
    let rx = apply_link(&s.wave, &link, &Seed::new(0)).unwrap();
    let rx = cd_compensate(&rx, cfg.beta2_ps2_per_km, cfg.total_length_km());
    let out = equalize(&rx, &s, EqualizerConfig { fft_size: 1024, ..Default::default() });
    let tau_taps = memory_length(&out.taps_time, SYMBOL_RATE_HZ, 0.9).unwrap();

    let n = 1024;
    let fs = SPS as f64 * SYMBOL_RATE_HZ;
    let grid = ccmcf::units::fft_bin_frequencies(n, fs).unwrap();
    let h = link_transfer(&link.without_dispersion(), &grid);
    let tau_link = memory_length(&h.impulse_responses(), fs, 0.9).unwrap();
    assert!((tau_taps / tau_link - 1.0).abs() < 0.15, "taps {tau_taps} ns, link {tau_link} ns");

    // the fractional response of the converged filter inverts the link in band
    let band: Vec<f64> = grid.iter().copied().filter(|f| f.abs() < 60e9).collect();
    let g = fractional_response(&out.state, SYMBOL_RATE_HZ, &band);
    let hb = link_transfer(&link.without_dispersion(), &band);
    let worst = g
        .matrices
        .iter()
        .zip(&hb.matrices)
        .map(|(a, b)| {
            let p = a * b;
            let scale = p.trace() / modes as f64;
            (p / scale - nalgebra::DMatrix::identity(modes, modes)).norm()
        })
        .fold(0.0, f64::max);
    assert!(worst < 0.1, "{worst}");
}

fn cpr_setup(seed: u64, m: usize, snr_db: f64) -> (ShapedConstellation, SymbolFrame, Vec<Complex64>) {
    let c = mb_shape(4.688).unwrap();
    let frame = draw_frame(&Seed::new(seed), &c, 1, m, 1.0 / 64.0).unwrap();
    let sigma = (10f64.powf(-snr_db / 10.0) / 2.0).sqrt();
    let mut rng = Seed::new(seed).named("awgn").rng();
    let noisy = frame.symbols[0]
        .iter()
        .map(|x| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            x + Complex64::new(a, b) * sigma
        })
        .collect();
    (c, frame, noisy)
}

fn data_snr(frame: &SymbolFrame, y: &[Complex64]) -> f64 {
    let (tx, rx): (Vec<_>, Vec<_>) = (0..frame.len())
        .filter(|&k| !frame.pilot_mask[k])
        .map(|k| (frame.symbols[0][k], y[k]))
        .unzip();
    residual_snr_db(&tx, &rx).unwrap()
}

#[test]
fn cpr_removes_static_rotation_exactly() {
    let (_, frame, _) = cpr_setup(14, 4096, 20.0);
    let rot = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let rx: Vec<Complex64> = frame.symbols[0].iter().map(|x| x * rot).collect();
    let out = carrier_phase_recover(&rx, &frame.pilot_mask, &frame.symbols[0], 64, 0.05);
    for (a, b) in out.symbols.iter().zip(&frame.symbols[0]) {
        assert!((a - b).norm() < 1e-12);
    }
    assert!(!out.low_pilot_snr);
    let plain = carrier_phase_recover(&frame.symbols[0], &frame.pilot_mask, &frame.symbols[0], 64, 0.05);
    assert!(plain.phase.iter().all(|p| p.abs() < 1e-12));
}

#[test]
fn cpr_penalty_under_laser_phase_noise() {
    let m = 1 << 18;
    let (_, frame, noisy) = cpr_setup(15, m, 16.0);
    // Wiener phase at 10 kHz combined linewidth, one step per symbol
    let step = (TAU * 10e3 / SYMBOL_RATE_HZ).sqrt();
    let mut rng = Seed::new(15).named("phase").rng();
    let mut theta = 0.0;
    let phase: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            theta += step * z;
            theta
        })
        .collect();
    let rx: Vec<Complex64> = noisy.iter().zip(&phase).map(|(y, p)| y * Complex64::from_polar(1.0, *p)).collect();
    let genie: Vec<Complex64> = rx.iter().zip(&phase).map(|(y, p)| y * Complex64::from_polar(1.0, -p)).collect();
    let out = carrier_phase_recover(&rx, &frame.pilot_mask, &frame.symbols[0], 64, 0.05);
    let penalty = data_snr(&frame, &genie) - data_snr(&frame, &out.symbols);
    assert!(penalty < 0.1, "{penalty} dB");
}

#[test]
fn cpr_flags_unusable_pilots() {
    let (_, frame, noisy) = cpr_setup(16, 8192, -5.0);
    let out = carrier_phase_recover(&noisy, &frame.pilot_mask, &frame.symbols[0], 4, 0.05);
    assert!(out.low_pilot_snr);
}
