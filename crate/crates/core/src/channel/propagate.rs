use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{LinkRealization, SpanRealization};
use crate::linalg::{self, complex_gaussian, from_row_major, identity, matmul, matvec, scale_rows};
use crate::units::{db_to_linear, dbm_to_watts, PLANCK, PS, PS2_PER_KM, REFERENCE_FREQUENCY_HZ};
use crate::{Error, MultiChannelWaveform, Result, Seed, SpectralTransfer};

fn delay_phasor(f_hz: f64, tau_ps: f64) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * f_hz * tau_ps * PS)
}

fn dispersion_phasor(f_hz: f64, beta2_ps2_per_km: f64, length_km: f64) -> Complex64 {
    let w = TAU * f_hz;
    Complex64::from_polar(1.0, -0.5 * beta2_ps2_per_km * PS2_PER_KM * w * w * length_km)
}

struct SpanKernel {
    sections: Vec<(Vec<Complex64>, Vec<f64>)>,
    mdl: Vec<Complex64>,
    amplitude: f64,
}

impl SpanKernel {
    fn new(span: &SpanRealization) -> Self {
        SpanKernel {
            sections: span
                .sections
                .iter()
                .map(|s| (linalg::to_row_major(&s.coupling), s.delays_ps.clone()))
                .collect(),
            mdl: linalg::to_row_major(&span.mdl.matrix()),
            amplitude: span.net_amplitude(),
        }
    }
}

/// End-to-end transfer matrices `H(f)` of the link on `freq_grid`.
///
/// Per span the input first sees the static input phases/skew, then each
/// section's delays `diag(exp(-j 2 pi f tau))` followed by its coupling, then
/// the MDL stage and the net loss/gain. Dispersion is one scalar phase for the
/// whole length.
pub fn link_transfer(link: &LinkRealization, freq_grid: &[f64]) -> SpectralTransfer {
    let n = link.modes();
    let kernels: Vec<SpanKernel> = link.spans.iter().map(SpanKernel::new).collect();
    let matrices = freq_grid
        .par_iter()
        .map(|&f| {
            let mut m = identity(n);
            let mut scratch = vec![linalg::ZERO; n * n];
            let mut d = vec![linalg::ZERO; n];
            for (span, kernel) in link.spans.iter().zip(&kernels) {
                for (c, di) in d.iter_mut().enumerate() {
                    *di = delay_phasor(f, span.input_delays_ps[c])
                        * Complex64::from_polar(1.0, span.input_phases[c]);
                }
                scale_rows(&mut m, &d, n);
                for (coupling, delays) in &kernel.sections {
                    for (di, tau) in d.iter_mut().zip(delays) {
                        *di = delay_phasor(f, *tau);
                    }
                    scale_rows(&mut m, &d, n);
                    matmul(coupling, &m, &mut scratch, n);
                    std::mem::swap(&mut m, &mut scratch);
                }
                matmul(&kernel.mdl, &m, &mut scratch, n);
                std::mem::swap(&mut m, &mut scratch);
                for v in &mut m {
                    *v *= kernel.amplitude;
                }
            }
            let cd = dispersion_phasor(f, link.beta2_ps2_per_km, link.total_length_km);
            for v in &mut m {
                *v *= cd;
            }
            from_row_major(n, &m)
        })
        .collect();
    SpectralTransfer::new(freq_grid.to_vec(), matrices).expect("one matrix per frequency")
}

/// ASE variance per complex sample added by one span's amplifier, relative
/// to the launch power of a single tributary.
///
/// The noise power spectral density per tributary is
/// `(NF*G - 1) h nu / 2`, integrated over the full simulation bandwidth.
pub fn ase_noise_variance(span: &SpanRealization, sample_rate: f64, launch_power_dbm: f64) -> f64 {
    let nf = db_to_linear(span.amp_noise_figure_db);
    let g = db_to_linear(span.amp_gain_db);
    let psd = (nf * g - 1.0).max(0.0) * PLANCK * REFERENCE_FREQUENCY_HZ;
    psd * sample_rate / 2.0 / dbm_to_watts(launch_power_dbm)
}

/// Multiply `spec` (natural FFT order, `df` bin spacing) by `exp(-j 2 pi f tau)`.
///
/// The phasor is advanced by recurrence and re-anchored every 64 bins.
fn apply_delay(spec: &mut [Complex64], df: f64, tau_ps: f64) {
    if tau_ps == 0.0 {
        return;
    }
    let n = spec.len();
    // positive-frequency bins are those with 2k < n
    let half = n.div_ceil(2);
    let step = delay_phasor(df, tau_ps);
    let mut k = 0;
    while k < half {
        let mut p = delay_phasor(k as f64 * df, tau_ps);
        let end = (k + 64).min(half);
        for v in &mut spec[k..end] {
            *v *= p;
            p *= step;
        }
        k = end;
    }
    // negative frequencies, walking down from -df
    let back = step.conj();
    let mut k = n;
    while k > half {
        let m = n - k + 1;
        let mut p = delay_phasor(-(m as f64) * df, tau_ps);
        let start = k.saturating_sub(64).max(half);
        for v in spec[start..k].iter_mut().rev() {
            *v *= p;
            p *= back;
        }
        k = start;
    }
}

fn mix(spectra: &mut [Vec<Complex64>], matrix: &[Complex64]) {
    let s = spectra.len();
    let n = spectra[0].len();
    let mut x = vec![linalg::ZERO; s];
    let mut y = vec![linalg::ZERO; s];
    for k in 0..n {
        for c in 0..s {
            x[c] = spectra[c][k];
        }
        matvec(matrix, &x, &mut y, s);
        for c in 0..s {
            spectra[c][k] = y[c];
        }
    }
}

/// Propagate `wave` through the link.
///
/// The waveform is taken to be normalized to the launch power of one
/// tributary; ASE from each span's amplifier is added after that span and
/// propagates through the remaining spans. All processing is circular in
/// time over the waveform length.
pub fn apply_link(
    wave: &MultiChannelWaveform,
    link: &LinkRealization,
    seed: &Seed,
) -> Result<MultiChannelWaveform> {
    let s = link.modes();
    if wave.channels() != s {
        return Err(Error::Domain(format!(
            "waveform has {} channels, link has {} modes",
            wave.channels(),
            s
        )));
    }
    let n = wave.len();
    let fs = wave.sample_rate;
    let df = fs / n as f64;
    let freqs = wave.frequencies();
    let mut spectra = wave.spectra();
    let ase_seed = seed.named("ase");

    for (k, span) in link.spans.iter().enumerate() {
        let kernel = SpanKernel::new(span);
        for (c, spec) in spectra.iter_mut().enumerate() {
            apply_delay(spec, df, span.input_delays_ps[c]);
            let p = Complex64::from_polar(1.0, span.input_phases[c]);
            if span.input_phases[c] != 0.0 {
                spec.iter_mut().for_each(|v| *v *= p);
            }
        }
        for (coupling, delays) in &kernel.sections {
            spectra
                .par_iter_mut()
                .zip(delays.par_iter())
                .for_each(|(spec, tau)| apply_delay(spec, df, *tau));
            mix(&mut spectra, coupling);
        }
        mix(&mut spectra, &kernel.mdl);
        let cd: Vec<Complex64> = freqs
            .iter()
            .map(|&f| kernel.amplitude * dispersion_phasor(f, link.beta2_ps2_per_km, span.span_length_km))
            .collect();
        for spec in spectra.iter_mut() {
            for (v, h) in spec.iter_mut().zip(&cd) {
                *v *= h;
            }
        }
        if !link.noiseless {
            // white circular noise of variance v per sample has variance n*v per DFT bin
            let var = ase_noise_variance(span, fs, link.launch_power_dbm) * n as f64;
            let span_seed = ase_seed.child(k as u64);
            spectra.par_iter_mut().enumerate().for_each(|(c, spec)| {
                let mut rng = span_seed.child(c as u64).rng();
                for v in spec.iter_mut() {
                    *v += complex_gaussian(&mut rng, var);
                }
            });
        }
    }
    MultiChannelWaveform::from_spectra(spectra, fs, wave.center_frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_link, LinkConfig};
    use crate::units::fft_bin_frequencies;

    fn impulse_wave(modes: usize, n: usize, fs: f64, c: usize) -> MultiChannelWaveform {
        let mut samples = vec![vec![Complex64::new(0.0, 0.0); n]; modes];
        samples[c][0] = Complex64::new(1.0, 0.0);
        MultiChannelWaveform::new(samples, fs, 193.7e12).unwrap()
    }

    #[test]
    fn delay_ramp_matches_direct() {
        let n = 1000;
        let df = 1e8;
        let mut spec = vec![Complex64::new(1.0, 0.0); n];
        apply_delay(&mut spec, df, 123.4);
        let f = fft_bin_frequencies(n, df * n as f64).unwrap();
        for (k, v) in spec.iter().enumerate() {
            assert!((v - delay_phasor(f[k], 123.4)).norm() < 1e-12, "bin {k}");
        }
    }

    #[test]
    fn zero_length_link_is_identity() {
        let link = build_link(&LinkConfig::default(), &Seed::new(1)).unwrap().truncated(0);
        let h = link_transfer(&link, &[0.0, 1e9, -3e10]);
        assert!(h.unitarity_error() < 1e-15);
        for m in &h.matrices {
            assert!((m - nalgebra::DMatrix::<Complex64>::identity(4, 4)).norm() < 1e-15);
        }
    }

    fn lossless(modes: usize, spans: usize) -> LinkConfig {
        LinkConfig {
            modes,
            spans,
            sections_per_span: 10,
            sigma_g_db: 0.0,
            noiseless: true,
            ..LinkConfig::default()
        }
    }

    #[test]
    fn mdl_free_link_is_unitary() {
        let link = build_link(&lossless(6, 3), &Seed::new(2)).unwrap();
        let grid = fft_bin_frequencies(64, 280e9).unwrap();
        let h = link_transfer(&link, &grid);
        assert!(h.unitarity_error() < 1e-9);
        for m in &h.matrices {
            for s in m.singular_values().iter() {
                assert!((s - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn two_mode_closed_form() {
        let tau = 7.0;
        let span = SpanRealization {
            sections: vec![crate::channel::FiberSection {
                coupling: nalgebra::DMatrix::identity(2, 2),
                delays_ps: vec![tau, -tau],
                length_km: 1.0,
            }],
            span_length_km: 1.0,
            fiber_loss_db_per_km: 0.0,
            lumped_loss_db: 0.0,
            mdl: crate::channel::MdlStage {
                log_gains_db: vec![0.0, 0.0],
                basis: nalgebra::DMatrix::identity(2, 2),
            },
            amp_gain_db: 0.0,
            amp_noise_figure_db: 5.0,
            input_delays_ps: vec![0.0; 2],
            input_phases: vec![0.0; 2],
        };
        let link = LinkRealization {
            modes: 2,
            spans: vec![span],
            smd_coeff_ps_per_sqrt_km: 0.0,
            beta2_ps2_per_km: 0.0,
            total_length_km: 1.0,
            noiseless: true,
            launch_power_dbm: 0.0,
        };
        let f = 13e9;
        let h = link_transfer(&link, &[f]);
        let m = &h.matrices[0];
        let expect = |t: f64| Complex64::from_polar(1.0, -TAU * f * t * PS);
        assert!((m[(0, 0)] - expect(tau)).norm() < 1e-12);
        assert!((m[(1, 1)] - expect(-tau)).norm() < 1e-12);
        assert!(m[(0, 1)].norm() < 1e-15 && m[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn apply_link_matches_transfer_on_impulse() {
        let cfg = LinkConfig { spans: 2, ..lossless(4, 2) };
        let link = build_link(&cfg, &Seed::new(3)).unwrap();
        let n = 256;
        let fs = 280e9;
        let h = link_transfer(&link, &fft_bin_frequencies(n, fs).unwrap());
        let out = apply_link(&impulse_wave(4, n, fs, 1), &link, &Seed::new(0)).unwrap();
        for r in 0..4 {
            let spec = crate::waveform::fft(out.channel(r));
            for k in 0..n {
                assert!((spec[k] - h.matrices[k][(r, 1)]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_transparent_link_preserves_power() {
        let link = build_link(&lossless(4, 3), &Seed::new(5)).unwrap();
        let mut rng = Seed::new(6).rng();
        let samples = (0..4)
            .map(|_| (0..512).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
            .collect();
        let wave = MultiChannelWaveform::new(samples, 280e9, 193.7e12).unwrap();
        let out = apply_link(&wave, &link, &Seed::new(7)).unwrap();
        assert!((out.total_power() / wave.total_power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let link = build_link(&lossless(4, 1), &Seed::new(5)).unwrap();
        assert!(apply_link(&impulse_wave(2, 16, 1e9, 0), &link, &Seed::new(0)).is_err());
    }

    #[test]
    fn ase_variance_per_span() {
        let link = build_link(&LinkConfig::default(), &Seed::new(1)).unwrap();
        let v = ase_noise_variance(&link.spans[0], 280e9, 0.0);
        // (10^0.5 * 10^1.21 - 1) * h * nu * 140 GHz / 1 mW
        let expect = (10f64.powf(0.5) * 10f64.powf(1.21) - 1.0) * 6.626_070_15e-34 * 193.7e12 * 140e9 / 1e-3;
        assert!((v / expect - 1.0).abs() < 1e-12);
    }
}
