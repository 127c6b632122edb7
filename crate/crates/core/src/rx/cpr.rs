use num_complex::Complex64;

/// Phase-recovered symbols of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CprOutput {
    pub symbols: Vec<Complex64>,
    /// Phase trajectory removed from each symbol, rad.
    pub phase: Vec<f64>,
    /// Variance of the pilot phase residuals around the trajectory, rad².
    pub residual_phase_var: f64,
    /// Set when the residual variance exceeds the threshold, i.e. pilot SNR
    /// is too low for the chosen window.
    pub low_pilot_snr: bool,
}

fn wrap(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Pilot-aided carrier phase recovery: pilot phasors are averaged over a
/// sliding window of `window` pilots, unwrapped, and linearly interpolated
/// between pilot positions.
pub fn carrier_phase_recover(
    symbols: &[Complex64],
    pilot_mask: &[bool],
    reference: &[Complex64],
    window: usize,
    warn_threshold: f64,
) -> CprOutput {
    let pilots: Vec<usize> = pilot_mask
        .iter()
        .enumerate()
        .filter(|(_, p)| **p)
        .map(|(i, _)| i)
        .collect();
    if pilots.is_empty() {
        return CprOutput {
            symbols: symbols.to_vec(),
            phase: vec![0.0; symbols.len()],
            residual_phase_var: 0.0,
            low_pilot_snr: false,
        };
    }
    let z: Vec<Complex64> = pilots.iter().map(|&k| symbols[k] * reference[k].conj()).collect();
    let half = window / 2;
    let mut est = Vec::with_capacity(z.len());
    let mut prev = 0.0;
    for k in 0..z.len() {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(z.len());
        let acc: Complex64 = z[lo..hi].iter().sum();
        let raw = acc.arg();
        let unwrapped = if k == 0 { raw } else { prev + wrap(raw - prev) };
        est.push(unwrapped);
        prev = unwrapped;
    }
    let residual_phase_var = z
        .iter()
        .zip(&est)
        .map(|(v, e)| wrap(v.arg() - e).powi(2))
        .sum::<f64>()
        / z.len() as f64;

    let mut phase = vec![0.0; symbols.len()];
    for (n, ph) in phase.iter_mut().enumerate() {
        let j = pilots.partition_point(|&p| p <= n);
        *ph = if j == 0 {
            est[0]
        } else if j == pilots.len() {
            est[j - 1]
        } else {
            let (a, b) = (pilots[j - 1], pilots[j]);
            let t = (n - a) as f64 / (b - a) as f64;
            est[j - 1] + t * (est[j] - est[j - 1])
        };
    }
    let out = symbols
        .iter()
        .zip(&phase)
        .map(|(s, p)| s * Complex64::from_polar(1.0, -p))
        .collect();
    CprOutput {
        symbols: out,
        phase,
        residual_phase_var,
        low_pilot_snr: residual_phase_var > warn_threshold,
    }
}
