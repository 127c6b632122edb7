use num_complex::Complex64;

use crate::{Error, Result};

/// Length in samples of the shortest circular window holding at least
/// `fraction` of the summed power of all `responses`.
///
/// Responses come from DFTs, so windows may wrap around the end.
pub fn memory_length_samples(responses: &[Vec<Complex64>], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("power fraction {fraction} not in (0, 1]")));
    }
    let n = responses.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut profile = vec![0.0; n];
    for r in responses {
        for (p, h) in profile.iter_mut().zip(r) {
            *p += h.norm_sqr();
        }
    }
    let total: f64 = profile.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Domain("impulse responses carry no power".into()));
    }
    let need = fraction * total * (1.0 - 1e-12);
    let mut best = n;
    let mut end = 0;
    let mut acc = 0.0;
    for start in 0..n {
        while acc < need && end < start + n {
            acc += profile[end % n];
            end += 1;
        }
        if acc >= need {
            best = best.min(end - start);
        }
        acc -= profile[start];
    }
    Ok(best)
}

/// Memory length in ns of responses sampled at `sample_rate_hz`.
pub fn memory_length(responses: &[Vec<Complex64>], sample_rate_hz: f64, fraction: f64) -> Result<f64> {
    if !(sample_rate_hz > 0.0) {
        return Err(Error::Domain(format!("sample rate {sample_rate_hz} must be positive")));
    }
    Ok(memory_length_samples(responses, fraction)? as f64 / sample_rate_hz * 1e9)
}

/// Least-squares `a` in ps/sqrt(km) for `tau = a * sqrt(L)` from
/// `(L km, tau ns)` points.
pub fn fit_sqrt_law(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|(l, t)| !(*l > 0.0) || !t.is_finite()) {
        return Err(Error::Fit("need at least two points with positive length".into()));
    }
    let first = points[0].0;
    if points.iter().all(|(l, _)| *l == first) {
        return Err(Error::Fit("all lengths are equal".into()));
    }
    let num: f64 = points.iter().map(|(l, t)| l.sqrt() * t).sum();
    let den: f64 = points.iter().map(|(l, _)| l).sum();
    Ok(num / den * 1e3)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    /// Coefficient of determination in log-log coordinates.
    pub r_squared: f64,
}

/// Log-log least squares for `y = c * x^p`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 || points.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Fit("power-law fit needs at least two positive points".into()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(PowerLawFit {
        coefficient: intercept.exp(),
        exponent,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn single_delta_is_one_sample() {
        let mut h = vec![c(0.0); 64];
        h[17] = c(2.0);
        assert_eq!(memory_length_samples(&[h.clone()], 0.9).unwrap(), 1);
        assert!((memory_length(&[h], 280e9, 0.9).unwrap() - 1.0 / 280.0).abs() < 1e-15);
    }

    #[test]
    fn window_wraps_around() {
        let mut h = vec![c(0.0); 32];
        h[31] = c(1.0);
        h[0] = c(1.0);
        assert_eq!(memory_length_samples(&[h], 0.9).unwrap(), 2);
    }

    #[test]
    fn all_zero_is_rejected() {
        assert!(memory_length_samples(&[vec![c(0.0); 8]], 0.9).is_err());
        assert!(memory_length_samples(&[], 0.9).is_err());
    }

    #[test]
    fn gaussian_profile_spans_central_ninety_percent() {
        // 90% central mass of a Gaussian is +-1.6449 sigma
        let sigma = 200.0;
        let n = 8192;
        let h: Vec<Complex64> = (0..n)
            .map(|k| {
                let t = k as f64 - 4000.3;
                c((-(t * t) / (4.0 * sigma * sigma)).exp())
            })
            .collect();
        let w = memory_length_samples(&[h], 0.9).unwrap() as f64;
        assert!((w / sigma - 3.2897).abs() < 0.01, "{}", w / sigma);
    }

    #[test]
    fn paper_scale_sqrt_law_arithmetic() {
        let tau_ns = 67.0 * 1016.5f64.sqrt() / 1e3;
        assert!((tau_ns - 2.136).abs() < 1e-3);
    }

    #[test]
    fn sqrt_fit_recovers_and_scales() {
        let pts: Vec<(f64, f64)> = [53.5, 214.0, 1016.5].iter().map(|&l| (l, 0.067 * f64::sqrt(l))).collect();
        assert!((fit_sqrt_law(&pts).unwrap() - 67.0).abs() < 1e-9);
        let doubled: Vec<(f64, f64)> = pts.iter().map(|(l, t)| (*l, 2.0 * t)).collect();
        assert!((fit_sqrt_law(&doubled).unwrap() - 134.0).abs() < 1e-9);
        assert!(fit_sqrt_law(&[(5.0, 1.0), (5.0, 2.0)]).is_err());
        assert!(fit_sqrt_law(&[(5.0, 1.0)]).is_err());
    }

    #[test]
    fn power_law_exact() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, 3.0 * (k as f64).powf(0.5))).collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-12);
        assert!((f.coefficient - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }
}
