//! Unit conversions, physical constants and FFT-grid bookkeeping.

use crate::{Error, Result};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Optical reference frequency used for photon energy in ASE calculations.
pub const REFERENCE_FREQUENCY_HZ: f64 = 193.7e12;

pub const PS: f64 = 1e-12;
pub const PS2_PER_KM: f64 = 1e-24;

/// Power ratio from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Decibels from a power ratio.
pub fn linear_to_db(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(Error::Domain(format!(
            "cannot take dB of non-positive ratio {ratio}"
        )));
    }
    Ok(10.0 * ratio.log10())
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

/// Baseband frequencies of the `n` bins of a length-`n` DFT, in natural FFT
/// order: bin `k` maps to `k*fs/n` for `k < n/2` and to `(k-n)*fs/n` otherwise.
pub fn fft_bin_frequencies(n: usize, sample_rate: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("FFT grid needs at least one bin".into()));
    }
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(Error::Domain(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let df = sample_rate / n as f64;
    Ok((0..n)
        .map(|k| {
            if 2 * k < n {
                k as f64 * df
            } else {
                (k as f64 - n as f64) * df
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_bin_grid() {
        assert_eq!(fft_bin_frequencies(4, 4.0).unwrap(), vec![0.0, 1.0, -2.0, -1.0]);
    }

    #[test]
    fn single_bin_is_dc() {
        assert_eq!(fft_bin_frequencies(1, 123.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn odd_grid_is_symmetric() {
        assert_eq!(fft_bin_frequencies(5, 5.0).unwrap(), vec![0.0, 1.0, 2.0, -2.0, -1.0]);
    }

    #[test]
    fn grid_2048_at_175ghz() {
        let f = fft_bin_frequencies(2048, 175e9).unwrap();
        assert!((f[1] - 85.449_218_75e6).abs() < 1.0);
        assert_eq!(f[1024], -87.5e9);
    }

    #[test]
    fn empty_grid_is_domain_error() {
        assert!(matches!(fft_bin_frequencies(0, 1.0), Err(Error::Domain(_))));
        assert!(fft_bin_frequencies(4, 0.0).is_err());
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(12.1) - 16.218).abs() < 1e-3);
        assert!((db_to_linear(3.0103) - 2.0).abs() < 1e-4);
        assert!((linear_to_db(2.0).unwrap() - 3.0103).abs() < 1e-4);
        assert!(linear_to_db(0.0).is_err());
        assert!(linear_to_db(-1.0).is_err());
    }
}
