use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::haar_unitary;
use crate::{Error, Result, Seed};

/// One short fiber piece: per-mode group delays followed by full random
/// mode mixing. Delays are mean-removed.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberSection {
    pub coupling: DMatrix<Complex64>,
    pub delays_ps: Vec<f64>,
    pub length_km: f64,
}

pub fn draw_section(
    seed: &Seed,
    modes: usize,
    section_length_km: f64,
    smd_coeff_ps_per_sqrt_km: f64,
    calibration: f64,
) -> Result<FiberSection> {
    if modes < 2 {
        return Err(Error::Domain(format!(
            "coupling needs at least 2 modes, got {modes}"
        )));
    }
    if !(section_length_km > 0.0) {
        return Err(Error::Domain(format!(
            "section length must be positive, got {section_length_km}"
        )));
    }
    let mut rng = seed.rng();
    let coupling = haar_unitary(&mut rng, modes);
    let sigma = calibration * smd_coeff_ps_per_sqrt_km * section_length_km.sqrt();
    let delays: Vec<f64> = (0..modes)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect();
    Ok(FiberSection {
        coupling,
        delays_ps: super::mean_removed(delays),
        length_km: section_length_km,
    })
}

/// Zero-mean per-span log gains (dB) rescaled to rms exactly `sigma_g_db`.
pub fn draw_mdl_log_gains(seed: &Seed, modes: usize, sigma_g_db: f64) -> Result<Vec<f64>> {
    if !(sigma_g_db >= 0.0) {
        return Err(Error::Domain(format!(
            "sigma_g must be non-negative, got {sigma_g_db}"
        )));
    }
    if modes == 0 {
        return Err(Error::Domain("no modes".into()));
    }
    if sigma_g_db == 0.0 {
        return Ok(vec![0.0; modes]);
    }
    let mut rng = seed.rng();
    let g = super::mean_removed(
        (0..modes)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    );
    let rms = (g.iter().map(|x| x * x).sum::<f64>() / modes as f64).sqrt();
    if rms == 0.0 {
        return Ok(vec![0.0; modes]);
    }
    Ok(g.into_iter().map(|x| x * sigma_g_db / rms).collect())
}
