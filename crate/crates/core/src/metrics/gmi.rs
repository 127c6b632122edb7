use num_complex::Complex64;
use rayon::prelude::*;

use crate::tx::ShapedConstellation;
use crate::{Error, Result};

/// Data-driven GMI under a circular Gaussian auxiliary channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmiEstimate {
    /// bits per 2D symbol, clipped to `[0, entropy]`
    pub gmi: f64,
    /// least-squares gain applied to the received symbols
    pub gain: Complex64,
    /// auxiliary-channel variance after gain removal
    pub noise_var: f64,
}

fn ls_gain(tx: &[Complex64], rx: &[Complex64]) -> (Complex64, f64, f64) {
    let (xy, xx, yy) = tx.iter().zip(rx).fold(
        (Complex64::new(0.0, 0.0), 0.0, 0.0),
        |(xy, xx, yy), (x, y)| (xy + y * x.conj(), xx + x.norm_sqr(), yy + y.norm_sqr()),
    );
    (xy / xx, xx, yy)
}

/// SNR (dB) of `rx` against `tx` after least-squares gain removal.
pub fn residual_snr_db(tx: &[Complex64], rx: &[Complex64]) -> Result<f64> {
    if tx.len() != rx.len() || tx.is_empty() {
        return Err(Error::Domain("symbol streams must be non-empty and equally long".into()));
    }
    let (h, xx, _) = ls_gain(tx, rx);
    let err: f64 = tx.iter().zip(rx).map(|(x, y)| (y - h * x).norm_sqr()).sum();
    Ok(10.0 * (h.norm_sqr() * xx / err.max(f64::MIN_POSITIVE)).log10())
}

/// `H - mean_k log2[ sum_x p(x) q(y_k|x) / (p(x_k) q(y_k|x_k)) ]` with `q` a
/// circular Gaussian whose variance is the residual to the transmitted
/// symbols. `tx` must hold constellation points only (no pilots).
pub fn gmi(tx: &[Complex64], rx: &[Complex64], constellation: &ShapedConstellation) -> Result<GmiEstimate> {
    if tx.len() != rx.len() || tx.is_empty() {
        return Err(Error::Domain("symbol streams must be non-empty and equally long".into()));
    }
    let idx: Vec<usize> = tx.iter().map(|x| constellation.nearest(*x)).collect();
    if tx
        .iter()
        .zip(&idx)
        .any(|(x, &i)| (x - constellation.points[i]).norm() > 1e-6)
    {
        return Err(Error::Domain("transmitted stream contains non-constellation symbols".into()));
    }
    let (h, xx, yy) = ls_gain(tx, rx);
    let m = tx.len() as f64;
    let correlation = if yy > 0.0 { (h * xx).norm() / (xx * yy).sqrt() } else { 0.0 };
    if correlation < 3.0 / m.sqrt() {
        return Err(Error::Alignment { correlation });
    }
    let energy = xx / m;
    let var = tx
        .iter()
        .zip(rx)
        .map(|(x, y)| (y / h - x).norm_sqr())
        .sum::<f64>()
        / m;
    let var = var.max(1e-12 * energy);
    let ln_p: Vec<f64> = constellation.probs.iter().map(|p| p.ln()).collect();
    let pts = &constellation.points;
    let loss_nats: f64 = rx
        .par_iter()
        .zip(idx.par_iter())
        .map(|(y, &k)| {
            let z = y / h;
            let own = -(z - pts[k]).norm_sqr() / var;
            // log sum_x p(x) exp(-(|z-x|^2 - |z-x_k|^2)/var) - log p(x_k)
            let exps: Vec<f64> = pts
                .iter()
                .zip(&ln_p)
                .map(|(x, lp)| lp - (z - x).norm_sqr() / var - own)
                .collect();
            let top = exps.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
            top + exps.iter().map(|e| (e - top).exp()).sum::<f64>().ln() - ln_p[k]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let entropy = constellation.entropy_2d;
    let raw = entropy - loss_nats / m / std::f64::consts::LN_2;
    Ok(GmiEstimate {
        gmi: raw.clamp(0.0, entropy),
        gain: h,
        noise_var: var,
    })
}
