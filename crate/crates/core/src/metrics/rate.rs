use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Code rates with their NGMI decoding thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FecTable {
    pub rates: Vec<f64>,
    pub ngmi_thresholds: Vec<f64>,
}

impl Default for FecTable {
    /// Rates 0.60..=0.95 in steps of 0.05 with ideal-code thresholds
    /// (threshold equals rate).
    fn default() -> Self {
        let rates: Vec<f64> = (0..8).map(|k| (60 + 5 * k) as f64 / 100.0).collect();
        FecTable {
            ngmi_thresholds: rates.clone(),
            rates,
        }
    }
}

impl FecTable {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates.len() != self.ngmi_thresholds.len() {
            return Err(Error::Config("FEC table needs one threshold per rate".into()));
        }
        if self.rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::Config("FEC rates must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Highest rate whose threshold the NGMI meets.
    pub fn select(&self, ngmi: f64) -> Option<f64> {
        self.rates
            .iter()
            .zip(&self.ngmi_thresholds)
            .filter(|(_, t)| ngmi >= **t)
            .map(|(r, _)| *r)
            .fold(None, |best, r| Some(best.map_or(r, |b: f64| b.max(r))))
    }
}

/// How FEC frames map onto spatial channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FecFraming {
    /// Frames interleave all spatial channels; the rate follows the NGMI of
    /// the pooled symbols.
    Joint,
    /// Each frame stays on one spatial channel; a common code must decode on
    /// the worst channel.
    PerChannel,
}

pub fn ngmi(gmi: f64, entropy: f64, bits_per_symbol: f64) -> f64 {
    1.0 - (entropy - gmi) / bits_per_symbol
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub net_tbps: f64,
    pub achievable_tbps: f64,
    pub ngmi: f64,
    pub code_rate: Option<f64>,
    /// False when no table rate is decodable; `net_tbps` is then 0.
    pub feasible: bool,
}

/// Net and achievable rate of one wavelength from per-spatial-channel GMI.
pub fn net_rate(
    gmi_per_channel: &[f64],
    entropy: f64,
    bits_per_symbol: f64,
    symbol_rate: f64,
    table: &FecTable,
    framing: FecFraming,
) -> Result<RateResult> {
    table.validate()?;
    if gmi_per_channel.is_empty() {
        return Err(Error::Domain("no spatial channels".into()));
    }
    if let Some(g) = gmi_per_channel.iter().find(|g| !(**g >= 0.0 && **g <= entropy + 1e-9)) {
        return Err(Error::Domain(format!("GMI {g} outside [0, {entropy}]")));
    }
    let s = gmi_per_channel.len() as f64;
    let pooled = gmi_per_channel.iter().sum::<f64>() / s;
    let governing = match framing {
        FecFraming::Joint => pooled,
        FecFraming::PerChannel => gmi_per_channel.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let n = ngmi(governing, entropy, bits_per_symbol);
    let code_rate = table.select(n);
    let achievable_tbps = symbol_rate * s * pooled / 1e12;
    let net_tbps = code_rate.map_or(0.0, |r| symbol_rate * s * (entropy - (1.0 - r) * bits_per_symbol) / 1e12);
    Ok(RateResult {
        net_tbps: net_tbps.max(0.0),
        achievable_tbps,
        ngmi: n,
        code_rate,
        feasible: code_rate.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 4.688;

    fn m() -> f64 {
        36f64.log2()
    }

    #[test]
    fn gross_bound_per_wavelength() {
        let r = net_rate(&[H; 24], H, m(), 140e9, &FecTable::default(), FecFraming::Joint).unwrap();
        assert!((r.achievable_tbps - 15.751).abs() < 1e-3);
        assert!(r.net_tbps <= r.achievable_tbps);
        assert_eq!(r.code_rate, Some(0.95));
    }

    #[test]
    fn zero_gmi_gives_zero_net() {
        let r = net_rate(&[0.0; 4], H, m(), 140e9, &FecTable::default(), FecFraming::Joint).unwrap();
        assert_eq!(r.net_tbps, 0.0);
        assert!(!r.feasible);
    }

    #[test]
    fn net_matches_hand_calculation() {
        // NGMI 0.8 exactly -> rate 0.80 (threshold inclusive)
        let g = H - 0.2 * m();
        let r = net_rate(&[g; 2], H, m(), 140e9, &FecTable::default(), FecFraming::Joint).unwrap();
        assert!((r.ngmi - 0.8).abs() < 1e-12);
        let rate = r.code_rate.unwrap();
        assert_eq!(rate, 0.8);
        let expect = 140e9 * 2.0 * (H - (1.0 - rate) * m()) / 1e12;
        assert!((r.net_tbps - expect).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_gmi_is_rejected() {
        assert!(net_rate(&[5.0], H, m(), 140e9, &FecTable::default(), FecFraming::Joint).is_err());
        assert!(net_rate(&[], H, m(), 140e9, &FecTable::default(), FecFraming::Joint).is_err());
    }
}
