//! Tap export: binary tap dumps and spectral views of equalizer weights.
//!
//! Tap file layout (little endian):
//!
//! | offset | type      | field                                  |
//! |--------|-----------|----------------------------------------|
//! | 0      | [u8; 4]   | magic `CCMT`                           |
//! | 4      | u32       | format version (1)                     |
//! | 8      | u32       | n_in                                   |
//! | 12     | u32       | n_out                                  |
//! | 16     | u32       | fft_size (taps per response)           |
//! | 20     | u32       | reserved (0)                           |
//! | 24     | f64       | tap sample rate, Hz                    |
//! | 32     | f64 pairs | re, im for `[in][out][tap]`, row-major |

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{EqualizerMode, EqualizerState};
use crate::{Error, Result, SpectralTransfer};

const MAGIC: &[u8; 4] = b"CCMT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TapDump {
    pub n_in: usize,
    pub n_out: usize,
    pub fft_size: usize,
    pub sample_rate: f64,
    /// `[in * n_out + out][tap]`
    pub taps: Vec<Vec<Complex64>>,
}

impl TapDump {
    pub fn from_state(state: &EqualizerState, symbol_rate: f64) -> Self {
        TapDump {
            n_in: state.n_in,
            n_out: state.n_out,
            fft_size: state.fft_size,
            sample_rate: symbol_rate,
            taps: state.taps_time(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(32 + 16 * self.n_in * self.n_out * self.fft_size);
        b.extend_from_slice(MAGIC);
        for v in [VERSION, self.n_in as u32, self.n_out as u32, self.fft_size as u32, 0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.sample_rate.to_le_bytes());
        for t in self.taps.iter().flatten() {
            b.extend_from_slice(&t.re.to_le_bytes());
            b.extend_from_slice(&t.im.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Domain(format!("tap dump: {m}"));
        if bytes.len() < 32 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != VERSION as usize {
            return Err(bad("unsupported version"));
        }
        let (n_in, n_out, fft_size) = (u32_at(8), u32_at(12), u32_at(16));
        let count = n_in * n_out * fft_size;
        if bytes.len() != 32 + 16 * count {
            return Err(bad("payload length does not match header"));
        }
        let mut taps = vec![Vec::with_capacity(fft_size); n_in * n_out];
        for k in 0..count {
            let o = 32 + 16 * k;
            taps[k / fft_size].push(Complex64::new(f64_at(o), f64_at(o + 8)));
        }
        Ok(TapDump {
            n_in,
            n_out,
            fft_size,
            sample_rate: f64_at(24),
            taps,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// Equivalent fractionally-spaced `n_out x channels` response of the
/// (non-conjugate) equalizer branches at baseband frequencies `freqs`.
///
/// Polyphase tap `k` of sample phase `p` sits at time `(k*sps - p)/fs`
/// relative to the decision instant, `fs = sps * symbol_rate`.
pub fn fractional_response(state: &EqualizerState, symbol_rate: f64, freqs: &[f64]) -> SpectralTransfer {
    let taps = state.taps_time();
    let branches = match state.mode {
        EqualizerMode::StrictlyLinear => 1,
        EqualizerMode::WidelyLinear => 2,
    };
    let channels = state.n_in / (state.sps * branches);
    let fs = symbol_rate * state.sps as f64;
    let matrices = freqs
        .iter()
        .map(|&f| {
            DMatrix::from_fn(state.n_out, channels, |o, c| {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in 0..state.sps {
                    let i = (c * state.sps + p) * branches;
                    let h = &taps[i * state.n_out + o];
                    for (k, w) in h.iter().enumerate().take(state.taps) {
                        let m = (k * state.sps) as f64 - p as f64;
                        acc += w * Complex64::from_polar(1.0, -TAU * f * m / fs);
                    }
                }
                acc
            })
        })
        .collect();
    SpectralTransfer::new(freqs.to_vec(), matrices).expect("one matrix per frequency")
}

/// Total tap power per tap index, summed over every input/output pair.
pub fn tap_power_profile(taps: &[Vec<Complex64>]) -> Vec<f64> {
    let len = taps.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut p = vec![0.0; len];
    for t in taps {
        for (acc, v) in p.iter_mut().zip(t) {
            *acc += v.norm_sqr();
        }
    }
    p
}
