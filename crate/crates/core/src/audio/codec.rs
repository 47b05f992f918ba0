use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub const DEFAULT_MU: u32 = 255;

/// Amplitude encoding applied before quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Linear,
    MuLaw,
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Linear => "linear",
            Encoding::MuLaw => "mu_law",
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Encoding::Linear),
            "mu_law" | "mulaw" => Ok(Encoding::MuLaw),
            other => Err(crate::Error::Config(format!("unknown encoding `{other}`"))),
        }
    }
}

/// `sign(x) * ln(1 + mu |x|) / ln(1 + mu)`.
pub fn mulaw_encode(x: f64, mu: u32) -> Result<f64> {
    ensure!(x.abs() <= 1.0, "mu-law input {x} outside [-1, 1]");
    ensure!(mu >= 1, "mu must be positive");
    let mu = mu as f64;
    Ok(x.signum() * (mu * x.abs()).ln_1p() / mu.ln_1p())
}

/// Inverse of [`mulaw_encode`] on reals.
pub fn mulaw_decode(y: f64, mu: u32) -> Result<f64> {
    ensure!(y.abs() <= 1.0, "mu-law code {y} outside [-1, 1]");
    ensure!(mu >= 1, "mu must be positive");
    let mu = mu as f64;
    Ok(y.signum() * (y.abs() * mu.ln_1p()).exp_m1() / mu)
}

/// Distance between adjacent grid values, `2^(1 - b)`.
pub fn grid_gap(bit_depth: u32) -> f64 {
    (2.0f64).powi(1 - bit_depth as i32)
}

pub fn grid_size(bit_depth: u32) -> u64 {
    1u64 << bit_depth
}

/// Grid value `-1 + k * 2^(1 - b)`.
pub fn grid_value(k: u64, bit_depth: u32) -> f64 {
    -1.0 + k as f64 * grid_gap(bit_depth)
}

/// Nearest grid index, ties to even, clamped to the grid.
pub fn grid_index(x: f64, bit_depth: u32) -> u64 {
    let top = grid_size(bit_depth) - 1;
    let k = ((x + 1.0) / grid_gap(bit_depth)).round_ties_even();
    if k <= 0.0 {
        0
    } else if k >= top as f64 {
        top
    } else {
        k as u64
    }
}

/// Rounds `x` to the nearest point of the `b`-bit grid over `[-1, 1)`.
pub fn quantize(x: f64, bit_depth: u32) -> f64 {
    grid_value(grid_index(x, bit_depth), bit_depth)
}

/// Whether `x` lies exactly on the `b`-bit grid.
pub fn on_grid(x: f64, bit_depth: u32) -> bool {
    let k = (x + 1.0) / grid_gap(bit_depth);
    k.fract() == 0.0 && k >= 0.0 && k < grid_size(bit_depth) as f64
}

/// Linear amplitude in `[-1, 1]` to a quantized model value.
pub fn encode(x: f64, encoding: Encoding, bit_depth: u32) -> Result<f64> {
    let y = match encoding {
        Encoding::Linear => {
            ensure!(x.abs() <= 1.0, "linear input {x} outside [-1, 1]");
            x
        }
        Encoding::MuLaw => mulaw_encode(x, DEFAULT_MU)?,
    };
    Ok(quantize(y, bit_depth))
}

/// Model value back to linear amplitude.
pub fn decode(y: f64, encoding: Encoding) -> Result<f64> {
    match encoding {
        Encoding::Linear => Ok(y),
        Encoding::MuLaw => mulaw_decode(y, DEFAULT_MU),
    }
}
