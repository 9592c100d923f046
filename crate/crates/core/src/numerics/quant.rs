use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Differentiable stand-ins for the rounding that produces integer latents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum QuantizerMode {
    /// `x + u`, `u ~ U(-a/2, a/2)`; identity gradient.
    AdditiveNoise(f64),
    /// Soft rounding at the given temperature.
    SoftRound(f64),
    /// Round to nearest forward, identity gradient backward.
    HardRoundSte,
}

impl QuantizerMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuantizerMode::AdditiveNoise(a) if !(0.0..=1.0).contains(&a) => {
                Err(Error::Config(format!("noise amplitude {a} outside [0, 1]")))
            }
            QuantizerMode::SoftRound(t) if !(t > 0.0) => {
                Err(Error::Config(format!("soft-round temperature {t} must be > 0")))
            }
            _ => Ok(()),
        }
    }
}

/// `s(x) = floor(x) + 0.5 * tanh((x - floor(x) - 0.5) / t) / tanh(0.5 / t) + 0.5`
pub fn soft_round<T: Scalar>(x: T, temperature: T) -> T {
    let half = T::from_f64(0.5).unwrap();
    let fl = x.floor();
    let r = x - fl - half;
    fl + half * (r / temperature).tanh() / (half / temperature).tanh() + half
}

/// Derivative of [`soft_round`] with respect to `x`.
pub fn soft_round_grad<T: Scalar>(x: T, temperature: T) -> T {
    let half = T::from_f64(0.5).unwrap();
    let r = x - x.floor() - half;
    let th = (r / temperature).tanh();
    half * (T::one() - th * th) / temperature / (half / temperature).tanh()
}

/// Round half away from zero (the rounding used for transmitted integers).
#[inline]
pub fn hard_round<T: Scalar>(x: T) -> T {
    x.round()
}
