//! Post-training quantization of decoder parameters.

use super::arch::ParamRole;
use super::decoder::{CoolChicDecoder, LATENT_MAX, LATENT_MIN};
use crate::error::{Error, Result};
use crate::numerics::{laplace, Scalar, Tensor};

/// Candidate step sizes are `2^e` for `e` in this range.
pub const STEP_LOG2_MIN: i8 = -8;
pub const STEP_LOG2_MAX: i8 = -2;

/// One parameter tensor as transmitted: integers and their step exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedParam {
    pub step_log2: i8,
    pub values: Vec<i32>,
    /// Scale of the zero-mean Laplace model used to code `values`.
    pub scale: f32,
}

impl QuantizedParam {
    pub fn new(step_log2: i8, values: Vec<i32>) -> Self {
        let scale = laplace_scale(&values);
        QuantizedParam { step_log2, values, scale }
    }

    pub fn dequantize<T: Scalar>(&self) -> Vec<T> {
        let step = 2f64.powi(self.step_log2 as i32);
        self.values.iter().map(|&q| T::from_f64(q as f64 * step).unwrap()).collect()
    }

    /// Log-scale of the coding distribution, already clamped.
    pub fn log_scale(&self) -> f64 {
        laplace::clamp_log_scale((self.scale as f64).ln())
    }

    /// Ideal code length of the values under the transmitted model.
    pub fn estimated_bits(&self) -> f64 {
        let ls = self.log_scale();
        self.values.iter().map(|&q| laplace::bits(q as f64, 0.0, ls)).sum()
    }
}

/// Mean absolute value, the maximum-likelihood Laplace scale.
pub fn laplace_scale(values: &[i32]) -> f32 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|&v| v.unsigned_abs() as f64).sum::<f64>() / values.len() as f64) as f32
}

/// Rounds `data / 2^step_log2`; `None` if any integer leaves the alphabet.
pub fn quantize_values<T: Scalar>(data: &[T], step_log2: i8) -> Option<Vec<i32>> {
    let inv = 2f64.powi(-(step_log2 as i32));
    data.iter()
        .map(|v| {
            let q = (v.to_f64()? * inv).round();
            (LATENT_MIN as f64..=LATENT_MAX as f64).contains(&q).then_some(q as i32)
        })
        .collect()
}

/// Result of [`quantize_decoder_params`].
#[derive(Clone, Debug)]
pub struct QuantizedParams {
    pub params: Vec<QuantizedParam>,
    pub param_bits: f64,
}

/// Chooses a step per tensor, greedily in storage order, minimizing
/// `MSE(output, float output) + lambda * (latent bits + param bits) / n_pixels`
/// with earlier tensors already quantized and later ones still in float.
pub fn quantize_decoder_params(dec: &CoolChicDecoder<f32>, lambda: f64, n_pixels: usize) -> Result<QuantizedParams> {
    let (reference, _) = dec.evaluate()?;
    let roles: Vec<ParamRole> = dec.kind().param_shapes().iter().map(|s| s.role).collect();
    let mut work = dec.clone();
    let mut chosen = Vec::with_capacity(dec.params.len());
    let mut cached_mse = 0.0;
    let mut cached_rate = work.latent_rate()?;
    for (i, role) in roles.iter().enumerate() {
        let original = dec.params[i].data().to_vec();
        let mut best: Option<(f64, QuantizedParam, f64, f64)> = None;
        for e in STEP_LOG2_MIN..=STEP_LOG2_MAX {
            let Some(values) = quantize_values(&original, e) else { continue };
            let q = QuantizedParam::new(e, values);
            work.params[i].data_mut().copy_from_slice(&q.dequantize::<f32>());
            let (mse, rate) = if role.is_arm() {
                (cached_mse, work.latent_rate()?)
            } else {
                (output_mse(&work.infer()?, &reference), cached_rate)
            };
            let cost = mse + lambda * (rate + q.estimated_bits()) / n_pixels as f64;
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, q, mse, rate));
            }
        }
        let (_, q, mse, rate) =
            best.ok_or_else(|| Error::Training(format!("parameter tensor {i} cannot be quantized in range")))?;
        work.params[i].data_mut().copy_from_slice(&q.dequantize::<f32>());
        cached_mse = mse;
        cached_rate = rate;
        chosen.push(q);
    }
    let param_bits = chosen.iter().map(|q| q.estimated_bits()).sum();
    Ok(QuantizedParams { params: chosen, param_bits })
}

fn output_mse(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let n = a.numel().max(1) as f64;
    a.data().iter().zip(b.data()).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>() / n
}

impl<T: Scalar> CoolChicDecoder<T> {
    /// Loads transmitted parameters.
    pub fn set_quantized_params(&mut self, q: &[QuantizedParam]) -> Result<()> {
        if q.len() != self.params.len() {
            return Err(Error::Format(format!("{} parameter tensors, expected {}", q.len(), self.params.len())));
        }
        for (p, q) in self.params.iter_mut().zip(q) {
            if p.numel() != q.values.len() {
                return Err(Error::Format(format!("parameter of {} values, expected {}", q.values.len(), p.numel())));
            }
            p.data_mut().copy_from_slice(&q.dequantize::<T>());
        }
        Ok(())
    }
}
