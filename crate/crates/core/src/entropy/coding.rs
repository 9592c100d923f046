//! Range coding of latent pyramids (driven by the ARM) and of quantized
//! network parameters.

use super::model::LaplaceModel;
use super::range_coder::{RangeDecoder, RangeEncoder};
use crate::coolchic::arm::fill_context;
use crate::coolchic::{context_template, ArmEvaluator, CoolChicDecoder, LatentGrid, LatentPyramid, N_LEVELS};
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::coolchic::QuantizedParam;

fn evaluator<T: Scalar>(dec: &CoolChicDecoder<T>) -> ArmEvaluator<'_, T> {
    let layers = dec
        .kind()
        .arm_layers()
        .into_iter()
        .zip(dec.arm_params().chunks(2))
        .map(|((n_in, n_out), wb)| (wb[0].data(), wb[1].data(), n_in, n_out))
        .collect();
    ArmEvaluator::new(layers)
}

fn model<T: Scalar>(mu: T, log_scale: T) -> Result<LaplaceModel> {
    LaplaceModel::new(mu.to_f64().unwrap_or(f64::NAN), log_scale.to_f64().unwrap_or(f64::NAN))
}

/// Codes one level in raster order; the ARM of `dec` supplies every symbol's model.
pub fn encode_level<T: Scalar>(dec: &CoolChicDecoder<T>, grid: &LatentGrid) -> Result<Vec<u8>> {
    let template = context_template(dec.kind().arm_width());
    let mut arm = evaluator(dec);
    let vals: Vec<T> = grid.values.iter().map(|&v| T::from_i32(v).unwrap()).collect();
    let mut ctx = vec![T::zero(); template.len()];
    let mut enc = RangeEncoder::new();
    for y in 0..grid.h {
        for x in 0..grid.w {
            fill_context(&vals, grid.h, grid.w, y, x, &template, &mut ctx);
            let (mu, ls) = arm.eval(&ctx);
            model(mu, ls)?.encode(&mut enc, grid.values[y * grid.w + x])?;
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_level`]; the payload must be consumed exactly.
pub fn decode_level<T: Scalar>(dec: &CoolChicDecoder<T>, h: usize, w: usize, payload: &[u8]) -> Result<LatentGrid> {
    let template = context_template(dec.kind().arm_width());
    let mut arm = evaluator(dec);
    let mut vals = vec![T::zero(); h * w];
    let mut values = vec![0i32; h * w];
    let mut ctx = vec![T::zero(); template.len()];
    let mut rd = RangeDecoder::new(payload)?;
    for y in 0..h {
        for x in 0..w {
            fill_context(&vals, h, w, y, x, &template, &mut ctx);
            let (mu, ls) = arm.eval(&ctx);
            let v = model(mu, ls)?.decode(&mut rd)?;
            values[y * w + x] = v;
            vals[y * w + x] = T::from_i32(v).unwrap();
        }
    }
    if !rd.is_exhausted() {
        return Err(Error::Stream(format!(
            "latent payload has {} trailing bytes",
            payload.len() - rd.position()
        )));
    }
    Ok(LatentGrid { h, w, values })
}

/// Exact coded cost in bits of a level under the fixed-point model
/// (excluding the final flush).
pub fn level_cost_bits<T: Scalar>(dec: &CoolChicDecoder<T>, grid: &LatentGrid) -> Result<f64> {
    let template = context_template(dec.kind().arm_width());
    let mut arm = evaluator(dec);
    let vals: Vec<T> = grid.values.iter().map(|&v| T::from_i32(v).unwrap()).collect();
    let mut ctx = vec![T::zero(); template.len()];
    let mut bits = 0.0;
    for y in 0..grid.h {
        for x in 0..grid.w {
            fill_context(&vals, grid.h, grid.w, y, x, &template, &mut ctx);
            let (mu, ls) = arm.eval(&ctx);
            bits += model(mu, ls)?.cost_bits(grid.values[y * grid.w + x]);
        }
    }
    Ok(bits)
}

pub fn encode_pyramid<T: Scalar>(dec: &CoolChicDecoder<T>, pyramid: &[LatentGrid]) -> Result<Vec<Vec<u8>>> {
    if pyramid.len() != N_LEVELS {
        return Err(Error::Stream(format!("pyramid has {} levels", pyramid.len())));
    }
    pyramid.iter().map(|g| encode_level(dec, g)).collect()
}

pub fn decode_pyramid<T: Scalar>(dec: &CoolChicDecoder<T>, payloads: &[Vec<u8>]) -> Result<LatentPyramid> {
    if payloads.len() != N_LEVELS {
        return Err(Error::Format(format!("{} latent payloads, expected {N_LEVELS}", payloads.len())));
    }
    crate::coolchic::level_dims(dec.height(), dec.width())
        .into_iter()
        .zip(payloads)
        .map(|((h, w), p)| decode_level(dec, h, w, p))
        .collect()
}

/// Codes a parameter tensor under its zero-mean Laplace model.
pub fn encode_param(q: &QuantizedParam) -> Result<Vec<u8>> {
    let m = LaplaceModel::new(0.0, q.log_scale())?;
    let mut enc = RangeEncoder::new();
    for &v in &q.values {
        m.encode(&mut enc, v)?;
    }
    Ok(enc.finish())
}

pub fn decode_param(step_log2: i8, scale: f32, n: usize, payload: &[u8]) -> Result<QuantizedParam> {
    let mut q = QuantizedParam { step_log2, values: Vec::new(), scale };
    let m = LaplaceModel::new(0.0, q.log_scale())?;
    let mut rd = RangeDecoder::new(payload)?;
    q.values = (0..n).map(|_| m.decode(&mut rd)).collect::<Result<_>>()?;
    if !rd.is_exhausted() {
        return Err(Error::Stream("parameter payload has trailing bytes".into()));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coolchic::DecoderKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_decoder(kind: DecoderKind, seed: u64) -> (CoolChicDecoder<f32>, LatentPyramid) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = CoolChicDecoder::<f32>::new(kind, 64, 64, &mut rng).unwrap();
        // give the ARM output layer something to predict with
        let n = kind.n_arm_params();
        for v in d.params[n - 2].data_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
        let pyr: LatentPyramid = d
            .latents
            .iter()
            .map(|t| {
                let (h, w) = (t.shape()[1], t.shape()[2]);
                LatentGrid { h, w, values: (0..h * w).map(|_| rng.gen_range(-6..=6)).collect() }
            })
            .collect();
        d.set_latents(&pyr).unwrap();
        (d, pyr)
    }

    #[test]
    fn pyramid_round_trip() {
        for (i, kind) in DecoderKind::ALL.into_iter().enumerate() {
            let (d, pyr) = random_decoder(kind, i as u64);
            let payloads = encode_pyramid(&d, &pyr).unwrap();
            assert_eq!(decode_pyramid(&d, &payloads).unwrap(), pyr);
        }
    }

    #[test]
    fn param_round_trip() {
        let q = QuantizedParam::new(-6, vec![0, 3, -2, 17, 0, 0, -400, 1]);
        let bytes = encode_param(&q).unwrap();
        assert_eq!(decode_param(-6, q.scale, 8, &bytes).unwrap(), q);
    }

    #[test]
    fn truncated_level_is_rejected() {
        let (d, pyr) = random_decoder(DecoderKind::Residue, 7);
        let bytes = encode_level(&d, &pyr[0]).unwrap();
        assert!(decode_level(&d, 64, 64, &bytes[..bytes.len() - 1]).is_err());
    }
}
