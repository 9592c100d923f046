//! Prediction and reconstruction as graph operations, shared by the encoder
//! (with gradients) and the decoder (on constants).

use super::gop::FrameKind;
use crate::coolchic::DecoderKind;
use crate::error::{dim_err, Error, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};

/// Flows and blending weight decoded by a motion decoder.
#[derive(Clone, Copy, Debug)]
pub struct MotionVars {
    /// (2, H, W) flow towards the first reference, (dx, dy) in pixels.
    pub v1: Var,
    pub v2: Option<Var>,
    /// (1, H, W) weight of the first reference, clamped to [0, 1].
    pub beta: Option<Var>,
}

/// Coding mode and residue decoded by a residue decoder.
#[derive(Clone, Copy, Debug)]
pub struct ResidueVars {
    /// (1, H, W) weight of the prediction, clamped to [0, 1].
    pub alpha: Var,
    /// (3, H, W) additive residue.
    pub residue: Var,
}

/// Splits a motion synthesis output: B frames use channels (0,1) for the
/// first flow, (2,3) for the second and 4 for the blending weight.
pub fn split_motion<T: Scalar>(g: &mut Graph<T>, out: Var, kind: DecoderKind) -> Result<MotionVars> {
    match kind {
        DecoderKind::MotionP => Ok(MotionVars { v1: g.slice_channels(out, 0, 2)?, v2: None, beta: None }),
        DecoderKind::MotionB => {
            let v1 = g.slice_channels(out, 0, 2)?;
            let v2 = g.slice_channels(out, 2, 2)?;
            let raw = g.slice_channels(out, 4, 1)?;
            Ok(MotionVars { v1, v2: Some(v2), beta: Some(g.clamp01_ste(raw)) })
        }
        other => Err(Error::Pipeline(format!("{} decoder does not produce motion", other.name()))),
    }
}

/// Channel 0 is the coding mode, channels 1..4 the residue.
pub fn split_residue<T: Scalar>(g: &mut Graph<T>, out: Var) -> Result<ResidueVars> {
    let raw = g.slice_channels(out, 0, 1)?;
    let alpha = g.clamp01_ste(raw);
    let residue = g.slice_channels(out, 1, 3)?;
    Ok(ResidueVars { alpha, residue })
}

/// Temporal prediction: `beta * warp(ref1, v1) + (1 - beta) * warp(ref2, v2)`,
/// reducing to `warp(ref1, v1)` for single-reference motion.
pub fn blend<T: Scalar>(g: &mut Graph<T>, ref1: Var, ref2: Option<Var>, motion: &MotionVars) -> Result<Var> {
    let w1 = g.warp(ref1, motion.v1)?;
    match (ref2, motion.v2, motion.beta) {
        (None, None, None) => Ok(w1),
        (Some(r2), Some(v2), Some(beta)) => {
            let w2 = g.warp(r2, v2)?;
            let a = g.mul_bcast(beta, w1)?;
            let one_minus = g.one_minus(beta);
            let b = g.mul_bcast(one_minus, w2)?;
            g.add(a, b)
        }
        _ => Err(Error::Pipeline("reference count does not match the motion field".into())),
    }
}

/// `alpha * prediction + residue`.
pub fn reconstruct<T: Scalar>(g: &mut Graph<T>, prediction: Var, res: &ResidueVars) -> Result<Var> {
    let masked = g.mul_bcast(res.alpha, prediction)?;
    g.add(masked, res.residue)
}

/// Luma (1, H, W) and 2x2-averaged chroma (2, H/2, W/2) of a (3, H, W) picture.
pub fn to_yuv420<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<(Var, Var)> {
    let s = g.shape(x).to_vec();
    if s.len() != 3 || s[0] != 3 {
        return Err(dim_err!("to_yuv420 expects (3, H, W), got {:?}", s));
    }
    super::frame::check_even(s[2], s[1])?;
    let y = g.slice_channels(x, 0, 1)?;
    let uv = g.slice_channels(x, 1, 2)?;
    let uv = g.avgpool2(uv)?;
    Ok((y, uv))
}

/// Mean squared error over all 4:2:0 samples against `(luma, chroma)` targets.
pub fn yuv420_mse<T: Scalar>(g: &mut Graph<T>, x: Var, target: &(Tensor<T>, Tensor<T>)) -> Result<Var> {
    let (y, uv) = to_yuv420(g, x)?;
    let ty = g.constant_tensor(&target.0);
    let tuv = g.constant_tensor(&target.1);
    let ey = g.sse(y, ty)?;
    let euv = g.sse(uv, tuv)?;
    let e = g.add(ey, euv)?;
    let n = target.0.numel() + target.1.numel();
    Ok(g.scale(e, T::from_f64(1.0 / n as f64).unwrap()))
}

/// Builds the reconstruction of one frame from its decoders' synthesis
/// outputs (in `FrameKind::decoder_kinds` order) and reference pictures.
pub fn frame_reconstruction<T: Scalar>(
    g: &mut Graph<T>,
    kind: FrameKind,
    outputs: &[Var],
    refs: &[Var],
) -> Result<Var> {
    if refs.len() != kind.n_refs() {
        return Err(Error::Pipeline(format!("{kind:?} frame needs {} references, {} given", kind.n_refs(), refs.len())));
    }
    match kind {
        FrameKind::I => outputs.first().copied().ok_or_else(|| Error::Pipeline("missing intra output".into())),
        FrameKind::P | FrameKind::B => {
            let [m, r] = outputs else {
                return Err(Error::Pipeline("inter frames need a motion and a residue output".into()));
            };
            let dk = if kind == FrameKind::P { DecoderKind::MotionP } else { DecoderKind::MotionB };
            let motion = split_motion(g, *m, dk)?;
            let pred = blend(g, refs[0], refs.get(1).copied(), &motion)?;
            let res = split_residue(g, *r)?;
            reconstruct(g, pred, &res)
        }
    }
}

fn run<T: Scalar>(build: impl FnOnce(&mut Graph<T>) -> Result<Var>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let v = build(&mut g)?;
    Ok(g.tensor(v))
}

/// Tensor-level backward bilinear warp with edge clamping.
pub fn warp_tensor<T: Scalar>(reference: &Tensor<T>, flow: &Tensor<T>) -> Result<Tensor<T>> {
    run(|g| {
        let r = g.constant_tensor(reference);
        let f = g.constant_tensor(flow);
        g.warp(r, f)
    })
}

/// Tensor-level prediction; `beta` is used as given (no clamping).
pub fn blend_tensor<T: Scalar>(
    ref1: &Tensor<T>,
    ref2: Option<&Tensor<T>>,
    v1: &Tensor<T>,
    v2: Option<&Tensor<T>>,
    beta: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    run(|g| {
        let r1 = g.constant_tensor(ref1);
        let r2 = ref2.map(|t| g.constant_tensor(t));
        let motion = MotionVars {
            v1: g.constant_tensor(v1),
            v2: v2.map(|t| g.constant_tensor(t)),
            beta: beta.map(|t| g.constant_tensor(t)),
        };
        blend(g, r1, r2, &motion)
    })
}

pub fn reconstruct_tensor<T: Scalar>(prediction: &Tensor<T>, alpha: &Tensor<T>, residue: &Tensor<T>) -> Result<Tensor<T>> {
    run(|g| {
        let p = g.constant_tensor(prediction);
        let res = ResidueVars { alpha: g.constant_tensor(alpha), residue: g.constant_tensor(residue) };
        reconstruct(g, p, &res)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(shape: &[usize], v: f32) -> Tensor<f32> {
        Tensor::full(shape, v)
    }

    #[test]
    fn constant_blend_is_the_average() {
        let a = filled(&[3, 4, 4], 0.2);
        let b = filled(&[3, 4, 4], 0.6);
        let z = filled(&[2, 4, 4], 0.0);
        let beta = filled(&[1, 4, 4], 0.5);
        let out = blend_tensor(&a, Some(&b), &z, Some(&z), Some(&beta)).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.4).abs() < 1e-7));
    }

    #[test]
    fn yuv420_of_constant_frame() {
        let mut g = Graph::<f32>::new();
        let x = g.constant_tensor(&filled(&[3, 4, 6], 0.25));
        let (y, uv) = to_yuv420(&mut g, x).unwrap();
        assert_eq!(g.shape(y), &[1, 4, 6]);
        assert_eq!(g.shape(uv), &[2, 2, 3]);
        assert!(g.value(uv).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn odd_picture_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.constant_tensor(&filled(&[3, 3, 4], 0.0));
        assert!(matches!(to_yuv420(&mut g, x), Err(Error::Config(_))));
    }

    #[test]
    fn missing_reference_is_a_pipeline_error() {
        let mut g = Graph::<f32>::new();
        let m = g.constant_tensor(&filled(&[2, 4, 4], 0.0));
        let r = g.constant_tensor(&filled(&[4, 4, 4], 0.0));
        assert!(matches!(frame_reconstruction(&mut g, FrameKind::P, &[m, r], &[]), Err(Error::Pipeline(_))));
    }
}
