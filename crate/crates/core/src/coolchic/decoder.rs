use std::rc::Rc;

use rand::Rng;

use super::arch::{level_dims, ConvSpec, DecoderKind, ParamRole, N_LEVELS, SIZE_MULTIPLE};
use super::arm::{arm_graph, context_indices, context_template};
use crate::error::{dim_err, Error, Result};
use crate::numerics::kernels::TCONV_KERNEL;
use crate::numerics::{Graph, QuantizerMode, Scalar, Tensor, Var};

/// Integer latent grids, one per level, finest first.
pub type LatentPyramid = Vec<LatentGrid>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentGrid {
    pub h: usize,
    pub w: usize,
    pub values: Vec<i32>,
}

impl LatentGrid {
    pub fn zeros(h: usize, w: usize) -> Self {
        LatentGrid { h, w, values: vec![0; h * w] }
    }
}

/// Latent bounds: every transmitted latent lies in `[LATENT_MIN, LATENT_MAX]`.
pub const LATENT_MIN: i32 = -(1 << 15);
pub const LATENT_MAX: i32 = (1 << 15) - 1;

/// Separable bilinear x2 interpolation filter for an 8-tap transposed convolution.
pub fn bilinear_kernel<T: Scalar>() -> Vec<T> {
    let taps = [0.0, 0.0, 0.25, 0.75, 0.75, 0.25, 0.0, 0.0];
    let mut k = Vec::with_capacity(TCONV_KERNEL * TCONV_KERNEL);
    for a in taps {
        for b in taps {
            k.push(T::from_f64(a * b).unwrap());
        }
    }
    k
}

/// Graph handles produced by [`CoolChicDecoder::forward`].
#[derive(Clone, Debug)]
pub struct DecoderVars {
    /// Synthesis output, (channels, h, w).
    pub output: Var,
    /// Total latent rate in bits (scalar).
    pub rate_bits: Var,
    pub params: Vec<Var>,
    pub latents: Vec<Var>,
    /// Quantized latents, one per level.
    pub quantized: Vec<Var>,
}

/// A Cool-chic decoder: ARM, upsampler and synthesis parameters together
/// with the continuous latent pyramid being overfitted.
#[derive(Clone, Debug)]
pub struct CoolChicDecoder<T> {
    kind: DecoderKind,
    h: usize,
    w: usize,
    pub params: Vec<Tensor<T>>,
    pub latents: Vec<Tensor<T>>,
    ctx_idx: Vec<Rc<[i32]>>,
}

impl<T: Scalar> CoolChicDecoder<T> {
    /// Fresh decoder: zero latents, bilinear upsampler, ARM output layer at
    /// zero, every other weight uniform in +-1/sqrt(fan_in), biases zero.
    pub fn new<R: Rng + ?Sized>(kind: DecoderKind, h: usize, w: usize, rng: &mut R) -> Result<Self> {
        let mut dec = Self::zeroed(kind, h, w)?;
        let shapes = kind.param_shapes();
        let last_arm_weight = kind.n_arm_params() - 2;
        for (i, (p, s)) in dec.params.iter_mut().zip(&shapes).enumerate() {
            match s.role {
                ParamRole::UpKernel => p.data_mut().copy_from_slice(&bilinear_kernel::<T>()),
                ParamRole::ArmWeight if i == last_arm_weight => {}
                ParamRole::ArmWeight | ParamRole::SynWeight => {
                    let bound = 1.0 / (s.fan_in() as f64).sqrt();
                    for v in p.data_mut() {
                        *v = T::from_f64(rng.gen_range(-bound..bound)).unwrap();
                    }
                }
                _ => {}
            }
        }
        Ok(dec)
    }

    /// Decoder with every parameter and latent at zero.
    pub fn zeroed(kind: DecoderKind, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
            return Err(dim_err!("decoder size {h}x{w} is not a positive multiple of {SIZE_MULTIPLE}"));
        }
        let params = kind.param_shapes().iter().map(|s| Tensor::zeros(&s.shape).into_param()).collect();
        let latents = level_dims(h, w).into_iter().map(|(lh, lw)| Tensor::zeros(&[1, lh, lw]).into_param()).collect();
        let template = context_template(kind.arm_width());
        let ctx_idx = level_dims(h, w).into_iter().map(|(lh, lw)| context_indices(lh, lw, &template)).collect();
        Ok(CoolChicDecoder { kind, h, w, params, latents, ctx_idx })
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn n_latents(&self) -> usize {
        self.latents.iter().map(|l| l.numel()).sum()
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    /// Replaces the latents with the given integer pyramid.
    pub fn set_latents(&mut self, pyramid: &[LatentGrid]) -> Result<()> {
        let dims = level_dims(self.h, self.w);
        if pyramid.len() != N_LEVELS {
            return Err(dim_err!("pyramid has {} levels, expected {N_LEVELS}", pyramid.len()));
        }
        for ((t, g), &(lh, lw)) in self.latents.iter_mut().zip(pyramid).zip(&dims) {
            if (g.h, g.w) != (lh, lw) || g.values.len() != lh * lw {
                return Err(dim_err!("latent level {}x{} where {lh}x{lw} expected", g.h, g.w));
            }
            for (d, &v) in t.data_mut().iter_mut().zip(&g.values) {
                *d = T::from_i32(v).unwrap();
            }
        }
        Ok(())
    }

    /// Rounds the continuous latents to integers within the alphabet.
    pub fn rounded_latents(&self) -> Result<LatentPyramid> {
        self.latents
            .iter()
            .map(|t| {
                let values = t
                    .data()
                    .iter()
                    .map(|v| {
                        let r = v.round().to_f64().unwrap_or(f64::NAN);
                        if !(LATENT_MIN as f64..=LATENT_MAX as f64).contains(&r) {
                            return Err(Error::Stream(format!("latent {r} outside the coded alphabet")));
                        }
                        Ok(r as i32)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LatentGrid { h: t.shape()[1], w: t.shape()[2], values })
            })
            .collect()
    }

    /// Parameters laid out as (weight, bias) pairs for the ARM.
    pub fn arm_params(&self) -> &[Tensor<T>] {
        &self.params[..self.kind.n_arm_params()]
    }

    fn up_index(&self) -> usize {
        self.kind.n_arm_params()
    }

    /// Builds the decoding graph: quantize latents, ARM rate (teacher-forced
    /// on quantized values), upsample, synthesize. When `trainable` is false
    /// every leaf enters the graph as a constant.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        mode: QuantizerMode,
        rng: &mut R,
        trainable: bool,
    ) -> Result<DecoderVars> {
        let leaf = |g: &mut Graph<T>, t: &Tensor<T>| if trainable { g.param(t) } else { g.constant_tensor(t) };
        let params: Vec<Var> = self.params.iter().map(|p| leaf(g, p)).collect();
        let latents: Vec<Var> = self.latents.iter().map(|l| leaf(g, l)).collect();
        let quantized = latents.iter().map(|&l| g.quantize(l, mode, rng)).collect::<Result<Vec<_>>>()?;

        let rate_bits = self.rate_graph(g, &params, &quantized)?;
        let dense = self.upsample_graph(g, &params, &quantized)?;
        let output = self.synthesis_graph(g, &params, dense)?;
        Ok(DecoderVars { output, rate_bits, params, latents, quantized })
    }

    /// Sum of latent bits for the given quantized levels.
    pub fn rate_graph(&self, g: &mut Graph<T>, params: &[Var], quantized: &[Var]) -> Result<Var> {
        let n_arm = self.kind.n_arm_params();
        let layers: Vec<(Var, Var)> = params[..n_arm].chunks(2).map(|c| (c[0], c[1])).collect();
        let width = self.kind.arm_width();
        let mut total: Option<Var> = None;
        for (l, &q) in quantized.iter().enumerate() {
            let n = g.value(q).len();
            let flat = g.reshape(q, &[n])?;
            let ctx = g.gather(flat, self.ctx_idx[l].clone(), &[n, width])?;
            let mu_ls = arm_graph(g, ctx, &layers)?;
            let bits = g.laplace_bits(flat, mu_ls)?;
            let s = g.sum(bits);
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        total.ok_or_else(|| dim_err!("empty pyramid"))
    }

    /// Dense (7, h, w) feature map: level l goes through l upsampling steps.
    pub fn upsample_graph(&self, g: &mut Graph<T>, params: &[Var], quantized: &[Var]) -> Result<Var> {
        let ui = self.up_index();
        let (kernel, bias) = (params[ui], params[ui + 1]);
        let mut planes = Vec::with_capacity(N_LEVELS);
        for (l, &q) in quantized.iter().enumerate() {
            let mut x = q;
            for _ in 0..l {
                x = g.tconv2d_stride2(x, kernel, bias)?;
            }
            planes.push(x);
        }
        g.concat_channels(&planes)
    }

    pub fn synthesis_graph(&self, g: &mut Graph<T>, params: &[Var], dense: Var) -> Result<Var> {
        synthesis_graph(g, &self.kind.synthesis(), &params[self.up_index() + 2..], dense)
    }

    /// Synthesis output on the rounded latents with every value held
    /// constant; the rate model is not evaluated.
    pub fn output_graph(&self, g: &mut Graph<T>) -> Result<Var> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let params: Vec<Var> = self.params.iter().map(|p| g.constant_tensor(p)).collect();
        let quantized = self
            .latents
            .iter()
            .map(|l| {
                let v = g.constant_tensor(l);
                g.quantize(v, QuantizerMode::HardRoundSte, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let dense = self.upsample_graph(g, &params, &quantized)?;
        self.synthesis_graph(g, &params, dense)
    }

    /// Output of the decoder on its rounded latents. The same computation
    /// the real decoder runs.
    pub fn infer(&self) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let out = self.output_graph(&mut g)?;
        g.check_finite()?;
        Ok(g.tensor(out))
    }

    /// Latent rate (bits) and output under hard rounding, without gradients.
    pub fn evaluate(&self) -> Result<(Tensor<T>, f64)> {
        let mut g = Graph::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let v = self.forward(&mut g, QuantizerMode::HardRoundSte, &mut rng, false)?;
        g.check_finite()?;
        Ok((g.tensor(v.output), g.scalar_value(v.rate_bits).to_f64().unwrap()))
    }

    /// Latent rate in bits of the rounded latents, skipping synthesis.
    pub fn latent_rate(&self) -> Result<f64> {
        let mut g = Graph::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let params: Vec<Var> = self.params.iter().map(|p| g.constant_tensor(p)).collect();
        let quantized = self
            .latents
            .iter()
            .map(|l| {
                let v = g.constant_tensor(l);
                g.quantize(v, QuantizerMode::HardRoundSte, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let r = self.rate_graph(&mut g, &params, &quantized)?;
        g.check_finite()?;
        Ok(g.scalar_value(r).to_f64().unwrap())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> CoolChicDecoder<U> {
        CoolChicDecoder {
            kind: self.kind,
            h: self.h,
            w: self.w,
            params: self.params.iter().map(|p| p.cast()).collect(),
            latents: self.latents.iter().map(|p| p.cast()).collect(),
            ctx_idx: self.ctx_idx.clone(),
        }
    }
}

/// Applies a synthesis layer stack. `params` holds (weight, bias) per layer.
pub fn synthesis_graph<T: Scalar>(g: &mut Graph<T>, layers: &[ConvSpec], params: &[Var], input: Var) -> Result<Var> {
    if params.len() != 2 * layers.len() {
        return Err(dim_err!("synthesis: {} parameter tensors for {} layers", params.len(), layers.len()));
    }
    let mut x = input;
    for (spec, wb) in layers.iter().zip(params.chunks(2)) {
        let mut y = g.conv2d(x, wb[0], wb[1])?;
        if spec.residual {
            y = g.add(x, y)?;
        }
        if spec.relu {
            y = g.relu(y);
        }
        x = y;
    }
    Ok(x)
}
