#![allow(dead_code)]

use ovc::coolchic::{CoolChicDecoder, DecoderKind};
use ovc::numerics::{Graph, QuantizerMode, Tensor, Var};
use ovc::pipeline::{blend, reconstruct, split_motion, split_residue, to_yuv420};
use ovc::Result;
use rand::rngs::mock::StepRng;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOLERANCE: f64 = 1e-3;
const EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < GRAD_TOLERANCE
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `sum(w * x)` with fixed pseudo-random weights, so every output element
/// contributes to the loss with a distinct coefficient.
pub fn project(g: &mut Graph<f64>, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(x).to_vec();
    let w = random_tensor(&mut rng, &shape, -1.0, 1.0);
    let w = g.constant_tensor(&w);
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

fn evaluate(
    inputs: &[Tensor<f64>],
    f: &impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> Result<(Graph<f64>, Vec<Var>, Var)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let loss = f(&mut g, &vars)?;
    Ok((g, vars, loss))
}

/// Compares analytic gradients with central differences. Coordinates whose
/// perturbation crosses a kink (different discrete decisions) are skipped.
/// `per_input` limits the number of sampled coordinates per input.
pub fn gradcheck(
    name: &str,
    inputs: Vec<Tensor<f64>>,
    per_input: Option<usize>,
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> GradReport {
    let inputs: Vec<Tensor<f64>> = inputs.into_iter().map(Tensor::into_param).collect();
    let (g, vars, loss) = evaluate(&inputs, &f).unwrap();
    let signature = g.kink_signature();
    let grads = g.backward(loss).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let mut report = GradReport { name: name.to_string(), max_rel_err: 0.0, checked: 0, skipped: 0 };
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], t.numel());
        let coords: Vec<usize> = match per_input {
            Some(k) if k < t.numel() => sample(&mut rng, t.numel(), k).into_vec(),
            _ => (0..t.numel()).collect(),
        };
        for j in coords {
            let side = |delta: f64| {
                let mut perturbed = inputs.clone();
                perturbed[i].data_mut()[j] += delta;
                let (g, _, l) = evaluate(&perturbed, &f).unwrap();
                (g.scalar_value(l), g.kink_signature())
            };
            let (lp, sp) = side(EPS);
            let (lm, sm) = side(-EPS);
            if sp != signature || sm != signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * EPS);
            let a = analytic[j];
            let scale = a.abs().max(numeric.abs()).max(1e-4);
            report.max_rel_err = report.max_rel_err.max((a - numeric).abs() / scale);
            report.checked += 1;
        }
    }
    report
}

fn noise_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(99)
}

/// Gradient checks for every differentiable operation and for complete
/// decoder stacks.
pub fn gradient_suite() -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();

    out.push(gradcheck(
        "linear 8-8",
        vec![
            random_tensor(&mut rng, &[5, 8], -1.0, 1.0),
            random_tensor(&mut rng, &[8, 8], -1.0, 1.0),
            random_tensor(&mut rng, &[8], -1.0, 1.0),
        ],
        None,
        |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            project(g, y, 1)
        },
    ));
    out.push(gradcheck(
        "conv 1x1 7-9",
        vec![
            random_tensor(&mut rng, &[7, 6, 6], -1.0, 1.0),
            random_tensor(&mut rng, &[9, 7, 1, 1], -1.0, 1.0),
            random_tensor(&mut rng, &[9], -1.0, 1.0),
        ],
        None,
        |g, v| {
            let y = g.conv2d(v[0], v[1], v[2])?;
            project(g, y, 2)
        },
    ));
    out.push(gradcheck(
        "conv 3x3 3-4-4",
        vec![
            random_tensor(&mut rng, &[4, 6, 5], -1.0, 1.0),
            random_tensor(&mut rng, &[4, 4, 3, 3], -1.0, 1.0),
            random_tensor(&mut rng, &[4], -1.0, 1.0),
        ],
        None,
        |g, v| {
            let y = g.conv2d(v[0], v[1], v[2])?;
            project(g, y, 3)
        },
    ));
    out.push(gradcheck(
        "tconv 8x8 stride 2",
        vec![
            random_tensor(&mut rng, &[1, 4, 4], -1.0, 1.0),
            random_tensor(&mut rng, &[8, 8], -1.0, 1.0),
            random_tensor(&mut rng, &[1], -1.0, 1.0),
        ],
        None,
        |g, v| {
            let y = g.tconv2d_stride2(v[0], v[1], v[2])?;
            project(g, y, 4)
        },
    ));
    out.push(gradcheck(
        "relu",
        vec![random_tensor(&mut rng, &[20], -1.0, 1.0)],
        None,
        |g, v| {
            let y = g.relu(v[0]);
            project(g, y, 5)
        },
    ));
    out.push(gradcheck(
        "warp",
        vec![random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0), random_tensor(&mut rng, &[2, 8, 8], -2.5, 2.5)],
        None,
        |g, v| {
            let y = g.warp(v[0], v[1])?;
            project(g, y, 6)
        },
    ));
    out.push(gradcheck(
        "blend",
        vec![
            random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0),
            random_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0),
            random_tensor(&mut rng, &[5, 8, 8], -1.5, 1.5),
        ],
        None,
        |g, v| {
            let m = g.slice_channels(v[2], 0, 4)?;
            let beta = g.slice_channels(v[2], 4, 1)?;
            let raw = g.scale(beta, 0.2);
            let half = g.constant_tensor(&Tensor::full(&[1, 8, 8], 0.5));
            let beta = g.add(raw, half)?;
            let out = g.concat_channels(&[m, beta])?;
            let motion = split_motion(g, out, DecoderKind::MotionB)?;
            let y = blend(g, v[0], Some(v[1]), &motion)?;
            project(g, y, 7)
        },
    ));
    out.push(gradcheck(
        "reconstruct",
        vec![random_tensor(&mut rng, &[3, 6, 6], 0.0, 1.0), random_tensor(&mut rng, &[4, 6, 6], 0.05, 0.95)],
        None,
        |g, v| {
            let res = split_residue(g, v[1])?;
            let y = reconstruct(g, v[0], &res)?;
            project(g, y, 8)
        },
    ));
    out.push(gradcheck("to_yuv420", vec![random_tensor(&mut rng, &[3, 6, 8], 0.0, 1.0)], None, |g, v| {
        let (y, uv) = to_yuv420(g, v[0])?;
        let a = project(g, y, 9)?;
        let b = project(g, uv, 10)?;
        g.add(a, b)
    }));
    out.push(gradcheck("softround", vec![random_tensor(&mut rng, &[24], -3.0, 3.0)], None, |g, v| {
        let y = g.quantize(v[0], QuantizerMode::SoftRound(0.3), &mut StepRng::new(0, 0))?;
        project(g, y, 11)
    }));
    out.push(gradcheck("additive noise", vec![random_tensor(&mut rng, &[24], -3.0, 3.0)], None, |g, v| {
        let y = g.quantize(v[0], QuantizerMode::AdditiveNoise(0.5), &mut noise_rng())?;
        project(g, y, 12)
    }));
    out.push(gradcheck(
        "laplace rate",
        vec![random_tensor(&mut rng, &[16], -3.0, 3.0), random_tensor(&mut rng, &[16, 2], -1.5, 1.5)],
        None,
        |g, v| {
            let bits = g.laplace_bits(v[0], v[1])?;
            Ok(g.sum(bits))
        },
    ));
    for kind in [DecoderKind::Intra, DecoderKind::Residue, DecoderKind::MotionP, DecoderKind::MotionB] {
        out.push(decoder_stack_check(kind, &mut rng));
    }
    out
}

/// Distortion plus rate of a whole decoder, differentiated with respect to
/// every parameter and latent tensor (a few sampled coordinates each).
fn decoder_stack_check(kind: DecoderKind, rng: &mut ChaCha8Rng) -> GradReport {
    let mut dec = CoolChicDecoder::<f64>::new(kind, 64, 64, rng).unwrap();
    for p in dec.params.iter_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    for l in dec.latents.iter_mut() {
        for v in l.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
    }
    let target = random_tensor(rng, &[kind.output_channels(), 64, 64], -0.5, 0.5);
    let n_params = dec.params.len();
    let inputs: Vec<Tensor<f64>> = dec.params.iter().chain(&dec.latents).cloned().collect();
    let template = dec.clone();
    gradcheck(&format!("{} decoder stack", kind.name()), inputs, Some(2), move |g, v| {
        let mut rng = StepRng::new(0, 0);
        let mode = QuantizerMode::SoftRound(0.3);
        let params = &v[..n_params];
        let quantized = v[n_params..].iter().map(|&l| g.quantize(l, mode, &mut rng)).collect::<Result<Vec<_>>>()?;
        let rate = template.rate_graph(g, params, &quantized)?;
        let dense = template.upsample_graph(g, params, &quantized)?;
        let out = template.synthesis_graph(g, params, dense)?;
        let t = g.constant_tensor(&target);
        let e = g.sse(out, t)?;
        let e = g.scale(e, 1.0 / 4096.0);
        let r = g.scale(rate, 1.0 / 4096.0);
        g.add(e, r)
    })
}


/// BD-rate from the fitted curves, integrated numerically with the
/// trapezoidal rule instead of analytically.
pub fn trapezoid_bd_rate(anchor: &[ovc::metrics::RdPoint], test: &[ovc::metrics::RdPoint]) -> f64 {
    let fa = ovc::metrics::fit_log_rate(anchor).unwrap();
    let ft = ovc::metrics::fit_log_rate(test).unwrap();
    let lo = fa.psnr_min.max(ft.psnr_min);
    let hi = fa.psnr_max.min(ft.psnr_max);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let f = |p: f64| ft.eval(p) - fa.eval(p);
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        acc += f(lo + i as f64 * h);
    }
    ((acc * h / (hi - lo)).exp() - 1.0) * 100.0
}

/// Two RD curves whose log-rate is an exact cubic in PSNR, sampled at four
/// points, with the expected BD-rate computed from the known polynomials.
pub fn exact_cubic_pair() -> (Vec<ovc::metrics::RdPoint>, Vec<ovc::metrics::RdPoint>, f64) {
    let a = |p: f64| -4.0 + 0.12 * (p - 30.0) + 0.002 * (p - 30.0).powi(2) - 1e-4 * (p - 30.0).powi(3);
    let t = |p: f64| a(p) - 0.08 + 0.01 * (p - 32.0) - 5e-4 * (p - 32.0).powi(2);
    let pa = [28.0, 31.0, 34.0, 37.0];
    let pt = [29.0, 32.0, 35.0, 38.0];
    let anchor = pa.iter().map(|&p| ovc::metrics::RdPoint { bpp: a(p).exp(), psnr_db: p }).collect();
    let test = pt.iter().map(|&p| ovc::metrics::RdPoint { bpp: t(p).exp(), psnr_db: p }).collect();
    let (lo, hi) = (29.0, 37.0);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let d = |p: f64| t(p) - a(p);
    let mut acc = 0.5 * (d(lo) + d(hi));
    for i in 1..n {
        acc += d(lo + i as f64 * h);
    }
    (anchor, test, ((acc * h / (hi - lo)).exp() - 1.0) * 100.0)
}
