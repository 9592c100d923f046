//! Gradient-descent stages: motion pre-training, frame-wise and joint
//! rate-distortion optimization.

use rand::rngs::mock::StepRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::schedule::Schedule;
use crate::coolchic::{CoolChicDecoder, DecoderKind, DecoderVars};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamState, Graph, QuantizerMode, Tensor, Var};
use crate::pipeline::{decode_frame, frame_reconstruction, yuv420_mse, FrameKind, GopStructure};

/// Luma (1, H, W) and chroma (2, H/2, W/2) targets in [0, 1].
pub type Target = (Tensor<f32>, Tensor<f32>);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iteration: usize,
    /// Training loss (with the scheduled quantizer) at this iteration.
    pub loss: f64,
    /// Loss with hard rounding and no noise.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageLog {
    pub stage: String,
    pub iterations: usize,
    pub initial_cost: f64,
    pub best_cost: f64,
    pub best_iteration: usize,
    pub curve: Vec<CurvePoint>,
}

fn scalar(g: &Graph<f32>, v: Var) -> f64 {
    g.scalar_value(v) as f64
}

/// Runs `schedule` on the given decoders, minimizing the loss built by
/// `objective` from their graph handles (same order as `decoders`). The
/// hard-rounded cost is measured before training, every
/// `checkpoint_every` iterations and at the end; the best state is kept.
pub fn optimize<F>(
    stage: &str,
    decoders: &mut [&mut CoolChicDecoder<f32>],
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    mut objective: F,
) -> Result<StageLog>
where
    F: FnMut(&mut Graph<f32>, &[DecoderVars]) -> Result<Var>,
{
    let run = |decs: &[&mut CoolChicDecoder<f32>],
               objective: &mut F,
               mode: QuantizerMode,
               rng: &mut dyn rand::RngCore,
               trainable: bool|
     -> Result<(Graph<f32>, Vec<DecoderVars>, Var)> {
        let mut g = Graph::new();
        let vars = decs.iter().map(|d| d.forward(&mut g, mode, rng, trainable)).collect::<Result<Vec<_>>>()?;
        let loss = objective(&mut g, &vars)?;
        Ok((g, vars, loss))
    };
    let true_cost = |decs: &[&mut CoolChicDecoder<f32>], objective: &mut F| -> Result<f64> {
        let (g, _, loss) = run(decs, objective, QuantizerMode::HardRoundSte, &mut StepRng::new(0, 0), false)?;
        Ok(scalar(&g, loss))
    };

    let initial_cost = true_cost(decoders, &mut objective).map_err(|e| e.in_stage(stage))?;
    let mut best = (initial_cost, 0usize, snapshot(decoders));
    let mut curve = Vec::new();
    let mut adam: Vec<Vec<AdamState<f32>>> = decoders
        .iter()
        .map(|d| d.params.iter().chain(&d.latents).map(|t| AdamState::for_tensor(t, 0.0)).collect())
        .collect();

    let total = schedule.total();
    for it in 0..total {
        let step = schedule.at(it);
        let (g, vars, loss) =
            run(decoders, &mut objective, step.mode, rng, true).map_err(|e| e.in_stage(stage))?;
        let value = scalar(&g, loss);
        if !value.is_finite() {
            return Err(Error::Training(format!(
                "[{stage}] loss is {value} at iteration {it} (phase {}, {:?}, lr {:.3e}); last checked cost {:.6e} at iteration {}",
                step.phase, step.mode, step.lr, best.0, best.1
            )));
        }
        let grads = g.backward(loss).map_err(|e| e.in_stage(stage))?;
        for ((dec, v), states) in decoders.iter_mut().zip(&vars).zip(&mut adam) {
            let tensors = dec.params.iter_mut().chain(dec.latents.iter_mut());
            let handles = v.params.iter().chain(&v.latents);
            for ((t, &h), st) in tensors.zip(handles).zip(states.iter_mut()) {
                if let Some(grad) = grads.get(h) {
                    st.lr = step.lr;
                    adam_step(t.data_mut(), grad, st).map_err(|e| e.in_stage(stage))?;
                }
            }
        }
        let done = it + 1;
        if done % schedule.checkpoint_every() == 0 || done == total {
            let cost = true_cost(decoders, &mut objective).map_err(|e| e.in_stage(stage))?;
            curve.push(CurvePoint { iteration: done, loss: value, cost });
            if cost < best.0 {
                best = (cost, done, snapshot(decoders));
            }
        }
    }
    restore(decoders, best.2);
    Ok(StageLog {
        stage: stage.to_string(),
        iterations: total,
        initial_cost,
        best_cost: best.0,
        best_iteration: best.1,
        curve,
    })
}

type Snapshot = Vec<(Vec<Tensor<f32>>, Vec<Tensor<f32>>)>;

fn snapshot(decoders: &[&mut CoolChicDecoder<f32>]) -> Snapshot {
    decoders.iter().map(|d| (d.params.clone(), d.latents.clone())).collect()
}

fn restore(decoders: &mut [&mut CoolChicDecoder<f32>], snap: Snapshot) {
    for (d, (p, l)) in decoders.iter_mut().zip(snap) {
        d.params = p;
        d.latents = l;
    }
}

fn n_pixels(dec: &CoolChicDecoder<f32>) -> f64 {
    (dec.height() * dec.width()) as f64
}

/// `scale * bits / pixels` as a graph scalar.
fn rate_term(g: &mut Graph<f32>, bits: Var, lambda: f64, pixels: f64) -> Var {
    g.scale(bits, (lambda / pixels) as f32)
}

/// Stacks guide flows into the (2 * refs, H, W) target of a motion decoder.
pub fn guide_target(kind: DecoderKind, guides: &[Tensor<f32>], h: usize, w: usize) -> Result<Tensor<f32>> {
    let need = match kind {
        DecoderKind::MotionP => 1,
        DecoderKind::MotionB => 2,
        other => return Err(Error::Config(format!("{} decoder has no motion to pre-train", other.name()))),
    };
    if guides.len() != need {
        return Err(Error::Config(format!("{} decoder needs {need} guide flow(s), got {}", kind.name(), guides.len())));
    }
    let mut data = Vec::with_capacity(2 * need * h * w);
    for g in guides {
        if g.shape() != [2, h, w] {
            return Err(Error::Config(format!("guide flow of shape {:?}, expected [2, {h}, {w}]", g.shape())));
        }
        data.extend_from_slice(g.data());
    }
    Tensor::new(&[2 * need, h, w], data)
}

/// Trains only `motion` so that its decoded flows reproduce `guides`
/// (one per reference) under the rate penalty `lambda_v`:
/// `mean((v - guide)^2) + lambda_v * latent_bits / pixels`.
pub fn pretrain_motion(
    motion: &mut CoolChicDecoder<f32>,
    guides: &[Tensor<f32>],
    lambda_v: f64,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    stage: &str,
) -> Result<StageLog> {
    let target = guide_target(motion.kind(), guides, motion.height(), motion.width())?;
    let channels = target.shape()[0];
    let pixels = n_pixels(motion);
    let inv_n = 1.0 / target.numel() as f32;
    optimize(stage, &mut [motion], schedule, rng, |g, vars| {
        let flows = g.slice_channels(vars[0].output, 0, channels)?;
        let t = g.constant_tensor(&target);
        let e = g.sse(flows, t)?;
        let d = g.scale(e, inv_n);
        let r = rate_term(g, vars[0].rate_bits, lambda_v, pixels);
        g.add(d, r)
    })
}

/// Distortion plus weighted rate of one frame built from its decoders'
/// graph handles and reference reconstructions.
fn frame_cost(
    g: &mut Graph<f32>,
    kind: FrameKind,
    vars: &[DecoderVars],
    refs: &[Var],
    target: &Target,
    lambda: f64,
    pixels: f64,
) -> Result<(Var, Var)> {
    let outputs: Vec<Var> = vars.iter().map(|v| v.output).collect();
    let recon = frame_reconstruction(g, kind, &outputs, refs)?;
    let d = yuv420_mse(g, recon, target)?;
    let mut bits = vars[0].rate_bits;
    for v in &vars[1..] {
        bits = g.add(bits, v.rate_bits)?;
    }
    let r = rate_term(g, bits, lambda, pixels);
    Ok((g.add(d, r)?, recon))
}

/// Frame-wise optimization of `decoders` (in `FrameKind::decoder_kinds`
/// order) against `D + lambda_t * R` with fixed references. Returns the
/// stage log and the frame reconstruction from the trained decoders.
pub fn encode_frame(
    kind: FrameKind,
    decoders: &mut [CoolChicDecoder<f32>],
    refs: &[&Tensor<f32>],
    target: &Target,
    lambda_t: f64,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    stage: &str,
) -> Result<(StageLog, Tensor<f32>)> {
    if refs.len() != kind.n_refs() {
        return Err(Error::Pipeline(format!("[{stage}] {kind:?} frame needs {} references", kind.n_refs())));
    }
    let pixels = decoders.first().map(n_pixels).ok_or_else(|| Error::Pipeline("no decoders".into()))?;
    let mut slots: Vec<&mut CoolChicDecoder<f32>> = decoders.iter_mut().collect();
    let log = optimize(stage, &mut slots, schedule, rng, |g, vars| {
        let rv: Vec<Var> = refs.iter().map(|r| g.constant_tensor(r)).collect();
        Ok(frame_cost(g, kind, vars, &rv, target, lambda_t, pixels)?.0)
    })?;
    let recon = decode_frame(kind, decoders, refs).map_err(|e| e.in_stage(stage))?;
    Ok((log, recon))
}

/// Optimizes every frame's decoders at once against
/// `sum_t D_t + lambda * sum_t R_t`; reconstructions feed their dependents
/// inside one graph, so gradients follow the reference chains.
/// `decoders` and `targets` are indexed by display order.
pub fn joint_optimize(
    gop: &GopStructure,
    decoders: &mut [Vec<CoolChicDecoder<f32>>],
    targets: &[Target],
    lambda: f64,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
) -> Result<StageLog> {
    let n = gop.len();
    if decoders.len() != n || targets.len() != n {
        return Err(Error::Pipeline(format!(
            "[joint] {n} frames but {} decoder sets and {} targets",
            decoders.len(),
            targets.len()
        )));
    }
    let order = gop.decode_order();
    let mut by_index: Vec<Option<&mut Vec<CoolChicDecoder<f32>>>> = decoders.iter_mut().map(Some).collect();
    let mut flat: Vec<&mut CoolChicDecoder<f32>> = Vec::new();
    let mut spans = Vec::with_capacity(n);
    for &i in &order {
        let set = by_index[i].take().expect("decode order lists each frame once");
        spans.push((i, flat.len(), set.len()));
        flat.extend(set.iter_mut());
    }
    optimize("joint", &mut flat, schedule, rng, |g, vars| {
        let mut sets: Vec<&[DecoderVars]> = vec![&[]; n];
        for &(i, start, len) in &spans {
            sets[i] = &vars[start..start + len];
        }
        let terms = joint_terms(g, gop, &sets, targets, lambda)?;
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok(total)
    })
}

/// Per-frame cost terms of the video objective, indexed by display order.
/// `vars` holds each frame's decoder handles (display order); every
/// reconstruction enters the graph of the frames that reference it.
pub fn joint_terms(
    g: &mut Graph<f32>,
    gop: &GopStructure,
    vars: &[&[DecoderVars]],
    targets: &[Target],
    lambda: f64,
) -> Result<Vec<Var>> {
    let n = gop.len();
    if vars.len() != n || targets.len() != n || n == 0 {
        return Err(Error::Pipeline(format!("[joint] {n} frames but {} decoder sets and {} targets", vars.len(), targets.len())));
    }
    let pixels = {
        let out = g.shape(vars[0][0].output);
        (out[1] * out[2]) as f64
    };
    let mut recon: Vec<Option<Var>> = vec![None; n];
    let mut terms: Vec<Option<Var>> = vec![None; n];
    for f in gop.frames() {
        let refs = f
            .refs
            .iter()
            .map(|&r| recon[r].ok_or_else(|| Error::Pipeline(format!("reference {r} of frame {} not built", f.index))))
            .collect::<Result<Vec<_>>>()?;
        let (cost, x) = frame_cost(g, f.kind, vars[f.index], &refs, &targets[f.index], lambda, pixels)?;
        recon[f.index] = Some(x);
        terms[f.index] = Some(cost);
    }
    Ok(terms.into_iter().map(|t| t.expect("structure covers every index")).collect())
}

/// Seeds a generator for one decoder so its initialization does not
/// depend on which other decoders were created before it.
pub fn decoder_rng(seed: u64, frame: usize, kind: DecoderKind) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1 + 8 * frame as u64 + kind.code() as u64);
    r
}

/// Generator for the training noise of one stage.
pub fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    r.set_stream(stage);
    r
}
