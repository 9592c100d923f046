use serde::Serialize;

use super::config::{EncoderConfig, FlowSource, Iterations, RateConstraint};
use super::schedule::Schedule;
use super::train::{decoder_rng, encode_frame, joint_optimize, pretrain_motion, stage_rng, StageLog, Target};
use crate::coolchic::{quantize_decoder_params, CoolChicDecoder, QuantizedParam, SIZE_MULTIPLE};
use crate::entropy::{write_gop, DecoderPayload, FrameRecord, Gop, GopHeader, StreamStats, CUSTOM_LAMBDA};
use crate::error::{Error, Result};
use crate::flow::{estimate_flow, read_flo, FlowField};
use crate::metrics::{bpp, psnr_video, psnr_yuv420, ColorDomain};
use crate::numerics::{Graph, Tensor};
use crate::pipeline::{decode_frame, yuv420_mse, FrameKind, GopPreset, GopStructure, Planes420};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    pub index: usize,
    pub kind: FrameKind,
    pub refs: Vec<usize>,
    /// Position in the stream.
    pub decode_position: usize,
    pub lambda_t: f64,
    pub motion_latent_bits: u64,
    /// Residue latents (intra latents for I frames).
    pub residue_latent_bits: u64,
    pub param_bits: u64,
    /// Record framing: lengths, indices, step and scale fields, checksum.
    pub overhead_bits: u64,
    pub total_bits: u64,
    pub estimated_latent_bits: f64,
    pub estimated_param_bits: f64,
    /// Training-domain distortion of the transmitted decoders.
    pub mse: f64,
    pub psnr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncodeReport {
    pub width: usize,
    pub height: usize,
    pub coded_width: usize,
    pub coded_height: usize,
    pub bit_depth: u8,
    pub frame_count: usize,
    pub gop: GopPreset,
    pub lambda: f64,
    pub lambda_v: f64,
    pub seed: u64,
    pub iterations: Iterations,
    pub skip_pretrain: bool,
    pub skip_joint: bool,
    pub header_bits: u64,
    pub total_bits: u64,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Latent and parameter rate predicted by the entropy model.
    pub estimated_bits: f64,
    /// `sum_t D_t + lambda * sum_t R_t / pixels` with the transmitted decoders.
    pub rd_cost: f64,
    /// Display order.
    pub frames: Vec<FrameReport>,
    pub stages: Vec<StageLog>,
}

impl EncodeReport {
    /// Rate-distribution table, one line per frame in display order.
    pub fn rate_table(&self) -> String {
        let mut s = String::from("frame\tkind\tmotion_bits\tresidue_bits\tparam_bits\toverhead_bits\ttotal_bits\tshare\tpsnr_db\n");
        for f in &self.frames {
            s.push_str(&format!(
                "{}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.4}\n",
                f.index,
                f.kind,
                f.motion_latent_bits,
                f.residue_latent_bits,
                f.param_bits,
                f.overhead_bits,
                f.total_bits,
                f.total_bits as f64 / self.total_bits as f64,
                f.psnr_db
            ));
        }
        s
    }
}

/// Output of [`encode_video`].
#[derive(Clone, Debug)]
pub struct EncodedVideo {
    pub bytes: Vec<u8>,
    pub report: EncodeReport,
    pub stats: StreamStats,
    /// Decoder-side pictures in display order, at the input size.
    pub reconstruction: Vec<Planes420>,
}

fn check_input(frames: &[Planes420]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::Config("no frames to encode".into()))?;
    if frames.iter().any(|f| (f.width, f.height, f.bit_depth) != (first.width, first.height, first.bit_depth)) {
        return Err(Error::Config("frames differ in size or bit depth".into()));
    }
    if first.width > u16::MAX as usize || first.height > u16::MAX as usize || frames.len() > u16::MAX as usize {
        return Err(Error::Config("picture size or frame count exceeds 65535".into()));
    }
    Ok(())
}

/// Guide flows for `frame` towards each of its references, padded to the coded size.
fn guide_flows(
    source: &FlowSource,
    originals: &[Planes420],
    index: usize,
    refs: &[usize],
    h: usize,
    w: usize,
) -> Result<Vec<Tensor<f32>>> {
    refs.iter()
        .map(|&r| {
            let field = match source {
                FlowSource::Builtin => estimate_flow(&originals[index], &originals[r])?,
                FlowSource::FloDir(dir) => {
                    let path = dir.join(format!("{index}_{r}.flo"));
                    let f = read_flo(&path)
                        .map_err(|e| Error::Config(format!("guide flow {}: {e}", path.display())))?;
                    if (f.width, f.height) != (originals[index].width, originals[index].height) {
                        return Err(Error::Config(format!(
                            "guide flow {} is {}x{}, frames are {}x{}",
                            path.display(),
                            f.width,
                            f.height,
                            originals[index].width,
                            originals[index].height
                        )));
                    }
                    f
                }
            };
            field.validate()?;
            Ok(FlowField::pad_to(&field, w, h)?.to_tensor())
        })
        .collect()
}

fn new_decoders(seed: u64, index: usize, kind: FrameKind, h: usize, w: usize) -> Result<Vec<CoolChicDecoder<f32>>> {
    kind.decoder_kinds()
        .into_iter()
        .map(|k| CoolChicDecoder::new(k, h, w, &mut decoder_rng(seed, index, k)))
        .collect()
}

/// Full encoder: per-frame motion pre-training, frame-wise RD optimization
/// in decoding order, joint RD optimization, parameter quantization and
/// entropy coding.
pub fn encode_video(input: &[Planes420], cfg: &EncoderConfig) -> Result<EncodedVideo> {
    cfg.validate()?;
    check_input(input)?;
    let n = cfg.max_frames.map_or(input.len(), |m| m.min(input.len()));
    let originals = &input[..n];
    let gop = cfg.gop.build(n).map_err(|e| e.in_stage("setup"))?;
    let rate = cfg.rate()?;
    let (width, height) = (originals[0].width, originals[0].height);
    let cw = width.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE;
    let ch = height.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE;
    let padded = originals.iter().map(|p| p.reflect_pad(cw, ch)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<Target> = padded.iter().map(|p| p.to_unit::<f32>()).collect();

    let mut decoders = (0..n)
        .map(|i| new_decoders(cfg.seed, i, gop.frame(i).expect("structure covers every index").kind, ch, cw))
        .collect::<Result<Vec<_>>>()?;
    let mut stages = Vec::new();

    if !cfg.skip_pretrain && cfg.iterations.pretrain > 0 {
        let schedule = Schedule::new(cfg.iterations.pretrain, &cfg.schedule);
        for f in gop.frames().iter().filter(|f| f.kind != FrameKind::I) {
            let stage = format!("pretrain/{}", f.index);
            let guides = guide_flows(&cfg.flow, originals, f.index, &f.refs, ch, cw).map_err(|e| e.in_stage(&stage))?;
            let mut rng = stage_rng(cfg.seed, 1000 + f.index as u64);
            stages.push(pretrain_motion(&mut decoders[f.index][0], &guides, rate.lambda_v, &schedule, &mut rng, &stage)?);
        }
    }

    let schedule = Schedule::new(cfg.iterations.frame, &cfg.schedule);
    let mut recon: Vec<Option<Tensor<f32>>> = vec![None; n];
    for i in gop.decode_order() {
        let f = gop.frame(i).expect("decode order indexes the structure").clone();
        let stage = format!("frame/{i}");
        let refs = f.refs.iter().map(|&r| recon[r].as_ref().expect("references precede")).collect::<Vec<_>>();
        let mut rng = stage_rng(cfg.seed, 2000 + i as u64);
        let (log, x) = encode_frame(
            f.kind,
            &mut decoders[i],
            &refs,
            &targets[i],
            rate.frame_lambda(i),
            &schedule,
            &mut rng,
            &stage,
        )?;
        stages.push(log);
        recon[i] = Some(x);
    }

    if !cfg.skip_joint && cfg.iterations.joint > 0 {
        let schedule = Schedule::new(cfg.iterations.joint, &cfg.joint_schedule);
        let mut rng = stage_rng(cfg.seed, 3000);
        stages.push(joint_optimize(&gop, &mut decoders, &targets, rate.lambda, &schedule, &mut rng)?);
    }

    finish(originals, &gop, cfg, &rate, decoders, &targets, stages, (cw, ch))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    originals: &[Planes420],
    gop: &GopStructure,
    cfg: &EncoderConfig,
    rate: &RateConstraint,
    decoders: Vec<Vec<CoolChicDecoder<f32>>>,
    targets: &[Target],
    stages: Vec<StageLog>,
    (cw, ch): (usize, usize),
) -> Result<EncodedVideo> {
    let n = originals.len();
    let (width, height, bit_depth) = (originals[0].width, originals[0].height, originals[0].bit_depth);
    let pixels = cw * ch;

    // Quantize parameters and load them back so the encoder holds exactly
    // what the decoder will rebuild.
    let mut sent: Vec<Vec<(CoolChicDecoder<f32>, Vec<QuantizedParam>, f64)>> = Vec::with_capacity(n);
    for set in decoders {
        let mut out = Vec::with_capacity(set.len());
        for mut d in set {
            let q = quantize_decoder_params(&d, rate.lambda, pixels).map_err(|e| e.in_stage("quantize"))?;
            d.set_quantized_params(&q.params)?;
            out.push((d, q.params, q.param_bits));
        }
        sent.push(out);
    }

    let order = gop.decode_order();
    let mut dense: Vec<Option<Tensor<f32>>> = vec![None; n];
    let mut records = Vec::with_capacity(n);
    let mut est_latent = vec![0.0; n];
    let mut mse = vec![0.0; n];
    for &i in &order {
        let f = gop.frame(i).unwrap();
        let decs: Vec<CoolChicDecoder<f32>> = sent[i].iter().map(|(d, ..)| d.clone()).collect();
        let refs = f.refs.iter().map(|&r| dense[r].as_ref().unwrap()).collect::<Vec<_>>();
        let x = decode_frame(f.kind, &decs, &refs).map_err(|e| e.in_stage("reconstruct"))?;
        let mut g = Graph::new();
        let xv = g.constant_tensor(&x);
        let d = yuv420_mse(&mut g, xv, &targets[i])?;
        mse[i] = g.scalar_value(d) as f64;
        let mut payloads = Vec::with_capacity(decs.len());
        for (d, params, _) in &sent[i] {
            est_latent[i] += d.latent_rate()?;
            payloads.push(DecoderPayload { kind: d.kind(), params: params.clone(), latents: d.rounded_latents()? });
        }
        records.push(FrameRecord { index: i, kind: f.kind, refs: f.refs.clone(), decoders: payloads });
        dense[i] = Some(x);
    }

    let header = GopHeader {
        width: width as u16,
        height: height as u16,
        bit_depth,
        gop_id: cfg.gop.id(),
        lambda_index: rate.preset_index().unwrap_or(CUSTOM_LAMBDA),
        lambda: rate.lambda as f32,
        frame_count: n as u16,
    };
    let (bytes, stats) = write_gop(&Gop { header, frames: records })?;

    let reconstruction = dense
        .iter()
        .map(|d| Planes420::from_dense444(d.as_ref().unwrap(), bit_depth)?.crop(width, height))
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let f = gop.frame(i).unwrap();
        let pos = order.iter().position(|&o| o == i).unwrap();
        let fb = &stats.frames[pos];
        let mut motion = 0;
        let mut residue = 0;
        let mut params = 0;
        for db in &fb.decoders {
            let kind = db.kind.expect("writer fills the decoder kind");
            if kind.is_motion() {
                motion += db.latent_bytes;
            } else {
                residue += db.latent_bytes;
            }
            params += db.param_bytes;
        }
        let total = fb.total_bytes;
        frames.push(FrameReport {
            index: i,
            kind: f.kind,
            refs: f.refs.clone(),
            decode_position: pos,
            lambda_t: rate.frame_lambda(i),
            motion_latent_bits: 8 * motion as u64,
            residue_latent_bits: 8 * residue as u64,
            param_bits: 8 * params as u64,
            overhead_bits: 8 * (total - motion - residue - params) as u64,
            total_bits: 8 * total as u64,
            estimated_latent_bits: est_latent[i],
            estimated_param_bits: sent[i].iter().map(|(.., b)| b).sum(),
            mse: mse[i],
            psnr_db: psnr_yuv420(&originals[i], &reconstruction[i])?,
        });
    }
    let rd_cost = (0..n).map(|i| mse[i] + rate.lambda * est_latent[i] / pixels as f64).sum();
    let report = EncodeReport {
        width,
        height,
        coded_width: cw,
        coded_height: ch,
        bit_depth,
        frame_count: n,
        gop: cfg.gop,
        lambda: rate.lambda,
        lambda_v: rate.lambda_v,
        seed: cfg.seed,
        iterations: cfg.iterations.clone(),
        skip_pretrain: cfg.skip_pretrain,
        skip_joint: cfg.skip_joint,
        header_bits: 8 * stats.header_bytes as u64,
        total_bits: 8 * bytes.len() as u64,
        bpp: bpp(bytes.len(), width, height, n),
        psnr_db: psnr_video(originals, &reconstruction, ColorDomain::Yuv420)?,
        estimated_bits: frames.iter().map(|f| f.estimated_latent_bits + f.estimated_param_bits).sum(),
        rd_cost,
        frames,
        stages,
    };
    Ok(EncodedVideo { bytes, report, stats, reconstruction })
}
