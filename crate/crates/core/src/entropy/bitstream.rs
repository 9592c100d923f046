//! GOP container. Layout is documented in FORMAT.md at the repository root.

use super::coding::{decode_param, decode_pyramid, encode_param, encode_pyramid};
use crate::coolchic::{CoolChicDecoder, DecoderKind, LatentPyramid, QuantizedParam, SIZE_MULTIPLE};
use crate::error::{Error, Result};
use crate::pipeline::FrameKind;

pub const MAGIC: [u8; 4] = *b"OVCB";
pub const VERSION: u16 = 1;
/// Header bytes including its checksum.
pub const HEADER_BYTES: usize = 24;
/// `lambda_index` value for a rate constraint outside the preset list.
pub const CUSTOM_LAMBDA: u8 = 0xff;

#[derive(Clone, Debug, PartialEq)]
pub struct GopHeader {
    /// Picture size before padding.
    pub width: u16,
    pub height: u16,
    pub bit_depth: u8,
    pub gop_id: u8,
    pub lambda_index: u8,
    pub lambda: f32,
    pub frame_count: u16,
}

impl GopHeader {
    /// Size the decoders operate at: picture size rounded up to the latent grid.
    pub fn coded_dims(&self) -> (usize, usize) {
        let up = |v: u16| (v as usize).div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE;
        (up(self.height), up(self.width))
    }
}

/// Everything transmitted for one decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderPayload {
    pub kind: DecoderKind,
    pub params: Vec<QuantizedParam>,
    pub latents: LatentPyramid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub kind: FrameKind,
    pub refs: Vec<usize>,
    pub decoders: Vec<DecoderPayload>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gop {
    pub header: GopHeader,
    /// Records in decoding order.
    pub frames: Vec<FrameRecord>,
}

/// Byte accounting of one decoder block.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct DecoderBytes {
    pub kind: Option<DecoderKind>,
    pub param_bytes: usize,
    pub latent_bytes: usize,
    /// Per-level latent payload sizes.
    pub level_bytes: Vec<usize>,
    /// Block total including its length fields.
    pub total_bytes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct FrameBytes {
    pub index: usize,
    /// Whole record: length field, body and checksum.
    pub total_bytes: usize,
    pub decoders: Vec<DecoderBytes>,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct StreamStats {
    pub header_bytes: usize,
    pub frames: Vec<FrameBytes>,
    pub total_bytes: usize,
}

fn put_u16(b: &mut Vec<u8>, v: u16) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_block(b: &mut Vec<u8>, payload: &[u8]) -> Result<()> {
    let n = u32::try_from(payload.len()).map_err(|_| Error::Stream("payload larger than 4 GiB".into()))?;
    put_u32(b, n);
    b.extend_from_slice(payload);
    Ok(())
}

fn decoder_for(kind: DecoderKind, h: usize, w: usize, params: &[QuantizedParam]) -> Result<CoolChicDecoder<f32>> {
    let mut d = CoolChicDecoder::zeroed(kind, h, w)?;
    d.set_quantized_params(params)?;
    Ok(d)
}

fn write_decoder(out: &mut Vec<u8>, p: &DecoderPayload, h: usize, w: usize) -> Result<DecoderBytes> {
    let start = out.len();
    let shapes = p.kind.param_shapes();
    if p.params.len() != shapes.len() {
        return Err(Error::Stream(format!("{} parameter tensors for a {} decoder", p.params.len(), p.kind.name())));
    }
    out.push(p.kind.code());
    out.push(p.params.len() as u8);
    let mut param_bytes = 0;
    for (q, s) in p.params.iter().zip(&shapes) {
        if q.values.len() != s.numel() {
            return Err(Error::Stream(format!("parameter {} has {} values", s.name, q.values.len())));
        }
        out.push(q.step_log2 as u8);
        out.extend_from_slice(&q.scale.to_le_bytes());
        let payload = encode_param(q)?;
        param_bytes += payload.len();
        put_block(out, &payload)?;
    }
    let dec = decoder_for(p.kind, h, w, &p.params)?;
    let levels = encode_pyramid(&dec, &p.latents)?;
    let mut level_bytes = Vec::with_capacity(levels.len());
    for l in &levels {
        level_bytes.push(l.len());
        put_block(out, l)?;
    }
    Ok(DecoderBytes {
        kind: Some(p.kind),
        param_bytes,
        latent_bytes: level_bytes.iter().sum(),
        level_bytes,
        total_bytes: out.len() - start,
    })
}

/// Serializes a GOP; returns the bytes and their accounting.
pub fn write_gop(gop: &Gop) -> Result<(Vec<u8>, StreamStats)> {
    let hd = &gop.header;
    if hd.frame_count as usize != gop.frames.len() {
        return Err(Error::Stream(format!("header declares {} frames, {} given", hd.frame_count, gop.frames.len())));
    }
    let (h, w) = hd.coded_dims();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u16(&mut out, VERSION);
    put_u16(&mut out, hd.width);
    put_u16(&mut out, hd.height);
    out.push(hd.bit_depth);
    out.push(hd.gop_id);
    out.push(hd.lambda_index);
    out.push(0);
    out.extend_from_slice(&hd.lambda.to_le_bytes());
    put_u16(&mut out, hd.frame_count);
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    debug_assert_eq!(out.len(), HEADER_BYTES);

    let mut stats = StreamStats { header_bytes: out.len(), ..Default::default() };
    for f in &gop.frames {
        let kinds = f.kind.decoder_kinds();
        if f.refs.len() != f.kind.n_refs() || f.decoders.iter().map(|d| d.kind).ne(kinds.iter().copied()) {
            return Err(Error::Stream(format!("frame {} is inconsistent with its kind {:?}", f.index, f.kind)));
        }
        let mut body = Vec::new();
        put_u16(&mut body, f.index as u16);
        body.push(f.kind.code());
        for &r in &f.refs {
            put_u16(&mut body, r as u16);
        }
        let mut decoders = Vec::new();
        for d in &f.decoders {
            decoders.push(write_decoder(&mut body, d, h, w)?);
        }
        let start = out.len();
        put_block(&mut out, &body)?;
        put_u32(&mut out, crc32fast::hash(&body));
        stats.frames.push(FrameBytes { index: f.index, total_bytes: out.len() - start, decoders });
    }
    stats.total_bytes = out.len();
    Ok((out, stats))
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            Error::Format(format!("truncated: need {n} bytes at offset {} of {}", self.pos, self.data.len()))
        })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn done(&self) -> bool {
        self.pos == self.data.len()
    }
}

/// Reads only the header (validating magic, version and checksum).
pub fn read_header(data: &[u8]) -> Result<GopHeader> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let width = r.u16()?;
    let height = r.u16()?;
    let bit_depth = r.u8()?;
    let gop_id = r.u8()?;
    let lambda_index = r.u8()?;
    let _reserved = r.u8()?;
    let lambda = r.f32()?;
    let frame_count = r.u16()?;
    let crc = crc32fast::hash(&data[..r.pos]);
    if r.u32()? != crc {
        return Err(Error::Format("header checksum mismatch".into()));
    }
    if !(8..=16).contains(&bit_depth) || width == 0 || height == 0 {
        return Err(Error::Format(format!("invalid picture format {width}x{height} at {bit_depth} bits")));
    }
    Ok(GopHeader { width, height, bit_depth, gop_id, lambda_index, lambda, frame_count })
}

fn read_decoder(r: &mut Reader, expected: DecoderKind, h: usize, w: usize) -> Result<DecoderPayload> {
    let kind = DecoderKind::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown decoder kind".into()))?;
    if kind != expected {
        return Err(Error::Format(format!("found a {} decoder where {} was expected", kind.name(), expected.name())));
    }
    let shapes = kind.param_shapes();
    let n = r.u8()? as usize;
    if n != shapes.len() {
        return Err(Error::Format(format!("{n} parameter tensors, expected {}", shapes.len())));
    }
    let mut params = Vec::with_capacity(n);
    for s in &shapes {
        let step_log2 = r.u8()? as i8;
        if !(crate::coolchic::STEP_LOG2_MIN..=crate::coolchic::STEP_LOG2_MAX).contains(&step_log2) {
            return Err(Error::Format(format!("parameter step 2^{step_log2} outside the allowed range")));
        }
        let scale = r.f32()?;
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::Format(format!("invalid parameter scale {scale}")));
        }
        let payload = r.block()?;
        params.push(decode_param(step_log2, scale, s.numel(), payload)?);
    }
    let dec = decoder_for(kind, h, w, &params)?;
    let levels = (0..crate::coolchic::N_LEVELS).map(|_| r.block().map(|b| b.to_vec())).collect::<Result<Vec<_>>>()?;
    let latents = decode_pyramid(&dec, &levels)?;
    Ok(DecoderPayload { kind, params, latents })
}

/// Parses and entropy-decodes a whole stream.
pub fn read_gop(data: &[u8]) -> Result<Gop> {
    let header = read_header(data)?;
    let (h, w) = header.coded_dims();
    let mut r = Reader { data, pos: HEADER_BYTES };
    let mut frames = Vec::with_capacity(header.frame_count as usize);
    for _ in 0..header.frame_count {
        let body = r.block()?;
        let crc = r.u32()?;
        if crc32fast::hash(body) != crc {
            return Err(Error::Format(format!("frame record {} checksum mismatch", frames.len())));
        }
        let mut br = Reader { data: body, pos: 0 };
        let index = br.u16()? as usize;
        let kind = FrameKind::from_code(br.u8()?).ok_or_else(|| Error::Format("unknown frame kind".into()))?;
        let refs = (0..kind.n_refs()).map(|_| br.u16().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let decoders =
            kind.decoder_kinds().into_iter().map(|k| read_decoder(&mut br, k, h, w)).collect::<Result<Vec<_>>>()?;
        if !br.done() {
            return Err(Error::Format(format!("frame {index} record has trailing bytes")));
        }
        frames.push(FrameRecord { index, kind, refs, decoders });
    }
    if !r.done() {
        return Err(Error::Format(format!("{} trailing bytes after the last frame", data.len() - r.pos)));
    }
    Ok(Gop { header, frames })
}
