use super::frame::{Frame, Planes420};
use super::gop::{FrameKind, GopFrame, GopStructure};
use super::ops::frame_reconstruction;
use crate::coolchic::CoolChicDecoder;
use crate::entropy::{read_gop, FrameRecord, GopHeader};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};

/// Instantiates the decoders carried by a frame record at the coded size.
pub fn decoders_from_record(record: &FrameRecord, h: usize, w: usize) -> Result<Vec<CoolChicDecoder<f32>>> {
    record
        .decoders
        .iter()
        .map(|p| {
            let mut d = CoolChicDecoder::zeroed(p.kind, h, w)?;
            d.set_quantized_params(&p.params)?;
            d.set_latents(&p.latents)?;
            Ok(d)
        })
        .collect()
}

/// Reconstructs one frame from its decoders and already decoded references.
pub fn decode_frame(kind: FrameKind, decoders: &[CoolChicDecoder<f32>], refs: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let expected = kind.decoder_kinds();
    if decoders.iter().map(|d| d.kind()).ne(expected.iter().copied()) {
        return Err(Error::Pipeline(format!("{kind:?} frame given the wrong decoders")));
    }
    if refs.len() != kind.n_refs() {
        return Err(Error::Pipeline(format!("{kind:?} frame needs {} decoded references", kind.n_refs())));
    }
    let mut g = Graph::new();
    let outputs = decoders.iter().map(|d| d.output_graph(&mut g)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = refs.iter().map(|r| g.constant_tensor(r)).collect();
    let x = frame_reconstruction(&mut g, kind, &outputs, &refs)?;
    g.check_finite().map_err(|e| Error::Pipeline(e.to_string()))?;
    Ok(g.tensor(x))
}

/// A decoded GOP.
#[derive(Clone, Debug)]
pub struct DecodedVideo {
    pub header: GopHeader,
    /// Frames in display order at the coded (padded) size.
    pub frames: Vec<Frame<f32>>,
}

impl DecodedVideo {
    /// Output pictures in display order, cropped to the declared size.
    pub fn pictures(&self) -> Result<Vec<Planes420>> {
        self.frames
            .iter()
            .map(|f| f.planes.crop(self.header.width as usize, self.header.height as usize))
            .collect()
    }

    pub fn structure(&self) -> Result<GopStructure> {
        let mut order: Vec<_> = self.frames.iter().map(|f| (f.index, f.kind, f.refs.clone())).collect();
        order.sort_by_key(|(i, ..)| *i);
        GopStructure::new(order.into_iter().map(|(index, kind, refs)| GopFrame { index, kind, refs }).collect())
    }
}

/// Decodes every frame of a stream in its decoding order.
pub fn decode_gop(bytes: &[u8]) -> Result<DecodedVideo> {
    let gop = read_gop(bytes)?;
    let (h, w) = gop.header.coded_dims();
    let n = gop.frames.len();
    let structure = GopStructure::new(
        gop.frames.iter().map(|f| GopFrame { index: f.index, kind: f.kind, refs: f.refs.clone() }).collect(),
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    let mut decoded: Vec<Option<Frame<f32>>> = vec![None; n];
    for (record, info) in gop.frames.iter().zip(structure.frames()) {
        let decoders = decoders_from_record(record, h, w)?;
        let refs = info
            .refs
            .iter()
            .map(|&r| {
                decoded[r]
                    .as_ref()
                    .map(|f| &f.dense)
                    .ok_or_else(|| Error::Pipeline(format!("reference {r} not decoded")))
            })
            .collect::<Result<Vec<_>>>()?;
        let dense = decode_frame(record.kind, &decoders, &refs)?;
        let planes = Planes420::from_dense444(&dense, gop.header.bit_depth)?;
        decoded[record.index] =
            Some(Frame { index: record.index, kind: record.kind, refs: record.refs.clone(), planes, dense });
    }
    let frames = decoded.into_iter().map(|f| f.expect("structure covers every index")).collect();
    Ok(DecodedVideo { header: gop.header, frames })
}
