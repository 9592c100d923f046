use serde::Serialize;

use crate::coolchic::{macs_per_pixel, DecoderKind, MacBreakdown};
use crate::pipeline::{FrameKind, GopStructure};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KindMacs {
    pub kind: DecoderKind,
    pub breakdown: MacBreakdown,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameMacs {
    pub index: usize,
    pub kind: FrameKind,
    pub macs_per_pixel: f64,
}

/// Decoding complexity in multiply-accumulates per decoded pixel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacAudit {
    pub per_kind: Vec<KindMacs>,
    pub per_frame: Vec<FrameMacs>,
    pub gop_average: f64,
}

impl MacAudit {
    pub fn kind_total(&self, kind: DecoderKind) -> f64 {
        self.per_kind.iter().find(|k| k.kind == kind).map_or(0.0, |k| k.total)
    }
}

/// Architecture-only count: independent of content and resolution.
pub fn mac_audit(gop: &GopStructure) -> MacAudit {
    let per_kind: Vec<KindMacs> = DecoderKind::ALL
        .iter()
        .map(|&kind| {
            let breakdown = macs_per_pixel(kind);
            KindMacs { kind, breakdown, total: breakdown.total() }
        })
        .collect();
    let total = |k: DecoderKind| per_kind.iter().find(|m| m.kind == k).unwrap().total;
    let per_frame: Vec<FrameMacs> = gop
        .frames()
        .iter()
        .map(|f| FrameMacs {
            index: f.index,
            kind: f.kind,
            macs_per_pixel: f.kind.decoder_kinds().into_iter().map(total).sum(),
        })
        .collect();
    let gop_average = if per_frame.is_empty() {
        0.0
    } else {
        per_frame.iter().map(|f| f.macs_per_pixel).sum::<f64>() / per_frame.len() as f64
    };
    MacAudit { per_kind, per_frame, gop_average }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_is_the_frame_mean() {
        let gop = GopStructure::random_access(9).unwrap();
        let a = mac_audit(&gop);
        let i = a.kind_total(DecoderKind::Intra);
        let r = a.kind_total(DecoderKind::Residue);
        let p = a.kind_total(DecoderKind::MotionP);
        let b = a.kind_total(DecoderKind::MotionB);
        let expect = (i + (r + p) + 7.0 * (r + b)) / 9.0;
        assert!((a.gop_average - expect).abs() < 1e-9);
    }

    #[test]
    fn intra_only_average_is_intra() {
        let a = mac_audit(&GopStructure::intra_only(3).unwrap());
        assert_eq!(a.gop_average, a.kind_total(DecoderKind::Intra));
    }
}
