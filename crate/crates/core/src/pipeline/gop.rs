//! Frame types and group-of-pictures reference structures.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::coolchic::DecoderKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    I,
    P,
    B,
}

impl FrameKind {
    pub fn n_refs(self) -> usize {
        match self {
            FrameKind::I => 0,
            FrameKind::P => 1,
            FrameKind::B => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FrameKind::I => 0,
            FrameKind::P => 1,
            FrameKind::B => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [FrameKind::I, FrameKind::P, FrameKind::B].get(c as usize).copied()
    }

    /// Decoders carried by a frame of this kind, in bitstream order.
    pub fn decoder_kinds(self) -> Vec<DecoderKind> {
        match self {
            FrameKind::I => vec![DecoderKind::Intra],
            FrameKind::P => vec![DecoderKind::MotionP, DecoderKind::Residue],
            FrameKind::B => vec![DecoderKind::MotionB, DecoderKind::Residue],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GopFrame {
    /// Display index.
    pub index: usize,
    pub kind: FrameKind,
    pub refs: Vec<usize>,
}

/// Built-in structures, identified in the bitstream header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GopPreset {
    RandomAccess,
    IntraOnly,
    LowDelayP,
}

impl GopPreset {
    pub fn id(self) -> u8 {
        match self {
            GopPreset::RandomAccess => 0,
            GopPreset::IntraOnly => 1,
            GopPreset::LowDelayP => 2,
        }
    }

    pub fn build(self, n: usize) -> Result<GopStructure> {
        match self {
            GopPreset::RandomAccess => GopStructure::random_access(n),
            GopPreset::IntraOnly => GopStructure::intra_only(n),
            GopPreset::LowDelayP => GopStructure::low_delay_p(n),
        }
    }
}

/// Frames in decoding order. Every reference precedes its users.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GopStructure {
    frames: Vec<GopFrame>,
}

impl GopStructure {
    pub fn new(frames: Vec<GopFrame>) -> Result<Self> {
        let g = GopStructure { frames };
        g.validate()?;
        Ok(g)
    }

    /// Hierarchical random access: frame 0 intra, the last frame P from 0,
    /// then B frames by recursive bisection, breadth first.
    /// Nine frames give the order 0, 8, 4, 2, 6, 1, 3, 5, 7.
    pub fn random_access(n: usize) -> Result<Self> {
        let mut frames = Vec::with_capacity(n);
        if n == 0 {
            return Self::new(frames);
        }
        frames.push(GopFrame { index: 0, kind: FrameKind::I, refs: vec![] });
        if n == 1 {
            return Self::new(frames);
        }
        frames.push(GopFrame { index: n - 1, kind: FrameKind::P, refs: vec![0] });
        let mut queue = VecDeque::from([(0usize, n - 1)]);
        while let Some((a, b)) = queue.pop_front() {
            if b - a < 2 {
                continue;
            }
            let m = (a + b) / 2;
            frames.push(GopFrame { index: m, kind: FrameKind::B, refs: vec![a, b] });
            queue.push_back((a, m));
            queue.push_back((m, b));
        }
        Self::new(frames)
    }

    pub fn intra_only(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| GopFrame { index: i, kind: FrameKind::I, refs: vec![] }).collect())
    }

    /// I followed by P frames each predicted from its predecessor.
    pub fn low_delay_p(n: usize) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| match i {
                    0 => GopFrame { index: 0, kind: FrameKind::I, refs: vec![] },
                    _ => GopFrame { index: i, kind: FrameKind::P, refs: vec![i - 1] },
                })
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        let mut seen = vec![false; n];
        for f in &self.frames {
            if f.index >= n || seen[f.index] {
                return Err(Error::Config(format!("frame index {} repeated or out of range", f.index)));
            }
            if f.refs.len() != f.kind.n_refs() {
                return Err(Error::Config(format!(
                    "frame {} of kind {:?} has {} references",
                    f.index,
                    f.kind,
                    f.refs.len()
                )));
            }
            for &r in &f.refs {
                if r >= n || !seen[r] {
                    return Err(Error::Config(format!("frame {} references {r} before it is decoded", f.index)));
                }
            }
            seen[f.index] = true;
        }
        Ok(())
    }

    pub fn frames(&self) -> &[GopFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn decode_order(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.index).collect()
    }

    pub fn frame(&self, index: usize) -> Option<&GopFrame> {
        self.frames.iter().find(|f| f.index == index)
    }

    /// How many frames reference each display index directly.
    pub fn reference_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.frames.len()];
        for f in &self.frames {
            for &r in &f.refs {
                c[r] += 1;
            }
        }
        c
    }

    /// Display indices whose reconstruction depends on `index`, transitively
    /// (including `index` itself).
    pub fn dependents(&self, index: usize) -> Vec<usize> {
        let mut dep = vec![false; self.frames.len()];
        if index < dep.len() {
            dep[index] = true;
        }
        for f in &self.frames {
            if f.refs.iter().any(|&r| dep[r]) {
                dep[f.index] = true;
            }
        }
        (0..dep.len()).filter(|&i| dep[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_frame_random_access() {
        let g = GopStructure::random_access(9).unwrap();
        assert_eq!(g.decode_order(), vec![0, 8, 4, 2, 6, 1, 3, 5, 7]);
        assert_eq!(g.frame(8).unwrap().kind, FrameKind::P);
        assert_eq!(g.frame(6).unwrap().refs, vec![4, 8]);
        assert_eq!(g.frame(7).unwrap().refs, vec![6, 8]);
        let c = g.reference_counts();
        assert_eq!((c[0], c[4]), (4, 4));
        assert_eq!((c[1], c[3], c[5], c[7]), (0, 0, 0, 0));
    }

    #[test]
    fn small_structures() {
        assert_eq!(GopStructure::random_access(1).unwrap().frames()[0].kind, FrameKind::I);
        let three = GopStructure::random_access(3).unwrap();
        assert_eq!(three.decode_order(), vec![0, 2, 1]);
        assert!(GopStructure::random_access(0).unwrap().is_empty());
        assert_eq!(GopStructure::low_delay_p(4).unwrap().frame(3).unwrap().refs, vec![2]);
    }

    #[test]
    fn rejects_forward_references() {
        let bad = vec![
            GopFrame { index: 0, kind: FrameKind::I, refs: vec![] },
            GopFrame { index: 1, kind: FrameKind::B, refs: vec![0, 2] },
            GopFrame { index: 2, kind: FrameKind::P, refs: vec![0] },
        ];
        assert!(matches!(GopStructure::new(bad), Err(Error::Config(_))));
    }

    #[test]
    fn transitive_dependents() {
        let g = GopStructure::random_access(9).unwrap();
        assert_eq!(g.dependents(0), (0..9).collect::<Vec<_>>());
        assert_eq!(g.dependents(2), vec![1, 2, 3]);
        assert_eq!(g.dependents(7), vec![7]);
    }
}
