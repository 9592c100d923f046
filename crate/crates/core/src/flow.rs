//! Target optical flows for motion pre-training: Middlebury `.flo` files and
//! a built-in hierarchical block-matching estimator.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::pipeline::Planes420;

pub const FLO_MAGIC: f32 = 202021.25;

const PYRAMID_LEVELS: usize = 4;
const BLOCK: usize = 16;
const SEARCH: isize = 8;
/// Smallest accepted picture side.
pub const MIN_FLOW_SIZE: usize = 64;

/// Per-pixel displacement (dx, dy): the pixel at `p` in the source frame is
/// found at `p + flow(p)` in the destination frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    /// Planar: all dx values, then all dy values.
    pub data: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format("flow field with a zero dimension".into()));
        }
        if data.len() != 2 * width * height {
            return Err(Error::Dimension(format!("{} flow values for {width}x{height}", data.len())));
        }
        Ok(FlowField { width, height, data })
    }

    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Result<Self> {
        let n = width * height;
        let mut data = vec![dx; n];
        data.extend(std::iter::repeat_n(dy, n));
        Self::new(width, height, data)
    }

    pub fn dx(&self) -> &[f32] {
        &self.data[..self.width * self.height]
    }

    pub fn dy(&self) -> &[f32] {
        &self.data[self.width * self.height..]
    }

    /// Finite values, magnitudes below the picture's larger side.
    pub fn validate(&self) -> Result<()> {
        let limit = self.width.max(self.height) as f32;
        for (&x, &y) in self.dx().iter().zip(self.dy()) {
            if !x.is_finite() || !y.is_finite() || (x * x + y * y).sqrt() >= limit {
                return Err(Error::Config(format!("flow vector ({x}, {y}) is non-finite or exceeds {limit} px")));
            }
        }
        Ok(())
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(&[2, self.height, self.width], self.data.iter().map(|&v| T::from_f32(v).unwrap()).collect())
            .unwrap()
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        match t.shape() {
            &[2, h, w] => Self::new(w, h, t.data().iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect()),
            s => Err(Error::Dimension(format!("flow tensor must be (2, H, W), got {s:?}"))),
        }
    }

    /// Reflect-pads to a larger size (same rule as picture padding).
    pub fn pad_to(&self, width: usize, height: usize) -> Result<Self> {
        if width < self.width || height < self.height {
            return Err(Error::Config("flow padding target smaller than the field".into()));
        }
        let refl = |i: usize, n: usize| {
            if n == 1 {
                return 0;
            }
            let p = 2 * (n - 1);
            let m = i % p;
            if m < n {
                m
            } else {
                p - m
            }
        };
        let mut data = Vec::with_capacity(2 * width * height);
        for c in 0..2 {
            let plane = &self.data[c * self.width * self.height..(c + 1) * self.width * self.height];
            for y in 0..height {
                for x in 0..width {
                    data.push(plane[refl(y, self.height) * self.width + refl(x, self.width)]);
                }
            }
        }
        Self::new(width, height, data)
    }
}

pub fn encode_flo(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * f.width * f.height);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width as i32).to_le_bytes());
    out.extend_from_slice(&(f.height as i32).to_le_bytes());
    for (&x, &y) in f.dx().iter().zip(f.dy()) {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
    }
    out
}

pub fn decode_flo(data: &[u8]) -> Result<FlowField> {
    let word = |i: usize| -> Result<[u8; 4]> {
        data.get(4 * i..4 * i + 4)
            .map(|s| s.try_into().unwrap())
            .ok_or_else(|| Error::Format(".flo file truncated".into()))
    };
    if f32::from_le_bytes(word(0)?) != FLO_MAGIC {
        return Err(Error::Format("bad .flo magic".into()));
    }
    let w = i32::from_le_bytes(word(1)?);
    let h = i32::from_le_bytes(word(2)?);
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!(".flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let n = w * h;
    if data.len() != 12 + 8 * n {
        return Err(Error::Format(format!(".flo payload is {} bytes, expected {}", data.len() - 12, 8 * n)));
    }
    let mut flow = vec![0f32; 2 * n];
    for i in 0..n {
        flow[i] = f32::from_le_bytes(word(3 + 2 * i)?);
        flow[n + i] = f32::from_le_bytes(word(4 + 2 * i)?);
    }
    FlowField::new(w, h, flow).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&fs::read(path)?)
}

pub fn write_flo(path: &Path, f: &FlowField) -> Result<()> {
    fs::write(path, encode_flo(f))?;
    Ok(())
}

/// Mean end-point error.
pub fn flow_epe(est: &FlowField, gt: &FlowField) -> Result<f64> {
    if (est.width, est.height) != (gt.width, gt.height) {
        return Err(Error::Dimension(format!(
            "flow sizes {}x{} and {}x{} differ",
            est.width, est.height, gt.width, gt.height
        )));
    }
    let n = est.width * est.height;
    let sum: f64 = (0..n)
        .map(|i| {
            let dx = (est.data[i] - gt.data[i]) as f64;
            let dy = (est.data[n + i] - gt.data[n + i]) as f64;
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Ok(sum / n as f64)
}

#[derive(Clone, Debug)]
struct Plane {
    w: usize,
    h: usize,
    px: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.px[y * self.w + x]
    }

    fn bilinear(&self, x: f32, y: f32) -> f32 {
        let (x0, y0) = (x.floor(), y.floor());
        let (ax, ay) = (x - x0, y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        let top = (1.0 - ax) * self.at(xi, yi) + ax * self.at(xi + 1, yi);
        let bot = (1.0 - ax) * self.at(xi, yi + 1) + ax * self.at(xi + 1, yi + 1);
        (1.0 - ay) * top + ay * bot
    }

    /// 5-tap binomial blur followed by 2x decimation.
    fn downsample(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut tmp = vec![0f32; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = (0..5).map(|k| K[k] * self.at(x as isize + k as isize - 2, y as isize)).sum();
            }
        }
        let t = Plane { w: self.w, h: self.h, px: tmp };
        let (w, h) = (self.w / 2, self.h / 2);
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                px.push((0..5).map(|k| K[k] * t.at(2 * x as isize, 2 * y as isize + k as isize - 2)).sum());
            }
        }
        Plane { w, h, px }
    }
}

fn luma(p: &Planes420) -> Plane {
    let inv = 1.0 / p.max_value() as f32;
    Plane { w: p.width, h: p.height, px: p.y.iter().map(|&s| s as f32 * inv).collect() }
}

/// Block-level field on a grid of `bw` x `bh` blocks.
struct BlockField {
    bw: usize,
    bh: usize,
    v: Vec<(f32, f32)>,
}

impl BlockField {
    fn median3(&self) -> BlockField {
        let mut out = Vec::with_capacity(self.v.len());
        for by in 0..self.bh {
            for bx in 0..self.bw {
                let mut xs = Vec::with_capacity(9);
                let mut ys = Vec::with_capacity(9);
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (x, y) = (bx as isize + dx, by as isize + dy);
                        if x >= 0 && y >= 0 && (x as usize) < self.bw && (y as usize) < self.bh {
                            let (u, v) = self.v[y as usize * self.bw + x as usize];
                            xs.push(u);
                            ys.push(v);
                        }
                    }
                }
                xs.sort_by(f32::total_cmp);
                ys.sort_by(f32::total_cmp);
                out.push((xs[xs.len() / 2], ys[ys.len() / 2]));
            }
        }
        BlockField { bw: self.bw, bh: self.bh, v: out }
    }

    /// Dense per-pixel field by bilinear interpolation between block centres.
    fn to_dense(&self, w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
        let mut dx = vec![0f32; w * h];
        let mut dy = vec![0f32; w * h];
        let sample = |bx: isize, by: isize| {
            let bx = bx.clamp(0, self.bw as isize - 1) as usize;
            let by = by.clamp(0, self.bh as isize - 1) as usize;
            self.v[by * self.bw + bx]
        };
        for y in 0..h {
            let fy = (y as f32 + 0.5) / BLOCK as f32 - 0.5;
            let y0 = fy.floor();
            let ay = fy - y0;
            for x in 0..w {
                let fx = (x as f32 + 0.5) / BLOCK as f32 - 0.5;
                let x0 = fx.floor();
                let ax = fx - x0;
                let (xi, yi) = (x0 as isize, y0 as isize);
                let (a, b, c, d) = (sample(xi, yi), sample(xi + 1, yi), sample(xi, yi + 1), sample(xi + 1, yi + 1));
                let lerp = |p: f32, q: f32, r: f32, s: f32| {
                    (1.0 - ay) * ((1.0 - ax) * p + ax * q) + ay * ((1.0 - ax) * r + ax * s)
                };
                dx[y * w + x] = lerp(a.0, b.0, c.0, d.0);
                dy[y * w + x] = lerp(a.1, b.1, c.1, d.1);
            }
        }
        (dx, dy)
    }
}

fn sad(src: &Plane, dst: &Plane, x0: usize, y0: usize, x1: usize, y1: usize, ox: f32, oy: f32) -> f32 {
    let integer = ox.fract() == 0.0 && oy.fract() == 0.0;
    let mut s = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let d = if integer {
                dst.at(x as isize + ox as isize, y as isize + oy as isize)
            } else {
                dst.bilinear(x as f32 + ox, y as f32 + oy)
            };
            s += (src.px[y * src.w + x] - d).abs();
        }
    }
    s
}

/// Hierarchical block matching on luma: 4-level binomial pyramid, 16x16
/// blocks, +-8 integer search around the upscaled coarser estimate,
/// half-pel refinement, 3x3 median filtering.
pub fn estimate_flow(src: &Planes420, dst: &Planes420) -> Result<FlowField> {
    if (src.width, src.height) != (dst.width, dst.height) {
        return Err(Error::Dimension("flow estimation needs frames of equal size".into()));
    }
    if src.width < MIN_FLOW_SIZE || src.height < MIN_FLOW_SIZE {
        return Err(Error::Config(format!(
            "{}x{} is too small for the flow pyramid (minimum {MIN_FLOW_SIZE}x{MIN_FLOW_SIZE})",
            src.width, src.height
        )));
    }
    let mut sp = vec![luma(src)];
    let mut dp = vec![luma(dst)];
    for _ in 1..PYRAMID_LEVELS {
        sp.push(sp.last().unwrap().downsample());
        dp.push(dp.last().unwrap().downsample());
    }
    let mut dense: Option<(Vec<f32>, Vec<f32>, usize)> = None;
    for level in (0..PYRAMID_LEVELS).rev() {
        let (s, d) = (&sp[level], &dp[level]);
        let (bw, bh) = (s.w.div_ceil(BLOCK), s.h.div_ceil(BLOCK));
        let reach = s.w.max(s.h) as f32 - 1.0;
        let admissible = |x: f32, y: f32| x.hypot(y) < reach;
        let mut blocks = Vec::with_capacity(bw * bh);
        for by in 0..bh {
            for bx in 0..bw {
                let (x0, y0) = (bx * BLOCK, by * BLOCK);
                let (x1, y1) = ((x0 + BLOCK).min(s.w), (y0 + BLOCK).min(s.h));
                let (px, py) = match &dense {
                    Some((dx, dy, pw)) => {
                        // previous level sampled at the block centre, scaled to this level
                        let cx = ((x0 + x1) / 4).min(pw - 1);
                        let cy = ((y0 + y1) / 4).min(dx.len() / pw - 1);
                        ((2.0 * dx[cy * pw + cx]).round(), (2.0 * dy[cy * pw + cx]).round())
                    }
                    None => (0.0, 0.0),
                };
                let (px, py) = if admissible(px, py) { (px, py) } else { (0.0, 0.0) };
                let mut best = (sad(s, d, x0, y0, x1, y1, px, py), px, py);
                for oy in -SEARCH..=SEARCH {
                    for ox in -SEARCH..=SEARCH {
                        let (cx, cy) = (px + ox as f32, py + oy as f32);
                        if !admissible(cx, cy) {
                            continue;
                        }
                        let c = sad(s, d, x0, y0, x1, y1, cx, cy);
                        if c < best.0 {
                            best = (c, cx, cy);
                        }
                    }
                }
                let (ix, iy) = (best.1, best.2);
                for hy in [-0.5f32, 0.0, 0.5] {
                    for hx in [-0.5f32, 0.0, 0.5] {
                        if (hx == 0.0 && hy == 0.0) || !admissible(ix + hx, iy + hy) {
                            continue;
                        }
                        let c = sad(s, d, x0, y0, x1, y1, ix + hx, iy + hy);
                        if c < best.0 {
                            best = (c, ix + hx, iy + hy);
                        }
                    }
                }
                blocks.push((best.1, best.2));
            }
        }
        let field = BlockField { bw, bh, v: blocks }.median3();
        let (dx, dy) = field.to_dense(s.w, s.h);
        dense = Some((dx, dy, s.w));
    }
    let (mut dx, mut dy, _) = dense.unwrap();
    // radial clamp to the picture extent
    let reach = src.width.max(src.height) as f32 - 1.0;
    for (x, y) in dx.iter_mut().zip(dy.iter_mut()) {
        let m = x.hypot(*y);
        if m > reach {
            *x *= reach / m;
            *y *= reach / m;
        }
    }
    let mut data = dx;
    data.extend(dy);
    FlowField::new(src.width, src.height, data)
}
