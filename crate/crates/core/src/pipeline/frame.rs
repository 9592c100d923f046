use crate::error::{Error, Result};
use crate::numerics::{kernels, Scalar, Tensor};

use super::gop::FrameKind;

/// One picture in 4:2:0 layout with integer samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Planes420 {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub y: Vec<u16>,
    pub u: Vec<u16>,
    pub v: Vec<u16>,
}

impl Planes420 {
    pub fn new(width: usize, height: usize, bit_depth: u8, y: Vec<u16>, u: Vec<u16>, v: Vec<u16>) -> Result<Self> {
        check_even(width, height)?;
        if !(8..=16).contains(&bit_depth) {
            return Err(Error::Config(format!("unsupported bit depth {bit_depth}")));
        }
        let c = (width / 2) * (height / 2);
        if y.len() != width * height || u.len() != c || v.len() != c {
            return Err(Error::Config(format!(
                "plane sizes {}/{}/{} do not match {width}x{height}",
                y.len(),
                u.len(),
                v.len()
            )));
        }
        let max = max_value(bit_depth);
        if y.iter().chain(&u).chain(&v).any(|&s| s > max) {
            return Err(Error::Config(format!("sample exceeds {bit_depth}-bit range")));
        }
        Ok(Planes420 { width, height, bit_depth, y, u, v })
    }

    /// Uniform picture.
    pub fn filled(width: usize, height: usize, bit_depth: u8, yuv: [u16; 3]) -> Result<Self> {
        let c = (width / 2) * (height / 2);
        Self::new(width, height, bit_depth, vec![yuv[0]; width * height], vec![yuv[1]; c], vec![yuv[2]; c])
    }

    pub fn max_value(&self) -> u16 {
        max_value(self.bit_depth)
    }

    pub fn n_samples(&self) -> usize {
        self.y.len() + self.u.len() + self.v.len()
    }

    /// Samples scaled to [0, 1]: luma as (1, H, W) and chroma as (2, H/2, W/2).
    pub fn to_unit<T: Scalar>(&self) -> (Tensor<T>, Tensor<T>) {
        let inv = 1.0 / self.max_value() as f64;
        let conv = |p: &[u16]| p.iter().map(|&s| T::from_f64(s as f64 * inv).unwrap()).collect::<Vec<_>>();
        let y = Tensor::new(&[1, self.height, self.width], conv(&self.y)).unwrap();
        let mut uv = conv(&self.u);
        uv.extend(conv(&self.v));
        let c = Tensor::new(&[2, self.height / 2, self.width / 2], uv).unwrap();
        (y, c)
    }

    /// Full-resolution 4:4:4 working picture in [0, 1] (chroma replicated 2x2).
    pub fn to_dense444<T: Scalar>(&self) -> Tensor<T> {
        let (w, h) = (self.width, self.height);
        let inv = 1.0 / self.max_value() as f64;
        let mut d = Vec::with_capacity(3 * w * h);
        d.extend(self.y.iter().map(|&s| T::from_f64(s as f64 * inv).unwrap()));
        for plane in [&self.u, &self.v] {
            for y in 0..h {
                for x in 0..w {
                    d.push(T::from_f64(plane[(y / 2) * (w / 2) + x / 2] as f64 * inv).unwrap());
                }
            }
        }
        Tensor::new(&[3, h, w], d).unwrap()
    }

    /// Converts a 4:4:4 working picture: chroma 2x2 averaged, clamped to
    /// [0, 1] and rounded to the sample grid.
    pub fn from_dense444<T: Scalar>(dense: &Tensor<T>, bit_depth: u8) -> Result<Self> {
        let s = dense.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::Dimension(format!("expected (3, H, W), got {s:?}")));
        }
        let (h, w) = (s[1], s[2]);
        check_even(w, h)?;
        let hw = h * w;
        let mut chroma = vec![T::zero(); hw / 2];
        kernels::avgpool2_forward(&dense.data()[hw..], 2, h, w, &mut chroma);
        let max = max_value(bit_depth) as f64;
        let q = |v: &T| {
            let x = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
            (x * max).round() as u16
        };
        let y = dense.data()[..hw].iter().map(q).collect();
        let u = chroma[..hw / 4].iter().map(q).collect();
        let v = chroma[hw / 4..].iter().map(q).collect();
        Self::new(w, h, bit_depth, y, u, v)
    }

    /// Reflect-pads to `width` x `height` (mirror about the edge samples).
    pub fn reflect_pad(&self, width: usize, height: usize) -> Result<Self> {
        check_even(width, height)?;
        if width < self.width || height < self.height {
            return Err(Error::Config("padding target smaller than the picture".into()));
        }
        let pad = |p: &[u16], sw: usize, sh: usize, dw: usize, dh: usize| {
            let mut out = Vec::with_capacity(dw * dh);
            for y in 0..dh {
                let sy = reflect(y, sh);
                for x in 0..dw {
                    out.push(p[sy * sw + reflect(x, sw)]);
                }
            }
            out
        };
        let (cw, ch) = (self.width / 2, self.height / 2);
        Self::new(
            width,
            height,
            self.bit_depth,
            pad(&self.y, self.width, self.height, width, height),
            pad(&self.u, cw, ch, width / 2, height / 2),
            pad(&self.v, cw, ch, width / 2, height / 2),
        )
    }

    /// Top-left `width` x `height` window.
    pub fn crop(&self, width: usize, height: usize) -> Result<Self> {
        check_even(width, height)?;
        if width > self.width || height > self.height {
            return Err(Error::Config("crop larger than the picture".into()));
        }
        let cut = |p: &[u16], sw: usize, dw: usize, dh: usize| {
            (0..dh).flat_map(|y| p[y * sw..y * sw + dw].iter().copied()).collect::<Vec<_>>()
        };
        Self::new(
            width,
            height,
            self.bit_depth,
            cut(&self.y, self.width, width, height),
            cut(&self.u, self.width / 2, width / 2, height / 2),
            cut(&self.v, self.width / 2, width / 2, height / 2),
        )
    }
}

/// Mirror index into `[0, n)` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

pub fn max_value(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

pub(crate) fn check_even(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Config(format!("{width}x{height}: 4:2:0 pictures need even, non-zero dimensions")));
    }
    Ok(())
}

/// A decoded picture together with its working representation.
#[derive(Clone, Debug)]
pub struct Frame<T> {
    pub index: usize,
    pub kind: FrameKind,
    pub refs: Vec<usize>,
    pub planes: Planes420,
    /// (3, H, W) reconstruction in [0, 1] nominal range, unclamped.
    pub dense: Tensor<T>,
}
