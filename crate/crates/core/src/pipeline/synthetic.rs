//! Deterministic test content.

use super::frame::{max_value, Planes420};
use crate::error::Result;

/// Smooth multi-frequency pattern in [0, 1] at continuous position (x, y).
pub fn texture(x: f64, y: f64) -> [f64; 3] {
    let l = 0.5 + 0.22 * (0.19 * x).sin() * (0.13 * y).cos() + 0.15 * (0.07 * x + 0.11 * y).sin()
        + 0.08 * (0.41 * x - 0.29 * y).cos();
    let u = 0.5 + 0.12 * (0.05 * x - 0.09 * y).sin();
    let v = 0.5 + 0.12 * (0.08 * x + 0.04 * y).cos();
    [l, u, v]
}

fn sample(v: f64, bd: u8) -> u16 {
    (v.clamp(0.0, 1.0) * max_value(bd) as f64).round() as u16
}

/// Picture of `texture` seen through a window whose top-left corner sits at (ox, oy).
pub fn textured_frame(width: usize, height: usize, bit_depth: u8, ox: f64, oy: f64) -> Result<Planes420> {
    let mut y = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            y.push(sample(texture(c as f64 + ox, r as f64 + oy)[0], bit_depth));
        }
    }
    let (cw, chh) = (width / 2, height / 2);
    let (mut u, mut v) = (Vec::with_capacity(cw * chh), Vec::with_capacity(cw * chh));
    for r in 0..chh {
        for c in 0..cw {
            let t = texture(2.0 * c as f64 + 0.5 + ox, 2.0 * r as f64 + 0.5 + oy);
            u.push(sample(t[1], bit_depth));
            v.push(sample(t[2], bit_depth));
        }
    }
    Planes420::new(width, height, bit_depth, y, u, v)
}

/// Camera pan: frame `t` shows the texture shifted by `t * (dx, dy)` pixels,
/// so content moves by `-(dx, dy)` per frame.
pub fn panning_sequence(width: usize, height: usize, frames: usize, dx: f64, dy: f64) -> Result<Vec<Planes420>> {
    (0..frames).map(|t| textured_frame(width, height, 8, t as f64 * dx, t as f64 * dy)).collect()
}

/// `frames` identical pictures.
pub fn static_sequence(width: usize, height: usize, frames: usize) -> Result<Vec<Planes420>> {
    panning_sequence(width, height, frames, 0.0, 0.0)
}
