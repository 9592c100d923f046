//! Causal context template and the auto-regressive probability model.

use std::rc::Rc;

use crate::error::Result;
use crate::numerics::kernels::linear_forward;
use crate::numerics::{Graph, Scalar, Var};

/// The `width` nearest causal neighbours of a latent, as (dy, dx) offsets.
///
/// A neighbour is causal when it precedes the current position in raster
/// order. Neighbours are sorted by squared distance, ties broken by nearest
/// row first, then left to right. For width 8 this yields
/// (0,-1) (-1,0) (-1,-1) (-1,1) (0,-2) (-2,0) (-1,-2) (-1,2).
pub fn context_template(width: usize) -> Vec<(isize, isize)> {
    let r = (width as f64).sqrt().ceil() as isize + 2;
    let mut cand = Vec::new();
    for dy in -r..=0 {
        for dx in -r..=r {
            if dy < 0 || dx < 0 {
                cand.push((dy, dx));
            }
        }
    }
    cand.sort_by_key(|&(dy, dx)| (dy * dy + dx * dx, -dy, dx));
    cand.truncate(width);
    cand
}

/// Context vector of position (`y`, `x`) in a `h` x `w` grid, zero outside.
pub fn arm_context<T: Scalar>(grid: &[T], h: usize, w: usize, y: usize, x: usize, template: &[(isize, isize)]) -> Vec<T> {
    let mut out = vec![T::zero(); template.len()];
    fill_context(grid, h, w, y, x, template, &mut out);
    out
}

#[inline]
pub(crate) fn fill_context<T: Scalar>(
    grid: &[T],
    h: usize,
    w: usize,
    y: usize,
    x: usize,
    template: &[(isize, isize)],
    out: &mut [T],
) {
    for (o, &(dy, dx)) in out.iter_mut().zip(template) {
        let (yy, xx) = (y as isize + dy, x as isize + dx);
        *o = if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
            grid[yy as usize * w + xx as usize]
        } else {
            T::zero()
        };
    }
}

/// Flat gather indices (row-major, `h*w` rows of `template.len()`), -1 for zero padding.
pub fn context_indices(h: usize, w: usize, template: &[(isize, isize)]) -> Rc<[i32]> {
    let mut idx = Vec::with_capacity(h * w * template.len());
    for y in 0..h {
        for x in 0..w {
            for &(dy, dx) in template {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                let inside = yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w;
                idx.push(if inside { (yy as usize * w + xx as usize) as i32 } else { -1 });
            }
        }
    }
    idx.into()
}

/// Runs the ARM on a batch of contexts inside a graph. `layers` holds
/// (weight, bias) variables; returns an (n, 2) matrix of (mu, raw log-scale).
pub fn arm_graph<T: Scalar>(g: &mut Graph<T>, ctx: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut h = ctx;
    for (i, &(w, b)) in layers.iter().enumerate() {
        h = g.linear(h, w, b)?;
        if i + 1 < layers.len() {
            h = g.relu(h);
        }
    }
    Ok(h)
}

/// Single-context ARM evaluation used by the sequential entropy decoder.
/// Produces the same values as [`arm_graph`] row by row.
pub struct ArmEvaluator<'a, T> {
    layers: Vec<(&'a [T], &'a [T], usize, usize)>,
    buf_a: Vec<T>,
    buf_b: Vec<T>,
}

impl<'a, T: Scalar> ArmEvaluator<'a, T> {
    /// `layers` are (weight, bias, n_in, n_out).
    pub fn new(layers: Vec<(&'a [T], &'a [T], usize, usize)>) -> Self {
        let width = layers.iter().map(|l| l.2.max(l.3)).max().unwrap_or(0);
        ArmEvaluator { layers, buf_a: vec![T::zero(); width], buf_b: vec![T::zero(); width] }
    }

    /// Returns (mu, raw log-scale).
    pub fn eval(&mut self, ctx: &[T]) -> (T, T) {
        let n = self.layers.len();
        self.buf_a[..ctx.len()].copy_from_slice(ctx);
        for (i, &(w, b, n_in, n_out)) in self.layers.iter().enumerate() {
            linear_forward(&self.buf_a[..n_in], w, b, 1, n_in, n_out, &mut self.buf_b[..n_out]);
            if i + 1 < n {
                for v in &mut self.buf_b[..n_out] {
                    *v = v.max(T::zero());
                }
            }
            std::mem::swap(&mut self.buf_a, &mut self.buf_b);
        }
        (self.buf_a[0], self.buf_a[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_width_8_layout() {
        assert_eq!(
            context_template(8),
            vec![(0, -1), (-1, 0), (-1, -1), (-1, 1), (0, -2), (-2, 0), (-1, -2), (-1, 2)]
        );
    }

    #[test]
    fn template_width_24_is_the_radius_4_causal_disc() {
        let t = context_template(24);
        assert_eq!(t.len(), 24);
        assert!(t.iter().all(|&(dy, dx)| dy * dy + dx * dx <= 16));
        let all: usize = (-4isize..=0)
            .flat_map(|dy| (-4isize..=4).map(move |dx| (dy, dx)))
            .filter(|&(dy, dx)| (dy < 0 || dx < 0) && dy * dy + dx * dx <= 16)
            .count();
        assert_eq!(all, 24);
    }

    #[test]
    fn template_is_strictly_causal() {
        for w in [8, 24] {
            for (dy, dx) in context_template(w) {
                assert!(dy < 0 || (dy == 0 && dx < 0));
            }
        }
    }

    #[test]
    fn origin_context_is_zero() {
        let grid: Vec<f32> = (1..=16).map(|v| v as f32).collect();
        let t = context_template(8);
        assert!(arm_context(&grid, 4, 4, 0, 0, &t).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_grid_interior() {
        let grid = vec![3.0f32; 64];
        let t = context_template(24);
        assert_eq!(arm_context(&grid, 8, 8, 5, 4, &t), vec![3.0; 24]);
    }

    #[test]
    fn indices_agree_with_direct_context() {
        let (h, w) = (5, 6);
        let grid: Vec<f64> = (0..h * w).map(|v| v as f64 * 0.5 - 3.0).collect();
        let t = context_template(24);
        let idx = context_indices(h, w, &t);
        for y in 0..h {
            for x in 0..w {
                let direct = arm_context(&grid, h, w, y, x, &t);
                for (j, &d) in direct.iter().enumerate() {
                    let i = idx[(y * w + x) * t.len() + j];
                    let via = if i < 0 { 0.0 } else { grid[i as usize] };
                    assert_eq!(via, d);
                }
            }
        }
    }
}
