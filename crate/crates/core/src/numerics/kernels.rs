//! Forward and backward kernels on raw slices.
//!
//! Training graphs and the decoder's inference path call the same functions,
//! so a decoded frame is bit-identical to the encoder-side reconstruction.
//! Every loop runs in a fixed order; nothing here is parallel.

use super::Scalar;

/// Kernel size of the upsampling transposed convolution.
pub const TCONV_KERNEL: usize = 8;
/// Rows/columns dropped from each side of the raw (2h+6)-sized output.
pub const TCONV_CROP: usize = (TCONV_KERNEL - 2) / 2;

#[inline]
fn axpy<T: Scalar>(dst: &mut [T], a: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    for (&x, &y) in ra.iter().zip(rb) {
        acc[0] += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// `y[r, o] = b[o] + sum_i w[o, i] * x[r, i]` for `rows` input rows.
pub fn linear_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    rows: usize,
    n_in: usize,
    n_out: usize,
    y: &mut [T],
) {
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        let yr = &mut y[r * n_out..(r + 1) * n_out];
        for o in 0..n_out {
            yr[o] = b[o] + dot(&w[o * n_in..(o + 1) * n_in], xr);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    rows: usize,
    n_in: usize,
    n_out: usize,
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    if let Some(dx) = dx {
        for r in 0..rows {
            let dxr = &mut dx[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                axpy(dxr, dy[r * n_out + o], &w[o * n_in..(o + 1) * n_in]);
            }
        }
    }
    if let Some(dw) = dw {
        for r in 0..rows {
            let xr = &x[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                axpy(&mut dw[o * n_in..(o + 1) * n_in], dy[r * n_out + o], xr);
            }
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            for o in 0..n_out {
                db[o] += dy[r * n_out + o];
            }
        }
    }
}

/// Index ranges of output rows (or columns) whose input at offset `d` is in bounds.
#[inline]
fn valid_range(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo.min(hi), hi)
}

/// Stride-1 cross-correlation with zero padding `k / 2` on a (cin, h, w) input.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    wd: usize,
    y: &mut [T],
) {
    let hw = h * wd;
    let pad = (k / 2) as isize;
    for co in 0..cout {
        let yc = &mut y[co * hw..(co + 1) * hw];
        yc.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..cin {
            let xc = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(wd, dx);
                    let wv = w[((co * cin + ci) * k + ky) * k + kx];
                    if x0 >= x1 {
                        continue;
                    }
                    for r in y0..y1 {
                        let src_r = (r as isize + dy) as usize;
                        let src = &xc[src_r * wd..(src_r + 1) * wd];
                        let dst = &mut yc[r * wd..(r + 1) * wd];
                        let sx0 = (x0 as isize + dx) as usize;
                        axpy(&mut dst[x0..x1], wv, &src[sx0..sx0 + (x1 - x0)]);
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    wd: usize,
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let hw = h * wd;
    let pad = (k / 2) as isize;
    if let Some(db) = db {
        for co in 0..cout {
            let mut acc = T::zero();
            for &g in &dy[co * hw..(co + 1) * hw] {
                acc += g;
            }
            db[co] += acc;
        }
    }
    for co in 0..cout {
        let gc = &dy[co * hw..(co + 1) * hw];
        for ci in 0..cin {
            let xc = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                let oy = ky as isize - pad;
                let (y0, y1) = valid_range(h, oy);
                for kx in 0..k {
                    let ox = kx as isize - pad;
                    let (x0, x1) = valid_range(wd, ox);
                    if x0 >= x1 {
                        continue;
                    }
                    let widx = ((co * cin + ci) * k + ky) * k + kx;
                    let sx0 = (x0 as isize + ox) as usize;
                    let n = x1 - x0;
                    if let Some(dw) = dw.as_deref_mut() {
                        let mut acc = T::zero();
                        for r in y0..y1 {
                            let sr = (r as isize + oy) as usize;
                            acc += dot(&gc[r * wd + x0..r * wd + x1], &xc[sr * wd + sx0..sr * wd + sx0 + n]);
                        }
                        dw[widx] += acc;
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = w[widx];
                        let dxc = &mut dx[ci * hw..(ci + 1) * hw];
                        for r in y0..y1 {
                            let sr = (r as isize + oy) as usize;
                            axpy(&mut dxc[sr * wd + sx0..sr * wd + sx0 + n], wv, &gc[r * wd + x0..r * wd + x1]);
                        }
                    }
                }
            }
        }
    }
}

/// Stride-2 transposed convolution of one (h, w) plane with an 8x8 kernel.
///
/// The raw output is (2h + 6) x (2w + 6); the central 2h x 2w window is kept,
/// i.e. `y[oy, ox] = b + sum x[iy, ix] * k[oy + 3 - 2 iy, ox + 3 - 2 ix]`.
pub fn tconv2d_forward<T: Scalar>(x: &[T], k: &[T], b: T, h: usize, w: usize, y: &mut [T]) {
    let ow = 2 * w;
    y.iter_mut().for_each(|v| *v = b);
    for ky in 0..TCONV_KERNEL {
        let (iy0, iy1) = tconv_range(h, ky);
        for iy in iy0..iy1 {
            let oy = 2 * iy + ky - TCONV_CROP;
            let yr = &mut y[oy * ow..(oy + 1) * ow];
            let xr = &x[iy * w..(iy + 1) * w];
            for kx in 0..TCONV_KERNEL {
                let kv = k[ky * TCONV_KERNEL + kx];
                let (ix0, ix1) = tconv_range(w, kx);
                if ix0 == ix1 {
                    continue;
                }
                let base = 2 * ix0 + kx - TCONV_CROP;
                for (out, &xv) in yr[base..].iter_mut().step_by(2).zip(&xr[ix0..ix1]) {
                    *out += kv * xv;
                }
            }
        }
    }
}

/// Input indices `i` in `[lo, hi)` whose output `2i + tap - TCONV_CROP` lands inside `[0, 2n)`.
#[inline]
fn tconv_range(n: usize, tap: usize) -> (usize, usize) {
    let lo = TCONV_CROP.saturating_sub(tap).div_ceil(2);
    let last = (2 * n + TCONV_CROP) as isize - tap as isize - 1;
    let hi = if last < 0 { 0 } else { (last as usize / 2 + 1).min(n) };
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
pub fn tconv2d_backward<T: Scalar>(
    x: &[T],
    k: &[T],
    dy: &[T],
    h: usize,
    w: usize,
    mut dx: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
    db: Option<&mut T>,
) {
    let ow = 2 * w;
    if let Some(db) = db {
        let mut acc = T::zero();
        for &g in dy {
            acc += g;
        }
        *db += acc;
    }
    for ky in 0..TCONV_KERNEL {
        let (iy0, iy1) = tconv_range(h, ky);
        for iy in iy0..iy1 {
            let oy = 2 * iy + ky - TCONV_CROP;
            let gr = &dy[oy * ow..(oy + 1) * ow];
            let xr = &x[iy * w..(iy + 1) * w];
            for kx in 0..TCONV_KERNEL {
                let kidx = ky * TCONV_KERNEL + kx;
                let (ix0, ix1) = tconv_range(w, kx);
                if ix0 == ix1 {
                    continue;
                }
                let base = 2 * ix0 + kx - TCONV_CROP;
                let grads = gr[base..].iter().step_by(2).zip(ix0..ix1);
                if let Some(dk) = dk.as_deref_mut() {
                    let mut acc = T::zero();
                    for (&g, ix) in grads.clone() {
                        acc += g * xr[ix];
                    }
                    dk[kidx] += acc;
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let kv = k[kidx];
                    let dxr = &mut dx[iy * w..(iy + 1) * w];
                    for (&g, ix) in grads {
                        dxr[ix] += g * kv;
                    }
                }
            }
        }
    }
}

/// Bilinear sampling location after edge clamping.
#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    ax: T,
    ay: T,
    /// Sample coordinate lies strictly inside the frame (non-zero flow gradient).
    inside_x: bool,
    inside_y: bool,
}

#[inline]
fn tap<T: Scalar>(px: usize, py: usize, fx: T, fy: T, h: usize, w: usize) -> Tap<T> {
    let max_x = T::from_usize(w - 1).unwrap();
    let max_y = T::from_usize(h - 1).unwrap();
    let sx = T::from_usize(px).unwrap() + fx;
    let sy = T::from_usize(py).unwrap() + fy;
    let inside_x = sx > T::zero() && sx < max_x;
    let inside_y = sy > T::zero() && sy < max_y;
    let cx = sx.max(T::zero()).min(max_x);
    let cy = sy.max(T::zero()).min(max_y);
    let fx0 = cx.floor();
    let fy0 = cy.floor();
    let x0 = fx0.to_usize().unwrap();
    let y0 = fy0.to_usize().unwrap();
    Tap {
        x0,
        x1: (x0 + 1).min(w - 1),
        y0,
        y1: (y0 + 1).min(h - 1),
        ax: cx - fx0,
        ay: cy - fy0,
        inside_x,
        inside_y,
    }
}

/// Backward bilinear warp: `y[c, p] = ref[c, p + flow(p)]`, sampling clamped
/// to the nearest edge pixel. `flow` holds (dx, dy) channels.
pub fn warp_forward<T: Scalar>(src: &[T], flow: &[T], c: usize, h: usize, w: usize, y: &mut [T]) {
    let hw = h * w;
    let one = T::one();
    for py in 0..h {
        for px in 0..w {
            let p = py * w + px;
            let t = tap(px, py, flow[p], flow[hw + p], h, w);
            for ch in 0..c {
                let s = &src[ch * hw..(ch + 1) * hw];
                let top = (one - t.ax) * s[t.y0 * w + t.x0] + t.ax * s[t.y0 * w + t.x1];
                let bot = (one - t.ax) * s[t.y1 * w + t.x0] + t.ax * s[t.y1 * w + t.x1];
                y[ch * hw + p] = (one - t.ay) * top + t.ay * bot;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn warp_backward<T: Scalar>(
    src: &[T],
    flow: &[T],
    dy: &[T],
    c: usize,
    h: usize,
    w: usize,
    mut dsrc: Option<&mut [T]>,
    mut dflow: Option<&mut [T]>,
) {
    let hw = h * w;
    let one = T::one();
    for py in 0..h {
        for px in 0..w {
            let p = py * w + px;
            let t = tap(px, py, flow[p], flow[hw + p], h, w);
            let (mut gfx, mut gfy) = (T::zero(), T::zero());
            for ch in 0..c {
                let g = dy[ch * hw + p];
                let s = &src[ch * hw..(ch + 1) * hw];
                let (v00, v01) = (s[t.y0 * w + t.x0], s[t.y0 * w + t.x1]);
                let (v10, v11) = (s[t.y1 * w + t.x0], s[t.y1 * w + t.x1]);
                gfx += g * ((one - t.ay) * (v01 - v00) + t.ay * (v11 - v10));
                gfy += g * (((one - t.ax) * v10 + t.ax * v11) - ((one - t.ax) * v00 + t.ax * v01));
                if let Some(ds) = dsrc.as_deref_mut() {
                    let d = &mut ds[ch * hw..(ch + 1) * hw];
                    d[t.y0 * w + t.x0] += g * (one - t.ay) * (one - t.ax);
                    d[t.y0 * w + t.x1] += g * (one - t.ay) * t.ax;
                    d[t.y1 * w + t.x0] += g * t.ay * (one - t.ax);
                    d[t.y1 * w + t.x1] += g * t.ay * t.ax;
                }
            }
            if let Some(df) = dflow.as_deref_mut() {
                if t.inside_x {
                    df[p] += gfx;
                }
                if t.inside_y {
                    df[hw + p] += gfy;
                }
            }
        }
    }
}

/// Per-pixel integer signature of the bilinear taps, used to detect when a
/// finite-difference probe crosses a pixel boundary.
pub fn warp_tap_signature<T: Scalar>(flow: &[T], h: usize, w: usize) -> u64 {
    let hw = h * w;
    let mut acc = 0xcbf2_9ce4_8422_2325u64;
    for py in 0..h {
        for px in 0..w {
            let p = py * w + px;
            let t = tap(px, py, flow[p], flow[hw + p], h, w);
            for v in [t.x0, t.y0, t.inside_x as usize, t.inside_y as usize] {
                acc = (acc ^ v as u64).wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    acc
}

/// 2x2 box average of each channel of a (c, h, w) tensor; h and w must be even.
pub fn avgpool2_forward<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, y: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25).unwrap();
    for ch in 0..c {
        let xc = &x[ch * h * w..(ch + 1) * h * w];
        let yc = &mut y[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let i = 2 * oy * w + 2 * ox;
                yc[oy * ow + ox] = (xc[i] + xc[i + 1] + xc[i + w] + xc[i + w + 1]) * quarter;
            }
        }
    }
}

pub fn avgpool2_backward<T: Scalar>(dy: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25).unwrap();
    for ch in 0..c {
        let gc = &dy[ch * oh * ow..(ch + 1) * oh * ow];
        let dc = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gc[oy * ow + ox] * quarter;
                let i = 2 * oy * w + 2 * ox;
                dc[i] += g;
                dc[i + 1] += g;
                dc[i + w] += g;
                dc[i + w + 1] += g;
            }
        }
    }
}
