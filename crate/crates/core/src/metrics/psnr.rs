use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Planes420;

/// Reported in place of +inf for identical pictures.
pub const PSNR_CAP: f64 = 99.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColorDomain {
    #[default]
    Yuv420,
    Rgb,
}

fn check_pair(a: &Planes420, b: &Planes420) -> Result<()> {
    if (a.width, a.height, a.bit_depth) != (b.width, b.height, b.bit_depth) {
        return Err(Error::Metric(format!(
            "pictures differ: {}x{}@{} vs {}x{}@{}",
            a.width, a.height, a.bit_depth, b.width, b.height, b.bit_depth
        )));
    }
    Ok(())
}

fn sse(a: &[u16], b: &[u16]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Sum of squared errors and sample count over Y, U and V.
fn sse_yuv420(a: &Planes420, b: &Planes420) -> Result<(f64, usize)> {
    check_pair(a, b)?;
    Ok((sse(&a.y, &b.y) + sse(&a.u, &b.u) + sse(&a.v, &b.v), a.n_samples()))
}

/// MSE pooled over every 4:2:0 sample, in sample units.
pub fn mse_yuv420(a: &Planes420, b: &Planes420) -> Result<f64> {
    let (e, n) = sse_yuv420(a, b)?;
    Ok(e / n as f64)
}

pub fn psnr_from_mse(mse: f64, max: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (max * max / mse).log10()).min(PSNR_CAP)
}

pub fn psnr_yuv420(reference: &Planes420, decoded: &Planes420) -> Result<f64> {
    Ok(psnr_from_mse(mse_yuv420(reference, decoded)?, reference.max_value() as f64))
}

/// Full-range BT.709 RGB in [0, 1], planar R, G, B at luma resolution
/// (chroma nearest-neighbour upsampled).
pub fn rgb_bt709(p: &Planes420) -> Vec<f64> {
    let (w, h) = (p.width, p.height);
    let inv = 1.0 / p.max_value() as f64;
    let mut out = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = (y / 2) * (w / 2) + x / 2;
            let luma = p.y[i] as f64 * inv;
            let cb = p.u[c] as f64 * inv - 0.5;
            let cr = p.v[c] as f64 * inv - 0.5;
            let rgb = [
                luma + 1.5748 * cr,
                luma - 0.187_324 * cb - 0.468_124 * cr,
                luma + 1.8556 * cb,
            ];
            for (k, v) in rgb.into_iter().enumerate() {
                out[k * w * h + i] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// MSE of the RGB conversions on a [0, 1] scale.
pub fn mse_rgb(a: &Planes420, b: &Planes420) -> Result<f64> {
    check_pair(a, b)?;
    let (ra, rb) = (rgb_bt709(a), rgb_bt709(b));
    Ok(ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / ra.len() as f64)
}

pub fn psnr_rgb(reference: &Planes420, decoded: &Planes420) -> Result<f64> {
    Ok(psnr_from_mse(mse_rgb(reference, decoded)?, 1.0))
}

/// Sequence PSNR from the MSE pooled over all frames.
pub fn psnr_video(reference: &[Planes420], decoded: &[Planes420], domain: ColorDomain) -> Result<f64> {
    if reference.len() != decoded.len() || reference.is_empty() {
        return Err(Error::Metric(format!("{} reference vs {} decoded frames", reference.len(), decoded.len())));
    }
    match domain {
        ColorDomain::Yuv420 => {
            let mut total = (0.0, 0usize);
            for (a, b) in reference.iter().zip(decoded) {
                let (e, n) = sse_yuv420(a, b)?;
                total = (total.0 + e, total.1 + n);
            }
            Ok(psnr_from_mse(total.0 / total.1 as f64, reference[0].max_value() as f64))
        }
        ColorDomain::Rgb => {
            let mut sum = 0.0;
            for (a, b) in reference.iter().zip(decoded) {
                sum += mse_rgb(a, b)?;
            }
            Ok(psnr_from_mse(sum / reference.len() as f64, 1.0))
        }
    }
}

/// Bits per pixel of `bytes` spread over `frames` pictures of `width` x `height`.
pub fn bpp(bytes: usize, width: usize, height: usize, frames: usize) -> f64 {
    (8 * bytes) as f64 / (width * height * frames) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_capped() {
        let p = Planes420::filled(4, 4, 8, [10, 20, 30]).unwrap();
        assert_eq!(psnr_yuv420(&p, &p).unwrap(), PSNR_CAP);
        assert_eq!(psnr_rgb(&p, &p).unwrap(), PSNR_CAP);
    }

    #[test]
    fn gray_maps_to_gray() {
        let p = Planes420::filled(2, 2, 8, [51, 128, 128]).unwrap();
        let rgb = rgb_bt709(&p);
        let expect = 51.0 / 255.0;
        let off = 128.0 / 255.0 - 0.5;
        assert!((rgb[0] - (expect + 1.5748 * off)).abs() < 1e-12);
        assert!((rgb[8] - (expect + 1.8556 * off)).abs() < 1e-12);
    }

    #[test]
    fn mismatch_is_a_metric_error() {
        let a = Planes420::filled(4, 4, 8, [0; 3]).unwrap();
        let b = Planes420::filled(4, 4, 10, [0; 3]).unwrap();
        assert!(matches!(psnr_yuv420(&a, &b), Err(Error::Metric(_))));
    }
}
