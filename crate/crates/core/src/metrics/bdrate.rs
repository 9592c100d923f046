use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr_db: f64,
}

impl RdPoint {
    fn validate(&self) -> Result<()> {
        if !(self.bpp > 0.0) || !self.psnr_db.is_finite() {
            return Err(Error::Metric(format!("invalid RD point ({}, {})", self.bpp, self.psnr_db)));
        }
        Ok(())
    }
}

/// Least-squares cubic `ln(bpp) = p(t)` with `t = (psnr - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicFit {
    pub center: f64,
    pub scale: f64,
    /// Coefficients of t^0..t^3.
    pub coef: [f64; 4],
    pub psnr_min: f64,
    pub psnr_max: f64,
}

impl CubicFit {
    pub fn eval(&self, psnr: f64) -> f64 {
        let t = (psnr - self.center) / self.scale;
        self.coef.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Exact integral of the fitted log-rate over `[lo, hi]` in PSNR units.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |psnr: f64| {
            let t = (psnr - self.center) / self.scale;
            self.coef.iter().enumerate().map(|(k, c)| c * t.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>()
        };
        (anti(hi) - anti(lo)) * self.scale
    }
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::Metric("RD points are degenerate (singular cubic fit)".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        x[r] = (b[r] - (r + 1..4).map(|c| a[r][c] * x[c]).sum::<f64>()) / a[r][r];
    }
    Ok(x)
}

pub fn fit_log_rate(points: &[RdPoint]) -> Result<CubicFit> {
    if points.len() < 4 {
        return Err(Error::Metric(format!("BD-rate needs at least 4 points per curve, got {}", points.len())));
    }
    for p in points {
        p.validate()?;
    }
    let psnr_min = points.iter().map(|p| p.psnr_db).fold(f64::INFINITY, f64::min);
    let psnr_max = points.iter().map(|p| p.psnr_db).fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (psnr_min + psnr_max);
    let scale = (0.5 * (psnr_max - psnr_min)).max(1e-9);
    let mut ata = [[0.0; 4]; 4];
    let mut atb = [0.0; 4];
    for p in points {
        let t = (p.psnr_db - center) / scale;
        let row = [1.0, t, t * t, t * t * t];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * p.bpp.ln();
        }
    }
    Ok(CubicFit { center, scale, coef: solve4(ata, atb)?, psnr_min, psnr_max })
}

/// Bjontegaard delta rate of `test` against `anchor`, in percent; negative
/// means `test` needs fewer bits for the same quality.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let fa = fit_log_rate(anchor)?;
    let ft = fit_log_rate(test)?;
    let lo = fa.psnr_min.max(ft.psnr_min);
    let hi = fa.psnr_max.min(ft.psnr_max);
    if !(hi > lo) {
        return Err(Error::Metric(format!(
            "PSNR ranges do not overlap: anchor [{:.3}, {:.3}] dB, test [{:.3}, {:.3}] dB",
            fa.psnr_min, fa.psnr_max, ft.psnr_min, ft.psnr_max
        )));
    }
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

/// Reads whitespace-separated `bpp psnr` rows; `#` comments and a
/// non-numeric header row are skipped.
pub fn parse_rd_points(text: &str) -> Result<Vec<RdPoint>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let parsed = (cols.len() >= 2).then(|| (cols[0].parse::<f64>(), cols[1].parse::<f64>()));
        match parsed {
            Some((Ok(bpp), Ok(psnr_db))) => {
                let p = RdPoint { bpp, psnr_db };
                p.validate()?;
                out.push(p);
            }
            _ if out.is_empty() && n == 0 => continue,
            _ => return Err(Error::Metric(format!("line {}: expected `bpp psnr`, got {line:?}", n + 1))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> Vec<RdPoint> {
        [(0.05, 30.1), (0.1, 32.4), (0.2, 34.9), (0.4, 37.2), (0.8, 39.0)]
            .iter()
            .map(|&(bpp, psnr_db)| RdPoint { bpp, psnr_db })
            .collect()
    }

    #[test]
    fn fit_interpolates_four_points() {
        let pts = &curve()[..4];
        let f = fit_log_rate(pts).unwrap();
        for p in pts {
            assert!((f.eval(p.psnr_db) - p.bpp.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn parse_skips_header_and_comments() {
        let pts = parse_rd_points("bpp\tpsnr\n# anchor\n0.1 30\n0.2\t33 # x\n").unwrap();
        assert_eq!(pts, vec![RdPoint { bpp: 0.1, psnr_db: 30.0 }, RdPoint { bpp: 0.2, psnr_db: 33.0 }]);
        assert!(parse_rd_points("0.1 30\nfoo bar\n").is_err());
    }

    #[test]
    fn disjoint_ranges_rejected() {
        let a = curve();
        let b: Vec<_> = a.iter().map(|p| RdPoint { bpp: p.bpp, psnr_db: p.psnr_db + 20.0 }).collect();
        let e = bd_rate(&a, &b).unwrap_err();
        assert!(matches!(e, Error::Metric(m) if m.contains("overlap")));
    }

    #[test]
    fn too_few_points() {
        assert!(bd_rate(&curve()[..3], &curve()).is_err());
    }
}
