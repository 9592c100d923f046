//! Fixed-point discretized Laplace model shared by encoder and decoder.
//!
//! Symbols are coded inside a window `[c - k, c + k]` around `c = round(mu)`,
//! plus one escape symbol. The window half-width `k` is the smallest distance
//! beyond which the Laplace tail carries less than the probability floor.
//! Cumulative frequencies are
//!
//! ```text
//! cum(i) = i + floor((F(c - k + i - 1/2) - F(c - k - 1/2)) * (2^16 - n))
//! ```
//!
//! for `i = 0 ..= 2k + 1` with `n = 2k + 2` symbols and `F` the Laplace CDF in
//! double precision; the escape symbol takes the remainder up to `2^16`
//! (at least 1). Escaped values follow as two equiprobable bytes.

use super::range_coder::{RangeDecoder, RangeEncoder, TOTAL_FREQ};
use crate::error::{Error, Result};
use crate::numerics::laplace::clamp_log_scale;

pub const ALPHABET_MIN: i32 = -(1 << 15);
pub const ALPHABET_MAX: i32 = (1 << 15) - 1;

/// Largest window half-width.
pub const K_MAX: i64 = 8192;

/// Coding distribution for one symbol.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceModel {
    mu: f64,
    b: f64,
    c: i64,
    k: i64,
    base: f64,
    spread: f64,
}

impl LaplaceModel {
    /// `log_scale` is clamped to the model range before use.
    pub fn new(mu: f64, log_scale: f64) -> Result<Self> {
        if !mu.is_finite() || log_scale.is_nan() {
            return Err(Error::Stream(format!("non-finite model parameters ({mu}, {log_scale})")));
        }
        let b = clamp_log_scale(log_scale).exp();
        let c = mu.round().clamp(ALPHABET_MIN as f64, ALPHABET_MAX as f64) as i64;
        let k = ((b * 16.0 * std::f64::consts::LN_2).ceil() as i64 + 1).min(K_MAX);
        let n_sym = 2 * k + 2;
        let mut m = LaplaceModel { mu, b, c, k, base: 0.0, spread: (TOTAL_FREQ as i64 - n_sym) as f64 };
        m.base = m.cdf((c - k) as f64 - 0.5);
        Ok(m)
    }

    fn cdf(&self, x: f64) -> f64 {
        let t = (x - self.mu) / self.b;
        if t < 0.0 {
            0.5 * t.exp()
        } else {
            1.0 - 0.5 * (-t).exp()
        }
    }

    /// Number of in-window symbols (escape excluded).
    pub fn window(&self) -> usize {
        (2 * self.k + 1) as usize
    }

    fn cum(&self, i: i64) -> u32 {
        if i > 2 * self.k + 1 {
            return TOTAL_FREQ;
        }
        let mass = (self.cdf((self.c - self.k + i) as f64 - 0.5) - self.base).max(0.0);
        (i as u32 + (mass * self.spread).floor() as u32).min(TOTAL_FREQ - 1)
    }

    /// (cum, freq) of the in-window symbol for `value`, or of the escape symbol.
    fn interval(&self, value: i32) -> (u32, u32, bool) {
        let i = value as i64 - (self.c - self.k);
        let (i, esc) = if (0..=2 * self.k).contains(&i) { (i, false) } else { (2 * self.k + 1, true) };
        let lo = self.cum(i);
        (lo, self.cum(i + 1) - lo, esc)
    }

    /// Exact cost in bits of coding `value` with this model.
    pub fn cost_bits(&self, value: i32) -> f64 {
        let (_, f, esc) = self.interval(value);
        let raw = if esc { 16.0 } else { 0.0 };
        raw - (f as f64 / TOTAL_FREQ as f64).log2()
    }

    pub fn encode(&self, enc: &mut RangeEncoder, value: i32) -> Result<()> {
        if !(ALPHABET_MIN..=ALPHABET_MAX).contains(&value) {
            return Err(Error::Stream(format!("value {value} outside [{ALPHABET_MIN}, {ALPHABET_MAX}]")));
        }
        let (cum, freq, esc) = self.interval(value);
        enc.encode(cum, freq);
        if esc {
            let u = (value - ALPHABET_MIN) as u32;
            enc.encode((u >> 8) << 8, 256);
            enc.encode((u & 0xff) << 8, 256);
        }
        Ok(())
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> Result<i32> {
        let t = dec.target()?;
        // largest i with cum(i) <= t
        let (mut lo, mut hi) = (0i64, 2 * self.k + 2);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum(mid) <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cum = self.cum(lo);
        dec.consume(cum, self.cum(lo + 1) - cum)?;
        if lo <= 2 * self.k {
            let v = self.c - self.k + lo;
            if !(ALPHABET_MIN as i64..=ALPHABET_MAX as i64).contains(&v) {
                return Err(Error::Stream(format!("decoded value {v} outside the alphabet")));
            }
            return Ok(v as i32);
        }
        let mut u = 0u32;
        for _ in 0..2 {
            let byte = dec.target()? >> 8;
            dec.consume(byte << 8, 256)?;
            u = (u << 8) | byte;
        }
        Ok(u as i32 + ALPHABET_MIN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_are_positive_and_complete() {
        for &(mu, ls) in &[(0.0, 0.0), (3.7, -3.0), (-100.2, 4.0), (0.5, -10.0), (32767.0, 1.0), (-40000.0, 2.0)] {
            let m = LaplaceModel::new(mu, ls).unwrap();
            let n = 2 * m.k + 2;
            assert_eq!(m.cum(0), 0);
            assert_eq!(m.cum(n), TOTAL_FREQ);
            for i in 0..n {
                assert!(m.cum(i + 1) > m.cum(i), "mu={mu} ls={ls} i={i}");
            }
        }
    }

    #[test]
    fn escape_and_window_round_trip() {
        let m = LaplaceModel::new(0.2, -1.0).unwrap();
        let values = [0, 1, -1, 5, 40, -30000, ALPHABET_MAX, ALPHABET_MIN];
        let mut enc = RangeEncoder::new();
        for &v in &values {
            m.encode(&mut enc, v).unwrap();
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        for &v in &values {
            assert_eq!(m.decode(&mut dec).unwrap(), v);
        }
        assert!(dec.is_exhausted());
    }

    #[test]
    fn overflow_is_a_stream_error() {
        let m = LaplaceModel::new(0.0, 0.0).unwrap();
        let mut enc = RangeEncoder::new();
        assert!(matches!(m.encode(&mut enc, 1 << 15), Err(Error::Stream(_))));
        assert!(LaplaceModel::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn cost_tracks_ideal_bits_near_the_mode() {
        let m = LaplaceModel::new(0.0, 0.0).unwrap();
        let ideal = crate::numerics::laplace::bits(0.0f64, 0.0, 0.0);
        assert!((m.cost_bits(0) - ideal).abs() < 1e-3);
    }
}
