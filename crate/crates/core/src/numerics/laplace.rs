//! Discretized Laplace probability mass and its partial derivatives.

use super::Scalar;

/// Lower bound on any symbol probability (2^-16).
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;
/// Clamp applied to the predicted log-scale.
pub const LOG_SCALE_MIN: f64 = -10.0;
pub const LOG_SCALE_MAX: f64 = 10.0;

/// Mass of the unit interval centred on `value` together with
/// (dP/dvalue, dP/dmu, dP/dlog_scale). `log_scale` must already be clamped.
#[inline]
pub fn mass_and_grads<T: Scalar>(value: T, mu: T, log_scale: T) -> (T, T, T, T) {
    let half = T::from_f64(0.5).unwrap();
    let b = log_scale.exp();
    let lo = value - half - mu;
    let hi = value + half - mu;
    let e_hi = (-hi.abs() / b).exp();
    let e_lo = (-lo.abs() / b).exp();
    let p = if lo >= T::zero() {
        half * (e_lo - e_hi)
    } else if hi <= T::zero() {
        half * (e_hi - e_lo)
    } else {
        T::one() - half * e_hi - half * e_lo
    };
    let two_b = b + b;
    let f_hi = e_hi / two_b;
    let f_lo = e_lo / two_b;
    let d_value = f_hi - f_lo;
    let d_ls = lo * f_lo - hi * f_hi;
    (p, d_value, -d_value, d_ls)
}

/// `-log2(max(P, 2^-16))` for an integer (or relaxed) value.
pub fn bits<T: Scalar>(value: T, mu: T, log_scale: T) -> T {
    let ls = clamp_log_scale(log_scale);
    let (p, ..) = mass_and_grads(value, mu, ls);
    let floor = T::from_f64(PROB_FLOOR).unwrap();
    -(p.max(floor)).log2()
}

#[inline]
pub fn clamp_log_scale<T: Scalar>(ls: T) -> T {
    ls.max(T::from_f64(LOG_SCALE_MIN).unwrap()).min(T::from_f64(LOG_SCALE_MAX).unwrap())
}
