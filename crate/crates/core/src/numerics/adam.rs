use super::{Scalar, Tensor};
use crate::error::{dim_err, Error, Result};

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(numel: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            m: vec![T::zero(); numel],
            v: vec![T::zero(); numel],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_tensor(t: &Tensor<T>, lr: f64) -> Self {
        Self::new(t.numel(), lr)
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Scalar>(param: &mut [T], grad: &[T], state: &mut AdamState<T>) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() {
        return Err(dim_err!(
            "adam: param {} / grad {} / state {} lengths differ",
            param.len(),
            grad.len(),
            state.m.len()
        ));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training(format!("non-finite gradient at index {i}")));
    }
    state.step += 1;
    let lit = |v: f64| T::from_f64(v).unwrap();
    let (b1, b2) = (lit(state.beta1), lit(state.beta2));
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let step_size = lit(state.lr / bc1);
    let inv_bc2_sqrt = lit(1.0 / bc2.sqrt());
    let eps = lit(state.eps);
    let one = T::one();
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        *p -= step_size * *m / ((*v).sqrt() * inv_bc2_sqrt + eps);
    }
    Ok(())
}

/// Applies [`adam_step`] using the tensor's own gradient buffer, then clears it.
/// A tensor without a gradient is left untouched.
pub fn adam_step_tensor<T: Scalar>(param: &mut Tensor<T>, state: &mut AdamState<T>) -> Result<()> {
    let Some(grad) = param.grad().map(|g| g.to_vec()) else {
        return Ok(());
    };
    adam_step(param.data_mut(), &grad, state)?;
    param.zero_grad();
    Ok(())
}
