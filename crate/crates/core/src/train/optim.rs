use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{TrainConfig, TrainError};

/// `w_c = N / (K·n_c)`, so every `w_c·n_c` equals `N/K`.
pub fn class_weights(counts: [usize; 3]) -> Result<[f64; 3], TrainError> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(TrainError::EmptyClass(c));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.map(|n| total as f64 / (k * n as f64)))
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then linear decay
/// to 0 at `total_steps`. `step` counts optimizer updates from 0.
pub fn lr_schedule(step: usize, warmup_steps: usize, total_steps: usize, base_lr: f64) -> f64 {
    if step >= total_steps {
        0.0
    } else if step < warmup_steps {
        base_lr * (step as f64 / warmup_steps as f64)
    } else {
        base_lr * ((total_steps - step) as f64 / (total_steps - warmup_steps) as f64)
    }
}

/// First and second moments per parameter tensor plus the update count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new() -> Self {
        Self {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }
}

/// AdamW with decoupled weight decay:
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// θ ← θ − lr·(m̂/(√v̂ + ε) + λθ)
/// ```
///
/// `decay[i]` selects which tensors receive the `λθ` term. A tensor with no
/// gradient buffer is treated as having a zero gradient.
pub fn adamw_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    decay: &[bool],
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if decay.len() != params.len() || (!state.m.is_empty() && state.m.len() != params.len()) {
        return Err(TrainError::ShapeMismatch(format!(
            "{} parameters, {} decay flags, {} moment buffers",
            params.len(),
            decay.len(),
            state.m.len()
        )));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        state.v = state.m.clone();
    }
    state.t += 1;
    let (b1, b2) = cfg.betas;
    let t = state.t as i32;
    let bc1 = T::lit(1.0 - b1.powi(t));
    let bc2 = T::lit(1.0 - b2.powi(t));
    let (b1, b2) = (T::lit(b1), T::lit(b2));
    let (one, eps, lr, wd) = (T::one(), T::lit(cfg.eps), T::lit(lr), T::lit(cfg.weight_decay));

    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if m.len() != p.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "parameter {i}: {} values, {} moments",
                p.len(),
                m.len()
            )));
        }
        let grad = p.grad().map(<[T]>::to_vec);
        let lambda = if decay[i] { wd } else { T::zero() };
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            let g = grad.as_ref().map_or(T::zero(), |g| g[j]);
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *theta -= lr * (m_hat / (v_hat.sqrt() + eps) + lambda * *theta);
        }
    }
    Ok(())
}
