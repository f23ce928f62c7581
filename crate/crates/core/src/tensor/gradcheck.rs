//! Central finite-difference checks against reverse-mode gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, TensorError, Var};

/// Magnitudes below this are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub probes: Vec<Probe>,
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// `|a − n| / max(|a|, |n|, REL_ERR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares `analytic[t][i]` with `(L(θ + h) − L(θ − h)) / 2h` at `n_probes`
/// random coordinates. `loss_at(t, i, delta)` must return the loss with
/// element `i` of tensor `t` shifted by `delta` (and leave it unshifted
/// afterwards).
pub fn compare_finite_differences(
    analytic: &[Vec<f64>],
    n_probes: usize,
    step: f64,
    rng: &mut ChaCha8Rng,
    mut loss_at: impl FnMut(usize, usize, f64) -> f64,
) -> GradCheck {
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let probes = (0..n_probes)
        .map(|_| {
            let mut flat = rng.random_range(0..total);
            let tensor = sizes
                .iter()
                .position(|&s| {
                    if flat < s {
                        true
                    } else {
                        flat -= s;
                        false
                    }
                })
                .expect("index within total");
            let index = flat;
            let numeric = (loss_at(tensor, index, step) - loss_at(tensor, index, -step)) / (2.0 * step);
            let a = analytic[tensor][index];
            Probe {
                tensor,
                index,
                analytic: a,
                numeric,
                rel_err: relative_error(a, numeric),
            }
        })
        .collect();
    GradCheck { probes }
}

/// Gradient check for a function of plain input tensors. `f` records a
/// scalar loss from one leaf variable per input.
pub fn check_graph<F>(
    inputs: &[Tensor<f64>],
    n_probes: usize,
    step: f64,
    rng: &mut ChaCha8Rng,
    f: F,
) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.variable(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss)[0])
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let bp = g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| bp.wrt(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    let mut xs = inputs.to_vec();
    let mut failure = None;
    let check = compare_finite_differences(&analytic, n_probes, step, rng, |t, i, d| {
        let orig = xs[t].data()[i];
        xs[t].data_mut()[i] = orig + d;
        let l = eval(&xs);
        xs[t].data_mut()[i] = orig;
        l.unwrap_or_else(|e| {
            failure = Some(e);
            f64::NAN
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(check),
    }
}
