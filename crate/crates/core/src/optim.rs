//! Named trainable parameters, the RMSprop update, and a central-difference
//! gradient checker.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter '{0}'; step aborted")]
    NonFiniteGradient(String),
    #[error("optimizer state holds {state} accumulators but {params} parameters were given")]
    StateMismatch { state: usize, params: usize },
}

/// A named value/gradient pair. Gradients accumulate across samples and are
/// cleared by the optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: String, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Parameter { name, value, grad }
    }
}

/// Ordered collection of parameters; order is the identity used by the
/// optimizer state and by persistence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its index. Names must be unique.
    pub fn push(&mut self, name: String, value: Tensor) -> usize {
        assert!(self.index_of(&name).is_none(), "duplicate parameter name '{name}'");
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.rows(), p.value.cols());
        }
    }
}

/// RMSprop settings. Defaults: learning rate 1e-3, rho 0.9, epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig { learning_rate: 1e-3, rho: 0.9, epsilon: 1e-8 }
    }
}

/// Per-parameter accumulators of squared gradients.
#[derive(Debug, Clone)]
pub struct RmspropState {
    config: RmspropConfig,
    acc: Vec<Tensor>,
}

impl RmspropState {
    pub fn new(params: &ParamSet, config: RmspropConfig) -> Self {
        let acc = params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        RmspropState { config, acc }
    }

    pub fn config(&self) -> &RmspropConfig {
        &self.config
    }

    /// One update: `acc <- rho acc + (1 - rho) g^2`, then
    /// `theta <- theta - lr g / (sqrt(acc) + eps)`. Gradients are zeroed
    /// afterwards. A non-finite gradient aborts the step untouched.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<(), OptimError> {
        if self.acc.len() != params.len() {
            return Err(OptimError::StateMismatch { state: self.acc.len(), params: params.len() });
        }
        for p in params.iter() {
            if p.grad.has_non_finite() {
                return Err(OptimError::NonFiniteGradient(p.name.clone()));
            }
        }
        let RmspropConfig { learning_rate, rho, epsilon } = self.config;
        for (idx, acc) in self.acc.iter_mut().enumerate() {
            let p = params.get_mut(idx);
            let acc_data = acc.data_mut();
            let val = p.value.data_mut();
            let grad = p.grad.data();
            for i in 0..acc_data.len() {
                let g = grad[i];
                acc_data[i] = rho * acc_data[i] + (1.0 - rho) * g * g;
                val[i] -= learning_rate * g / (libm::sqrt(acc_data[i]) + epsilon);
            }
        }
        params.zero_grads();
        Ok(())
    }
}

/// Settings for [`grad_check`]. `max_coords_per_param` bounds the number of
/// coordinates probed per tensor; the subsample is drawn with `seed`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-4, tolerance: 1e-4, max_coords_per_param: 16, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckWorst {
    pub param: String,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst: Option<GradCheckWorst>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Compares the analytic gradients already stored in `params` against
/// central differences of `f`, on a seeded subsample of coordinates.
///
/// The relative error uses `max(|analytic|, |numeric|, 1e-8)` as the
/// denominator. Parameter values are restored after probing.
pub fn grad_check<F: FnMut(&ParamSet) -> f64>(
    mut f: F,
    params: &mut ParamSet,
    config: &GradCheckConfig,
) -> GradCheckReport {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: None,
        tolerance: config.tolerance,
    };
    for idx in 0..params.len() {
        let numel = params.get(idx).value.data().len();
        let take = numel.min(config.max_coords_per_param);
        let coords: Vec<usize> = if take == numel {
            (0..numel).collect()
        } else {
            sample(&mut rng, numel, take).into_vec()
        };
        for coord in coords {
            let original = params.get(idx).value.data()[coord];
            params.get_mut(idx).value.data_mut()[coord] = original + config.step;
            let plus = f(params);
            params.get_mut(idx).value.data_mut()[coord] = original - config.step;
            let minus = f(params);
            params.get_mut(idx).value.data_mut()[coord] = original;
            let numeric = (plus - minus) / (2.0 * config.step);
            let analytic = params.get(idx).grad.data()[coord];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some(GradCheckWorst {
                    param: params.get(idx).name.clone(),
                    coord,
                    analytic,
                    numeric,
                });
            }
        }
    }
    report
}
