//! Central finite differences against the tape gradient of the W1 loss.

use rand::Rng;

use crate::error::Result;
use crate::metrics::wasserstein_1;
use crate::model::{make_curve_constant, simulate_paths, RBergomiParams, Record};
use crate::rng::{aux_rng, derive_seed};
use crate::sampler::Driver;

use super::mlp::Mlp;
use super::tape::{simulate_neural, w1_loss_and_grad, NeuralNoise};

const PICK_SLOT: u64 = 2000;
const DATA_SALT: u64 = 0x6461_7461;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub paths: usize,
    pub trials: usize,
    /// Absolute finite-difference step.
    pub step: f64,
    /// Level of the constant curve used to generate the reference sample.
    pub data_level: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            paths: 16,
            trials: 50,
            step: 1e-5,
            data_level: 0.235 * 0.235,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    /// (parameter index, tape gradient, finite difference, relative error).
    pub entries: Vec<(usize, f64, f64, f64)>,
    pub max_rel_err: f64,
}

/// Compares tape gradients of `W1(S_T(θ), data)` with central differences
/// at `trials` randomly chosen parameters, on fixed noise.
pub fn grad_check(mlp: &Mlp, params: &RBergomiParams, driver: &Driver, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let curve = make_curve_constant(config.data_level)?;
    let data_seed = derive_seed(config.seed, DATA_SALT);
    let data = simulate_paths(params, &curve, driver, config.paths, data_seed, Record::Terminal)?.terminal;
    let noise = NeuralNoise::generate(params, driver, config.paths, config.seed, 0)?;
    let (generated, mut tape) = simulate_neural(mlp, params, &noise)?;
    let (loss, grads) = w1_loss_and_grad(&generated, &mut tape, &data)?;

    let loss_at = |m: &Mlp| -> Result<f64> {
        let (g, _) = simulate_neural(m, params, &noise)?;
        wasserstein_1(&g, &data)
    };
    let mut rng = aux_rng(config.seed, PICK_SLOT);
    let mut entries = Vec::with_capacity(config.trials);
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..config.trials {
        let k = rng.gen_range(0..mlp.n_params());
        let mut plus = mlp.clone();
        plus.params_mut()[k] += config.step;
        let mut minus = mlp.clone();
        minus.params_mut()[k] -= config.step;
        let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * config.step);
        let denom = fd.abs().max(grads[k].abs()).max(1e-12);
        let rel = (fd - grads[k]).abs() / denom;
        max_rel_err = max_rel_err.max(rel);
        entries.push((k, grads[k], fd, rel));
    }
    Ok(GradCheckReport {
        loss,
        entries,
        max_rel_err,
    })
}
