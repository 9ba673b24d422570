//! Training loop, checkpoints and the loss history.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::metrics::wasserstein_1;
use crate::model::RBergomiParams;
use crate::pricing::{price_european, strike_grid, Payoff};
use crate::rng::{aux_rng, derive_seed};
use crate::sampler::Driver;

use super::adam::{adam_step, AdamState};
use super::mlp::Mlp;
use super::tape::{simulate_neural, w1_loss_and_grad, NeuralNoise};

const TRAIN_NOISE_SALT: u64 = 0x7472_6169_6e;
const SHUFFLE_SLOT: u64 = 1000;
/// First path index of the fixed evaluation noise.
const EVAL_PATH_BASE: u64 = 1 << 59;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub params: RBergomiParams,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many parameter updates even mid-epoch.
    pub max_iterations: Option<usize>,
    pub lr: f64,
    pub lr_decay: f64,
    /// Epochs without test improvement before the learning rate decays.
    pub patience: usize,
    pub lr_floor: f64,
    pub train_fraction: f64,
    pub seed: u64,
    /// Log-moneyness of the call strikes used for the price error.
    pub strikes: Vec<f64>,
}

impl TrainConfig {
    pub fn new(params: RBergomiParams) -> Self {
        Self {
            params,
            batch_size: 4096,
            epochs: 100,
            max_iterations: None,
            lr: 1e-4,
            lr_decay: 0.5,
            patience: 5,
            lr_floor: 1e-6,
            train_fraction: 0.8192,
            seed: 0,
            strikes: strike_grid(41, -0.4, 0.4),
        }
    }

    pub fn split(&self, len: usize) -> Result<usize> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::domain(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        let n_train = (self.train_fraction * len as f64).floor() as usize;
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::domain(format!(
                "batch size {} does not fit the {n_train} training samples",
                self.batch_size
            )));
        }
        if n_train >= len {
            return Err(Error::domain("test split is empty"));
        }
        Ok(n_train)
    }
}

/// One parameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub epoch: usize,
    pub train_w1: f64,
    /// Test W1, on the last update of each epoch only.
    pub test_w1: Option<f64>,
    /// Largest call price gap between the generated and data batch.
    pub max_price_err: f64,
}

/// End-of-epoch evaluation on the test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub iter: usize,
    pub lr: f64,
    pub test_w1: f64,
    pub max_price_err: f64,
    /// Combined standard error of the two prices at the worst strike.
    pub price_stderr: f64,
    pub min_xi: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Mlp,
    pub best_test_w1: f64,
    pub best_epoch: usize,
    pub best_iter: usize,
    /// Optimizer state at the time `best` was taken.
    pub best_adam: AdamState,
    pub last: Mlp,
    pub adam: AdamState,
    pub history: Vec<HistoryRow>,
    pub epochs: Vec<EpochReport>,
}

/// Largest `|mean h(x) - mean h(y)|` over calls at `strikes` (log-moneyness),
/// with the combined standard error at that strike.
pub fn max_price_error(x: &[f64], y: &[f64], params: &RBergomiParams, strikes: &[f64]) -> Result<(f64, f64)> {
    let mut worst = (0.0, 0.0);
    for k in strikes {
        let payoff = Payoff::Call(params.s0 * k.exp());
        let (px, sx) = price_european(x, payoff, params.rate, params.horizon)?;
        let (py, sy) = price_european(y, payoff, params.rate, params.horizon)?;
        let err = (px - py).abs();
        if err > worst.0 {
            worst = (err, (sx * sx + sy * sy).sqrt());
        }
    }
    Ok(worst)
}

fn min_on_grid(mlp: &Mlp, horizon: f64) -> f64 {
    (0..=1000)
        .map(|i| mlp.forward(horizon * i as f64 / 1000.0))
        .fold(f64::INFINITY, f64::min)
}

/// Trains `init` so that simulated terminal prices match `data` in W1.
///
/// The first `train_fraction` of `data` is the training set and is visited
/// as a shuffled partition each epoch; the rest is the test set. Every
/// update draws fresh model noise. At each epoch end the network is scored
/// on fixed evaluation noise against the test set; the best network so far
/// is kept, and the learning rate halves after `patience` epochs without
/// improvement.
pub fn train(config: &TrainConfig, init: Mlp, driver: &Driver, data: &[f64]) -> Result<TrainOutcome> {
    let params = &config.params;
    params.validate()?;
    let n_train = config.split(data.len())?;
    let (train_set, test_set) = data.split_at(n_train);
    let noise_seed = derive_seed(config.seed, TRAIN_NOISE_SALT);
    let eval_noise = NeuralNoise::generate(params, driver, test_set.len(), noise_seed, EVAL_PATH_BASE)?;

    let mut mlp = init;
    let mut adam = AdamState::new(mlp.n_params(), config.lr);
    let mut best = mlp.clone();
    let mut best_test_w1 = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_iter = 0;
    let mut best_adam = adam.clone();
    let mut stale = 0;
    let mut history = Vec::new();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..n_train).collect();
    let batches = n_train / config.batch_size;
    let mut iter = 0;

    'epochs: for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut aux_rng(config.seed, SHUFFLE_SLOT + epoch as u64));
        for b in 0..batches {
            if config.max_iterations.is_some_and(|m| iter >= m) {
                break 'epochs;
            }
            iter += 1;
            let batch: Vec<f64> = order[b * config.batch_size..(b + 1) * config.batch_size]
                .iter()
                .map(|&i| train_set[i])
                .collect();
            let first = ((iter - 1) * config.batch_size) as u64;
            let noise = NeuralNoise::generate(params, driver, config.batch_size, noise_seed, first)?;
            let (generated, mut tape) = simulate_neural(&mlp, params, &noise)?;
            let (loss, grads) = w1_loss_and_grad(&generated, &mut tape, &batch)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { iteration: iter });
            }
            let (price_err, _) = max_price_error(&generated, &batch, params, &config.strikes)?;
            drop(tape);
            adam_step(&mut adam, mlp.params_mut(), &grads)?;
            history.push(HistoryRow {
                iter,
                epoch,
                train_w1: loss,
                test_w1: None,
                max_price_err: price_err,
            });
            let epoch_end = b + 1 == batches || config.max_iterations == Some(iter);
            if epoch_end {
                let report = evaluate(&mlp, params, &eval_noise, test_set, &config.strikes, epoch, iter, adam.lr)?;
                if let Some(last) = history.last_mut() {
                    last.test_w1 = Some(report.test_w1);
                }
                if report.test_w1 < best_test_w1 {
                    best_test_w1 = report.test_w1;
                    best = mlp.clone();
                    best_epoch = epoch;
                    best_iter = iter;
                    best_adam = adam.clone();
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= config.patience {
                        adam.lr = (adam.lr * config.lr_decay).max(config.lr_floor.min(adam.lr));
                        stale = 0;
                    }
                }
                epochs.push(report);
            }
        }
    }
    Ok(TrainOutcome {
        best,
        best_test_w1,
        best_epoch,
        best_iter,
        best_adam,
        last: mlp,
        adam,
        history,
        epochs,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    mlp: &Mlp,
    params: &RBergomiParams,
    noise: &NeuralNoise,
    test_set: &[f64],
    strikes: &[f64],
    epoch: usize,
    iter: usize,
    lr: f64,
) -> Result<EpochReport> {
    let (generated, _) = simulate_neural(mlp, params, noise)?;
    let test_w1 = wasserstein_1(&generated, test_set)?;
    if !test_w1.is_finite() {
        return Err(Error::Diverged { iteration: iter });
    }
    let (max_price_err, price_stderr) = max_price_error(&generated, test_set, params, strikes)?;
    let min_xi = min_on_grid(mlp, params.horizon);
    if !(min_xi >= 0.0) {
        return Err(Error::domain(format!("network produced negative variance {min_xi}")));
    }
    Ok(EpochReport {
        epoch,
        iter,
        lr,
        test_w1,
        max_price_err,
        price_stderr,
        min_xi,
    })
}

/// Writes `iter,epoch,train_w1,test_w1,max_price_err`; `test_w1` is empty
/// except on epoch ends.
pub fn write_history_csv<W: Write>(rows: &[HistoryRow], mut out: W) -> Result<()> {
    writeln!(out, "iter,epoch,train_w1,test_w1,max_price_err")?;
    for r in rows {
        let test = r.test_w1.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.16e},{test},{:.16e}",
            r.iter, r.epoch, r.train_w1, r.max_price_err
        )?;
    }
    Ok(())
}

/// Everything needed to resume or evaluate a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mlp: Mlp,
    pub adam: AdamState,
    pub iteration: usize,
    pub epoch: usize,
    pub test_w1: f64,
}

const CHECKPOINT_MAGIC: &str = "rough-vol-kit checkpoint v1";

/// Text checkpoint: a magic line, `key value...` header lines, then one
/// number per line for the parameters, Adam first moments and Adam second
/// moments, each block introduced by its name. Floats use Rust's shortest
/// round-trip formatting, so reading back is exact.
pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut out: W) -> Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    let widths: Vec<String> = ck.mlp.widths().iter().map(|w| w.to_string()).collect();
    writeln!(out, "widths {}", widths.join(" "))?;
    writeln!(out, "slope {:?}", ck.mlp.slope())?;
    writeln!(out, "iteration {}", ck.iteration)?;
    writeln!(out, "epoch {}", ck.epoch)?;
    writeln!(out, "test_w1 {:?}", ck.test_w1)?;
    let a = &ck.adam;
    writeln!(out, "adam {:?} {:?} {:?} {:?} {}", a.lr, a.beta1, a.beta2, a.eps, a.step)?;
    for (name, values) in [("params", ck.mlp.params()), ("adam_m", &a.m[..]), ("adam_v", &a.v[..])] {
        writeln!(out, "{name} {}", values.len())?;
        for v in values {
            writeln!(out, "{v:?}")?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("checkpoint ends early".into()))?
            .map_err(Error::from)
    };
    if next()?.trim() != CHECKPOINT_MAGIC {
        return Err(Error::Parse("not a rough-vol-kit checkpoint".into()));
    }
    fn field<'a>(line: &'a str, key: &str) -> Result<Vec<&'a str>> {
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(Error::Parse(format!("expected `{key}` line, got `{line}`")));
        }
        Ok(it.collect())
    }
    fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
        s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
    }
    let widths: Vec<usize> = field(&next()?, "widths")?.iter().map(|s| num(s)).collect::<Result<_>>()?;
    let slope: f64 = num(field(&next()?, "slope")?.first().copied().unwrap_or(""))?;
    let iteration: usize = num(field(&next()?, "iteration")?.first().copied().unwrap_or(""))?;
    let epoch: usize = num(field(&next()?, "epoch")?.first().copied().unwrap_or(""))?;
    let test_w1: f64 = num(field(&next()?, "test_w1")?.first().copied().unwrap_or(""))?;
    let adam_line = next()?;
    let a = field(&adam_line, "adam")?;
    if a.len() != 5 {
        return Err(Error::Parse("adam line needs lr beta1 beta2 eps step".into()));
    }
    let mut blocks = Vec::new();
    for name in ["params", "adam_m", "adam_v"] {
        let header = next()?;
        let count: usize = num(field(&header, name)?.first().copied().unwrap_or(""))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(num::<f64>(next()?.trim())?);
        }
        blocks.push(values);
    }
    let adam_v = blocks.pop().unwrap();
    let adam_m = blocks.pop().unwrap();
    let params = blocks.pop().unwrap();
    let mlp = Mlp::from_params(&widths, slope, params)?;
    if adam_m.len() != mlp.n_params() || adam_v.len() != mlp.n_params() {
        return Err(Error::Parse("Adam moments do not match the parameter count".into()));
    }
    let adam = AdamState {
        m: adam_m,
        v: adam_v,
        step: num(a[4])?,
        lr: num(a[0])?,
        beta1: num(a[1])?,
        beta2: num(a[2])?,
        eps: num(a[3])?,
    };
    Ok(Checkpoint {
        mlp,
        adam,
        iteration,
        epoch,
        test_w1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_soe_approach_b_terms;
    use crate::model::{make_curve_constant, simulate_paths, Record};
    use crate::sampler::MsoeDriver;

    fn small_problem() -> (TrainConfig, Driver, Vec<f64>) {
        let params = RBergomiParams::reference(16);
        let soe = build_soe_approach_b_terms(params.hurst, 4, params.tau(), 1.0).unwrap();
        let driver = Driver::Msoe(MsoeDriver::new(&soe, params.hurst, params.tau()).unwrap());
        let curve = make_curve_constant(0.235 * 0.235).unwrap();
        let data = simulate_paths(&params, &curve, &driver, 1000, 77, Record::Terminal)
            .unwrap()
            .terminal;
        let mut config = TrainConfig::new(params);
        config.batch_size = 128;
        config.epochs = 2;
        config.seed = 5;
        (config, driver, data)
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mlp = Mlp::default_network(8);
        let mut adam = AdamState::new(mlp.n_params(), 1e-4);
        adam.m[3] = 0.1 + 0.2;
        adam.step = 7;
        let ck = Checkpoint {
            mlp,
            adam,
            iteration: 12,
            epoch: 2,
            test_w1: 0.123456789,
        };
        let mut buf = Vec::new();
        write_checkpoint(&ck, &mut buf).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), ck);
        assert!(read_checkpoint(&b"garbage\n"[..]).is_err());
    }

    #[test]
    fn training_is_reproducible_and_bound_holds() {
        let (config, driver, data) = small_problem();
        let a = train(&config, Mlp::default_network(1), &driver, &data).unwrap();
        let b = train(&config, Mlp::default_network(1), &driver, &data).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
        assert_eq!(a.history.len(), 2 * (819 / 128));
        for row in &a.history {
            assert!(row.max_price_err <= row.train_w1 + 1e-12);
        }
        for e in &a.epochs {
            assert!(e.max_price_err <= e.test_w1 + 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_network() {
        let (mut config, driver, data) = small_problem();
        config.lr = 0.0;
        let init = Mlp::default_network(1);
        let out = train(&config, init.clone(), &driver, &data).unwrap();
        assert_eq!(out.last, init);
    }

    #[test]
    fn split_validation() {
        let (mut config, _, _) = small_problem();
        config.train_fraction = 1.0;
        assert!(config.split(100).is_err());
        config.train_fraction = 0.5;
        config.batch_size = 51;
        assert!(config.split(100).is_err());
    }
}
