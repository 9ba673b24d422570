//! Reverse-mode record of loss ← terminal prices ← ξ0 on the grid ← network.
//!
//! Nodes are vector operations over a batch; each keeps what its backward
//! pass needs. The simulation node treats the Volterra values and price
//! noise as constants: only ξ0(t_i; θ) depends on the parameters.

use crate::error::{Error, Result};
use crate::metrics::wasserstein_1_grad;
use crate::model::{orthogonal_increments, PathArithmetic, RBergomiParams};
use crate::sampler::Driver;
use crate::stats::map_chunks;

use super::mlp::{leaky, sigmoid, softplus, Mlp};

/// Pre-drawn, parameter-free noise of a generated batch.
#[derive(Debug, Clone)]
pub struct NeuralNoise {
    n: usize,
    paths: usize,
    /// Stochastic exponentials E_0..E_{n-1}, row per path.
    expo: Vec<f64>,
    /// ΔZ_1..ΔZ_n, row per path.
    dz: Vec<f64>,
}

impl NeuralNoise {
    /// Noise of paths `first_path..first_path + count` under `seed`, drawn
    /// exactly as `model::simulate_paths` draws it.
    pub fn generate(params: &RBergomiParams, driver: &Driver, count: usize, seed: u64, first_path: u64) -> Result<Self> {
        params.validate()?;
        let n = params.n_steps;
        let tau = params.tau();
        driver.check_grid(n, tau)?;
        let arith = PathArithmetic::new(params);
        let chunks = map_chunks(count, |start, end| {
            let mut dw = vec![0.0; n];
            let mut ihat = vec![0.0; n];
            let mut perp = vec![0.0; n];
            let mut e = vec![0.0; n + 1];
            let mut expo = Vec::with_capacity((end - start) * n);
            let mut dz = Vec::with_capacity((end - start) * n);
            for p in start..end {
                let path = first_path + p as u64;
                driver.fill(seed, path, &mut dw, &mut ihat);
                orthogonal_increments(seed, path, tau, &mut perp);
                arith.stochastic_exponentials(&ihat, &mut e);
                expo.extend_from_slice(&e[..n]);
                dz.extend(dw.iter().zip(&perp).map(|(w, q)| arith.dz(*w, *q)));
            }
            (expo, dz)
        });
        let mut expo = Vec::with_capacity(count * n);
        let mut dz = Vec::with_capacity(count * n);
        for (e, z) in chunks {
            expo.extend(e);
            dz.extend(z);
        }
        Ok(Self { n, paths: count, expo, dz })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    fn row<'a>(&self, v: &'a [f64], p: usize) -> &'a [f64] {
        &v[p * self.n..(p + 1) * self.n]
    }
}

#[derive(Debug, Clone)]
enum Node {
    Affine { layer: usize, input: Vec<f64> },
    Leaky { pre: Vec<f64> },
    Softplus { pre: Vec<f64> },
    Terminal { xi: Vec<f64>, terminal: Vec<f64> },
    W1 { grad: Vec<f64> },
}

/// Forward record of one neural simulation.
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    mlp: &'a Mlp,
    noise: &'a NeuralNoise,
    arith: PathArithmetic,
    rows: usize,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    /// ξ0 values on t_0..t_{n-1} as recorded.
    pub fn xi(&self) -> &[f64] {
        self.nodes
            .iter()
            .find_map(|n| match n {
                Node::Terminal { xi, .. } => Some(xi.as_slice()),
                _ => None,
            })
            .unwrap_or(&[])
    }

    /// Gradient of a scalar L with respect to all network parameters, given
    /// `seed_grad` = dL/d(output of the last recorded node).
    pub fn backward(&self, seed_grad: &[f64]) -> Vec<f64> {
        let mlp = self.mlp;
        let mut grads = vec![0.0; mlp.n_params()];
        let mut g = seed_grad.to_vec();
        for node in self.nodes.iter().rev() {
            g = match node {
                Node::W1 { grad } => grad.iter().map(|d| g[0] * d).collect(),
                Node::Terminal { xi, terminal } => self.terminal_backward(xi, terminal, &g),
                Node::Softplus { pre } => pre.iter().zip(&g).map(|(x, d)| d * sigmoid(*x)).collect(),
                Node::Leaky { pre } => pre
                    .iter()
                    .zip(&g)
                    .map(|(x, d)| if *x > 0.0 { *d } else { d * mlp.slope() })
                    .collect(),
                Node::Affine { layer, input } => self.affine_backward(*layer, input, &g, &mut grads),
            };
        }
        grads
    }

    fn terminal_backward(&self, xi: &[f64], terminal: &[f64], g: &[f64]) -> Vec<f64> {
        let n = self.noise.n;
        let half_tau = 0.5 * self.arith.tau();
        let parts = map_chunks(terminal.len(), |start, end| {
            let mut acc = vec![0.0; n];
            for p in start..end {
                let w = g[p] * terminal[p];
                if w == 0.0 {
                    continue;
                }
                let expo = self.noise.row(&self.noise.expo, p);
                let dz = self.noise.row(&self.noise.dz, p);
                for i in 0..n {
                    let v = xi[i] * expo[i];
                    let dsqrt = if v > 0.0 { 0.5 * expo[i] * dz[i] / v.sqrt() } else { 0.0 };
                    acc[i] += w * (dsqrt - half_tau * expo[i]);
                }
            }
            acc
        });
        let mut out = vec![0.0; n];
        for part in parts {
            for (o, a) in out.iter_mut().zip(part) {
                *o += a;
            }
        }
        out
    }

    fn affine_backward(&self, layer: usize, input: &[f64], g: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let mlp = self.mlp;
        let (fan_in, fan_out) = mlp.shape(layer);
        let (wr, br) = mlp.layer_range(layer);
        let w = &mlp.params()[wr.clone()];
        let mut g_in = vec![0.0; self.rows * fan_in];
        for r in 0..self.rows {
            let x = &input[r * fan_in..(r + 1) * fan_in];
            let gr = &g[r * fan_out..(r + 1) * fan_out];
            let gi = &mut g_in[r * fan_in..(r + 1) * fan_in];
            for (j, &d) in gr.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[br.start + j] += d;
                let gw = &mut grads[wr.start + j * fan_in..wr.start + (j + 1) * fan_in];
                for (a, v) in gw.iter_mut().zip(x) {
                    *a += d * v;
                }
                for (a, wv) in gi.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                    *a += d * wv;
                }
            }
        }
        g_in
    }
}

/// Terminal prices `S_T(θ)` under `noise`, with the tape that produced them.
///
/// The price arithmetic is `model::PathArithmetic::terminal`, the same code
/// `simulate_paths` runs, so a network frozen to a curve reproduces the
/// model's prices bit for bit on the same noise.
pub fn simulate_neural<'a>(mlp: &'a Mlp, params: &RBergomiParams, noise: &'a NeuralNoise) -> Result<(Vec<f64>, Tape<'a>)> {
    params.validate()?;
    let n = params.n_steps;
    if noise.n != n {
        return Err(Error::domain(format!(
            "noise has {} steps, parameters have {n}",
            noise.n
        )));
    }
    let arith = PathArithmetic::new(params);
    let tau = params.tau();
    let mut nodes = Vec::new();
    let mut x: Vec<f64> = (0..n).map(|i| i as f64 * tau).collect();
    for l in 0..mlp.layers() {
        let (fan_in, fan_out) = mlp.shape(l);
        let mut y = vec![0.0; n * fan_out];
        for r in 0..n {
            mlp.affine(l, &x[r * fan_in..(r + 1) * fan_in], &mut y[r * fan_out..(r + 1) * fan_out]);
        }
        nodes.push(Node::Affine { layer: l, input: x });
        if l + 1 < mlp.layers() {
            let out = y.iter().map(|v| leaky(*v, mlp.slope())).collect();
            nodes.push(Node::Leaky { pre: y });
            x = out;
        } else {
            x = y;
        }
    }
    let xi: Vec<f64> = x.iter().map(|v| softplus(*v)).collect();
    nodes.push(Node::Softplus { pre: x });

    let parts = map_chunks(noise.paths, |start, end| {
        (start..end)
            .map(|p| arith.terminal(params.s0, &xi, noise.row(&noise.expo, p), noise.row(&noise.dz, p)))
            .collect::<Vec<f64>>()
    });
    let terminal: Vec<f64> = parts.into_iter().flatten().collect();
    if let Some(p) = terminal.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        let (expo, dz) = (noise.row(&noise.expo, p), noise.row(&noise.dz, p));
        let mut s = params.s0;
        let mut step = n;
        for i in 0..n {
            s *= arith.log_increment(xi[i] * expo[i], dz[i]).exp();
            if !(s.is_finite() && s > 0.0) {
                step = i + 1;
                break;
            }
        }
        return Err(Error::Overflow {
            step,
            what: "neural price update left (0, inf)",
        });
    }
    nodes.push(Node::Terminal {
        xi,
        terminal: terminal.clone(),
    });
    Ok((
        terminal,
        Tape {
            mlp,
            noise,
            arith,
            rows: n,
            nodes,
        },
    ))
}

/// W1 between generated and data samples, and its parameter gradient.
pub fn w1_loss_and_grad(generated: &[f64], tape: &mut Tape<'_>, data: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = wasserstein_1_grad(generated, data)?;
    tape.nodes.push(Node::W1 { grad });
    let grads = tape.backward(&[1.0]);
    tape.nodes.pop();
    Ok((loss, grads))
}

#[cfg(test)]
fn mean_terminal(terminal: &[f64]) -> f64 {
    crate::stats::sum(terminal) / terminal.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_soe_approach_b_terms;
    use crate::model::{simulate_paths, ForwardVarianceCurve, Record};
    use crate::neural::mlp::{LEAKY_SLOPE, WIDTHS};
    use crate::sampler::MsoeDriver;

    fn setup(n: usize) -> (RBergomiParams, Driver) {
        let params = RBergomiParams::reference(n);
        let soe = build_soe_approach_b_terms(params.hurst, 4, params.tau(), params.horizon).unwrap();
        let driver = Driver::Msoe(MsoeDriver::new(&soe, params.hurst, params.tau()).unwrap());
        (params, driver)
    }

    #[test]
    fn neural_prices_equal_model_prices() {
        let (params, driver) = setup(16);
        let mlp = Mlp::default_network(3);
        let noise = NeuralNoise::generate(&params, &driver, 700, 9, 0).unwrap();
        let (st, _) = simulate_neural(&mlp, &params, &noise).unwrap();
        let curve = ForwardVarianceCurve::Neural(Box::new(mlp.clone()));
        let batch = simulate_paths(&params, &curve, &driver, 700, 9, Record::Terminal).unwrap();
        assert_eq!(st, batch.terminal);
    }

    #[test]
    fn mean_price_gradient_matches_finite_differences() {
        let (params, driver) = setup(32);
        let mlp = Mlp::default_network(1);
        let noise = NeuralNoise::generate(&params, &driver, 64, 4, 0).unwrap();
        let (st, tape) = simulate_neural(&mlp, &params, &noise).unwrap();
        let seed: Vec<f64> = vec![1.0 / st.len() as f64; st.len()];
        let grads = tape.backward(&seed);
        let h = 1e-4;
        for &k in &[0usize, 57, 150, 4000, 15000, 20400, 20500] {
            let mut plus = mlp.clone();
            plus.params_mut()[k] += h;
            let mut minus = mlp.clone();
            minus.params_mut()[k] -= h;
            let fp = mean_terminal(&simulate_neural(&plus, &params, &noise).unwrap().0);
            let fm = mean_terminal(&simulate_neural(&minus, &params, &noise).unwrap().0);
            let fd = (fp - fm) / (2.0 * h);
            let denom = fd.abs().max(grads[k].abs()).max(1e-12);
            assert!((fd - grads[k]).abs() / denom <= 1e-4, "param {k}: tape {} fd {fd}", grads[k]);
        }
    }

    #[test]
    fn matched_samples_give_zero_loss_and_gradient() {
        let (params, driver) = setup(8);
        let mlp = Mlp::zeros(&WIDTHS, LEAKY_SLOPE).unwrap();
        let noise = NeuralNoise::generate(&params, &driver, 16, 1, 0).unwrap();
        let (st, mut tape) = simulate_neural(&mlp, &params, &noise).unwrap();
        let (loss, grads) = w1_loss_and_grad(&st, &mut tape, &st).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| *g == 0.0));
    }
}
