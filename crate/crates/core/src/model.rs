//! The rough Bergomi model on a uniform grid.
//!
//! ```text
//! V_t = ξ0(t) exp(η I_t - η²/2 t^{2H})
//! dS_t = r S_t dt + S_t √V_t dZ_t,   Z = ρ W + √(1-ρ²) W^⊥
//! ```
//!
//! Prices follow the log-Euler step
//! `S_{i+1} = S_i exp(√V_i ΔZ_{i+1} - τ V_i / 2 + r τ)` with `V_0 = ξ0(0)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::kernel::{check_hurst, SoeApprox};
use crate::linalg::{PivotedCholesky, SymMatrix, DEFAULT_RANK_TOL};
use crate::neural::Mlp;
use crate::rng::{aux_rng, fill_normal, normal, path_rng, Channel};
use crate::sampler::{Driver, ExactDriver, MsoeDriver};
use crate::stats::map_chunks;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RBergomiParams {
    pub s0: f64,
    pub eta: f64,
    pub hurst: f64,
    pub rho: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub rate: f64,
}

impl RBergomiParams {
    /// S0 = 1, η = 1.9, H = 0.07, ρ = -0.9, T = 1, r = 0.
    pub fn reference(n_steps: usize) -> Self {
        Self {
            s0: 1.0,
            eta: 1.9,
            hurst: 0.07,
            rho: -0.9,
            horizon: 1.0,
            n_steps,
            rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::domain(format!("s0 must be positive, got {}", self.s0)));
        }
        if !(self.rho > -1.0 && self.rho < 0.0) {
            return Err(Error::domain(format!("rho must lie in (-1, 0), got {}", self.rho)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain(format!("T must be positive, got {}", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(Error::domain("need at least one time step"));
        }
        if !(self.eta.is_finite() && self.rate.is_finite()) {
            return Err(Error::domain("eta and r must be finite"));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// t_i = i τ for i = 0..=n.
    pub fn grid(&self) -> Vec<f64> {
        let tau = self.tau();
        (0..=self.n_steps).map(|i| i as f64 * tau).collect()
    }
}

/// The initial forward variance curve ξ0.
#[derive(Debug, Clone)]
pub enum ForwardVarianceCurve {
    Constant(f64),
    /// Values at `t_i = i·tau`, i = 0..values.len().
    Sampled { tau: f64, values: Vec<f64> },
    Neural(Box<Mlp>),
}

impl ForwardVarianceCurve {
    /// ξ0(t_i) for i = 0..=n on a grid of step `tau`.
    pub fn grid_values(&self, n: usize, tau: f64) -> Result<Vec<f64>> {
        let values = match self {
            ForwardVarianceCurve::Constant(level) => vec![*level; n + 1],
            ForwardVarianceCurve::Sampled { tau: ct, values } => {
                if (ct - tau).abs() > 1e-12 * tau {
                    return Err(Error::domain(format!(
                        "curve sampled with step {ct}, simulation uses {tau}"
                    )));
                }
                if values.len() < n + 1 {
                    return Err(Error::domain(format!(
                        "curve has {} grid values, simulation needs {}",
                        values.len(),
                        n + 1
                    )));
                }
                values[..=n].to_vec()
            }
            ForwardVarianceCurve::Neural(mlp) => {
                (0..=n).map(|i| mlp.forward(i as f64 * tau)).collect()
            }
        };
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::domain(format!("forward variance {v} at grid point {i}")));
        }
        Ok(values)
    }
}

pub fn make_curve_constant(level: f64) -> Result<ForwardVarianceCurve> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::domain(format!("curve level must be nonnegative, got {level}")));
    }
    Ok(ForwardVarianceCurve::Constant(level))
}

const CURVE_BM_SLOT: u64 = 0;
const CURVE_FBM_SLOT: u64 = 1;

/// `scale·|W_t|` for one Brownian path, independent of the model noise.
pub fn make_curve_abs_bm(scale: f64, n: usize, tau: f64, seed: u64) -> Result<ForwardVarianceCurve> {
    if !(scale >= 0.0 && tau > 0.0) {
        return Err(Error::domain("abs-BM curve needs scale >= 0 and tau > 0"));
    }
    let mut rng = aux_rng(seed, CURVE_BM_SLOT);
    let sd = tau.sqrt();
    let mut w = 0.0;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    for _ in 0..n {
        w += sd * normal(&mut rng);
        values.push(scale * w.abs());
    }
    Ok(ForwardVarianceCurve::Sampled { tau, values })
}

/// `scale·|W^H_t|` for one fractional Brownian path, sampled exactly from
/// `E[W^H_t W^H_s] = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn make_curve_abs_fbm(scale: f64, hurst: f64, n: usize, tau: f64, seed: u64) -> Result<ForwardVarianceCurve> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::domain(format!("fBM Hurst index must lie in (0, 1), got {hurst}")));
    }
    if !(scale >= 0.0 && tau > 0.0) || n == 0 {
        return Err(Error::domain("abs-fBM curve needs scale >= 0, tau > 0, n >= 1"));
    }
    let path = sample_fbm(hurst, n, tau, &mut aux_rng(seed, CURVE_FBM_SLOT))?;
    let values = std::iter::once(0.0).chain(path.iter().map(|w| scale * w.abs())).collect();
    Ok(ForwardVarianceCurve::Sampled { tau, values })
}

/// fBM at t_1..t_n by Cholesky factorization of its covariance.
pub fn sample_fbm(hurst: f64, n: usize, tau: f64, rng: &mut crate::rng::PathRng) -> Result<Vec<f64>> {
    let h2 = 2.0 * hurst;
    let mut cov = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let (t, s) = ((i + 1) as f64 * tau, (j + 1) as f64 * tau);
            cov.set(i, j, 0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2)));
        }
    }
    let chol = PivotedCholesky::new(&cov, 0, DEFAULT_RANK_TOL)?;
    let mut z = vec![0.0; chol.rank()];
    fill_normal(rng, &mut z);
    let mut out = vec![0.0; n];
    chol.apply(&z, &mut out);
    Ok(out)
}

/// How the Volterra process is generated.
#[derive(Debug, Clone)]
pub enum Scheme {
    Msoe(SoeApprox),
    Exact,
}

impl Scheme {
    pub fn driver(&self, params: &RBergomiParams) -> Result<Driver> {
        params.validate()?;
        Ok(match self {
            Scheme::Msoe(soe) => Driver::Msoe(MsoeDriver::new(soe, params.hurst, params.tau())?),
            Scheme::Exact => Driver::Exact(ExactDriver::new(params.hurst, params.n_steps, params.tau())?),
        })
    }
}

/// Per-step arithmetic shared by every simulator of S, including the
/// differentiable one.
#[derive(Debug, Clone)]
pub struct PathArithmetic {
    rho: f64,
    rho_bar: f64,
    tau: f64,
    drift: f64,
    eta: f64,
    /// η²/2 t_i^{2H}, i = 0..=n.
    compensator: Vec<f64>,
}

impl PathArithmetic {
    pub fn new(params: &RBergomiParams) -> Self {
        let tau = params.tau();
        let half = 0.5 * params.eta * params.eta;
        let compensator = params
            .grid()
            .iter()
            .map(|t| half * t.powf(2.0 * params.hurst))
            .collect();
        Self {
            rho: params.rho,
            rho_bar: (1.0 - params.rho * params.rho).sqrt(),
            tau,
            drift: params.rate * tau,
            eta: params.eta,
            compensator,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    /// `E_0 = 1`, `E_i = exp(η Î(t_i) - η²/2 t_i^{2H})` for i = 1..=n.
    pub fn stochastic_exponentials(&self, ihat: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (i, (e, x)) in out[1..].iter_mut().zip(ihat).enumerate() {
            *e = (self.eta * x - self.compensator[i + 1]).exp();
        }
    }

    /// ΔZ = ρ ΔW + √(1-ρ²) ΔW^⊥.
    #[inline]
    pub fn dz(&self, dw: f64, dw_perp: f64) -> f64 {
        self.rho * dw + self.rho_bar * dw_perp
    }

    /// Log-price increment for variance `v` over one step.
    #[inline]
    pub fn log_increment(&self, v: f64, dz: f64) -> f64 {
        v.sqrt() * dz - 0.5 * self.tau * v + self.drift
    }

    /// S_T from s0 given ξ0 on the grid, stochastic exponentials and ΔZ.
    #[inline]
    pub fn terminal(&self, s0: f64, xi: &[f64], expo: &[f64], dz: &[f64]) -> f64 {
        let mut s = s0;
        for ((x, e), z) in xi.iter().zip(expo).zip(dz) {
            s *= self.log_increment(x * e, *z).exp();
        }
        s
    }
}

/// ΔW^⊥ for one path: `√τ z` from the orthogonal channel.
pub fn orthogonal_increments(seed: u64, path: u64, tau: f64, out: &mut [f64]) {
    let mut rng = path_rng(seed, path, Channel::Orthogonal);
    let sd = tau.sqrt();
    for x in out {
        *x = sd * normal(&mut rng);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    Terminal,
    Full,
}

/// Simulated paths. Full records are row-major `M × (n+1)` including t_0.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub terminal: Vec<f64>,
    pub s: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub params: RBergomiParams,
    pub seed: u64,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    /// Writes `path_id,step,t,S,V` for fully recorded batches.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let (Some(s), Some(v)) = (&self.s, &self.v) else {
            return Err(Error::domain("batch was simulated without full path records"));
        };
        let cols = self.params.n_steps + 1;
        let tau = self.params.tau();
        writeln!(out, "path_id,step,t,S,V")?;
        for p in 0..self.len() {
            for i in 0..cols {
                let k = p * cols + i;
                writeln!(out, "{p},{i},{:.16e},{:.16e},{:.16e}", i as f64 * tau, s[k], v[k])?;
            }
        }
        Ok(())
    }
}

struct PathOut {
    terminal: f64,
    s: Vec<f64>,
    v: Vec<f64>,
}

/// Simulates `m` paths of (S, V). Path p draws only from the streams of
/// `(seed, p)`, so the result does not depend on the number of threads.
pub fn simulate_paths(
    params: &RBergomiParams,
    curve: &ForwardVarianceCurve,
    driver: &Driver,
    m: usize,
    seed: u64,
    record: Record,
) -> Result<PathBatch> {
    params.validate()?;
    let n = params.n_steps;
    let tau = params.tau();
    driver.check_grid(n, tau)?;
    let xi = curve.grid_values(n, tau)?;
    let arith = PathArithmetic::new(params);
    let full = record == Record::Full;

    let chunks = map_chunks(m, |start, end| -> Result<Vec<PathOut>> {
        let mut dw = vec![0.0; n];
        let mut ihat = vec![0.0; n];
        let mut perp = vec![0.0; n];
        let mut expo = vec![0.0; n + 1];
        let mut out = Vec::with_capacity(end - start);
        for p in start..end {
            driver.fill(seed, p as u64, &mut dw, &mut ihat);
            orthogonal_increments(seed, p as u64, tau, &mut perp);
            arith.stochastic_exponentials(&ihat, &mut expo);
            let mut s = params.s0;
            let (mut s_rec, mut v_rec) = if full {
                (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1))
            } else {
                (Vec::new(), Vec::new())
            };
            for i in 0..n {
                let v = xi[i] * expo[i];
                if full {
                    s_rec.push(s);
                    v_rec.push(v);
                }
                s *= arith.log_increment(v, arith.dz(dw[i], perp[i])).exp();
                if !(s.is_finite() && s > 0.0 && v.is_finite()) {
                    return Err(Error::Overflow {
                        step: i + 1,
                        what: "price update left (0, inf)",
                    });
                }
            }
            if full {
                s_rec.push(s);
                v_rec.push(xi[n] * expo[n]);
            }
            out.push(PathOut {
                terminal: s,
                s: s_rec,
                v: v_rec,
            });
        }
        Ok(out)
    });

    let mut terminal = Vec::with_capacity(m);
    let mut s_all = Vec::new();
    let mut v_all = Vec::new();
    for chunk in chunks {
        for path in chunk? {
            terminal.push(path.terminal);
            s_all.extend(path.s);
            v_all.extend(path.v);
        }
    }
    Ok(PathBatch {
        terminal,
        s: full.then_some(s_all),
        v: full.then_some(v_all),
        params: *params,
        seed,
    })
}
