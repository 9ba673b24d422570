//! Gaussian drivers of the Volterra process
//! `I_t = √(2H) ∫_0^t (t-s)^{H-1/2} dW_s` on a uniform grid.
//!
//! Per step the mSOE scheme needs the vector
//!
//! ```text
//! Θ_i = (ΔW_i, J^1_i, ..., J^N_i, I_N(t_i))
//! J^j_i    = ∫_{t_{i-1}}^{t_i} e^{-λ_j (t_i - s)} dW_s
//! I_N(t_i) = √(2H) ∫_{t_{i-1}}^{t_i} (t_i - s)^{H-1/2} dW_s
//! ```
//!
//! whose covariance does not depend on i. The exact oracle instead samples
//! all increments and Volterra values jointly from their 2n-dimensional law.
//! In both cases ΔW is pivoted first in the factorization, so it is exactly
//! `√τ z` with z read from the Brownian channel: the two schemes see the
//! same Brownian increments for the same seed and path index.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::SoeApprox;
use crate::linalg::{PivotedCholesky, SymMatrix, DEFAULT_RANK_TOL};
use crate::quadrature::{gauss_jacobi, gauss_legendre, map_rule, GaussRule};
use crate::rng::{fill_normal, normal, path_rng, Channel};
use crate::special::{lower_gamma_scaled, one_minus_exp_over};

/// Largest grid accepted by the exact joint sampler.
pub const EXACT_MAX_STEPS: usize = 4096;

fn check_step(hurst: f64, tau: f64) -> Result<()> {
    crate::kernel::check_hurst(hurst)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("step size must be positive, got {tau}")));
    }
    Ok(())
}

/// Covariance of Θ and its factor. Index 0 is ΔW, 1..=N the exponential
/// integrals, N+1 the local term.
#[derive(Debug, Clone)]
pub struct ThetaCovariance {
    sigma: SymMatrix,
    chol: PivotedCholesky,
    rates: Vec<f64>,
    tau: f64,
    hurst: f64,
}

impl ThetaCovariance {
    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn chol(&self) -> &PivotedCholesky {
        &self.chol
    }

    pub fn n_terms(&self) -> usize {
        self.rates.len()
    }

    pub fn dim(&self) -> usize {
        self.rates.len() + 2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Θ = P L z for a standard normal z of length `chol().rank()`.
    pub fn transform(&self, z: &[f64], theta: &mut [f64]) {
        self.chol.apply(z, theta);
    }
}

pub fn build_covariance(soe: &SoeApprox, hurst: f64, tau: f64) -> Result<ThetaCovariance> {
    if (soe.hurst() - hurst).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "SOE was built for H={} but the driver uses H={hurst}",
            soe.hurst()
        )));
    }
    let rates: Vec<f64> = soe.rates().collect();
    covariance_from_rates(&rates, hurst, tau)
}

/// Σ for arbitrary rates; an empty slice gives the 2×2 (ΔW, I_N) block.
pub fn covariance_from_rates(rates: &[f64], hurst: f64, tau: f64) -> Result<ThetaCovariance> {
    check_step(hurst, tau)?;
    if let Some(l) = rates.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::domain(format!("rates must be finite and nonnegative, got {l}")));
    }
    let n = rates.len();
    let last = n + 1;
    let hp = hurst + 0.5;
    let c = (2.0 * hurst).sqrt();
    let mut sigma = SymMatrix::zeros(n + 2);
    sigma.set(0, 0, tau);
    for (k, &lk) in rates.iter().enumerate() {
        sigma.set(0, k + 1, tau * one_minus_exp_over(lk * tau));
        for (l, &ll) in rates.iter().enumerate().take(k + 1) {
            sigma.set(k + 1, l + 1, tau * one_minus_exp_over((lk + ll) * tau));
        }
        sigma.set(k + 1, last, c * tau.powf(hp) * lower_gamma_scaled(hp, lk * tau));
    }
    sigma.set(0, last, c * tau.powf(hp) / hp);
    sigma.set(last, last, tau.powf(2.0 * hurst));
    let chol = PivotedCholesky::new(&sigma, 1, DEFAULT_RANK_TOL)?;
    Ok(ThetaCovariance {
        sigma,
        chol,
        rates: rates.to_vec(),
        tau,
        hurst,
    })
}

/// Draws `count` driver vectors; vector p uses the streams of path p.
pub fn sample_theta(cov: &ThetaCovariance, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let rank = cov.chol.rank();
    (0..count)
        .into_par_iter()
        .map(|p| {
            let mut z = vec![0.0; rank];
            z[0] = normal(&mut path_rng(seed, p as u64, Channel::Brownian));
            fill_normal(&mut path_rng(seed, p as u64, Channel::Residual), &mut z[1..]);
            let mut theta = vec![0.0; cov.dim()];
            cov.transform(&z, &mut theta);
            theta
        })
        .collect()
}

/// Brownian increments and Volterra values of one path on `t_1..t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraPath {
    /// Î(t_i) for i = 1..=n (index 0 is t_1; Î(t_0) = 0 is implicit).
    pub i_values: Vec<f64>,
    /// ΔW over (t_{i-1}, t_i].
    pub dw: Vec<f64>,
    pub tau: f64,
}

impl VolterraPath {
    pub fn len(&self) -> usize {
        self.dw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.len() as f64
    }
}

/// mSOE recursion for Î, driven by Θ.
#[derive(Debug, Clone)]
pub struct MsoeDriver {
    cov: ThetaCovariance,
    decay: Vec<f64>,
    coef: Vec<f64>,
}

impl MsoeDriver {
    pub fn new(soe: &SoeApprox, hurst: f64, tau: f64) -> Result<Self> {
        let cov = build_covariance(soe, hurst, tau)?;
        Ok(Self::from_parts(cov, soe.weights().collect()))
    }

    fn from_parts(cov: ThetaCovariance, weights: Vec<f64>) -> Self {
        let c = (2.0 * cov.hurst).sqrt();
        let decay = cov.rates.iter().map(|l| (-l * cov.tau).exp()).collect();
        let coef = weights.iter().map(|w| c * w).collect();
        Self { cov, decay, coef }
    }

    pub fn covariance(&self) -> &ThetaCovariance {
        &self.cov
    }

    pub fn tau(&self) -> f64 {
        self.cov.tau
    }

    /// Fills `dw` and `ihat` (equal lengths n) for path `path` of `seed`.
    ///
    /// With `Ī^j(t_i) = ∫_0^{t_{i-1}} e^{-λ_j (t_i - s)} dW_s` the history
    /// obeys `Ī^j(t_i) = e^{-λ_j τ}(Ī^j(t_{i-1}) + J^j_{i-1})`, `Ī^j(t_1) = 0`,
    /// and `Î(t_i) = √(2H) Σ_j ω_j Ī^j(t_i) + I_N(t_i)`.
    pub fn fill(&self, seed: u64, path: u64, dw: &mut [f64], ihat: &mut [f64]) {
        let n_terms = self.coef.len();
        let rank = self.cov.chol.rank();
        let mut brownian = path_rng(seed, path, Channel::Brownian);
        let mut residual = path_rng(seed, path, Channel::Residual);
        let mut state = vec![0.0; n_terms];
        let mut z = vec![0.0; rank];
        let mut theta = vec![0.0; n_terms + 2];
        for (d, out) in dw.iter_mut().zip(ihat.iter_mut()) {
            for (s, q) in state.iter_mut().zip(&self.decay) {
                *s *= q;
            }
            z[0] = normal(&mut brownian);
            fill_normal(&mut residual, &mut z[1..]);
            self.cov.transform(&z, &mut theta);
            *d = theta[0];
            let mut hist = 0.0;
            for (s, c) in state.iter().zip(&self.coef) {
                hist += c * s;
            }
            *out = hist + theta[n_terms + 1];
            for (s, j) in state.iter_mut().zip(&theta[1..=n_terms]) {
                *s += j;
            }
        }
    }
}

pub fn volterra_path_msoe(driver: &MsoeDriver, n: usize, seed: u64, path: u64) -> VolterraPath {
    let mut dw = vec![0.0; n];
    let mut i_values = vec![0.0; n];
    driver.fill(seed, path, &mut dw, &mut i_values);
    VolterraPath {
        i_values,
        dw,
        tau: driver.tau(),
    }
}

pub fn volterra_paths_msoe(driver: &MsoeDriver, n: usize, seed: u64, count: usize) -> Vec<VolterraPath> {
    (0..count as u64)
        .into_par_iter()
        .map(|p| volterra_path_msoe(driver, n, seed, p))
        .collect()
}

/// Evaluates `E[I_{t1} I_{t2}] = 2H ∫_0^{t1} v^{H-1/2} (v + t2 - t1)^{H-1/2} dv`.
///
/// The part of the range within `t2 - t1` of the singularity uses
/// Gauss–Jacobi; the rest uses Gauss–Legendre on doubling panels.
#[derive(Debug, Clone)]
pub struct VolterraCovariance {
    hurst: f64,
    jacobi: GaussRule,
    legendre: GaussRule,
}

impl VolterraCovariance {
    pub fn new(hurst: f64) -> Result<Self> {
        crate::kernel::check_hurst(hurst)?;
        Ok(Self {
            hurst,
            jacobi: gauss_jacobi(16, 0.0, hurst - 0.5)?,
            legendre: gauss_legendre(16)?,
        })
    }

    pub fn cov(&self, t1: f64, t2: f64) -> Result<f64> {
        if !(t1 > 0.0 && t2 >= t1) {
            return Err(Error::domain(format!("need 0 < t1 <= t2, got t1={t1}, t2={t2}")));
        }
        let h = self.hurst;
        let a = h - 0.5;
        let d = t2 - t1;
        if d == 0.0 {
            return Ok(t1.powf(2.0 * h));
        }
        let m = d.min(t1);
        let near = map_rule(&self.jacobi, 0.0, m)?;
        let mut total = near.integrate(|v| (v + d).powf(a));
        let mut lo = m;
        while lo < t1 {
            let hi = (2.0 * lo).min(t1);
            let rule = map_rule(&self.legendre, lo, hi)?;
            total += rule.integrate(|v| (v * (v + d)).powf(a));
            lo = hi;
        }
        Ok(2.0 * h * total)
    }
}

/// `t1^{2H} C(t2/t1)`, the covariance of the Volterra process.
pub fn volterra_cov_exact(t1: f64, t2: f64, hurst: f64) -> Result<f64> {
    VolterraCovariance::new(hurst)?.cov(t1, t2)
}

/// `Cov(I_{t_i}, ΔW_j)` on a grid of step `tau` (1-based i, j).
pub fn volterra_increment_cov(hurst: f64, tau: f64, i: usize, j: usize) -> f64 {
    if j > i {
        return 0.0;
    }
    let hp = hurst + 0.5;
    let (ti, a, b) = (i as f64 * tau, (j - 1) as f64 * tau, j as f64 * tau);
    (2.0 * hurst).sqrt() / hp * ((ti - a).powf(hp) - (ti - b).powf(hp))
}

/// Factor of the joint law of `(ΔW_1..ΔW_n, I_{t_1}..I_{t_n})`.
#[derive(Debug, Clone)]
pub struct ExactDriver {
    n: usize,
    tau: f64,
    hurst: f64,
    chol: PivotedCholesky,
}

impl ExactDriver {
    pub fn new(hurst: f64, n: usize, tau: f64) -> Result<Self> {
        check_step(hurst, tau)?;
        if n == 0 || n > EXACT_MAX_STEPS {
            return Err(Error::domain(format!(
                "exact sampler supports 1..={EXACT_MAX_STEPS} steps, got {n}"
            )));
        }
        let vc = VolterraCovariance::new(hurst)?;
        let mut sigma = SymMatrix::zeros(2 * n);
        for i in 0..n {
            sigma.set(i, i, tau);
        }
        for i in 1..=n {
            for j in 1..=i {
                sigma.set(n + i - 1, j - 1, volterra_increment_cov(hurst, tau, i, j));
                sigma.set(n + i - 1, n + j - 1, vc.cov(j as f64 * tau, i as f64 * tau)?);
            }
        }
        let chol = PivotedCholesky::new(&sigma, n, DEFAULT_RANK_TOL)?;
        Ok(Self { n, tau, hurst, chol })
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn fill(&self, seed: u64, path: u64, dw: &mut [f64], ihat: &mut [f64]) {
        let n = self.n;
        let mut z = vec![0.0; self.chol.rank()];
        fill_normal(&mut path_rng(seed, path, Channel::Brownian), &mut z[..n]);
        fill_normal(&mut path_rng(seed, path, Channel::Residual), &mut z[n..]);
        let mut out = vec![0.0; 2 * n];
        self.chol.apply(&z, &mut out);
        dw.copy_from_slice(&out[..n]);
        ihat.copy_from_slice(&out[n..]);
    }
}

pub fn volterra_path_exact(hurst: f64, n: usize, tau: f64, seed: u64, count: usize) -> Result<Vec<VolterraPath>> {
    let driver = ExactDriver::new(hurst, n, tau)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|p| {
            let mut dw = vec![0.0; n];
            let mut i_values = vec![0.0; n];
            driver.fill(seed, p, &mut dw, &mut i_values);
            VolterraPath { i_values, dw, tau }
        })
        .collect())
}

/// Either Volterra scheme behind one interface.
#[derive(Debug, Clone)]
pub enum Driver {
    Msoe(MsoeDriver),
    Exact(ExactDriver),
}

impl Driver {
    pub fn tau(&self) -> f64 {
        match self {
            Driver::Msoe(d) => d.tau(),
            Driver::Exact(d) => d.tau(),
        }
    }

    /// Checks that the driver can produce `n` steps of size `tau`.
    pub fn check_grid(&self, n: usize, tau: f64) -> Result<()> {
        if (self.tau() - tau).abs() > 1e-15 * tau {
            return Err(Error::domain(format!(
                "driver step {} does not match grid step {tau}",
                self.tau()
            )));
        }
        if let Driver::Exact(d) = self {
            if d.steps() != n {
                return Err(Error::domain(format!(
                    "exact driver was factored for {} steps, grid has {n}",
                    d.steps()
                )));
            }
        }
        Ok(())
    }

    pub fn fill(&self, seed: u64, path: u64, dw: &mut [f64], ihat: &mut [f64]) {
        match self {
            Driver::Msoe(d) => d.fill(seed, path, dw, ihat),
            Driver::Exact(d) => d.fill(seed, path, dw, ihat),
        }
    }
}

/// Writes `path_id,step,t,I,dW`, one row per path and step.
pub fn write_paths_csv<W: Write>(paths: &[VolterraPath], mut out: W) -> Result<()> {
    writeln!(out, "path_id,step,t,I,dW")?;
    for (p, path) in paths.iter().enumerate() {
        for (i, (iv, dw)) in path.i_values.iter().zip(&path.dw).enumerate() {
            let t = (i + 1) as f64 * path.tau;
            writeln!(out, "{p},{},{t:.16e},{iv:.16e},{dw:.16e}", i + 1)?;
        }
    }
    Ok(())
}
