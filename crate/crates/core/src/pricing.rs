//! Monte Carlo European prices, Black–Scholes inversion and the Gaussian
//! moment diagnostics of the Volterra schemes.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::RBergomiParams;
use crate::sampler::{Driver, VolterraPath};
use crate::special::{norm_cdf, norm_pdf};
use crate::stats::{map_chunks, mean_stderr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    Call(f64),
    Put(f64),
}

impl Payoff {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Payoff::Call(k) => (s - k).max(0.0),
            Payoff::Put(k) => (k - s).max(0.0),
        }
    }
}

/// Discounted sample mean of the payoff and its standard error.
pub fn price_european(terminal: &[f64], payoff: Payoff, rate: f64, horizon: f64) -> Result<(f64, f64)> {
    if terminal.len() < 2 {
        return Err(Error::domain(format!(
            "pricing needs at least 2 samples, got {}",
            terminal.len()
        )));
    }
    let disc = (-rate * horizon).exp();
    let pay: Vec<f64> = terminal.iter().map(|s| payoff.eval(*s)).collect();
    let (m, se) = mean_stderr(&pay);
    Ok((disc * m, disc * se))
}

fn d1_sd(s0: f64, strike: f64, horizon: f64, sigma: f64, rate: f64) -> (f64, f64) {
    let sd = sigma * horizon.sqrt();
    (((s0 / strike).ln() + rate * horizon) / sd + 0.5 * sd, sd)
}

/// Black–Scholes call price.
pub fn bs_price(s0: f64, strike: f64, horizon: f64, sigma: f64, rate: f64) -> f64 {
    let df = (-rate * horizon).exp();
    if strike <= 0.0 {
        return s0 - strike * df;
    }
    if !(sigma * horizon.sqrt() > 0.0) {
        return (s0 - strike * df).max(0.0);
    }
    let (d1, sd) = d1_sd(s0, strike, horizon, sigma, rate);
    s0 * norm_cdf(d1) - strike * df * norm_cdf(d1 - sd)
}

/// Black–Scholes put price, evaluated directly so deep out-of-the-money
/// values keep full relative precision.
pub fn bs_put_price(s0: f64, strike: f64, horizon: f64, sigma: f64, rate: f64) -> f64 {
    let df = (-rate * horizon).exp();
    if strike <= 0.0 {
        return 0.0;
    }
    if !(sigma * horizon.sqrt() > 0.0) {
        return (strike * df - s0).max(0.0);
    }
    let (d1, sd) = d1_sd(s0, strike, horizon, sigma, rate);
    strike * df * norm_cdf(sd - d1) - s0 * norm_cdf(-d1)
}

/// ∂C/∂σ, equal to ∂P/∂σ.
pub fn bs_vega(s0: f64, strike: f64, horizon: f64, sigma: f64, rate: f64) -> f64 {
    if !(sigma * horizon.sqrt() > 0.0) || strike <= 0.0 {
        return 0.0;
    }
    let (d1, _) = d1_sd(s0, strike, horizon, sigma, rate);
    s0 * norm_pdf(d1) * horizon.sqrt()
}

const IV_MAX_ITER: usize = 100;
const IV_TOL: f64 = 1e-12;

/// σ with `bs_price(s0, K, T, σ, r) = price`, by safeguarded Newton.
///
/// Starts from `sqrt(2|k + rT|/T)` (0.2 at the money); steps that leave the
/// current bracket fall back to bisection.
pub fn implied_vol(price: f64, s0: f64, strike: f64, horizon: f64, rate: f64) -> Result<f64> {
    invert(price, s0, strike, horizon, rate, true)
}

/// Implied vol from a put price.
pub fn implied_vol_put(price: f64, s0: f64, strike: f64, horizon: f64, rate: f64) -> Result<f64> {
    invert(price, s0, strike, horizon, rate, false)
}

fn invert(price: f64, s0: f64, strike: f64, horizon: f64, rate: f64, call: bool) -> Result<f64> {
    if !(s0 > 0.0 && strike > 0.0 && horizon > 0.0) {
        return Err(Error::domain("implied vol needs positive s0, K and T"));
    }
    let fwd_strike = strike * (-rate * horizon).exp();
    let (lower, upper, model): (f64, f64, fn(f64, f64, f64, f64, f64) -> f64) = if call {
        ((s0 - fwd_strike).max(0.0), s0, bs_price)
    } else {
        ((fwd_strike - s0).max(0.0), fwd_strike, bs_put_price)
    };
    if !(price > lower && price < upper) {
        let kind = if call { "call" } else { "put" };
        return Err(Error::domain(format!(
            "{kind} price {price} outside the no-arbitrage interval ({lower}, {upper})"
        )));
    }
    let k = (strike / s0).ln();
    let x = (k + rate * horizon).abs();
    let mut sigma = if x > 0.0 { (2.0 * x / horizon).sqrt() } else { 0.2 };
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    // Out of the money the price is exponentially small in 1/σ, so Newton
    // runs on log-price there.
    let log_space = lower == 0.0;
    let mut resid = f64::INFINITY;
    for _ in 0..IV_MAX_ITER {
        let value = model(s0, strike, horizon, sigma, rate);
        let vega = bs_vega(s0, strike, horizon, sigma, rate);
        let (diff, slope) = if log_space {
            if value > 0.0 {
                ((value / price).ln(), vega / value)
            } else {
                (f64::NEG_INFINITY, 0.0)
            }
        } else {
            (value - price, vega)
        };
        resid = diff.abs();
        let tol = if log_space { IV_TOL } else { IV_TOL * (price - lower).min(1e-3) };
        if resid <= tol {
            return Ok(sigma);
        }
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let newton = sigma - diff / slope;
        sigma = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * sigma.max(0.1)
        };
        if hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(sigma);
        }
    }
    Err(Error::NoConvergence {
        what: "implied volatility",
        iterations: IV_MAX_ITER,
        residual: resid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmilePoint {
    pub k: f64,
    pub strike: f64,
    /// Price of the out-of-the-money option: put for k < 0, call otherwise.
    pub price: f64,
    pub stderr: f64,
    pub implied_vol: Option<f64>,
}

/// `count` log-moneyness values uniform on `[kmin, kmax]`.
pub fn strike_grid(count: usize, kmin: f64, kmax: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (kmin + kmax)],
        _ => (0..count)
            .map(|i| kmin + (kmax - kmin) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Prices and implied vols over log-moneyness `ks`, using the OTM option at
/// each strike. Failed inversions leave `implied_vol` empty.
pub fn smile(terminal: &[f64], s0: f64, rate: f64, horizon: f64, ks: &[f64]) -> Result<Vec<SmilePoint>> {
    ks.iter()
        .map(|&k| {
            let strike = s0 * k.exp();
            let put = k < 0.0;
            let payoff = if put { Payoff::Put(strike) } else { Payoff::Call(strike) };
            let (price, stderr) = price_european(terminal, payoff, rate, horizon)?;
            let iv = if put {
                implied_vol_put(price, s0, strike, horizon, rate)
            } else {
                implied_vol(price, s0, strike, horizon, rate)
            };
            Ok(SmilePoint {
                k,
                strike,
                price,
                stderr,
                implied_vol: iv.ok(),
            })
        })
        .collect()
}

pub fn write_smile_csv<W: Write>(points: &[SmilePoint], mut out: W) -> Result<()> {
    writeln!(out, "k,K,price,stderr,implied_vol")?;
    for p in points {
        let iv = p.implied_vol.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{iv}", p.k, p.strike, p.price, p.stderr)?;
    }
    Ok(())
}

/// Per-time sums of `Ĝ(t_i) = η Î(t_i) - η²/2 t_i^{2H}` and its square.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSums {
    pub paths: usize,
    pub tau: f64,
    pub sum1: Vec<f64>,
    pub sum2: Vec<f64>,
}

fn compensators(eta: f64, hurst: f64, tau: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| 0.5 * eta * eta * (i as f64 * tau).powf(2.0 * hurst)).collect()
}

/// Streams `m` Volterra paths through the moment accumulators.
pub fn moment_sums(driver: &Driver, params: &RBergomiParams, m: usize, seed: u64) -> Result<MomentSums> {
    params.validate()?;
    let n = params.n_steps;
    let tau = params.tau();
    driver.check_grid(n, tau)?;
    let comp = compensators(params.eta, params.hurst, tau, n);
    let parts = map_chunks(m, |start, end| {
        let mut dw = vec![0.0; n];
        let mut ihat = vec![0.0; n];
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        for p in start..end {
            driver.fill(seed, p as u64, &mut dw, &mut ihat);
            for i in 0..n {
                let g = params.eta * ihat[i] - comp[i];
                s1[i] += g;
                s2[i] += g * g;
            }
        }
        (s1, s2)
    });
    let mut sum1 = vec![0.0; n];
    let mut sum2 = vec![0.0; n];
    for (a, b) in parts {
        for i in 0..n {
            sum1[i] += a[i];
            sum2[i] += b[i];
        }
    }
    Ok(MomentSums { paths: m, tau, sum1, sum2 })
}

/// `(Σ_i (E[Ĝ(t_i)] + η²/2 t_i^{2H})²)^{1/2}` and
/// `(Σ_i (E[Ĝ(t_i)²] - η⁴/4 t_i^{4H} - η² t_i^{2H})²)^{1/2}` with sample means.
pub fn moment_rmse(sums: &MomentSums, eta: f64, hurst: f64) -> (f64, f64) {
    let m = sums.paths as f64;
    let n = sums.sum1.len();
    let comp = compensators(eta, hurst, sums.tau, n);
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for i in 0..n {
        let t2h = (((i + 1) as f64) * sums.tau).powf(2.0 * hurst);
        let d1 = sums.sum1[i] / m + comp[i];
        let d2 = sums.sum2[i] / m - (0.25 * eta.powi(4) * t2h * t2h + eta * eta * t2h);
        e1 += d1 * d1;
        e2 += d2 * d2;
    }
    (e1.sqrt(), e2.sqrt())
}

/// Moment RMSEs of an explicit batch of paths.
pub fn moment_rmse_paths(paths: &[VolterraPath], eta: f64, hurst: f64) -> Result<(f64, f64)> {
    let first = paths.first().ok_or_else(|| Error::domain("no paths"))?;
    let n = first.len();
    let comp = compensators(eta, hurst, first.tau, n);
    let mut sum1 = vec![0.0; n];
    let mut sum2 = vec![0.0; n];
    for p in paths {
        if p.len() != n {
            return Err(Error::domain("paths have different lengths"));
        }
        for i in 0..n {
            let g = eta * p.i_values[i] - comp[i];
            sum1[i] += g;
            sum2[i] += g * g;
        }
    }
    let sums = MomentSums {
        paths: paths.len(),
        tau: first.tau,
        sum1,
        sum2,
    };
    Ok(moment_rmse(&sums, eta, hurst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_samples() {
        let (p, se) = price_european(&[1.0; 10], Payoff::Call(0.5), 0.0, 1.0).unwrap();
        assert_eq!((p, se), (0.5, 0.0));
        assert!(price_european(&[], Payoff::Call(1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn bs_reference_values() {
        let atm = bs_price(1.0, 1.0, 1.0, 0.2, 0.0);
        assert!((atm - (2.0 * norm_cdf(0.1) - 1.0)).abs() < 1e-15);
        assert!((atm - 0.0797).abs() < 1e-4);
        assert_eq!(bs_price(1.2, 1.0, 1.0, 1e-300, 0.0), 1.2 - 1.0);
        assert!((bs_price(1.0, 1e-12, 1.0, 0.3, 0.0) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn implied_vol_round_trip() {
        for &(k, t, s) in &[(0.0, 1.0, 0.2), (0.4, 1.0, 2.0), (0.3, 0.25, 0.05), (0.4, 0.25, 0.05)] {
            let strike = f64::exp(k);
            let price = bs_price(1.0, strike, t, s, 0.0);
            let iv = implied_vol(price, 1.0, strike, t, 0.0).unwrap();
            assert!((iv - s).abs() < 1e-8 * s, "{k} {t} {s}: {iv}");
        }
        for &(k, t, s) in &[(-0.4, 0.25, 0.1), (-0.1, 1.0, 0.3), (-0.4, 1.0, 2.0)] {
            let strike = f64::exp(k);
            let price = bs_put_price(1.0, strike, t, s, 0.0);
            let iv = implied_vol_put(price, 1.0, strike, t, 0.0).unwrap();
            assert!((iv - s).abs() < 1e-8 * s, "{k} {t} {s}: {iv}");
        }
        assert!(implied_vol(0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(implied_vol(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn put_call_parity_of_formulas() {
        let (c, p) = (bs_price(1.0, 1.1, 0.5, 0.3, 0.02), bs_put_price(1.0, 1.1, 0.5, 0.3, 0.02));
        assert!((c - p - (1.0 - 1.1 * (-0.01f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn strike_grid_endpoints() {
        let g = strike_grid(41, -0.4, 0.4);
        assert_eq!(g.len(), 41);
        assert_eq!((g[0], g[20], g[40]), (-0.4, 0.0, 0.4));
    }
}
