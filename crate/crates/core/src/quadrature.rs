//! Gauss rules on finite intervals.
//!
//! Legendre and Jacobi rules come from the Golub–Welsch eigenproblem of the
//! Jacobi-polynomial recurrence, followed by Newton refinement of each node on
//! the orthonormal polynomial and Christoffel-function weights. Rules for a
//! general power weight or a discrete measure come from Lanczos on the
//! discretized measure.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;
use crate::special::ln_gamma;

const MAX_ITER: usize = 100;
const NODE_TOL: f64 = 1e-14;

/// Weight function attached to a rule on its interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `(b - x)^alpha (x - a)^beta`
    Jacobi { alpha: f64, beta: f64 },
    /// `x^exponent`, for intervals with `a >= 0`
    Power { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
    pub weight: Weight,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_i f(x_i): the integral of `weight · f` over the interval.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Writes `node,weight` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node,weight")?;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            writeln!(out, "{:.16e},{:.16e}", x, w)?;
        }
        Ok(())
    }
}

/// Recurrence coefficients of the monic Jacobi polynomials on [-1, 1]:
/// diagonal `a_k` and squared off-diagonal `b_k` (k ≥ 1). `b_0` holds the
/// total mass of the weight.
fn jacobi_recurrence(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let ab = alpha + beta;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0))
        .exp();
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        if k == 0 {
            a.push((beta - alpha) / (ab + 2.0));
            b.push(mu0);
        } else {
            a.push((beta * beta - alpha * alpha) / (s * (s + 2.0)));
            if k == 1 {
                b.push(4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab)));
            } else {
                b.push(
                    4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab)
                        / (s * s * (s + 1.0) * (s - 1.0)),
                );
            }
        }
    }
    (a, b)
}

/// Orthonormal polynomial values p_0..p_{n-1} at x, plus p_n and p_n'.
fn orthonormal_eval(a: &[f64], b: &[f64], bn: f64, x: f64, vals: &mut Vec<f64>) -> (f64, f64) {
    let n = a.len();
    vals.clear();
    let mut p_prev = 0.0;
    let mut dp_prev = 0.0;
    let mut p = 1.0 / b[0].sqrt();
    let mut dp = 0.0;
    for k in 0..n {
        vals.push(p);
        let sb_next = if k + 1 < n { b[k + 1].sqrt() } else { bn.sqrt() };
        let sb_cur = if k == 0 { 0.0 } else { b[k].sqrt() };
        let p_next = ((x - a[k]) * p - sb_cur * p_prev) / sb_next;
        let dp_next = (p + (x - a[k]) * dp - sb_cur * dp_prev) / sb_next;
        p_prev = p;
        dp_prev = dp;
        p = p_next;
        dp = dp_next;
    }
    (p, dp)
}

/// n-point Gauss–Jacobi rule on [-1, 1] for the weight (1-x)^alpha (1+x)^beta.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::domain("quadrature rule needs at least one node"));
    }
    if !(alpha > -1.0 && beta > -1.0) {
        return Err(Error::domain(format!(
            "Jacobi exponents must exceed -1 (alpha={alpha}, beta={beta})"
        )));
    }
    let (a, b_all) = jacobi_recurrence(n + 1, alpha, beta);
    let a = &a[..n];
    let b = &b_all[..n];
    let bn = b_all[n];
    let off: Vec<f64> = b[1..].iter().map(|v| v.sqrt()).collect();
    let (mut nodes, _) = tridiagonal_eigen(a, &off, MAX_ITER)?;

    let mut vals = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        let mut converged = false;
        let mut last = f64::INFINITY;
        for _ in 0..MAX_ITER {
            let (p, dp) = orthonormal_eval(a, b, bn, *x, &mut vals);
            let step = p / dp;
            *x -= step;
            last = step.abs();
            if last <= NODE_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                what: "Gauss-Jacobi node refinement",
                iterations: MAX_ITER,
                residual: last,
            });
        }
        orthonormal_eval(a, b, bn, *x, &mut vals);
        weights.push(1.0 / vals.iter().map(|v| v * v).sum::<f64>());
    }
    let rule = GaussRule {
        nodes,
        weights,
        interval: (-1.0, 1.0),
        weight: Weight::Jacobi { alpha, beta },
    };
    check_rule(&rule)?;
    Ok(rule)
}

/// n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Affine image of a Jacobi-weighted rule on `[a, b]`, preserving
/// `∫ (b-x)^alpha (x-a)^beta f(x) dx`.
pub fn map_rule(rule: &GaussRule, a: f64, b: f64) -> Result<GaussRule> {
    if !(a < b) {
        return Err(Error::domain(format!("map_rule needs a < b, got [{a}, {b}]")));
    }
    let Weight::Jacobi { alpha, beta } = rule.weight else {
        return Err(Error::domain("only Jacobi-weighted rules can be remapped"));
    };
    let (c, d) = rule.interval;
    let ratio = (b - a) / (d - c);
    let wscale = ratio.powf(alpha + beta + 1.0);
    Ok(GaussRule {
        nodes: rule.nodes.iter().map(|&x| a + (x - c) * ratio).collect(),
        weights: rule.weights.iter().map(|&w| w * wscale).collect(),
        interval: (a, b),
        weight: rule.weight,
    })
}

/// n-point Gauss rule for a discrete measure Σ masses_i δ(points_i).
///
/// The rule matches the first 2n power moments of the measure. Computed by
/// Lanczos on diag(points) started from sqrt(masses), with full
/// reorthogonalization.
pub fn gauss_discrete(points: &[f64], masses: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = points.len();
    if n == 0 || n > m || masses.len() != m {
        return Err(Error::domain(format!(
            "discrete Gauss rule: need 1 <= n <= {m} support points, got n={n}"
        )));
    }
    if masses.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::domain("discrete measure masses must be positive"));
    }
    let total: f64 = masses.iter().sum();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    basis.push(masses.iter().map(|w| (w / total).sqrt()).collect());
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);
    for k in 0..n {
        let q = &basis[k];
        let mut v: Vec<f64> = q.iter().zip(points).map(|(qi, xi)| qi * xi).collect();
        let alpha: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
        diag.push(alpha);
        if k + 1 == n {
            break;
        }
        for _ in 0..2 {
            for prev in &basis {
                let c: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(beta > 0.0) {
            return Err(Error::Quadrature(format!(
                "Lanczos breakdown at step {k} of {n}"
            )));
        }
        off.push(beta);
        basis.push(v.iter().map(|x| x / beta).collect());
    }
    let (nodes, first) = tridiagonal_eigen(&diag, &off, MAX_ITER)?;
    let weights = first.iter().map(|f| total * f * f).collect();
    Ok((nodes, weights))
}

/// n-point Gauss rule for the weight `x^exponent` on `[a, b]`, `0 <= a < b`.
///
/// With `a = 0` this is the mapped Jacobi rule (alpha = 0, beta = exponent);
/// otherwise the weight is smooth on the interval and the rule is built from
/// a fine Gauss–Legendre discretization.
pub fn gauss_power_weight(n: usize, a: f64, b: f64, exponent: f64) -> Result<GaussRule> {
    if !(a >= 0.0 && a < b) {
        return Err(Error::domain(format!("power weight needs 0 <= a < b, got [{a}, {b}]")));
    }
    if a == 0.0 {
        let rule = map_rule(&gauss_jacobi(n, 0.0, exponent)?, 0.0, b)?;
        return Ok(GaussRule {
            weight: Weight::Power { exponent },
            ..rule
        });
    }
    let fine = map_rule(&gauss_legendre(2 * n + 60)?, a, b)?;
    let masses: Vec<f64> = fine
        .nodes
        .iter()
        .zip(&fine.weights)
        .map(|(x, w)| w * x.powf(exponent))
        .collect();
    let (nodes, weights) = gauss_discrete(&fine.nodes, &masses, n)?;
    let rule = GaussRule {
        nodes,
        weights,
        interval: (a, b),
        weight: Weight::Power { exponent },
    };
    check_rule(&rule)?;
    Ok(rule)
}

fn check_rule(rule: &GaussRule) -> Result<()> {
    let (a, b) = rule.interval;
    let ordered = rule.nodes.windows(2).all(|w| w[0] < w[1]);
    let inside = rule.nodes.iter().all(|&x| x > a && x < b);
    let positive = rule.weights.iter().all(|&w| w > 0.0 && w.is_finite());
    if ordered && inside && positive {
        Ok(())
    } else {
        Err(Error::Quadrature(format!(
            "{}-point rule on [{a}, {b}] violates ordering/positivity",
            rule.len()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn legendre_small_rules() {
        let r1 = gauss_legendre(1).unwrap();
        assert!(r1.nodes[0].abs() < 1e-15);
        assert!((r1.weights[0] - 2.0).abs() < 1e-14);

        let r2 = gauss_legendre(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0] + x).abs() < 1e-15 && (r2.nodes[1] - x).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-14 && (r2.weights[1] - 1.0).abs() < 1e-14);

        let r5 = gauss_legendre(5).unwrap();
        let v = r5.integrate(|x| x.powi(8));
        assert!((v - 2.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn jacobi_reduces_to_legendre() {
        for n in 1..10 {
            let j = gauss_jacobi(n, 0.0, 0.0).unwrap();
            let l = gauss_legendre(n).unwrap();
            assert_eq!(j, l);
        }
    }

    #[test]
    fn one_point_jacobi_matches_first_two_moments() {
        let beta: f64 = -0.57;
        let r = gauss_jacobi(1, 0.0, beta).unwrap();
        // ∫_{-1}^{1} (1+x)^β dx and ∫ x (1+x)^β dx in closed form
        let m0 = 2f64.powf(beta + 1.0) / (beta + 1.0);
        let m1 = 2f64.powf(beta + 2.0) / (beta + 2.0) - m0;
        assert!((r.weights[0] - m0).abs() < 1e-14);
        assert!((r.nodes[0] - m1 / m0).abs() < 1e-14);
    }

    #[test]
    fn map_rule_examples() {
        let r = gauss_legendre(4).unwrap();
        assert_eq!(map_rule(&r, -1.0, 1.0).unwrap(), r);

        let m = map_rule(&gauss_legendre(2).unwrap(), 0.0, 1.0).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((m.nodes[0] - (1.0 - x) / 2.0).abs() < 1e-15);
        assert!((m.nodes[1] - (1.0 + x) / 2.0).abs() < 1e-15);
        assert!((m.weights[0] - 0.5).abs() < 1e-15);

        let zeta = 3.7;
        let j = map_rule(&gauss_jacobi(6, 0.0, -0.57).unwrap(), 0.0, zeta).unwrap();
        let expect = zeta.powf(0.43) / 0.43;
        assert!(((j.integrate(|_| 1.0) - expect) / expect).abs() < 1e-13);

        assert!(map_rule(&r, 1.0, 1.0).is_err());
        assert!(gauss_jacobi(0, 0.0, 0.0).is_err());
        assert!(gauss_jacobi(3, -1.0, 0.0).is_err());
    }

    #[test]
    fn legendre_positivity_and_interlacing() {
        let mut prev = gauss_legendre(1).unwrap();
        for n in 2..=32 {
            let r = gauss_legendre(n).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            // exactly one node of rule n-1 between consecutive nodes of rule n
            for (i, w) in r.nodes.windows(2).enumerate() {
                assert!(prev.nodes[i] > w[0] && prev.nodes[i] < w[1], "n={n}");
            }
            prev = r;
        }
    }

    #[test]
    fn power_weight_rule_on_shifted_interval() {
        // ∫_2^5 x^{-0.57} x^k dx in closed form for k = 0..7
        let r = gauss_power_weight(4, 2.0, 5.0, -0.57).unwrap();
        for k in 0..8 {
            let p = k as f64 + 0.43;
            let exact = (5f64.powf(p) - 2f64.powf(p)) / p;
            let got = r.integrate(|x| x.powi(k));
            assert!(((got - exact) / exact).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn discrete_rule_matches_moments() {
        let pts: Vec<f64> = (1..=12).map(|i| 0.5f64.powi(i)).collect();
        let mass: Vec<f64> = (1..=12).map(|i| 1.0 / i as f64).collect();
        let (x, w) = gauss_discrete(&pts, &mass, 4).unwrap();
        for k in 0..8 {
            let exact: f64 = pts.iter().zip(&mass).map(|(p, m)| m * p.powi(k)).sum();
            let got: f64 = x.iter().zip(&w).map(|(p, m)| m * p.powi(k)).sum();
            assert!(((got - exact) / exact).abs() < 1e-10, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn legendre_polynomial_exactness(n in 1usize..=12, seed in proptest::collection::vec(-1.0f64..1.0, 24)) {
            let deg = 2 * n - 1;
            let coeffs: Vec<f64> = seed[..=deg].to_vec();
            // exact integral of Σ c_k x^k over [-1,1]
            let exact: f64 = coeffs.iter().enumerate()
                .filter(|(k, _)| k % 2 == 0)
                .map(|(k, c)| 2.0 * c / (k as f64 + 1.0)).sum();
            let got = gauss_legendre(n).unwrap().integrate(|x| coeffs.iter().rev().fold(0.0, |a, c| a * x + c));
            let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>();
            prop_assert!((got - exact).abs() <= 1e-12 * scale.max(exact.abs()));
        }

        #[test]
        fn jacobi_polynomial_exactness(n in 1usize..=12, beta in -0.95f64..0.5, seed in proptest::collection::vec(0.1f64..1.0, 24)) {
            let coeffs: Vec<f64> = seed[..2 * n].to_vec();
            // polynomial in powers of (1 + x): each term has a closed-form moment
            let exact: f64 = coeffs.iter().enumerate()
                .map(|(k, c)| { let p = beta + k as f64 + 1.0; c * 2f64.powf(p) / p }).sum();
            let got = gauss_jacobi(n, 0.0, beta).unwrap()
                .integrate(|x| coeffs.iter().rev().fold(0.0, |a, c| a * (1.0 + x) + c));
            prop_assert!((got - exact).abs() <= 1e-12 * exact.abs());
        }

        #[test]
        fn affine_map_consistency(a in -3.0f64..3.0, width in 0.1f64..10.0, beta in -0.9f64..0.5) {
            let b = a + width;
            let base = gauss_jacobi(7, 0.0, beta).unwrap();
            let mapped = map_rule(&base, a, b).unwrap();
            let f = |x: f64| (0.3 * x).sin() + x * x;
            let direct = mapped.integrate(f);
            let jac = (width / 2.0).powf(beta + 1.0);
            let via_base = jac * base.integrate(|x| f(a + width * (x + 1.0) / 2.0));
            prop_assert!((direct - via_base).abs() <= 1e-12 * via_base.abs().max(1.0));
        }
    }
}
