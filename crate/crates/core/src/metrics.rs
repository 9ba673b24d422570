//! Empirical Wasserstein distances between equal-size samples on the line.

use crate::error::{Error, Result};

/// Indices that sort `x` ascending; ties keep index order.
pub fn sorted_order(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    idx
}

fn check_samples(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::domain(format!(
            "Wasserstein distance needs equal nonempty samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    Ok(())
}

/// `((1/m) Σ |x_(i) - y_(i)|^p)^{1/p}` over matched order statistics.
pub fn wasserstein_p(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    check_samples(x, y)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::domain(format!("p must be >= 1, got {p}")));
    }
    let (ox, oy) = (sorted_order(x), sorted_order(y));
    let diffs: Vec<f64> = ox
        .iter()
        .zip(&oy)
        .map(|(&i, &j)| {
            let d = (x[i] - y[j]).abs();
            if p == 1.0 {
                d
            } else {
                d.powf(p)
            }
        })
        .collect();
    let mean = crate::stats::mean(&diffs);
    Ok(if p == 1.0 { mean } else { mean.powf(1.0 / p) })
}

pub fn wasserstein_1(x: &[f64], y: &[f64]) -> Result<f64> {
    wasserstein_p(x, y, 1.0)
}

/// W1 and its derivative with respect to each `x_i`: `sign(x_i - y_(r(i))) / m`
/// where r(i) is the rank of x_i. Exact matches get derivative 0.
pub fn wasserstein_1_grad(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_samples(x, y)?;
    let m = x.len() as f64;
    let (ox, oy) = (sorted_order(x), sorted_order(y));
    let mut grad = vec![0.0; x.len()];
    let mut diffs = Vec::with_capacity(x.len());
    for (&i, &j) in ox.iter().zip(&oy) {
        let d = x[i] - y[j];
        diffs.push(d.abs());
        grad[i] = if d > 0.0 {
            1.0 / m
        } else if d < 0.0 {
            -1.0 / m
        } else {
            0.0
        };
    }
    Ok((crate::stats::mean(&diffs), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(wasserstein_1(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1(&[3.0, 1.0], &[4.0, 2.0]).unwrap(), 1.0);
        let x = [0.3, -1.0, 2.5];
        assert_eq!(wasserstein_1(&x, &x).unwrap(), 0.0);
        assert!(wasserstein_1(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn w2_of_shift() {
        let x = [0.0, 1.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v + 2.0).collect();
        assert!((wasserstein_p(&x, &y, 2.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_single_pair() {
        let (l, g) = wasserstein_1_grad(&[3.0], &[1.0]).unwrap();
        assert_eq!((l, g[0]), (2.0, 1.0));
        let (l, g) = wasserstein_1_grad(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
    }
}
