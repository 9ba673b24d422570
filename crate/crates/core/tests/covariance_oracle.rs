use rough_vol_core::kernel::build_soe_approach_b;
use rough_vol_core::sampler::{build_covariance, volterra_increment_cov, VolterraCovariance};

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let s = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod with bisection until the local error estimate
/// drops below `tol` or the round-off floor of the panel.
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, e) = gk15(f, a, b);
        if e <= tol.max(8.0 * f64::EPSILON * v.abs()) || depth > 40 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// ∫_0^τ u^{p} g(u) du for p > -1, after u = v^{1/(p+1)} removes the
/// endpoint singularity.
fn singular<F: Fn(f64) -> f64>(g: F, p: f64, tau: f64) -> f64 {
    let q = p + 1.0;
    adaptive(&|v: f64| g(v.powf(1.0 / q)) / q, 0.0, tau.powf(q), 1e-16)
}

/// Brute-force Wiener-integral covariance between components of
/// (ΔW, J^1..J^N, local) with kernels 1, e^{-λu}, √(2H) u^{H-1/2} in the
/// lag u = τ - s.
fn oracle(rates: &[f64], hurst: f64, tau: f64, i: usize, j: usize) -> f64 {
    let n = rates.len();
    let kind = |k: usize| -> Option<Option<f64>> {
        if k == 0 {
            None
        } else if k <= n {
            Some(Some(rates[k - 1]))
        } else {
            Some(None)
        }
    };
    let c = (2.0 * hurst).sqrt();
    let expo = |k: usize| match kind(k) {
        Some(Some(l)) => l,
        _ => 0.0,
    };
    let locals = [i, j].iter().filter(|&&k| k == n + 1).count();
    let lam = expo(i) + expo(j);
    match locals {
        0 => adaptive(&|u: f64| (-lam * u).exp(), 0.0, tau, 1e-17),
        1 => c * singular(|u| (-lam * u).exp(), hurst - 0.5, tau),
        _ => 2.0 * hurst * singular(|_| 1.0, 2.0 * hurst - 1.0, tau),
    }
}

#[test]
fn sigma_matches_wiener_integrals() {
    for &hurst in &[0.07, 0.3] {
        for &tau in &[5e-4, 1e-2] {
            let soe = build_soe_approach_b(hurst, 1e-3, tau, 1.0).unwrap();
            let rates: Vec<f64> = soe.rates().collect();
            let cov = build_covariance(&soe, hurst, tau).unwrap();
            let sigma = cov.sigma();
            let mut worst: f64 = 0.0;
            for i in 0..sigma.dim() {
                for j in 0..=i {
                    let want = oracle(&rates, hurst, tau, i, j);
                    worst = worst.max((sigma.get(i, j) - want).abs());
                }
            }
            assert!(worst <= 1e-10, "H={hurst} tau={tau}: max abs error {worst:e}");
        }
    }
}

#[test]
fn cholesky_reproduces_sigma() {
    let soe = build_soe_approach_b(0.07, 8e-4, 5e-4, 1.0).unwrap();
    let cov = build_covariance(&soe, 0.07, 5e-4).unwrap();
    let back = cov.chol().reconstruct();
    let sigma = cov.sigma();
    for i in 0..sigma.dim() {
        for j in 0..=i {
            let scale = (sigma.get(i, i) * sigma.get(j, j)).sqrt();
            assert!((back.get(i, j) - sigma.get(i, j)).abs() <= 1e-12 * scale, "({i},{j})");
        }
    }
}

#[test]
fn volterra_covariance_matches_riemann_integral() {
    // Cov(I_s, I_t) = 2H ∫_0^s (s-u)^{H-1/2} (t-u)^{H-1/2} du, with the
    // singular factor handled by substitution.
    for &hurst in &[0.07, 0.3, 0.45] {
        let vc = VolterraCovariance::new(hurst).unwrap();
        for &(s, t) in &[(0.3, 0.3), (0.1, 0.7), (0.5, 0.5001), (1e-3, 1.0)] {
            let d = t - s;
            let want = if d == 0.0 {
                2.0 * hurst * singular(|_| 1.0, 2.0 * hurst - 1.0, s)
            } else {
                2.0 * hurst * singular(|v: f64| (v + d).powf(hurst - 0.5), hurst - 0.5, s)
            };
            let got = vc.cov(s, t).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "H={hurst} ({s},{t}): {got} vs {want}");
        }
    }
}

#[test]
fn increment_covariance_is_kernel_mass() {
    // Cov(I_{t_i}, ΔW_j) = √(2H) ∫_{t_{j-1}}^{t_j} (t_i - s)^{H-1/2} ds.
    let (hurst, tau) = (0.07, 0.01);
    for &(i, j) in &[(1usize, 1usize), (5, 1), (5, 5), (40, 17)] {
        let ti = i as f64 * tau;
        let f = |s: f64| (ti - s).powf(hurst - 0.5);
        let want = if i == j {
            singular(|_| 1.0, hurst - 0.5, tau)
        } else {
            adaptive(&f, (j - 1) as f64 * tau, j as f64 * tau, 1e-17)
        } * (2.0 * hurst).sqrt();
        let got = volterra_increment_cov(hurst, tau, i, j);
        assert!((got - want).abs() <= 1e-12, "({i},{j}): {got} vs {want}");
    }
}
