use proptest::prelude::*;

use rough_vol_core::kernel::{build_soe_approach_b, SoeApprox};
use rough_vol_core::linalg::{PivotedCholesky, SymMatrix};
use rough_vol_core::metrics::{wasserstein_1, wasserstein_1_grad, wasserstein_p};
use rough_vol_core::neural::{adam_step, AdamState, Mlp};
use rough_vol_core::pricing::{bs_price, bs_put_price, implied_vol, implied_vol_put, price_european, Payoff};
use rough_vol_core::quadrature::{gauss_jacobi, map_rule};

fn sample(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, m)
}

// Round-off allowance for comparisons between two separately summed means.
const SLACK: f64 = 1e-13;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_symmetric_and_nonnegative(x in sample(32), y in sample(32)) {
        let a = wasserstein_1(&x, &y).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, wasserstein_1(&y, &x).unwrap());
        prop_assert_eq!(wasserstein_1(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn w1_triangle(x in sample(128), y in sample(128), z in sample(128)) {
        let xz = wasserstein_1(&x, &z).unwrap();
        let bound = wasserstein_1(&x, &y).unwrap() + wasserstein_1(&y, &z).unwrap();
        prop_assert!(xz <= bound + SLACK);
    }

    #[test]
    fn w1_below_w2(x in sample(64), y in sample(64)) {
        prop_assert!(wasserstein_1(&x, &y).unwrap() <= wasserstein_p(&x, &y, 2.0).unwrap() + SLACK);
    }

    #[test]
    fn w1_translation(x in sample(40), c in -5.0..5.0f64) {
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert!((wasserstein_1(&x, &y).unwrap() - c.abs()).abs() <= 1e-12);
    }

    #[test]
    fn w1_permutation_invariant(x in sample(24), y in sample(24), shift in 0usize..24) {
        let mut xr = x.clone();
        xr.rotate_left(shift);
        xr.reverse();
        prop_assert_eq!(wasserstein_1(&x, &y).unwrap(), wasserstein_1(&xr, &y).unwrap());
        let (loss, g) = wasserstein_1_grad(&x, &y).unwrap();
        prop_assert_eq!(loss, wasserstein_1(&x, &y).unwrap());
        prop_assert!(g.iter().all(|v| v.abs() <= 1.0 / 24.0 + 1e-18));
    }

    #[test]
    fn lipschitz_payoff_bound(x in prop::collection::vec(0.2..3.0f64, 50), y in prop::collection::vec(0.2..3.0f64, 50)) {
        let w = wasserstein_1(&x, &y).unwrap();
        for k in [0.6, 0.8, 1.0, 1.2, 1.4] {
            let (px, _) = price_european(&x, Payoff::Call(k), 0.0, 1.0).unwrap();
            let (py, _) = price_european(&y, Payoff::Call(k), 0.0, 1.0).unwrap();
            prop_assert!((px - py).abs() <= w + SLACK);
        }
    }

    #[test]
    fn put_call_parity(s0 in 0.5..2.0f64, k in -0.5..0.5f64, t in 0.05..3.0f64, sig in 0.01..2.0f64, r in 0.0..0.1f64) {
        let strike = s0 * k.exp();
        let lhs = bs_price(s0, strike, t, sig, r) - bs_put_price(s0, strike, t, sig, r);
        prop_assert!((lhs - (s0 - strike * (-r * t).exp())).abs() <= 1e-13);
    }

    #[test]
    fn implied_vol_inverts_otm_prices(k in -0.5..0.5f64, t in 0.05..3.0f64, sig in 0.02..2.0f64) {
        let strike = k.exp();
        let (price, iv) = if k < 0.0 {
            let p = bs_put_price(1.0, strike, t, sig, 0.0);
            (p, implied_vol_put(p, 1.0, strike, t, 0.0))
        } else {
            let p = bs_price(1.0, strike, t, sig, 0.0);
            (p, implied_vol(p, 1.0, strike, t, 0.0))
        };
        // only representable prices carry information
        prop_assume!(price > 1e-300);
        let iv = iv.unwrap();
        prop_assert!((iv - sig).abs() <= 1e-7 * sig, "price {} iv {} sigma {}", price, iv, sig);
    }

    #[test]
    fn adam_first_step_is_lr(g in prop::collection::vec(-1e3..1e3f64, 8)) {
        prop_assume!(g.iter().all(|v| v.abs() > 1e-3));
        let mut state = AdamState::new(8, 1e-4);
        let mut p = vec![0.5; 8];
        adam_step(&mut state, &mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            prop_assert!(((0.5 - pi) - 1e-4 * gi.signum()).abs() <= 1e-4 * 1e-5);
        }
    }

    #[test]
    fn mlp_output_nonnegative(seed in any::<u64>(), t in 0.0..1.0f64) {
        let mlp = Mlp::default_network(seed);
        let v = mlp.forward(t);
        prop_assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn gauss_jacobi_integrates_polynomials(alpha in -0.9..2.0f64, beta in -0.9..2.0f64, deg in 0usize..9) {
        // ∫_{-1}^{1} (1-x)^α (1+x)^β x^deg dx against a fine reference rule
        let rule = gauss_jacobi(5, alpha, beta).unwrap();
        let fine = gauss_jacobi(40, alpha, beta).unwrap();
        let f = |x: f64| x.powi(deg as i32);
        let want = fine.integrate(f);
        prop_assert!((rule.integrate(f) - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn mapped_rule_scales_length(a in -3.0..3.0f64, len in 0.01..5.0f64) {
        let rule = map_rule(&gauss_jacobi(6, 0.0, 0.0).unwrap(), a, a + len).unwrap();
        prop_assert!((rule.integrate(|_| 1.0) - len).abs() <= 1e-13 * len.max(1.0));
    }

    #[test]
    fn pivoted_cholesky_reconstructs(entries in prop::collection::vec(-1.0..1.0f64, 30)) {
        // A = B Bᵀ + diag for a random 6×5 factor B
        let n = 6;
        let b = |i: usize, k: usize| entries[i * 5 + k];
        let mut a = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..5).map(|k| b(i, k) * b(j, k)).sum();
                a.set(i, j, if i == j { v + 0.1 } else { v });
            }
        }
        let chol = PivotedCholesky::new(&a, 1, 1e-13).unwrap();
        let back = chol.reconstruct();
        for i in 0..n {
            for j in 0..=i {
                prop_assert!((back.get(i, j) - a.get(i, j)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn w1_hand_case() {
    assert_eq!(wasserstein_1(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 1.0);
    assert_eq!(wasserstein_1(&[0.0], &[1.0]).unwrap(), 1.0);
    assert!(wasserstein_1(&[0.0], &[1.0, 2.0]).is_err());
}

#[test]
fn soe_csv_round_trip() {
    let soe = build_soe_approach_b(0.07, 8e-4, 5e-4, 1.0).unwrap();
    let mut buf = Vec::new();
    soe.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with('#'));
    assert!(text.lines().nth(1).unwrap() == "omega,lambda");
    let back = SoeApprox::read_csv(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(back.pairs(), soe.pairs());
    assert_eq!(back.hurst(), soe.hurst());
    assert_eq!(back.t1(), soe.t1());
    assert_eq!(back.horizon(), soe.horizon());
}
