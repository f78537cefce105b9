use bifstep_core::krylov::{arnoldi_eigs, fd_directional, gmres, to_continuous, DenseOperator, FdJacobian};
use bifstep_core::nalgebra::{DMatrix, DVector};
use bifstep_core::{KrylovConfig, KrylovError, LinearOperator, C64};
use proptest::prelude::*;

fn matrix(n: usize, entries: &[f64], shift: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        entries[(i * n + j) % entries.len()] / (n as f64).sqrt() + if i == j { shift } else { 0.0 }
    })
}

fn sorted(mut v: Vec<C64>) -> Vec<C64> {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gmres_history_monotone_and_terminates(
        n in 2usize..60,
        entries in prop::collection::vec(-1.0f64..1.0, 64),
        rhs in prop::collection::vec(-1.0f64..1.0, 60),
        shift in 2.5f64..5.0,
    ) {
        let a = DenseOperator(matrix(n, &entries, shift));
        let mut b = rhs[..n].to_vec();
        b[0] += 1.0;
        let cfg = KrylovConfig { tol: 1e-12, max_dim: n, ..KrylovConfig::default() };
        let out = gmres(&a, &b, &vec![0.0; n], &cfg).unwrap();
        for w in out.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", out.history);
        }
        prop_assert!(out.iterations <= n);
        prop_assert!(out.true_residual < 1e-10, "residual {}", out.true_residual);
        prop_assert!(out.converged);
    }

    #[test]
    fn arnoldi_exact_on_invariant_subspace(
        k in 1usize..5,
        mags in prop::collection::vec(0.5f64..2.0, 4),
        basis in prop::collection::vec(-0.3f64..0.3, 400),
    ) {
        // rank-k operator: its range is a k-dimensional invariant subspace
        let n = 20;
        let eigs: Vec<f64> = (0..k).map(|i| mags[i] + i as f64 * 2.5).collect();
        let mut d = DVector::zeros(n);
        for (i, e) in eigs.iter().enumerate() {
            d[i] = *e;
        }
        let p = DMatrix::from_fn(n, n, |i, j| basis[i * n + j] / n as f64 + if i == j { 1.0 } else { 0.0 });
        let pinv = p.clone().try_inverse().unwrap();
        let a = DenseOperator(&p * DMatrix::from_diagonal(&d) * pinv);
        let cfg = KrylovConfig { tol: 1e-12, max_dim: 10, ..KrylovConfig::default() };
        let rep = arnoldi_eigs(&a, k, &cfg).unwrap();
        let got = sorted(rep.kappas[..k].to_vec());
        let want = sorted(eigs.iter().map(|&e| C64::new(e, 0.0)).collect());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).norm() < 1e-10, "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn fd_error_first_order_on_quadratic_maps(
        c in prop::collection::vec(0.5f64..2.0, 3),
        u in prop::collection::vec(-1.0f64..1.0, 3),
        q in prop::collection::vec(0.2f64..1.0, 3),
    ) {
        let c2 = c.clone();
        let map = move |x: &[f64]| -> Result<Vec<f64>, KrylovError> {
            Ok(x.iter().zip(&c2).map(|(v, ci)| ci * v * v + v).collect())
        };
        let exact: Vec<f64> = u.iter().zip(&q).zip(&c).map(|((x, d), ci)| 2.0 * ci * x * d + d).collect();
        let err = |eps0: f64| {
            let jq = fd_directional(&map, &u, &q, eps0).unwrap();
            jq.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let order = (err(1e-3) / err(5e-4)).log2();
        prop_assert!((0.8..=1.2).contains(&order), "order {}", order);
    }

    #[test]
    fn fd_jacobian_is_linear_for_linear_maps(
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        x in prop::collection::vec(-1.0f64..1.0, 4),
        y in prop::collection::vec(-1.0f64..1.0, 4),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let m = DMatrix::from_row_slice(4, 4, &entries);
        let map = |v: &[f64]| -> Result<Vec<f64>, KrylovError> {
            Ok((&m * DVector::from_column_slice(v)).as_slice().to_vec())
        };
        let jac = FdJacobian::new(map, vec![0.3, -0.1, 0.2, 0.5], 1e-6).unwrap();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assume!(comb.iter().any(|v| v.abs() > 1e-3));
        let lhs = jac.apply(&comb).unwrap();
        let (jx, jy) = (jac.apply(&x).unwrap(), jac.apply(&y).unwrap());
        for i in 0..4 {
            prop_assert!((lhs[i] - (alpha * jx[i] + beta * jy[i])).abs() < 1e-7);
        }
    }

    #[test]
    fn to_continuous_inverts_exp(re in -50.0f64..50.0, im in -3000.0f64..3000.0) {
        let t_h = 1e-3;
        let lambda = C64::new(re, im);
        let kappa = (lambda * t_h).exp();
        let back = to_continuous(&[kappa], t_h).unwrap()[0];
        prop_assert!((back - lambda).norm() < 1e-9 * lambda.norm().max(1.0));
    }
}
