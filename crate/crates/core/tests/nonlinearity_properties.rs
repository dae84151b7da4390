use proptest::prelude::*;
use wentzell_core::linalg::{generalized_symmetric_eigen, Mat};
use wentzell_core::nonlinearity::{evaluate_scenarios, log_grid};
use wentzell_core::*;

fn blocks(spec: &GeometrySpec) -> (Mesh64, OperatorBlocks<f64>) {
    let mesh = build_geometry(spec).unwrap();
    let b = assemble_blocks(&mesh);
    (mesh, b)
}

/// Dense constrained oracle: restrict `(K_Ω, M_Ω)` to `{bᵀu = 0}` through a
/// Householder basis of the complement of `b` and take the smallest eigenvalue.
fn poincare_oracle(mesh: &Mesh64, b: &OperatorBlocks<f64>) -> f64 {
    let w = mesh.boundary_weight_vector();
    let n = w.len();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = w.iter().map(|x| x / norm).collect::<Vec<_>>();
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    // H = I − 2vvᵀ/vᵀv maps e₀ to −w/‖w‖, so its remaining columns span w⊥
    let h = Mat::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - 2.0 * v[i] * v[j] / vv);
    let q = Mat::from_fn(n, n - 1, |i, j| h[(i, j + 1)]);
    let k = q.tr_matmul(&b.bulk_stiffness.to_dense().matmul(&q));
    let m = q.tr_matmul(&b.bulk_mass.to_dense().matmul(&q));
    let (vals, _) = generalized_symmetric_eigen(&k, &m).unwrap();
    1.0 / vals[0].sqrt()
}

#[test]
fn poincare_matches_dense_constrained_oracle() {
    for spec in [
        GeometrySpec::interval(1.0, 16),
        GeometrySpec::interval(2.0, 33),
        GeometrySpec::slab(1.0, 2.0, 6, 8),
        GeometrySpec::slab(2.0, 1.0, 5, 4),
    ] {
        let (mesh, b) = blocks(&spec);
        let got = estimate_poincare_constant(&mesh, &b).unwrap();
        let want = poincare_oracle(&mesh, &b);
        assert!((got - want).abs() <= 1e-10 * want, "{spec:?}: {got} vs {want}");
        assert!(got > 0.0);
    }
}

#[test]
fn poincare_interval_bounds_and_refinement() {
    let est = |m: usize| {
        let (mesh, b) = blocks(&GeometrySpec::interval(1.0, m));
        estimate_poincare_constant(&mesh, &b).unwrap()
    };
    let fine = est(2048);
    for m in [16, 64, 128, 256] {
        let c = est(m);
        assert!(c >= 1.0 / 12f64.sqrt() - 1e-9);
        assert!(c <= fine + 1e-6, "coarse {m} exceeds fine");
    }
    assert!((est(256) - fine).abs() < 1e-4);
}

#[test]
fn scenario_thresholds_are_sharp() {
    let inputs = BalanceInputs {
        measure_bulk: 1.0,
        measure_boundary: 2.0,
        poincare: 0.5,
        omega: 1.0,
    };
    let eps = 0.5;
    // critical exponent case r₂ = 3, r₁ = 4 with c_g = −0.2
    let cg = -0.2;
    let bound2 = (0.5 * 2.0 * cg * 3.0_f64).powi(2) / (4.0 * eps);
    let at = |cf: f64| {
        NonlinearitySpec::new(Polynomial::power(cf, 4.0), Polynomial::power(cg, 3.0)).with_epsilon(eps)
    };
    assert_eq!(evaluate_scenarios(&at(bound2 * 1.01), &inputs).critical_exponent, Some(true));
    assert_eq!(evaluate_scenarios(&at(bound2 * 0.99), &inputs).critical_exponent, Some(false));

    // sublinear case r₁ = r₂ = 2, c_g = −0.1: threshold on c_f
    let cg: f64 = -0.1;
    let bound3 = (0.5 * 2.0 * cg).powi(2) / eps - 2.0 * cg;
    let at = |cf: f64| {
        NonlinearitySpec::new(Polynomial::power(cf, 2.0), Polynomial::power(cg, 2.0)).with_epsilon(eps)
    };
    assert_eq!(evaluate_scenarios(&at(bound3 * 1.01), &inputs).sublinear, Some(true));
    assert_eq!(evaluate_scenarios(&at(bound3 * 0.99), &inputs).sublinear, Some(false));
    assert_eq!(evaluate_scenarios(&at(1.0), &inputs).sublinear, Some(true));
}

#[test]
fn zero_boundary_term_quotient_tends_to_leading_coefficient() {
    let inputs = BalanceInputs {
        measure_bulk: 1.0,
        measure_boundary: 2.0,
        poincare: 0.3,
        omega: 1.0,
    };
    for cf in [0.5, 1.0, 7.0] {
        let spec = NonlinearitySpec::new(Polynomial::power(cf, 4.0).with_power(3.0, 2.0), Polynomial::zero());
        let rep = check_balance(&spec, &inputs, &ProbeGrid::default()).unwrap();
        assert!((rep.numeric_liminf_estimate - cf).abs() <= 0.05 * cf);
    }
}

#[test]
fn fitted_offset_covers_the_grid() {
    let inputs = BalanceInputs {
        measure_bulk: 1.0,
        measure_boundary: 2.0,
        poincare: 1.0 / std::f64::consts::PI,
        omega: 1.0,
    };
    let spec = NonlinearitySpec::new(Polynomial::power(1.0, 4.0), Polynomial::power(-1.0, 2.0));
    let rep = check_balance(&spec, &inputs, &ProbeGrid::default()).unwrap();
    for s in log_grid(1e-3, 1e6, 400) {
        for s in [s, -s] {
            let q = wentzell_core::nonlinearity::balance_numerator(&spec, &inputs, s);
            assert!(q * inputs.measure_bulk >= rep.delta * s.abs().powf(4.0) * inputs.measure_bulk - rep.fitted_offset - 1e-9 * s.abs().powf(4.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn antiderivatives_are_exact(c1 in -3.0f64..3.0, p in 2.0f64..6.0, a in -1.0f64..1.0, k in 0.1f64..4.0, s in -5.0f64..5.0) {
        let poly = Polynomial::power(c1, p).with_sine(a, k);
        let spec = NonlinearitySpec::new(poly.clone(), poly);
        let h = 1e-5;
        for (v, prim) in [(Which::F, Which::FTilde), (Which::G, Which::GTilde)] {
            let fd = (eval_nonlinearity(&spec, s + h, prim) - eval_nonlinearity(&spec, s - h, prim)) / (2.0 * h);
            let val = eval_nonlinearity(&spec, s, v);
            prop_assert!((fd - val).abs() <= 1e-6 * (1.0 + val.abs()));
        }
        prop_assert_eq!(eval_nonlinearity(&spec, 0.0, Which::FTilde), 0.0);
    }

    #[test]
    fn superlinear_scenario_is_scale_invariant(cf in 0.01f64..100.0, cg in -100.0f64..-0.01, scale in 0.01f64..100.0) {
        let inputs = BalanceInputs { measure_bulk: 1.0, measure_boundary: 2.0, poincare: 0.4, omega: 1.0 };
        let base = NonlinearitySpec::new(Polynomial::power(cf, 5.0), Polynomial::power(cg, 2.5));
        let scaled = NonlinearitySpec::new(Polynomial::power(cf * scale, 5.0), Polynomial::power(cg / scale, 2.5));
        prop_assert_eq!(
            evaluate_scenarios(&base, &inputs).superlinear_gap,
            evaluate_scenarios(&scaled, &inputs).superlinear_gap
        );
    }

    #[test]
    fn sign_growth_grid_is_symmetric(c in 0.0f64..2.0) {
        let spec = NonlinearitySpec::new(Polynomial::power(c, 4.0), Polynomial::power(c, 2.0));
        let rep = check_sign_growth(&spec, &log_grid(1.0, 1e6, 50)).unwrap();
        prop_assert!(rep.min_f_over_s >= 0.0);
        prop_assert!(rep.sign_f && rep.sign_g);
    }
}
