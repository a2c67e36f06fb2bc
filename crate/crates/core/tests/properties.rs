use perispec_core::evolution::{period_map, propagate};
use perispec_core::kpp::{find_periodic_solution, KppOptions, Nonlinearity, Verdict};
use perispec_core::solver::{solve_lambda_p, RootStatus, SolverOptions};
use perispec_core::spectrum::{
    essential_interval, estimate_mu, lyapunov_estimate, SpectrumOptions,
};
use perispec_core::{
    assemble, build_grid, make_kernel, Boundary, DispersalOperator, Profile, Weight,
};
use proptest::prelude::*;

const STANDARD: &str = "sin(2*pi*t/T) + cos(2*pi*x) - 0.2";
const BOUNDARIES: [Boundary; 3] = [
    Boundary::DirichletType,
    Boundary::NeumannType,
    Boundary::Periodic,
];

fn op(b: Boundary, n: usize) -> DispersalOperator {
    let k = make_kernel(Profile::Parabolic, 1.0, 1).unwrap();
    assemble(&k, &build_grid(b, &[1.0], n).unwrap()).unwrap()
}

fn w(src: &str) -> Weight {
    Weight::parse(src, 1.0).unwrap()
}

fn mu(op: &DispersalOperator, weight: &Weight, lambda: f64) -> f64 {
    estimate_mu(op, weight, lambda, &SpectrumOptions::fast())
        .unwrap()
        .mu
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![
        Just(Boundary::DirichletType),
        Just(Boundary::NeumannType),
        Just(Boundary::Periodic)
    ]
}

/// `a + b cos(2πx) + c sin(2πt/T) cos(πx)`.
fn family(a: f64, b: f64, c: f64) -> String {
    format!("{a} + {b}*cos(2*pi*x) + {c}*sin(2*pi*t/T)*cos(pi*x)")
}

#[test]
fn lyapunov_agrees_with_period_map_on_standard_matrix() {
    let weight = w(STANDARD);
    for b in BOUNDARIES {
        let o = op(b, 64);
        let ones = vec![1.0; o.len()];
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            let pm = mu(&o, &weight, lambda);
            let ly = lyapunov_estimate(&o, &weight, lambda, &ones, 500, None).unwrap();
            assert!((pm - ly).abs() < 1e-6, "{b} λ={lambda}: {pm} vs {ly}");
        }
    }
}

#[test]
fn unique_sign_change_when_condition_holds() {
    for b in BOUNDARIES {
        let r = solve_lambda_p(&op(b, 32), &w(STANDARD), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, RootStatus::UniqueRoot, "{b}");
        let lambda_min = if b == Boundary::DirichletType {
            0.0
        } else {
            1e-3
        };
        assert_eq!(r.sign_changes(lambda_min, 1e-8), 1, "{b}: {:?}", r.curve);
        assert!(r.mu_at_root.unwrap().abs() < 1e-8);
        let [lo, hi] = r.bracket.unwrap();
        let o = op(b, 32);
        assert!(mu(&o, &w(STANDARD), lo) < -1e-8 && mu(&o, &w(STANDARD), hi) > 1e-8);
    }
}

#[test]
fn kpp_verdicts_follow_the_sign_of_mu() {
    let o = op(Boundary::NeumannType, 24);
    let weight = w(STANDARD);
    let nl = Nonlinearity::logistic(weight.clone(), 1.5, o.grid()).unwrap();
    for lambda in [0.1, 0.6, 1.5] {
        let m = mu(&o, &weight, lambda);
        let out = find_periodic_solution(&o, &nl, lambda, &KppOptions::default()).unwrap();
        match out.verdict {
            Verdict::Persistence => assert!(m > 0.0, "λ={lambda}: μ={m}"),
            Verdict::Extinction => assert!(m < 0.0, "λ={lambda}: μ={m}"),
            // decay or growth too slow to resolve within the period budget
            Verdict::Undecided => assert!(m.abs() * 500.0 < 20.0, "λ={lambda}: μ={m}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_is_even(profile in prop_oneof![Just(Profile::Parabolic), Just(Profile::Cosine), Just(Profile::Indicator)],
                      r in 0.1..3.0f64,
                      z in proptest::collection::vec(-4.0..4.0f64, 1..=2)) {
        let k = make_kernel(profile, r, z.len()).unwrap();
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        prop_assert_eq!(k.eval(&z), k.eval(&neg));
    }

    #[test]
    fn period_map_preserves_positivity(b in boundary(), a in -1.0..1.0f64, c in -1.0..1.0f64,
                                       lambda in 0.0..3.0f64,
                                       u0 in proptest::collection::vec(0.0..1.0f64, 16)) {
        let o = op(b, 16);
        let out = propagate(&o, &w(&family(a, 0.5, c)), lambda, &u0, 0.0, 1.0, 64).unwrap();
        prop_assert!(out.last().iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn shift_law(b in boundary(), a in -1.0..1.0f64, c in -1.0..1.0f64, shift in -1.0..1.0f64, lambda in 0.1..2.0f64) {
        let o = op(b, 12);
        let base = w(&family(a, 0.5, c));
        let steps = Some(256);
        let phi = period_map(&o, &base, lambda, steps).unwrap().matrix;
        let shifted = period_map(&o, &base.shifted(shift), lambda, steps).unwrap().matrix;
        let expected = phi * (lambda * shift).exp();
        prop_assert!((shifted - &expected).amax() < 1e-9 * expected.amax().max(1.0));
    }

    #[test]
    fn mu_bounded_below_by_essential_sup(b in boundary(), a in -1.0..1.0f64, bc in -1.0..1.0f64,
                                         c in -1.0..1.0f64, lambda in 0.0..3.0f64) {
        let o = op(b, 24);
        let weight = w(&family(a, bc, c));
        let m = mu(&o, &weight, lambda);
        let (_, h_max) = essential_interval(&o, &weight, lambda, 64).unwrap();
        prop_assert!(m >= h_max - 1e-8, "μ = {}, ĥ_max = {}", m, h_max);
        let averaged = Weight::autonomous_field(&weight.time_average(o.grid(), 64).unwrap(), 1.0).unwrap();
        prop_assert!(m >= mu(&o, &averaged, lambda) - 1e-8);
    }

    #[test]
    fn mu_is_monotone_and_lipschitz_in_the_weight(b in boundary(), a in -1.0..1.0f64, c in -1.0..1.0f64,
                                                   lambda in 0.1..2.0f64, eps in 0.0..0.3f64) {
        let o = op(b, 24);
        let weight = w(&family(a, 0.7, c));
        let bumped = w(&format!("{} + {eps}*x*(1 + cos(2*pi*t/T))/2", family(a, 0.7, c)));
        let base = mu(&o, &weight, lambda);
        let up = mu(&o, &bumped, lambda);
        prop_assert!(base <= up + 1e-8);
        // ‖λ (m' − m)‖∞ ≤ λ ε
        prop_assert!(up - base <= lambda * eps + 1e-8);
    }

    #[test]
    fn mu_is_convex_in_lambda(b in boundary(), a in -1.0..1.0f64, c in -1.0..1.0f64,
                              l1 in 0.0..3.0f64, l2 in 0.0..3.0f64) {
        let o = op(b, 24);
        let weight = w(&family(a, 0.7, c));
        let mid = mu(&o, &weight, 0.5 * (l1 + l2));
        prop_assert!(mid <= 0.5 * (mu(&o, &weight, l1) + mu(&o, &weight, l2)) + 1e-8);
    }
}
