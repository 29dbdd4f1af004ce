use dissiped_core::analysis::*;
use dissiped_core::matrix::{inverse, ColVec, Mat};
use dissiped_core::scenarios::{build_harmonic_oscillator, HeatExchangerParams, ScenarioName};
use dissiped_core::system::{InputAffineSystem, LyapunovSpec};
use proptest::prelude::*;

fn mat(n: usize, r: f64) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-r..r, n * n).prop_map(move |d| Mat::new(n, n, d).unwrap())
}

fn skew(m: &Mat) -> Mat {
    (m - &m.transpose()).scale(0.5)
}

fn gram(m: &Mat) -> Mat {
    m * &m.transpose()
}

/// `A(u) = K₀ + uK₁ − (D₀ + uD₁)` on `u ∈ [0, 1]`, dissipative for `P = I`.
fn dissipative_system() -> impl Strategy<Value = InputAffineSystem> {
    (1usize..=5).prop_flat_map(|n| {
        (mat(n, 1.0), mat(n, 1.0), mat(n, 1.0), mat(n, 1.0)).prop_map(move |(k0, k1, g0, g1)| {
            let a0 = &skew(&k0) - &gram(&g0);
            let a1 = &skew(&k1) - &gram(&g1);
            let c = Mat::identity(n);
            InputAffineSystem::new(a0, vec![a1], ColVec::zeros(n), vec![ColVec::zeros(n)], c, Mat::identity(n), vec![[0.0, 1.0]])
                .unwrap()
        })
    })
}

fn generic_system() -> impl Strategy<Value = InputAffineSystem> {
    (1usize..=5).prop_flat_map(|n| {
        (mat(n, 1.0), mat(n, 1.0), mat(n, 1.0), mat(n, 1.0)).prop_map(move |(a0, a1, a2, l)| {
            let p = &gram(&l) + &Mat::identity(n);
            InputAffineSystem::new(a0, vec![a1, a2], ColVec::zeros(n), vec![ColVec::zeros(n); 2], Mat::identity(n), p, vec![[-1.0, 1.0], [0.0, 2.0]])
                .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn dissipative_construction_passes(sys in dissipative_system()) {
        let r = check_dissipativity(&sys, 21, DEFAULT_DISSIPATIVITY_TOL).unwrap();
        prop_assert!(r.pass, "worst {} at {:?}", r.worst_eig, r.worst_input);
    }

    #[test]
    fn grid_never_beats_the_vertices(sys in generic_system()) {
        // λmax of a symmetric matrix is convex along affine families
        let r = check_dissipativity(&sys, 15, DEFAULT_DISSIPATIVITY_TOL).unwrap();
        prop_assert!(r.worst_eig <= r.vertex_worst_eig + 1e-10 * r.scale.max(1.0));
    }

    #[test]
    fn detectability_is_similarity_invariant(
        eigs in prop::collection::vec(prop_oneof![-3.0f64..-0.1, 0.1f64..3.0], 2..6),
        mask in prop::collection::vec(any::<bool>(), 6),
        t in mat(6, 0.3),
    ) {
        let n = eigs.len();
        let a = Mat::from_diag(&eigs).unwrap();
        let observed: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let expected = (0..n).all(|i| eigs[i] < 0.0 || mask[i]);
        let mut rows = vec![vec![0.0; n]; observed.len().max(1)];
        for (r, &i) in observed.iter().enumerate() {
            rows[r][i] = 1.0;
        }
        let c = Mat::from_rows(&rows).unwrap();
        prop_assert_eq!(check_detectability(&c, &a, DEFAULT_HAUTUS_TOL).unwrap().pass, expected);
        // T = I + small perturbation stays well conditioned
        let mut tt = Mat::identity(n);
        for i in 0..n {
            for j in 0..n {
                tt[(i, j)] += t[(i, j)] / n as f64;
            }
        }
        let ti = inverse(&tt).unwrap();
        let a2 = &(&tt * &a) * &ti;
        let c2 = &c * &ti;
        prop_assert_eq!(check_detectability(&c2, &a2, DEFAULT_HAUTUS_TOL).unwrap().pass, expected);
    }

    #[test]
    fn full_output_is_always_detectable(a in (1usize..=6).prop_flat_map(|n| mat(n, 5.0))) {
        let n = a.rows();
        prop_assert!(check_detectability(&Mat::identity(n), &a, DEFAULT_HAUTUS_TOL).unwrap().pass);
    }

    #[test]
    fn adaptive_gain_is_positive_and_bounds_the_correction(
        xhat in prop::collection::vec(-1e3f64..1e3, 4),
        yerr in -1e3f64..1e3,
    ) {
        let b = ScenarioName::Cuk.build().unwrap();
        let sys = &b.shifted;
        let ag = AdaptiveGain::new(b.lyapunov.clone(), sys.c(), sys.p_mat()).unwrap();
        let a = ag.eval(&xhat, &[yerr]);
        prop_assert!(a > 0.0 && a.is_finite());
        let cn = ag.correction_norm(&xhat, &[yerr]);
        prop_assert!(cn <= ag.correction_bound(&xhat) * (1.0 + 1e-12));
        let free = adaptive_gain(&b.lyapunov, &ColVec::new(xhat.clone()).unwrap(), &ColVec::from_slice(&[yerr]).unwrap(), sys.c(), sys.p_mat()).unwrap();
        prop_assert!((free - a).abs() <= 1e-12 * a);
        // continuity
        let mut nudged = xhat.clone();
        nudged[0] += 1e-9;
        let a2 = ag.eval(&nudged, &[yerr + 1e-9]);
        prop_assert!((a2 - a).abs() <= 1e-6 * a);
    }
}

#[test]
fn oscillator_has_no_singular_inputs() {
    let b = build_harmonic_oscillator().unwrap();
    let scan = scan_singular_inputs(&b.shifted, 200).unwrap();
    assert!(scan.candidates.is_empty(), "{:?}", scan.candidates);
    let o = observability_matrix(b.shifted.c(), b.shifted.a0()).unwrap();
    assert_eq!(o.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
}

#[test]
fn oscillator_energy_is_not_strict() {
    let b = build_harmonic_oscillator().unwrap();
    let k = CompactBox::symmetric(2, 1.0).unwrap();
    let w = LyapunovSpec::quadratic(Mat::identity(2), 1.0).unwrap();
    match estimate_alpha0(&b.shifted, &b.law, &w, &k, &k, 500, 0) {
        Err(AnalysisError::NotStrictLyapunov { m1 }) => assert!(m1 >= STRICT_LYAPUNOV_THRESHOLD),
        other => panic!("expected NotStrictLyapunov, got {other:?}"),
    }
    // analyze records the failure instead of erroring
    let report = analyze(&b.shifted, Some(&b.alpha0_setup(500)), &AnalysisOptions::default()).unwrap();
    assert!(report.alpha0.is_none());
    assert!(report.assumptions_hold());
}

#[test]
fn cuk_singular_inputs_sit_at_the_box_edges() {
    let b = ScenarioName::Cuk.build().unwrap();
    let us = b.equilibrium.u_star[0];
    let scan = scan_singular_inputs(&b.shifted, 200).unwrap();
    let found = scan.singular_inputs();
    for target in [-us, 1.0 - us] {
        assert!(found.iter().any(|u| (u - target).abs() <= 1e-9), "{target} not in {found:?}");
    }
}

#[test]
fn heat_exchanger_scan_matches_closed_form() {
    let p = HeatExchangerParams::default();
    let b = ScenarioName::HeatExchanger.build().unwrap();
    let scan = scan_singular_inputs(&b.shifted, 200).unwrap();
    assert_eq!(scan.metric, ScanMetric::Determinant);
    let root = p.singular_flow() - p.u_star;
    for &(ubar, det) in &scan.points {
        let u = ubar + p.u_star;
        // closed form is for the stack [CA⁵; …; C]; the top-down stack flips the sign
        let want = -(p.k.powi(3) * p.gamma2.powi(6) * (p.k * p.k - p.gamma1 * p.gamma2 * u).powi(3));
        if (ubar - root).abs() > 1e-6 {
            assert!((det - want).abs() <= 1e-6 * want.abs(), "u = {u}: {det:e} vs {want:e}");
        }
    }
    assert_eq!(scan.candidates.len(), 1);
    assert!((scan.candidates[0].u - root).abs() <= 1e-9);
    assert_eq!(scan.candidates[0].multiplicity, Some(3));
}

#[test]
fn heat_exchanger_at_singular_flow_is_detectable_but_unobservable() {
    let p = HeatExchangerParams::default();
    let sys = dissiped_core::scenarios::heat_exchanger_physical(&p).unwrap();
    let a = sys.eval_a(&ColVec::from_slice(&[p.singular_flow()]).unwrap()).unwrap();
    assert!(observability_rank(sys.c(), &a).unwrap() < 6);
    assert!(check_detectability(sys.c(), &a, DEFAULT_HAUTUS_TOL).unwrap().pass);
    let bad = HeatExchangerParams { u_star: p.singular_flow(), ..p };
    assert!(dissiped_core::scenarios::build_heat_exchanger(&bad).is_err());
}

#[test]
fn every_scenario_satisfies_the_assumptions() {
    for name in ScenarioName::ALL {
        let b = name.build().unwrap();
        let r = analyze(&b.shifted, None, &AnalysisOptions::default()).unwrap();
        assert!(r.dissipativity.pass, "{name}: {}", r.dissipativity.worst_eig);
        assert!(r.detectability.pass, "{name}");
        assert_eq!(r.observability.rank, b.shifted.n(), "{name}");
    }
}

#[test]
fn alpha0_is_reproducible_for_a_fixed_seed() {
    let b = ScenarioName::Cuk.build().unwrap();
    let s = b.alpha0_setup(300);
    let k1 = CompactBox::symmetric(4, 1.0).unwrap();
    let run = || estimate_alpha0(&b.shifted, &s.law, &s.lyapunov, &k1, &k1, 300, 7).unwrap();
    let (a, c) = (run(), run());
    assert_eq!(a.alpha0.to_bits(), c.alpha0.to_bits());
    assert!(a.alpha0 > 0.0 && a.m1 < STRICT_LYAPUNOV_THRESHOLD);
    let recomputed = -a.m1 / (a.r * a.m2 * a.pinv_norm * a.c_norm * a.c_norm);
    assert!((recomputed - a.alpha0).abs() <= 1e-12 * a.alpha0);
    // W = xᵀPx over the unit box peaks at a vertex, at trace(P)
    let trace: f64 = (0..4).map(|i| b.shifted.p_mat()[(i, i)]).sum();
    assert!((a.rho - RHO_INFLATION * trace).abs() <= 1e-9 * a.rho);
}
