use dissiped_core::matrix::{ColVec, Mat};
use dissiped_core::scenarios::{build_cuk, build_heat_exchanger, cuk_physical, CukParams, HeatExchangerParams};
use dissiped_core::system::{FeedbackLaw, InputAffineSystem};
use proptest::prelude::*;

fn mat(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |d| Mat::new(n, n, d).unwrap())
}

fn vec_of(n: usize) -> impl Strategy<Value = ColVec> {
    prop::collection::vec(-2.0f64..2.0, n).prop_map(|d| ColVec::new(d).unwrap())
}

/// Random system with `n` states and two inputs on `[-1, 1]²`.
fn system() -> impl Strategy<Value = InputAffineSystem> {
    (1usize..=5).prop_flat_map(|n| {
        (mat(n), mat(n), mat(n), vec_of(n), vec_of(n), vec_of(n)).prop_map(move |(a0, a1, a2, b0, b1, b2)| {
            let c = Mat::from_rows(&[{
                let mut r = vec![0.0; n];
                r[0] = 1.0;
                r
            }])
            .unwrap();
            InputAffineSystem::new(a0, vec![a1, a2], b0, vec![b1, b2], c, Mat::identity(n), vec![[-1.0, 1.0]; 2]).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn a_and_b_are_affine_in_u(sys in system(), u in prop::array::uniform2(-1.0f64..1.0), v in prop::array::uniform2(-1.0f64..1.0), t in 0.0f64..1.0) {
        let cu = ColVec::from_slice(&u).unwrap();
        let cv = ColVec::from_slice(&v).unwrap();
        let mix = ColVec::new(vec![t * u[0] + (1.0 - t) * v[0], t * u[1] + (1.0 - t) * v[1]]).unwrap();
        let a_mix = sys.eval_a(&mix).unwrap();
        let a_lin = &sys.eval_a(&cu).unwrap().scale(t) + &sys.eval_a(&cv).unwrap().scale(1.0 - t);
        prop_assert!((&a_mix - &a_lin).norm_inf() <= 1e-12);
        let b_mix = sys.eval_b(&mix).unwrap();
        let b_lin = &sys.eval_b(&cu).unwrap().scale(t) + &sys.eval_b(&cv).unwrap().scale(1.0 - t);
        prop_assert!((&b_mix - &b_lin).norm_inf() <= 1e-12);
    }

    #[test]
    fn shift_preserves_the_vector_field(sys in system(), u_star in prop::array::uniform2(-0.9f64..0.9), dx in prop::collection::vec(-1.0f64..1.0, 5), du in prop::array::uniform2(-0.1f64..0.1)) {
        let us = ColVec::from_slice(&u_star).unwrap();
        let Ok(eq) = sys.compute_equilibrium(&us) else { return Ok(()); };
        let shifted = sys.shift_to_error_coordinates(&eq).unwrap();
        let n = sys.n();
        let xbar = ColVec::from_slice(&dx[..n]).unwrap();
        let ubar = ColVec::from_slice(&du).unwrap();
        let f_shift = shifted.field(&xbar, &ubar).unwrap();
        let f_phys = sys.field(&(&xbar + &eq.x_star), &(&ubar + &us)).unwrap();
        let scale = 1.0 + eq.x_star.norm_inf() + sys.b0().norm_inf();
        prop_assert!((&f_shift - &f_phys).norm_inf() <= 1e-8 * scale * scale);
        // the shifted drift vanishes at the origin
        prop_assert!(shifted.b0().norm_inf() <= 1e-9 * scale * scale);
    }

    #[test]
    fn saturated_law_stays_admissible(g in prop::collection::vec(-1e3f64..1e3, 4), xs in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 4), 50)) {
        let sys = cuk_physical(&CukParams::default()).unwrap();
        let us = ColVec::from_slice(&[0.4]).unwrap();
        let law = FeedbackLaw::saturated_within(Mat::row_vector(&g).unwrap(), &us, sys.input_box(), 1e-3).unwrap();
        for x in xs {
            let u = law.eval(&ColVec::new(x).unwrap()).unwrap()[0] + 0.4;
            prop_assert!((0.0..=1.0).contains(&u));
        }
    }
}

#[test]
fn cuk_equilibrium_matches_closed_form() {
    let p = CukParams::default();
    let b = build_cuk(&p).unwrap();
    let x = &b.equilibrium.x_star;
    let want = [p.l1 * p.vd * p.vd / (p.r_load * p.e), p.c2 * (p.vd + p.e), -p.l3 * p.vd / p.r_load, -p.c4 * p.vd];
    for (i, w) in want.iter().enumerate() {
        assert!((x[i] - w).abs() <= 1e-9 * w.abs(), "x*[{i}] = {} vs {w}", x[i]);
    }
    assert!((b.equilibrium.u_star[0] - p.vd / (p.vd + p.e)).abs() <= 1e-15);
}

#[test]
fn cuk_input_direction_by_finite_difference() {
    let p = CukParams::default();
    let b = build_cuk(&p).unwrap();
    let us = p.u_star();
    let x = &b.equilibrium.x_star;
    let h = 1e-3;
    let f = |u: f64| b.physical.field(x, &ColVec::from_slice(&[u]).unwrap()).unwrap();
    let fd = (&f(us + h) - &f(us - h)).scale(0.5 / h);
    let got = &b.shifted.b_coeff()[0];
    for i in 0..4 {
        assert!((got[i] - fd[i]).abs() <= 1e-9 * fd.norm_inf(), "b[{i}] {} vs {}", got[i], fd[i]);
    }
    // quotient form of the same vector, (x2*/C2, x3*/L3 − x1*/L1, −x2*/C2, 0)
    let q = [x[1] / p.c2, x[2] / p.l3 - x[0] / p.l1, -x[1] / p.c2, 0.0];
    for i in 0..4 {
        assert!((got[i] - q[i]).abs() <= 1e-9 * q[i].abs().max(1.0));
    }
}

#[test]
fn heat_exchanger_input_direction_closed_form() {
    let p = HeatExchangerParams::default();
    let b = build_heat_exchanger(&p).unwrap();
    let x = &b.equilibrium.x_star;
    let want = [p.e_temp - p.gamma1 * x[0], p.gamma1 * (x[0] - x[1]), p.gamma1 * (x[1] - x[2]), 0.0, 0.0, 0.0];
    let got = &b.shifted.b_coeff()[0];
    for i in 0..6 {
        assert!((got[i] - want[i]).abs() <= 1e-9 * want[0].abs(), "b[{i}] {} vs {}", got[i], want[i]);
    }
    // temperatures at the operating point are physical
    assert!(x.as_slice().iter().all(|&t| t > 0.0));
}

#[test]
fn system_json_round_trip() {
    let b = build_heat_exchanger(&HeatExchangerParams::default()).unwrap();
    let text = serde_json::to_string(&b.shifted).unwrap();
    let back: InputAffineSystem = serde_json::from_str(&text).unwrap();
    assert_eq!(back, b.shifted);
    for key in ["\"A0\"", "\"A_coeff\"", "\"B0\"", "\"B_coeff\"", "\"C\"", "\"P\"", "\"input_box\""] {
        assert!(text.contains(key), "missing {key}");
    }
}
