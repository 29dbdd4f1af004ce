use dissiped_core::matrix::*;
use dissiped_core::scenarios::{build_cuk, heat_exchanger_physical, CukParams, HeatExchangerParams};
use proptest::prelude::*;

#[derive(Clone, Copy, Debug)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn add(self, o: C64) -> C64 {
        C64 { re: self.re + o.re, im: self.im + o.im }
    }
    fn sub(self, o: C64) -> C64 {
        C64 { re: self.re - o.re, im: self.im - o.im }
    }
    fn mul(self, o: C64) -> C64 {
        C64 { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
    fn div(self, o: C64) -> C64 {
        let d = o.re * o.re + o.im * o.im;
        C64 { re: (self.re * o.re + self.im * o.im) / d, im: (self.im * o.re - self.re * o.im) / d }
    }
    fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Monic characteristic polynomial coefficients `[1, c1, …, cn]` by Faddeev–LeVerrier.
fn char_poly(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = vec![1.0];
    let mut m = Mat::identity(n);
    for k in 1..=n {
        let am = a * &m;
        let c = -am.trace() / k as f64;
        coeffs.push(c);
        m = &am + &Mat::identity(n).scale(c);
    }
    coeffs
}

/// Roots by Durand–Kerner iteration.
fn poly_roots(coeffs: &[f64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let eval = |z: C64| coeffs.iter().fold(C64 { re: 0.0, im: 0.0 }, |acc, &c| acc.mul(z).add(C64 { re: c, im: 0.0 }));
    let seed = C64 { re: 0.4, im: 0.9 };
    let mut roots: Vec<C64> = (0..n).scan(C64 { re: 1.0, im: 0.0 }, |p, _| {
        *p = p.mul(seed);
        Some(*p)
    })
    .collect();
    for _ in 0..2000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut den = C64 { re: 1.0, im: 0.0 };
            for j in 0..n {
                if i != j {
                    den = den.mul(roots[i].sub(roots[j]));
                }
            }
            let step = eval(roots[i]).div(den);
            roots[i] = roots[i].sub(step);
            delta = delta.max(step.abs());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

fn assert_same_spectrum(a: &Mat) {
    let scale = a.norm_inf();
    let roots: Vec<C64> = poly_roots(&char_poly(&a.scale(1.0 / scale)))
        .into_iter()
        .map(|r| C64 { re: r.re * scale, im: r.im * scale })
        .collect();
    let eig = eigenvalues(a).unwrap();
    assert_eq!(eig.len(), roots.len());
    for e in &eig {
        let nearest = roots.iter().map(|r| (r.re - e.re).hypot(r.im - e.im)).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-6 * scale, "eigenvalue {e} has no matching root (distance {nearest:e})");
    }
}

#[test]
fn cuk_target_matrix_is_hurwitz_by_characteristic_polynomial() {
    let b = build_cuk(&CukParams::default()).unwrap();
    let a = b.shifted.a0();
    assert_same_spectrum(a);
    let roots = poly_roots(&char_poly(&a.scale(1.0 / a.norm_inf())));
    assert!(roots.iter().all(|r| r.re < 0.0));
    assert!(spectral_abscissa(a).unwrap() < 0.0);
}

#[test]
fn companion_spectrum_matches_roots() {
    // (x+1)(x+2)(x²+2x+5)
    let a = Mat::from_rows(&[
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-10.0, -19.0, -15.0, -5.0],
    ])
    .unwrap();
    assert_same_spectrum(&a);
}

#[test]
fn cuk_dissipation_is_negative_semidefinite_by_rayleigh_sampling() {
    let b = build_cuk(&CukParams::default()).unwrap();
    let pa = b.shifted.p_mat() * b.shifted.a0();
    let s = (&pa + &pa.transpose()).scale(0.5);
    let top = max_eig_symmetric(&s).unwrap();
    assert!(top <= 1e-12 * s.norm_inf());
    let mut state = 0x2545F4914F6CDD1Du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..2000 {
        let v = ColVec::new((0..4).map(|_| next()).collect()).unwrap();
        let q = v.dot(&(&s * &v)) / v.dot(&v);
        assert!(q <= top + 1e-9 * s.norm_inf());
    }
}

#[test]
fn cuk_storage_matrix_is_positive_definite() {
    assert!(is_positive_definite(&CukParams::default().p_matrix()));
}

#[test]
fn heat_exchanger_solve_residual() {
    let p = HeatExchangerParams::default();
    let sys = heat_exchanger_physical(&p).unwrap();
    let a = sys.eval_a(&ColVec::from_slice(&[p.u_star]).unwrap()).unwrap();
    let rhs = ColVec::from_slice(&[p.e_temp * p.u_star, 0.0, 0.0, 0.0, 0.0, p.g]).unwrap();
    let x = solve_linear(&a, &rhs).unwrap();
    let res = (&(&a * &x) - &rhs).norm_inf();
    assert!(res <= 1e-9, "residual {res:e}");
}

fn square(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |d| Mat::new(n, n, d).unwrap())
}

fn sized_square() -> impl Strategy<Value = Mat> {
    (1usize..=8).prop_flat_map(square)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn solve_residual_on_well_conditioned(a in sized_square(), rhs in prop::collection::vec(-10.0f64..10.0, 8)) {
        let n = a.rows();
        // diagonal dominance keeps the condition number far below 1e6
        let a = &a + &Mat::identity(n).scale(n as f64 + 1.0);
        let b = ColVec::from_slice(&rhs[..n]).unwrap();
        let x = solve_linear(&a, &b).unwrap();
        let res = (&(&a * &x) - &b).norm_inf();
        prop_assert!(res <= 1e-10 * (1.0 + a.norm_inf() * x.norm_inf()));
    }
}

proptest! {
    #[test]
    fn gram_matrix_spectrum_is_nonnegative(a in sized_square()) {
        let g = &a.transpose() * &a;
        for e in symmetric_eigenvalues(&g).unwrap() {
            prop_assert!(e >= -1e-12);
        }
    }

    #[test]
    fn rank_is_transpose_invariant(
        rows in 2usize..7,
        cols in 2usize..7,
        r in 0usize..4,
        u in prop::collection::vec(-1.0f64..1.0, 36),
        v in prop::collection::vec(-1.0f64..1.0, 36),
    ) {
        let r = r.min(rows).min(cols);
        let a = if r == 0 {
            Mat::zeros(rows, cols)
        } else {
            let uu = Mat::new(rows, r, u[..rows * r].to_vec()).unwrap();
            let vv = Mat::new(r, cols, v[..r * cols].to_vec()).unwrap();
            &uu * &vv
        };
        let ra = rank(&a, DEFAULT_RANK_TOL);
        prop_assert_eq!(ra, rank(&a.transpose(), DEFAULT_RANK_TOL));
        prop_assert!(ra <= r);
    }

    #[test]
    fn rayleigh_quotient_bound(a in sized_square(), vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 100)) {
        let n = a.rows();
        let s = (&a + &a.transpose()).scale(0.5);
        let top = max_eig_symmetric(&s).unwrap();
        for v in vs {
            let v = ColVec::from_slice(&v[..n]).unwrap();
            let vv = v.dot(&v);
            if vv > 1e-12 {
                prop_assert!(top >= v.dot(&(&s * &v)) / vv - 1e-10);
            }
        }
    }

    #[test]
    fn eigenvalues_satisfy_backward_error(a in sized_square()) {
        let n = a.rows();
        let eig = eigenvalues(&a).unwrap();
        prop_assert_eq!(eig.len(), n);
        // every eigenvalue makes A − λI nearly singular
        for e in eig {
            let mut big = Mat::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    let d = if i == j { e.re } else { 0.0 };
                    big[(i, j)] = a[(i, j)] - d;
                    big[(n + i, n + j)] = a[(i, j)] - d;
                }
                big[(i, n + i)] = e.im;
                big[(n + i, i)] = -e.im;
            }
            prop_assert!(smallest_singular_value(&big) <= 1e-7 * a.norm_inf().max(1.0));
        }
    }
}
