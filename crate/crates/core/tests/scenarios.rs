use dissiped_core::analysis::{check_detectability, check_dissipativity, DEFAULT_DISSIPATIVITY_TOL, DEFAULT_HAUTUS_TOL};
use dissiped_core::matrix::{is_positive_definite, ColVec};
use dissiped_core::scenarios::{build_cuk, CukParams, ScenarioError, ScenarioFile};
use dissiped_core::system::FeedbackLaw;
use dissiped_core::{GainPolicy, ScenarioName};
use proptest::prelude::*;

#[test]
fn bundles_are_consistent() {
    for name in ScenarioName::ALL {
        let b = name.build().unwrap();
        let n = b.shifted.n();
        assert_eq!(b.z0.dim(), 2 * n, "{name}");
        assert!(is_positive_definite(b.shifted.p_mat()), "{name}");
        b.law.validate_for(&b.shifted).unwrap();
        assert!(check_dissipativity(&b.shifted, 101, DEFAULT_DISSIPATIVITY_TOL).unwrap().pass, "{name}");
        assert!(check_detectability(b.shifted.c(), b.shifted.a0(), DEFAULT_HAUTUS_TOL).unwrap().pass, "{name}");
        assert!(b.equilibrium.residual <= 1e-9 * b.equilibrium.scale, "{name}");
        assert!(b.default_alphas.windows(2).all(|w| w[0] < w[1]), "{name}");
        // the shifted box contains the origin
        for &[lo, hi] in b.shifted.input_box() {
            assert!(lo < 0.0 && 0.0 < hi, "{name}");
        }
        assert_eq!(name.to_string().parse::<ScenarioName>().unwrap(), name);
    }
    assert!("boost".parse::<ScenarioName>().is_err());
}

#[test]
fn scenario_file_round_trips() {
    for name in ScenarioName::ALL {
        let b = name.build().unwrap();
        let file = b.to_file(GainPolicy::constant(b.default_alphas[0]).unwrap());
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: ScenarioFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.operating_point().x_star, b.equilibrium.x_star);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let bad = CukParams { r_load: -1.0, ..CukParams::default() };
    assert!(matches!(build_cuk(&bad), Err(ScenarioError::InvalidParams(_))));
}

fn admissible(name: ScenarioName, xs: &[Vec<f64>]) -> Result<(), TestCaseError> {
    let b = name.build().unwrap();
    let FeedbackLaw::LinearSaturated { .. } = &b.law else {
        return Err(TestCaseError::fail("expected a saturated law"));
    };
    let us = b.equilibrium.u_star[0];
    let [lo, hi] = b.physical.input_box()[0];
    for x in xs {
        let u = b.law.eval(&ColVec::from_slice(&x[..b.shifted.n()]).unwrap()).unwrap()[0] + us;
        prop_assert!(lo <= u && u <= hi, "{} outside [{lo}, {hi}]", u);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cuk_feedback_is_admissible(xs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1000)) {
        admissible(ScenarioName::Cuk, &xs)?;
    }

    #[test]
    fn heat_exchanger_feedback_is_admissible(xs in prop::collection::vec(prop::collection::vec(-500.0f64..500.0, 6), 1000)) {
        admissible(ScenarioName::HeatExchanger, &xs)?;
    }
}
