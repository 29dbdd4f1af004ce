use dissiped_core::matrix::ColVec;
use dissiped_core::observer::lyapunov_v;
use dissiped_core::sim::{extract_metric, integrate, integrate_error_form, rk4, Metric, SimConfig};
use dissiped_core::{GainPolicy, ScenarioName};
use proptest::prelude::*;

fn final_state(name: ScenarioName, alpha: f64, t: f64, h: f64) -> Vec<f64> {
    let b = name.build().unwrap();
    let cfg = SimConfig::new(t, h, usize::MAX).unwrap();
    let traj = b.simulate(GainPolicy::constant(alpha).unwrap(), &cfg).unwrap();
    traj.states.last().unwrap().as_slice().to_vec()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn runs_are_bitwise_deterministic() {
    let b = ScenarioName::Cuk.build().unwrap();
    let cfg = SimConfig::new(5e-3, 1e-6, 37).unwrap();
    let run = || b.simulate(GainPolicy::constant(10.0).unwrap(), &cfg).unwrap();
    let (x, y) = (run(), run());
    assert_eq!(x.len(), y.len());
    for (a, c) in x.states.iter().zip(&y.states) {
        for (p, q) in a.as_slice().iter().zip(c.as_slice()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
    assert_eq!(x.times.last(), Some(&5e-3));
}

#[test]
fn oscillator_loop_converges_at_fourth_order() {
    let reference = final_state(ScenarioName::HarmonicOscillator, 1.0, 2.0, 0.02 / 16.0);
    let e1 = dist(&final_state(ScenarioName::HarmonicOscillator, 1.0, 2.0, 0.02), &reference);
    let e2 = dist(&final_state(ScenarioName::HarmonicOscillator, 1.0, 2.0, 0.01), &reference);
    let ratio = e1 / e2;
    assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
}

#[test]
fn saturated_loop_still_converges() {
    // the clamp makes the field only Lipschitz, so the order drops but halving h still helps
    let reference = final_state(ScenarioName::HeatExchanger, 2e-2, 50.0, 0.1 / 16.0);
    let e1 = dist(&final_state(ScenarioName::HeatExchanger, 2e-2, 50.0, 0.1), &reference);
    let e2 = dist(&final_state(ScenarioName::HeatExchanger, 2e-2, 50.0, 0.05), &reference);
    assert!(e1 / e2 >= 2.0, "ratio {}", e1 / e2);
}

#[test]
fn recording_keeps_first_and_last_sample() {
    let b = ScenarioName::HarmonicOscillator.build().unwrap();
    let cfg = SimConfig::new(1.0, 1e-2, 7).unwrap();
    let traj = b.simulate(GainPolicy::constant(1.0).unwrap(), &cfg).unwrap();
    assert_eq!(traj.times[0], 0.0);
    assert!((traj.times.last().unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(traj.len(), 100 / 7 + 2);
}

#[test]
fn metrics_agree_with_their_definitions() {
    let b = ScenarioName::Cuk.build().unwrap();
    let cfg = SimConfig::new(2e-3, 1e-6, 20).unwrap();
    let traj = b.simulate(GainPolicy::constant(100.0).unwrap(), &cfg).unwrap();
    let v4 = extract_metric(&traj, "state_k(4)".parse().unwrap()).unwrap();
    let out = b.output_transform.series(&traj);
    for (a, c) in v4.iter().zip(&out) {
        assert!((a * b.output_transform.scale - c).abs() <= 1e-12 * c.abs());
    }
    let v = extract_metric(&traj, Metric::LyapunovV).unwrap();
    for (i, vi) in v.iter().enumerate() {
        let want = lyapunov_v(b.shifted.p_mat(), &ColVec::new(traj.epsilon(i)).unwrap()).unwrap();
        assert!((vi - want).abs() <= 1e-12 * want.max(1e-300));
    }
    let y = extract_metric(&traj, Metric::Output(1)).unwrap();
    let x2 = extract_metric(&traj, Metric::PlantState(2)).unwrap();
    assert_eq!(y, x2);
    for s in ["error_norm", "lyapunov_v", "alpha", "output_k(1)", "input_k(1)", "state_k(3)"] {
        assert_eq!(s.parse::<Metric>().unwrap().to_string(), s);
    }
    assert!(extract_metric(&traj, Metric::PlantState(5)).is_err());
    assert!("output_k(x)".parse::<Metric>().is_err());
}

#[test]
fn error_form_matches_state_form() {
    let b = ScenarioName::HeatExchanger.build().unwrap();
    let cls = b.closed_loop(GainPolicy::constant(2e-2).unwrap()).unwrap();
    let cfg = SimConfig::new(20.0, 0.05, 40).unwrap();
    let traj = integrate(&cls, &b.z0, &cfg).unwrap();
    let n = 6;
    let z = b.z0.as_slice();
    let mut w0: Vec<f64> = z[n..].to_vec();
    w0.extend((0..n).map(|i| z[n + i] - z[i]));
    let ef = integrate_error_form(&cls, &ColVec::new(w0).unwrap(), &cfg).unwrap();
    let scale = b.equilibrium.x_star.norm_inf();
    for i in 0..traj.len() {
        assert!(dist(&traj.epsilon(i), ef.eps[i].as_slice()) <= 1e-8 * scale);
    }
}

proptest! {
    #[test]
    fn linear_decay_matches_exponential(k in 0.1f64..5.0, z0 in -10.0f64..10.0) {
        let cfg = SimConfig::new(1.0, 1e-3, 1).unwrap();
        let z = rk4(|z, o| o[0] = -k * z[0], &[z0], &cfg, 1, |_, _, _| {}).unwrap();
        prop_assert!((z[0] - z0 * (-k).exp()).abs() <= 1e-10 * z0.abs().max(1.0));
    }

    #[test]
    fn step_count_covers_the_horizon(t in 0.1f64..10.0, h in 1e-4f64..1e-1) {
        let cfg = SimConfig::new(t, h, 1).unwrap();
        let s = cfg.steps() as f64;
        prop_assert!(s * h >= t * (1.0 - 1e-9));
        prop_assert!((s - 1.0) * h < t);
    }
}

#[test]
fn blowup_is_reported() {
    let cfg = SimConfig::new(100.0, 1e-2, 1).unwrap();
    assert!(rk4(|z, o| o[0] = z[0] * z[0], &[1.0], &cfg, 1, |_, _, _| {}).is_err());
}
