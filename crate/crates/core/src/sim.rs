//! Fixed-step classical Runge–Kutta integration and trajectory recording.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{self, ColVec};
use crate::observer::{quad_form, ClosedLoopSystem, ObserverError};
use crate::system::Equilibrium;

/// Any state component beyond this magnitude counts as a blow-up.
pub const BLOWUP_BOUND: f64 = 1e12;
/// Upper bound on `t_final / h`.
pub const MAX_STEPS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state became non-finite or exceeded 1e12 at t = {time} (component {component})")]
    NonFiniteState { time: f64, component: usize },
    #[error("unknown metric: {0}")]
    UnknownMetric(String),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_final: f64,
    pub h: f64,
    /// Keep every `record_every`-th step; the final step is always kept.
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(t_final: f64, h: f64, record_every: usize) -> Result<Self> {
        let cfg = Self { t_final, h, record_every };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be positive and finite");
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("step must be positive and finite");
        }
        if self.h > self.t_final {
            return bad("step exceeds t_final");
        }
        if self.t_final / self.h > MAX_STEPS {
            return bad("t_final / h exceeds 1e9 steps");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        Ok(())
    }

    /// Number of steps; the horizon is rounded up to a whole number of steps.
    pub fn steps(&self) -> usize {
        ((self.t_final / self.h) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Integrates the autonomous system `ż = f(z)` with classical RK4.
///
/// `on_step(k, t, z)` is called for `k = 0` (initial state) and after every step.
/// The first `monitored` components are checked against [`BLOWUP_BOUND`].
pub fn rk4<F, S>(mut f: F, z0: &[f64], cfg: &SimConfig, monitored: usize, mut on_step: S) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
    S: FnMut(usize, f64, &[f64]),
{
    cfg.validate()?;
    let d = z0.len();
    let monitored = monitored.min(d);
    if let Some(i) = z0[..monitored].iter().position(|v| !v.is_finite() || v.abs() > BLOWUP_BOUND) {
        return Err(SimError::NonFiniteState { time: 0.0, component: i });
    }
    let h = cfg.h;
    let mut z = z0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    on_step(0, 0.0, &z);
    for step in 1..=cfg.steps() {
        f(&z, &mut k1);
        for i in 0..d {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = z[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..d {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = step as f64 * h;
        if let Some(i) = z[..monitored].iter().position(|v| !v.is_finite() || v.abs() > BLOWUP_BOUND) {
            return Err(SimError::NonFiniteState { time: t, component: i });
        }
        on_step(step, t, &z);
    }
    Ok(z)
}

/// Recorded closed-loop run. States are in deviation coordinates `(x̄, x̂̄)`; inputs and
/// outputs are physical (`u* + λ(x̂̄)` and `C(x̄ + x*)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub times: Vec<f64>,
    pub states: Vec<ColVec>,
    pub inputs: Vec<ColVec>,
    pub outputs: Vec<ColVec>,
    /// `V(ε) = εᵀPε`.
    pub v_series: Vec<f64>,
    pub gain_series: Vec<f64>,
    /// Running integral of `2α|Cε|²`.
    pub dissipation: Vec<f64>,
    pub x_star: ColVec,
    pub u_star: ColVec,
    /// Largest `V(ε(tₖ₊₁)) − V(ε(tₖ))` over every integration step, recorded or not.
    pub max_step_v_increase: f64,
    /// Largest `(ΔV + ∫2α|Cε|²)/h` over every integration step.
    pub max_step_decay_residual: f64,
    /// Adaptive gains only: largest `|αP⁻¹CᵀCε| − max{W,1}/(2(1+|∇W|))` over every step.
    pub max_correction_excess: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `ε = x̂ − x` at sample `i`.
    pub fn epsilon(&self, i: usize) -> Vec<f64> {
        let s = self.states[i].as_slice();
        (0..self.n).map(|j| s[self.n + j] - s[j]).collect()
    }

    /// Plant state in physical coordinates at sample `i`.
    pub fn plant_state(&self, i: usize) -> Vec<f64> {
        self.states[i].as_slice()[..self.n].iter().zip(self.x_star.as_slice()).map(|(a, b)| a + b).collect()
    }

    /// Observer state in physical coordinates at sample `i`.
    pub fn observer_state(&self, i: usize) -> Vec<f64> {
        self.states[i].as_slice()[self.n..].iter().zip(self.x_star.as_slice()).map(|(a, b)| a + b).collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| matrix::norm2(&self.epsilon(i))).collect()
    }

    /// Index of the last sample with `t ≤ time`.
    pub fn index_at(&self, time: f64) -> usize {
        self.times.partition_point(|&t| t <= time * (1.0 + 1e-12)).saturating_sub(1)
    }
}

/// Simulates `cls` from `z0 = (x̄, x̂̄)`; inputs and outputs are reported around `eq`.
pub fn integrate_around(cls: &ClosedLoopSystem, eq: &Equilibrium, z0: &ColVec, cfg: &SimConfig) -> Result<Trajectory> {
    let n = cls.n();
    let sys = cls.system();
    let (m, p) = (sys.m(), sys.p());
    if z0.dim() != 2 * n {
        return Err(SimError::DimensionMismatch(format!("z0 has length {}, expected {}", z0.dim(), 2 * n)));
    }
    if eq.x_star.dim() != n || eq.u_star.dim() != m {
        return Err(SimError::DimensionMismatch("operating point does not match the system".into()));
    }
    let pm = sys.p_mat();
    let c = sys.c();
    let cx_star = c.mul_vec(&eq.x_star).map_err(ObserverError::from)?;
    let adaptive = cls.adaptive_gain();

    let mut traj = Trajectory {
        n,
        m,
        p,
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        v_series: Vec::new(),
        gain_series: Vec::new(),
        dissipation: Vec::new(),
        x_star: eq.x_star.clone(),
        u_star: eq.u_star.clone(),
        max_step_v_increase: f64::NEG_INFINITY,
        max_step_decay_residual: f64::NEG_INFINITY,
        max_correction_excess: adaptive.map(|_| f64::NEG_INFINITY),
    };

    let mut scratch = cls.scratch();
    let mut probe = cls.scratch();
    let mut probe_out = vec![0.0; 2 * n];
    let mut u = vec![0.0; m];
    let mut y = vec![0.0; p];
    let mut eps = vec![0.0; n];
    let mut prev: Option<(f64, f64)> = None;
    let steps = cfg.steps();

    let mut aug0 = z0.as_slice().to_vec();
    aug0.push(0.0);
    let field = |z: &[f64], out: &mut [f64]| {
        let info = cls.field_into(&z[..2 * n], &mut out[..2 * n], &mut scratch);
        out[2 * n] = 2.0 * info.alpha * info.output_error_sq;
    };
    let record = |k: usize, t: f64, z: &[f64]| {
        for j in 0..n {
            eps[j] = z[n + j] - z[j];
        }
        let v = quad_form(pm, &eps);
        let q = z[2 * n];
        if let Some((v_prev, q_prev)) = prev {
            traj.max_step_v_increase = traj.max_step_v_increase.max(v - v_prev);
            traj.max_step_decay_residual = traj.max_step_decay_residual.max((v - v_prev + q - q_prev) / cfg.h);
        }
        prev = Some((v, q));
        let keep = k.is_multiple_of(cfg.record_every) || k == steps;
        if !keep && adaptive.is_none() {
            return;
        }
        let info = cls.field_into(&z[..2 * n], &mut probe_out, &mut probe);
        if let (Some(g), Some(excess)) = (adaptive, traj.max_correction_excess.as_mut()) {
            *excess = excess.max(info.correction_norm - g.correction_bound(&z[n..2 * n]));
        }
        if !keep {
            return;
        }
        cls.law().eval_into(&z[n..2 * n], &mut u);
        c.mul_slice_into(&z[..n], &mut y);
        traj.times.push(t);
        traj.states.push(ColVec::new(z[..2 * n].to_vec()).expect("finite state"));
        traj.inputs.push(ColVec::new(u.iter().zip(eq.u_star.as_slice()).map(|(a, b)| a + b).collect()).expect("finite"));
        traj.outputs.push(ColVec::new(y.iter().zip(cx_star.as_slice()).map(|(a, b)| a + b).collect()).expect("finite"));
        traj.v_series.push(v);
        traj.gain_series.push(info.alpha);
        traj.dissipation.push(q);
    };
    rk4(field, &aug0, cfg, 2 * n, record)?;
    Ok(traj)
}

/// Simulates `cls` from `z0` with the origin as operating point.
pub fn integrate(cls: &ClosedLoopSystem, z0: &ColVec, cfg: &SimConfig) -> Result<Trajectory> {
    let sys = cls.system();
    integrate_around(cls, &Equilibrium::origin(sys.n(), sys.m()), z0, cfg)
}

/// Run of the `(x̂, ε)` form of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorFormTrajectory {
    pub times: Vec<f64>,
    pub xhat: Vec<ColVec>,
    pub eps: Vec<ColVec>,
}

/// Simulates `(x̂̇, ε̇)` directly from `w0 = (x̂, ε)`.
pub fn integrate_error_form(cls: &ClosedLoopSystem, w0: &ColVec, cfg: &SimConfig) -> Result<ErrorFormTrajectory> {
    let n = cls.n();
    if w0.dim() != 2 * n {
        return Err(SimError::DimensionMismatch(format!("w0 has length {}, expected {}", w0.dim(), 2 * n)));
    }
    let mut scratch = cls.scratch();
    let steps = cfg.steps();
    let mut out = ErrorFormTrajectory { times: Vec::new(), xhat: Vec::new(), eps: Vec::new() };
    rk4(
        |w, o| {
            cls.error_field_into(w, o, &mut scratch);
        },
        w0.as_slice(),
        cfg,
        2 * n,
        |k, t, w| {
            if k % cfg.record_every == 0 || k == steps {
                out.times.push(t);
                out.xhat.push(ColVec::new(w[..n].to_vec()).expect("finite"));
                out.eps.push(ColVec::new(w[n..].to_vec()).expect("finite"));
            }
        },
    )?;
    Ok(out)
}

/// Scalar series that can be pulled out of a [`Trajectory`]. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ErrorNorm,
    LyapunovV,
    Alpha,
    Output(usize),
    Input(usize),
    /// Physical plant state component.
    PlantState(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::ErrorNorm => write!(f, "error_norm"),
            Metric::LyapunovV => write!(f, "lyapunov_v"),
            Metric::Alpha => write!(f, "alpha"),
            Metric::Output(i) => write!(f, "output_k({i})"),
            Metric::Input(i) => write!(f, "input_k({i})"),
            Metric::PlantState(i) => write!(f, "state_k({i})"),
        }
    }
}

impl FromStr for Metric {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || SimError::UnknownMetric(s.to_string());
        match s {
            "error_norm" => return Ok(Metric::ErrorNorm),
            "lyapunov_v" => return Ok(Metric::LyapunovV),
            "alpha" => return Ok(Metric::Alpha),
            _ => {}
        }
        let (name, rest) = s.split_once("_k(").ok_or_else(unknown)?;
        let idx: usize = rest.strip_suffix(')').and_then(|i| i.parse().ok()).ok_or_else(unknown)?;
        match name {
            "output" => Ok(Metric::Output(idx)),
            "input" => Ok(Metric::Input(idx)),
            "state" => Ok(Metric::PlantState(idx)),
            _ => Err(unknown()),
        }
    }
}

/// Series for `metric`, aligned with `traj.times`.
pub fn extract_metric(traj: &Trajectory, metric: Metric) -> Result<Vec<f64>> {
    let check = |i: usize, len: usize| {
        if i == 0 || i > len {
            Err(SimError::UnknownMetric(format!("{metric}: index out of range 1..={len}")))
        } else {
            Ok(i - 1)
        }
    };
    Ok(match metric {
        Metric::ErrorNorm => traj.error_norms(),
        Metric::LyapunovV => traj.v_series.clone(),
        Metric::Alpha => traj.gain_series.clone(),
        Metric::Output(i) => {
            let k = check(i, traj.p)?;
            traj.outputs.iter().map(|y| y[k]).collect()
        }
        Metric::Input(i) => {
            let k = check(i, traj.m)?;
            traj.inputs.iter().map(|u| u[k]).collect()
        }
        Metric::PlantState(i) => {
            let k = check(i, traj.n)?;
            (0..traj.len()).map(|j| traj.states[j][k] + traj.x_star[k]).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay_matches_exponential() {
        let cfg = SimConfig::new(1.0, 0.01, 1).unwrap();
        let z = rk4(|z, o| o[0] = -z[0], &[1.0], &cfg, 1, |_, _, _| {}).unwrap();
        assert!((z[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 0.1, 1).is_err());
        assert!(SimConfig::new(1.0, 2.0, 1).is_err());
        assert!(SimConfig::new(1.0, 1e-10, 1).is_err());
        assert!(SimConfig::new(1.0, 0.1, 0).is_err());
        assert_eq!(SimConfig::new(1.0, 0.1, 1).unwrap().steps(), 10);
        assert_eq!(SimConfig::new(0.5, 1e-6, 100).unwrap().steps(), 500_000);
    }

    #[test]
    fn blowup_is_reported_with_time() {
        let cfg = SimConfig::new(10.0, 0.01, 1).unwrap();
        let err = rk4(|z, o| o[0] = z[0] * z[0], &[1.0], &cfg, 1, |_, _, _| {}).unwrap_err();
        match err {
            SimError::NonFiniteState { time, component } => {
                assert_eq!(component, 0);
                assert!(time > 0.9 && time < 1.1, "blow-up near t = 1, got {time}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::ErrorNorm, Metric::LyapunovV, Metric::Alpha, Metric::Output(2), Metric::Input(1), Metric::PlantState(4)] {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
        assert!(matches!("bogus".parse::<Metric>(), Err(SimError::UnknownMetric(_))));
        assert!("output_k(x)".parse::<Metric>().is_err());
    }
}
