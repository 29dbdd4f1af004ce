//! The three worked examples: harmonic oscillator, Ćuk converter, heat exchanger.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{Alpha0Setup, CompactBox};
use crate::matrix::{ColVec, LinalgError, Mat};
use crate::observer::{ClosedLoopSystem, GainPolicy, ObserverError};
use crate::sim::{integrate_around, SimConfig, SimError, Trajectory};
use crate::system::{Equilibrium, FeedbackLaw, InputAffineSystem, LyapunovSpec, SystemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("u* = {u_star} coincides with k²/(γ₁γ₂) = {singular}: the pair (C, A(u*)) is unobservable there")]
    DetectabilityViolated { u_star: f64, singular: f64 },
    #[error("unknown scenario '{0}' (expected harmonic-oscillator, cuk or heat-exchanger)")]
    UnknownScenario(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    HarmonicOscillator,
    Cuk,
    HeatExchanger,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [ScenarioName::HarmonicOscillator, ScenarioName::Cuk, ScenarioName::HeatExchanger];

    pub fn build(self) -> Result<ScenarioBundle> {
        match self {
            ScenarioName::HarmonicOscillator => build_harmonic_oscillator(),
            ScenarioName::Cuk => build_cuk(&CukParams::default()),
            ScenarioName::HeatExchanger => build_heat_exchanger(&HeatExchangerParams::default()),
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::HarmonicOscillator => "harmonic-oscillator",
            ScenarioName::Cuk => "cuk",
            ScenarioName::HeatExchanger => "heat-exchanger",
        })
    }
}

impl FromStr for ScenarioName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.to_string() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

/// The plotted quantity: `scale · x_state_index` in physical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTransform {
    pub label: String,
    /// 1-based plant state index.
    pub state_index: usize,
    pub scale: f64,
    /// The same quantity at the equilibrium.
    pub target: f64,
}

impl OutputTransform {
    pub fn series(&self, traj: &Trajectory) -> Vec<f64> {
        (0..traj.len()).map(|i| self.scale * traj.plant_state(i)[self.state_index - 1]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub name: ScenarioName,
    pub physical: InputAffineSystem,
    pub equilibrium: Equilibrium,
    pub shifted: InputAffineSystem,
    pub law: FeedbackLaw,
    /// `(x̄(0), x̂̄(0))` in deviation coordinates.
    pub z0: ColVec,
    pub default_alphas: Vec<f64>,
    pub default_simconfig: SimConfig,
    pub output_transform: OutputTransform,
    /// Lyapunov function of the state-feedback loop, for `α₀` and the adaptive gain.
    pub lyapunov: LyapunovSpec,
    pub notes: Vec<String>,
}

impl ScenarioBundle {
    pub fn closed_loop(&self, gain: GainPolicy) -> Result<ClosedLoopSystem> {
        Ok(ClosedLoopSystem::new(self.shifted.clone(), self.law.clone(), gain)?)
    }

    pub fn simulate(&self, gain: GainPolicy, cfg: &SimConfig) -> Result<Trajectory> {
        let cls = self.closed_loop(gain)?;
        Ok(integrate_around(&cls, &self.equilibrium, &self.z0, cfg)?)
    }

    /// `ε(0) = x̂̄(0) − x̄(0)`.
    pub fn initial_error(&self) -> Vec<f64> {
        let n = self.shifted.n();
        let z = self.z0.as_slice();
        (0..n).map(|i| z[n + i] - z[i]).collect()
    }

    pub fn alpha0_setup(&self, samples: usize) -> Alpha0Setup {
        alpha0_setup_from(&self.law, &self.lyapunov, &self.z0, samples)
    }

    /// Wrapper used by the JSON export.
    pub fn to_file(&self, gain: GainPolicy) -> ScenarioFile {
        ScenarioFile {
            name: Some(self.name.to_string()),
            system: self.shifted.clone(),
            feedback: self.law.clone(),
            gain,
            sim: self.default_simconfig,
            initial: self.z0.clone(),
            equilibrium: Some(self.equilibrium.clone()),
            lyapunov: Some(self.lyapunov.clone()),
        }
    }
}

/// Scenario JSON: `{"system", "feedback", "gain", "sim", "initial", ...}`. The system is
/// stored in deviation coordinates around `equilibrium`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: InputAffineSystem,
    pub feedback: FeedbackLaw,
    pub gain: GainPolicy,
    pub sim: SimConfig,
    pub initial: ColVec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Equilibrium>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSpec>,
}

impl ScenarioFile {
    pub fn operating_point(&self) -> Equilibrium {
        self.equilibrium.clone().unwrap_or_else(|| Equilibrium::origin(self.system.n(), self.system.m()))
    }
}

/// `K₁ = K₂ = ∏[−|ε₀ᵢ|, |ε₀ᵢ|]` around the initial error of `z0 = (x̄, x̂̄)`, widened
/// where a component of `ε₀` vanishes.
pub fn alpha0_setup_from(law: &FeedbackLaw, lyapunov: &LyapunovSpec, z0: &ColVec, samples: usize) -> Alpha0Setup {
    let n = z0.dim() / 2;
    let z = z0.as_slice();
    let e0: Vec<f64> = (0..n).map(|i| z[n + i] - z[i]).collect();
    let largest = e0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = if largest > 0.0 { 1e-3 * largest } else { 1.0 };
    let k = CompactBox::new(e0.iter().map(|v| {
        let r = v.abs().max(floor);
        [-r, r]
    }).collect())
    .expect("finite radii");
    Alpha0Setup { law: law.clone(), lyapunov: lyapunov.clone(), k1: k.clone(), k2: k, samples }
}

pub fn build_harmonic_oscillator() -> Result<ScenarioBundle> {
    let rot = Mat::from_rows(&[[0.0, -1.0], [1.0, 0.0]])?;
    let physical = InputAffineSystem::new(
        rot.clone(),
        vec![rot],
        ColVec::zeros(2),
        vec![ColVec::from_slice(&[1.0, 0.0])?],
        Mat::row_vector(&[0.0, 1.0])?,
        Mat::identity(2),
        vec![[-0.5, 0.5]],
    )?;
    let equilibrium = Equilibrium::origin(2, 1);
    Ok(ScenarioBundle {
        name: ScenarioName::HarmonicOscillator,
        shifted: physical.clone(),
        physical,
        equilibrium,
        law: FeedbackLaw::linear(Mat::row_vector(&[-1.0, 0.0])?),
        z0: ColVec::from_slice(&[1.0, 1.0, 0.0, 0.0])?,
        default_alphas: vec![0.5, 1.0, 2.0],
        default_simconfig: SimConfig::new(20.0, 1e-3, 10)?,
        output_transform: OutputTransform { label: "x2".into(), state_index: 2, scale: 1.0, target: 0.0 },
        lyapunov: LyapunovSpec::quadratic(Mat::identity(2), 1.0)?,
        notes: vec!["initial condition, gain list and horizon are demo choices".into()],
    })
}

/// Circuit values for the averaged Ćuk model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CukParams {
    pub l1: f64,
    pub c2: f64,
    pub l3: f64,
    pub c4: f64,
    pub r_load: f64,
    pub e: f64,
    pub vd: f64,
    pub beta: f64,
}

impl Default for CukParams {
    fn default() -> Self {
        Self { l1: 10.9e-3, c2: 22e-6, l3: 10.9e-3, c4: 22.9e-6, r_load: 22.36, e: 12.0, vd: 25.0, beta: 1e-4 }
    }
}

impl CukParams {
    pub fn u_star(&self) -> f64 {
        self.vd / (self.vd + self.e)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.l1, self.c2, self.l3, self.c4, self.r_load, self.e, self.vd, self.beta];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ScenarioError::InvalidParams("all Ćuk parameters must be positive".into()));
        }
        Ok(())
    }

    /// `P = diag(1/L₁, 1/C₂, 1/L₃, 1/C₄)`.
    pub fn p_matrix(&self) -> Mat {
        Mat::from_diag(&[1.0 / self.l1, 1.0 / self.c2, 1.0 / self.l3, 1.0 / self.c4]).expect("positive diagonal")
    }
}

/// Averaged Ćuk model `ẋ = M(u)Px + (E, 0, 0, 0)ᵀ` with state
/// `(L₁i₁, C₂v₂, L₃i₃, C₄v₄)`, `y = x₂`, `u ∈ [0, 1]`.
pub fn cuk_physical(p: &CukParams) -> Result<InputAffineSystem> {
    p.validate()?;
    let pm = p.p_matrix();
    let m0 = Mat::from_rows(&[
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, -1.0 / p.r_load],
    ])?;
    let m1 = Mat::from_rows(&[
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])?;
    Ok(InputAffineSystem::new(
        m0.matmul(&pm)?,
        vec![m1.matmul(&pm)?],
        ColVec::from_slice(&[p.e, 0.0, 0.0, 0.0])?,
        vec![ColVec::zeros(4)],
        Mat::row_vector(&[0.0, 1.0, 0.0, 0.0])?,
        pm,
        vec![[0.0, 1.0]],
    )?)
}

pub fn build_cuk(p: &CukParams) -> Result<ScenarioBundle> {
    let physical = cuk_physical(p)?;
    let u_star = ColVec::from_slice(&[p.u_star()])?;
    let equilibrium = physical.compute_equilibrium(&u_star)?;
    let shifted = physical.shift_to_error_coordinates(&equilibrium)?;
    let b = &shifted.b_coeff()[0];
    // λ(x̄) = sat(−β bᵀP x̄)
    let pb = shifted.p_mat().mul_vec(b)?;
    let gain = Mat::row_vector(&pb.scale(-p.beta).into_vec())?;
    let law = FeedbackLaw::saturated_within(gain, &u_star, physical.input_box(), 1e-3)?;
    let x_star = equilibrium.x_star.clone();
    let mut z0 = x_star.scale(-1.0).into_vec();
    z0.extend([0.0; 4]);
    let product_b = [p.c2 * x_star[1], p.l3 * x_star[2] - p.l1 * x_star[0], -p.c2 * x_star[1], 0.0];
    Ok(ScenarioBundle {
        name: ScenarioName::Cuk,
        lyapunov: LyapunovSpec::quadratic(shifted.p_mat().clone(), 1.0)?,
        physical,
        shifted: shifted.clone(),
        law,
        z0: ColVec::new(z0)?,
        default_alphas: vec![1.0, 10.0, 100.0],
        default_simconfig: SimConfig::new(0.5, 1e-6, 100)?,
        output_transform: OutputTransform {
            label: "x4/C4 (V)".into(),
            state_index: 4,
            scale: 1.0 / p.c4,
            target: x_star[3] / p.c4,
        },
        notes: vec![
            format!("b from the shift construction: {:?}", b.as_slice()),
            format!("b with products instead of quotients (not used): {product_b:?}"),
            format!("target output x4*/C4 = {:.6} V (signed)", x_star[3] / p.c4),
        ],
        equilibrium,
    })
}

/// Six-compartment heat exchanger values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatExchangerParams {
    pub k: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub e_temp: f64,
    pub g: f64,
    pub u_max: f64,
    pub u_star: f64,
    pub beta: f64,
}

impl Default for HeatExchangerParams {
    fn default() -> Self {
        Self { k: 1.2e-2, gamma1: 0.506, gamma2: 1e-2, e_temp: 360.0, g: 300.0, u_max: 0.05, u_star: 0.025, beta: 1.0 }
    }
}

impl HeatExchangerParams {
    /// `k²/(γ₁γ₂)`, the flow at which the output stops seeing the state.
    pub fn singular_flow(&self) -> f64 {
        self.k * self.k / (self.gamma1 * self.gamma2)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.k, self.gamma1, self.gamma2, self.e_temp, self.g, self.u_max, self.u_star, self.beta];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ScenarioError::InvalidParams("all heat-exchanger parameters must be positive".into()));
        }
        if self.u_star >= self.u_max {
            return Err(ScenarioError::InvalidParams("u* must lie in (0, u_M)".into()));
        }
        let singular = self.singular_flow();
        if (self.u_star - singular).abs() <= 1e-12 {
            return Err(ScenarioError::DetectabilityViolated { u_star: self.u_star, singular });
        }
        Ok(())
    }
}

/// `J` with `−1` on the diagonal and `1` below it.
fn transport_matrix() -> Mat {
    Mat::from_rows(&[[-1.0, 0.0, 0.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]]).expect("constant")
}

/// `A(u) = [[−kI + γ₁uJ, kI], [kI, −kI + γ₂Jᵀ]]`, `B(u) = (Eu, 0, 0, 0, 0, G)ᵀ`, `y = x₄`.
pub fn heat_exchanger_physical(p: &HeatExchangerParams) -> Result<InputAffineSystem> {
    p.validate()?;
    let j = transport_matrix();
    let jt = j.transpose();
    let mut a0 = Mat::zeros(6, 6);
    let mut a1 = Mat::zeros(6, 6);
    for i in 0..3 {
        a0[(i, i)] = -p.k;
        a0[(i, i + 3)] = p.k;
        a0[(i + 3, i)] = p.k;
        a0[(i + 3, i + 3)] = -p.k;
        for c in 0..3 {
            a0[(i + 3, c + 3)] += p.gamma2 * jt[(i, c)];
            a1[(i, c)] = p.gamma1 * j[(i, c)];
        }
    }
    let mut c = vec![0.0; 6];
    c[3] = 1.0;
    Ok(InputAffineSystem::new(
        a0,
        vec![a1],
        ColVec::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, p.g])?,
        vec![ColVec::from_slice(&[p.e_temp, 0.0, 0.0, 0.0, 0.0, 0.0])?],
        Mat::row_vector(&c)?,
        Mat::identity(6),
        vec![[0.0, p.u_max]],
    )?)
}

pub fn build_heat_exchanger(p: &HeatExchangerParams) -> Result<ScenarioBundle> {
    let physical = heat_exchanger_physical(p)?;
    let u_star = ColVec::from_slice(&[p.u_star])?;
    let equilibrium = physical.compute_equilibrium(&u_star)?;
    let shifted = physical.shift_to_error_coordinates(&equilibrium)?;
    let b = &shifted.b_coeff()[0];
    let gain = Mat::row_vector(&shifted.p_mat().mul_vec(b)?.scale(-p.beta).into_vec())?;
    let law = FeedbackLaw::saturated_within(gain, &u_star, physical.input_box(), 1e-3)?;
    let start = physical.compute_equilibrium(&ColVec::from_slice(&[0.17 * p.u_max])?)?;
    let mut z0: Vec<f64> = (&start.x_star - &equilibrium.x_star).into_vec();
    z0.extend([0.0; 6]);
    Ok(ScenarioBundle {
        name: ScenarioName::HeatExchanger,
        lyapunov: LyapunovSpec::quadratic(Mat::identity(6), 1.0)?,
        physical,
        shifted: shifted.clone(),
        law,
        z0: ColVec::new(z0)?,
        default_alphas: vec![1e-3, 2e-2, 1.0],
        default_simconfig: SimConfig::new(2000.0, 0.05, 20)?,
        output_transform: OutputTransform {
            label: "x4 (K)".into(),
            state_index: 4,
            scale: 1.0,
            target: equilibrium.x_star[3],
        },
        notes: vec![
            format!("singular input ū = k²/(γ₁γ₂) − u* = {:.6e}", p.singular_flow() - p.u_star),
            "horizon and step are not published; chosen so the slowest mode decays visibly".into(),
        ],
        equilibrium,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse() {
        for n in ScenarioName::ALL {
            assert_eq!(n.to_string().parse::<ScenarioName>().unwrap(), n);
        }
        assert!(matches!("boost".parse::<ScenarioName>(), Err(ScenarioError::UnknownScenario(_))));
    }

    #[test]
    fn cuk_duty_cycle_and_output() {
        let p = CukParams::default();
        assert!((p.u_star() - 25.0 / 37.0).abs() < 1e-15);
        let s = build_cuk(&p).unwrap();
        let x = &s.equilibrium.x_star;
        assert!((x[3] / p.c4 + 25.0).abs() < 1e-9 * 25.0);
        assert!((x[2] / p.l3 + 25.0 / 22.36).abs() < 1e-9);
        assert!((s.output_transform.target + 25.0).abs() < 1e-9);
    }

    #[test]
    fn cuk_feedback_keeps_duty_cycle_inside() {
        let s = build_cuk(&CukParams::default()).unwrap();
        let big = ColVec::from_slice(&[1e3, -1e3, 1e3, -1e3]).unwrap();
        for x in [big.clone(), big.scale(-1.0)] {
            let u = s.law.eval(&x).unwrap()[0] + s.equilibrium.u_star[0];
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn heat_exchanger_defaults() {
        let p = HeatExchangerParams::default();
        let s = build_heat_exchanger(&p).unwrap();
        assert_eq!(s.equilibrium.u_star[0], 0.025);
        let ubar = p.singular_flow() - p.u_star;
        assert!((ubar - 3.458e-3).abs() < 1e-6);
        assert!(s.equilibrium.x_star.as_slice().iter().all(|v| *v > 0.0));
        let b = &s.shifted.b_coeff()[0];
        assert!((b[0] + 2330.26).abs() < 0.01, "b1 = {}", b[0]);
    }

    #[test]
    fn heat_exchanger_rejects_unobservable_target() {
        let mut p = HeatExchangerParams::default();
        p.u_star = p.singular_flow();
        assert!(matches!(build_heat_exchanger(&p), Err(ScenarioError::DetectabilityViolated { .. })));
    }

    #[test]
    fn bundles_are_deterministic() {
        for n in ScenarioName::ALL {
            assert_eq!(n.build().unwrap(), n.build().unwrap());
        }
    }

    #[test]
    fn scenario_file_round_trip() {
        let s = build_cuk(&CukParams::default()).unwrap();
        let f = s.to_file(GainPolicy::constant(10.0).unwrap());
        let text = serde_json::to_string(&f).unwrap();
        let back: ScenarioFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        for key in ["\"system\"", "\"feedback\"", "\"gain\"", "\"sim\"", "\"initial\""] {
            assert!(text.contains(key));
        }
    }
}
