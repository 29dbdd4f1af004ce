//! Plant plus Luenberger observer `x̂̇ = A(u)x̂ + B(u) − αP⁻¹Cᵀ(Cx̂ − y)` with `u = λ(x̂)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AdaptiveGain, AnalysisError};
use crate::matrix::{self, inverse, ColVec, LinalgError, Mat};
use crate::sim::Trajectory;
use crate::system::{FeedbackLaw, InputAffineSystem, LyapunovSpec, SystemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constant observer gain must be positive and finite, got {0}")]
    InvalidGain(f64),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ObserverError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum GainPolicy {
    Constant { alpha: f64 },
    /// `α(x̂, Cε)` built from a Lyapunov function of the state-feedback loop.
    Adaptive { w: LyapunovSpec },
}

impl GainPolicy {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ObserverError::InvalidGain(alpha));
        }
        Ok(GainPolicy::Constant { alpha })
    }

    pub fn label(&self) -> String {
        match self {
            GainPolicy::Constant { alpha } => format!("alpha={alpha}"),
            GainPolicy::Adaptive { .. } => "adaptive".to_string(),
        }
    }
}

/// Reusable buffers for allocation-free field evaluation.
#[derive(Debug, Clone)]
pub struct FieldScratch {
    u: Vec<f64>,
    y: Vec<f64>,
    k: Vec<f64>,
    tmp: Vec<f64>,
}

/// Per-evaluation by-products of the closed-loop field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldInfo {
    pub alpha: f64,
    /// `|Cε|²`.
    pub output_error_sq: f64,
    /// `|αP⁻¹CᵀCε|`.
    pub correction_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopSystem {
    sys: InputAffineSystem,
    law: FeedbackLaw,
    gain: GainPolicy,
    pinv_ct: Mat,
    pinv_ctc: Mat,
    adaptive: Option<AdaptiveGain>,
    correction_sign: f64,
}

impl ClosedLoopSystem {
    /// `sys` must already be written around the target, so that `λ(0) = 0` and `B(0) = 0`
    /// make the origin an equilibrium.
    pub fn new(sys: InputAffineSystem, law: FeedbackLaw, gain: GainPolicy) -> Result<Self> {
        law.validate_for(&sys)?;
        let adaptive = match &gain {
            GainPolicy::Constant { alpha } => {
                GainPolicy::constant(*alpha)?;
                None
            }
            GainPolicy::Adaptive { w } => {
                if w.n() != sys.n() {
                    return Err(ObserverError::DimensionMismatch(format!(
                        "W has dimension {}, system has n = {}",
                        w.n(),
                        sys.n()
                    )));
                }
                Some(AdaptiveGain::new(w.clone(), sys.c(), sys.p_mat())?)
            }
        };
        let pinv_ct = inverse(sys.p_mat())?.matmul(&sys.c().transpose())?;
        let pinv_ctc = pinv_ct.matmul(sys.c())?;
        Ok(Self { sys, law, gain, pinv_ct, pinv_ctc, adaptive, correction_sign: 1.0 })
    }

    /// Same loop with the output-injection sign reversed. Exists to check that the decay
    /// diagnostics catch a broken observer.
    pub fn with_flipped_correction(mut self) -> Self {
        self.correction_sign = -self.correction_sign;
        self
    }

    pub fn system(&self) -> &InputAffineSystem {
        &self.sys
    }

    pub fn law(&self) -> &FeedbackLaw {
        &self.law
    }

    pub fn gain(&self) -> &GainPolicy {
        &self.gain
    }

    pub fn n(&self) -> usize {
        self.sys.n()
    }

    /// `P⁻¹CᵀC`.
    pub fn pinv_ctc(&self) -> &Mat {
        &self.pinv_ctc
    }

    pub fn adaptive_gain(&self) -> Option<&AdaptiveGain> {
        self.adaptive.as_ref()
    }

    pub fn scratch(&self) -> FieldScratch {
        FieldScratch {
            u: vec![0.0; self.sys.m()],
            y: vec![0.0; self.sys.p()],
            k: vec![0.0; self.sys.n()],
            tmp: vec![0.0; self.sys.n()],
        }
    }

    fn alpha(&self, xhat: &[f64], y_err: &[f64]) -> f64 {
        match (&self.gain, &self.adaptive) {
            (GainPolicy::Constant { alpha }, _) => *alpha,
            (GainPolicy::Adaptive { .. }, Some(g)) => g.eval(xhat, y_err),
            (GainPolicy::Adaptive { .. }, None) => unreachable!("adaptive gain is built in the constructor"),
        }
    }

    /// Output injection `−α P⁻¹Cᵀ(Cε)` subtracted from `out`; `eps` is `x̂ − x`.
    #[inline]
    fn inject(&self, xhat: &[f64], eps: &[f64], out: &mut [f64], s: &mut FieldScratch) -> FieldInfo {
        self.sys.c().mul_slice_into(eps, &mut s.y);
        let alpha = self.alpha(xhat, &s.y);
        self.pinv_ct.mul_slice_into(&s.y, &mut s.k);
        let scaled = self.correction_sign * alpha;
        for (o, k) in out.iter_mut().zip(&s.k) {
            *o -= scaled * k;
        }
        FieldInfo {
            alpha,
            output_error_sq: s.y.iter().map(|v| v * v).sum(),
            correction_norm: alpha * matrix::norm2(&s.k),
        }
    }

    /// Field in `(x, x̂)` coordinates without allocating; slice lengths are trusted.
    #[inline]
    pub fn field_into(&self, z: &[f64], out: &mut [f64], s: &mut FieldScratch) -> FieldInfo {
        let n = self.n();
        let (x, xhat) = z.split_at(n);
        let (dx, dxhat) = out.split_at_mut(n);
        self.law.eval_into(xhat, &mut s.u);
        self.sys.field_into(x, &s.u, dx);
        self.sys.field_into(xhat, &s.u, dxhat);
        for i in 0..n {
            s.tmp[i] = xhat[i] - x[i];
        }
        let eps = std::mem::take(&mut s.tmp);
        let info = self.inject(xhat, &eps, dxhat, s);
        s.tmp = eps;
        info
    }

    /// Field in `(x̂, ε)` coordinates: `ε̇ = A(u)ε − αP⁻¹CᵀCε`.
    #[inline]
    pub fn error_field_into(&self, w: &[f64], out: &mut [f64], s: &mut FieldScratch) -> FieldInfo {
        let n = self.n();
        let (xhat, eps) = w.split_at(n);
        let (dxhat, deps) = out.split_at_mut(n);
        self.law.eval_into(xhat, &mut s.u);
        self.sys.field_into(xhat, &s.u, dxhat);
        self.sys.apply_a_into(eps, &s.u, deps);
        let info = self.inject(xhat, eps, dxhat, s);
        self.inject(xhat, eps, deps, s);
        info
    }

    fn check_len(&self, z: &ColVec) -> Result<()> {
        if z.dim() != 2 * self.n() {
            return Err(ObserverError::DimensionMismatch(format!(
                "closed-loop state has length {}, expected {}",
                z.dim(),
                2 * self.n()
            )));
        }
        Ok(())
    }

    /// `(ẋ, x̂̇)` at `z = (x, x̂)`.
    pub fn field(&self, z: &ColVec) -> Result<ColVec> {
        self.check_len(z)?;
        let mut out = vec![0.0; z.dim()];
        self.field_into(z.as_slice(), &mut out, &mut self.scratch());
        Ok(ColVec::new(out)?)
    }

    /// `(x̂̇, ε̇)` at `w = (x̂, ε)`.
    pub fn error_field(&self, w: &ColVec) -> Result<ColVec> {
        self.check_len(w)?;
        let mut out = vec![0.0; w.dim()];
        self.error_field_into(w.as_slice(), &mut out, &mut self.scratch());
        Ok(ColVec::new(out)?)
    }

    /// Gain at the origin, where the linearisation is taken.
    pub fn alpha_at_origin(&self) -> f64 {
        self.alpha(&vec![0.0; self.n()], &vec![0.0; self.sys.p()])
    }

    /// `A₀ − αP⁻¹CᵀC`.
    pub fn epsilon_block(&self, alpha: f64) -> Mat {
        self.sys.a0().add_scaled(&self.pinv_ctc, -alpha).expect("square n×n blocks")
    }

    /// Jacobian at the origin of `x ↦ A(λ(x))x + B(λ(x))`, i.e. `A₀ + Σₖ B̄ₖ ∂λₖ/∂x`.
    fn state_feedback_jacobian(&self) -> Mat {
        let mut j = self.sys.a0().clone();
        if let Some(g) = self.law.gain() {
            let n = self.n();
            for (k, bk) in self.sys.b_coeff().iter().enumerate() {
                for r in 0..n {
                    for c in 0..n {
                        j[(r, c)] += bk[r] * g[(k, c)];
                    }
                }
            }
        }
        j
    }

    /// Linearisation at the origin in `(x̂, ε)` coordinates:
    /// `[[J, −αP⁻¹CᵀC], [0, A₀ − αP⁻¹CᵀC]]`.
    pub fn linearized_closed_loop(&self) -> Mat {
        let n = self.n();
        let alpha = self.correction_sign * self.alpha_at_origin();
        let j = self.state_feedback_jacobian();
        let eb = self.epsilon_block(alpha);
        let mut out = Mat::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = j[(r, c)];
                out[(r, n + c)] = -alpha * self.pinv_ctc[(r, c)];
                out[(n + r, n + c)] = eb[(r, c)];
            }
        }
        out
    }
}

/// `εᵀPε`.
pub fn lyapunov_v(p: &Mat, eps: &ColVec) -> Result<f64> {
    if p.rows() != eps.dim() || !p.is_square() {
        return Err(ObserverError::DimensionMismatch(format!(
            "P is {}x{}, ε has length {}",
            p.rows(),
            p.cols(),
            eps.dim()
        )));
    }
    Ok(quad_form(p, eps.as_slice()))
}

#[inline]
pub(crate) fn quad_form(p: &Mat, e: &[f64]) -> f64 {
    let n = e.len();
    let d = p.as_slice();
    let mut acc = 0.0;
    for i in 0..n {
        let row: f64 = d[i * n..(i + 1) * n].iter().zip(e).map(|(a, b)| a * b).sum();
        acc += e[i] * row;
    }
    acc
}

/// Default decay tolerance: `1e-6 · max V` along the trajectory.
pub fn decay_tolerance(traj: &Trajectory) -> f64 {
    1e-6 * traj.v_series.iter().fold(0.0_f64, |m, &v| m.max(v))
}

/// Between consecutive samples, `(ΔV + ∫2α|Cε|²)/Δt`.
///
/// Dissipativity gives `V̇ ≤ −2α|Cε|²`, so every entry should be at most
/// [`decay_tolerance`]. The integral term is carried by the integrator as an extra state,
/// which keeps the check valid for adaptive gains and coarse recording.
pub fn decay_residual(traj: &Trajectory) -> Vec<f64> {
    traj.times
        .windows(2)
        .enumerate()
        .map(|(i, t)| {
            let dv = traj.v_series[i + 1] - traj.v_series[i];
            let dq = traj.dissipation[i + 1] - traj.dissipation[i];
            (dv + dq) / (t[1] - t[0])
        })
        .collect()
}
