//! State-affine systems `ẋ = A(u)x + B(u)`, `y = Cx`, with coefficient maps affine in `u`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{self, is_positive_definite, solve_linear, ColVec, LinalgError, Mat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("P must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("input box channel {channel} has lo {lo} > hi {hi}")]
    InvalidInputBox { channel: usize, lo: f64, hi: f64 },
    #[error("operating point is not a unique equilibrium: {0}")]
    SingularMatrix(LinalgError),
    #[error("equilibrium residual {residual:e} exceeds {bound:e}")]
    EquilibriumResidual { residual: f64, bound: f64 },
    #[error("invalid feedback law: {0}")]
    InvalidFeedback(String),
    #[error("invalid Lyapunov specification: {0}")]
    InvalidLyapunov(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SystemError>;

fn mismatch(what: impl Into<String>) -> SystemError {
    SystemError::DimensionMismatch(what.into())
}

/// `ẋ = (A0 + Σ uₖ Aₖ) x + (B0 + Σ uₖ Bₖ)`, `y = C x`, with a dissipativity
/// certificate candidate `P` and an admissible input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemDoc", into = "SystemDoc")]
pub struct InputAffineSystem {
    a0: Mat,
    a_coeff: Vec<Mat>,
    b0: ColVec,
    b_coeff: Vec<ColVec>,
    c: Mat,
    p: Mat,
    input_box: Vec<[f64; 2]>,
}

/// On-disk layout of [`InputAffineSystem`].
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SystemDoc {
    n: usize,
    m: usize,
    p: usize,
    A0: Mat,
    A_coeff: Vec<Mat>,
    B0: ColVec,
    B_coeff: Vec<ColVec>,
    C: Mat,
    P: Mat,
    input_box: Vec<[f64; 2]>,
}

impl TryFrom<SystemDoc> for InputAffineSystem {
    type Error = SystemError;

    fn try_from(doc: SystemDoc) -> Result<Self> {
        let sys = InputAffineSystem::new(doc.A0, doc.A_coeff, doc.B0, doc.B_coeff, doc.C, doc.P, doc.input_box)?;
        if (sys.n(), sys.m(), sys.p()) != (doc.n, doc.m, doc.p) {
            return Err(mismatch(format!(
                "declared (n, m, p) = ({}, {}, {}) but matrices give ({}, {}, {})",
                doc.n,
                doc.m,
                doc.p,
                sys.n(),
                sys.m(),
                sys.p()
            )));
        }
        Ok(sys)
    }
}

impl From<InputAffineSystem> for SystemDoc {
    fn from(s: InputAffineSystem) -> Self {
        SystemDoc {
            n: s.n(),
            m: s.m(),
            p: s.p(),
            A0: s.a0,
            A_coeff: s.a_coeff,
            B0: s.b0,
            B_coeff: s.b_coeff,
            C: s.c,
            P: s.p,
            input_box: s.input_box,
        }
    }
}

impl InputAffineSystem {
    pub fn new(
        a0: Mat,
        a_coeff: Vec<Mat>,
        b0: ColVec,
        b_coeff: Vec<ColVec>,
        c: Mat,
        p: Mat,
        input_box: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let n = a0.require_square().map_err(|_| mismatch("A0 must be square"))?;
        let m = a_coeff.len();
        if m == 0 {
            return Err(mismatch("at least one input channel is required"));
        }
        if a_coeff.iter().any(|a| a.rows() != n || a.cols() != n) {
            return Err(mismatch(format!("every A coefficient must be {n}x{n}")));
        }
        if b0.dim() != n || b_coeff.iter().any(|b| b.dim() != n) {
            return Err(mismatch(format!("B0 and B coefficients must have length {n}")));
        }
        if b_coeff.len() != m {
            return Err(mismatch(format!("{} B coefficients for {m} inputs", b_coeff.len())));
        }
        if c.cols() != n {
            return Err(mismatch(format!("C has {} columns, expected {n}", c.cols())));
        }
        if p.rows() != n || p.cols() != n {
            return Err(mismatch(format!("P must be {n}x{n}")));
        }
        if input_box.len() != m {
            return Err(mismatch(format!("{} input intervals for {m} inputs", input_box.len())));
        }
        for (channel, &[lo, hi]) in input_box.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SystemError::InvalidInputBox { channel, lo, hi });
            }
        }
        let asym = (&p - &p.transpose()).max_abs();
        if asym > 1e-12 * p.max_abs() || !is_positive_definite(&p) {
            return Err(SystemError::NotPositiveDefinite);
        }
        Ok(Self { a0, a_coeff, b0, b_coeff, c, p, input_box })
    }

    pub fn n(&self) -> usize {
        self.a0.rows()
    }

    pub fn m(&self) -> usize {
        self.a_coeff.len()
    }

    pub fn p(&self) -> usize {
        self.c.rows()
    }

    pub fn a0(&self) -> &Mat {
        &self.a0
    }

    pub fn a_coeff(&self) -> &[Mat] {
        &self.a_coeff
    }

    pub fn b0(&self) -> &ColVec {
        &self.b0
    }

    pub fn b_coeff(&self) -> &[ColVec] {
        &self.b_coeff
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn p_mat(&self) -> &Mat {
        &self.p
    }

    pub fn input_box(&self) -> &[[f64; 2]] {
        &self.input_box
    }

    fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() == self.m() {
            Ok(())
        } else {
            Err(mismatch(format!("input of length {} for {} channels", u.len(), self.m())))
        }
    }

    /// `A(u) = A0 + Σ uₖ Aₖ`.
    pub fn eval_a(&self, u: &ColVec) -> Result<Mat> {
        self.check_input(u.as_slice())?;
        let mut a = self.a0.clone();
        for (k, ak) in self.a_coeff.iter().enumerate() {
            a = a.add_scaled(ak, u[k])?;
        }
        Ok(a)
    }

    /// `B(u) = B0 + Σ uₖ Bₖ`.
    pub fn eval_b(&self, u: &ColVec) -> Result<ColVec> {
        self.check_input(u.as_slice())?;
        let mut b = self.b0.as_slice().to_vec();
        for (k, bk) in self.b_coeff.iter().enumerate() {
            for (bi, bki) in b.iter_mut().zip(bk.as_slice()) {
                *bi += u[k] * bki;
            }
        }
        Ok(ColVec::new(b)?)
    }

    /// `A(u)x + B(u)`.
    pub fn field(&self, x: &ColVec, u: &ColVec) -> Result<ColVec> {
        if x.dim() != self.n() {
            return Err(mismatch(format!("state of length {} for n = {}", x.dim(), self.n())));
        }
        let ax = self.eval_a(u)?.mul_vec(x)?;
        Ok(&ax + &self.eval_b(u)?)
    }

    /// Writes `A(u)x + B(u)` into `out` without allocating; lengths are trusted.
    #[inline]
    pub(crate) fn field_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.apply_a_into(x, u, out);
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.b0[i];
        }
        for (k, &uk) in u.iter().enumerate() {
            if uk != 0.0 {
                for (o, b) in out.iter_mut().zip(self.b_coeff[k].as_slice()) {
                    *o += uk * b;
                }
            }
        }
    }

    /// Writes `A(u)x` into `out` without allocating; lengths are trusted.
    #[inline]
    pub(crate) fn apply_a_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.n();
        self.a0.mul_slice_into(x, out);
        for (k, &uk) in u.iter().enumerate() {
            if uk == 0.0 {
                continue;
            }
            let ak = self.a_coeff[k].as_slice();
            for i in 0..n {
                let row = &ak[i * n..(i + 1) * n];
                let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                out[i] += uk * s;
            }
        }
    }

    /// Equilibrium state for the constant input `u_star`.
    pub fn compute_equilibrium(&self, u_star: &ColVec) -> Result<Equilibrium> {
        let a = self.eval_a(u_star)?;
        let b = self.eval_b(u_star)?;
        let x_star = solve_linear(&a, &-&b).map_err(|e| match e {
            LinalgError::SingularMatrix { .. } => SystemError::SingularMatrix(e),
            other => SystemError::Linalg(other),
        })?;
        let residual = (&a.mul_vec(&x_star)? + &b).norm_inf();
        let scale = 1.0 + a.norm_inf() * x_star.norm_inf() + b.norm_inf();
        let bound = EQUILIBRIUM_RTOL * scale;
        if residual > bound {
            return Err(SystemError::EquilibriumResidual { residual, bound });
        }
        Ok(Equilibrium { x_star, u_star: u_star.clone(), residual, scale })
    }

    /// Rewrites the system in deviation coordinates `x̄ = x − x*`, `ū = u − u*`.
    pub fn shift_to_error_coordinates(&self, eq: &Equilibrium) -> Result<InputAffineSystem> {
        let a0 = self.eval_a(&eq.u_star)?;
        let b_coeff = self
            .a_coeff
            .iter()
            .zip(&self.b_coeff)
            .map(|(ak, bk)| Ok(&ak.mul_vec(&eq.x_star)? + bk))
            .collect::<Result<Vec<_>>>()?;
        let input_box = self
            .input_box
            .iter()
            .zip(eq.u_star.as_slice())
            .map(|(&[lo, hi], us)| [lo - us, hi - us])
            .collect();
        InputAffineSystem::new(
            a0,
            self.a_coeff.clone(),
            ColVec::zeros(self.n()),
            b_coeff,
            self.c.clone(),
            self.p.clone(),
            input_box,
        )
    }

    /// Corners of the input box (2^m of them).
    pub fn input_vertices(&self) -> Vec<ColVec> {
        box_vertices(&self.input_box)
    }
}

/// Enumerates the corners of a product of closed intervals.
pub fn box_vertices(intervals: &[[f64; 2]]) -> Vec<ColVec> {
    let m = intervals.len();
    (0..1usize << m)
        .map(|mask| {
            ColVec::new((0..m).map(|k| intervals[k][(mask >> k) & 1]).collect()).expect("finite box")
        })
        .collect()
}

/// Relative bound on `‖A(u*)x* + B(u*)‖∞`.
pub const EQUILIBRIUM_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x_star: ColVec,
    pub u_star: ColVec,
    /// `‖A(u*)x* + B(u*)‖∞`.
    pub residual: f64,
    /// `1 + ‖A(u*)‖∞‖x*‖∞ + ‖B(u*)‖∞`, the scale the residual is judged against.
    pub scale: f64,
}

impl Equilibrium {
    /// The origin with input zero, for systems already written around their target.
    pub fn origin(n: usize, m: usize) -> Self {
        Self { x_star: ColVec::zeros(n), u_star: ColVec::zeros(m), residual: 0.0, scale: 1.0 }
    }
}

/// Static state feedback `u = λ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum FeedbackLaw {
    LinearUnsaturated { gain: Mat },
    /// `clamp(gain·x, sat_lo, sat_hi)` componentwise.
    LinearSaturated { gain: Mat, sat_lo: ColVec, sat_hi: ColVec },
    Constant { offset: ColVec },
}

impl FeedbackLaw {
    pub fn linear(gain: Mat) -> Self {
        FeedbackLaw::LinearUnsaturated { gain }
    }

    pub fn saturated(gain: Mat, sat_lo: ColVec, sat_hi: ColVec) -> Result<Self> {
        let law = FeedbackLaw::LinearSaturated { gain, sat_lo, sat_hi };
        law.validate_shape()?;
        Ok(law)
    }

    /// Saturated law whose clamp keeps `u* + λ(x)` inside `input_box`, backed off from
    /// each end by `margin` times the interval width.
    pub fn saturated_within(gain: Mat, u_star: &ColVec, input_box: &[[f64; 2]], margin: f64) -> Result<Self> {
        if input_box.len() != u_star.dim() {
            return Err(mismatch("input box and u* lengths differ"));
        }
        let (lo, hi): (Vec<f64>, Vec<f64>) = input_box
            .iter()
            .zip(u_star.as_slice())
            .map(|(&[a, b], us)| {
                let pad = margin * (b - a);
                (a + pad - us, b - pad - us)
            })
            .unzip();
        Self::saturated(gain, ColVec::new(lo)?, ColVec::new(hi)?)
    }

    pub fn m(&self) -> usize {
        match self {
            FeedbackLaw::LinearUnsaturated { gain } | FeedbackLaw::LinearSaturated { gain, .. } => gain.rows(),
            FeedbackLaw::Constant { offset } => offset.dim(),
        }
    }

    pub fn gain(&self) -> Option<&Mat> {
        match self {
            FeedbackLaw::LinearUnsaturated { gain } | FeedbackLaw::LinearSaturated { gain, .. } => Some(gain),
            FeedbackLaw::Constant { .. } => None,
        }
    }

    /// Checks the invariants: `sat_lo < 0 < sat_hi` so that `λ(0) = 0` survives the clamp.
    pub fn validate_shape(&self) -> Result<()> {
        if let FeedbackLaw::LinearSaturated { gain, sat_lo, sat_hi } = self {
            let m = gain.rows();
            if sat_lo.dim() != m || sat_hi.dim() != m {
                return Err(mismatch("saturation bounds must match the number of inputs"));
            }
            for k in 0..m {
                if !(sat_lo[k] < 0.0 && 0.0 < sat_hi[k]) {
                    return Err(SystemError::InvalidFeedback(format!(
                        "channel {k}: need sat_lo < 0 < sat_hi, got [{}, {}]",
                        sat_lo[k], sat_hi[k]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks the law against a system's dimensions.
    pub fn validate_for(&self, sys: &InputAffineSystem) -> Result<()> {
        self.validate_shape()?;
        if self.m() != sys.m() {
            return Err(mismatch(format!("law has {} outputs, system has {} inputs", self.m(), sys.m())));
        }
        if let Some(g) = self.gain() {
            if g.cols() != sys.n() {
                return Err(mismatch(format!("gain has {} columns, system has n = {}", g.cols(), sys.n())));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &ColVec) -> Result<ColVec> {
        if let Some(g) = self.gain() {
            if g.cols() != x.dim() {
                return Err(mismatch(format!("state of length {} for a gain with {} columns", x.dim(), g.cols())));
            }
        }
        let mut out = vec![0.0; self.m()];
        self.eval_into(x.as_slice(), &mut out);
        Ok(ColVec::new(out)?)
    }

    #[inline]
    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FeedbackLaw::LinearUnsaturated { gain } => gain.mul_slice_into(x, out),
            FeedbackLaw::LinearSaturated { gain, sat_lo, sat_hi } => {
                gain.mul_slice_into(x, out);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = o.clamp(sat_lo[k], sat_hi[k]);
                }
            }
            FeedbackLaw::Constant { offset } => out.copy_from_slice(offset.as_slice()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LyapunovKind {
    Quadratic,
}

/// `W(x) = scale · xᵀQx`, `∇W(x) = 2·scale·Qx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub kind: LyapunovKind,
    pub q: Mat,
    pub scale: f64,
}

impl LyapunovSpec {
    pub fn quadratic(q: Mat, scale: f64) -> Result<Self> {
        let spec = Self { kind: LyapunovKind::Quadratic, q, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(SystemError::InvalidLyapunov(format!("scale must be positive, got {}", self.scale)));
        }
        if !is_positive_definite(&self.q) {
            return Err(SystemError::InvalidLyapunov("Q must be symmetric positive definite".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.q.rows()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let q = self.q.as_slice();
        let mut acc = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| q[i * n + j] * x[j]).sum();
            acc += x[i] * row;
        }
        self.scale * acc
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        self.q.mul_slice_into(x, &mut g);
        g.iter_mut().for_each(|v| *v *= 2.0 * self.scale);
        g
    }

    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        matrix::norm2(&self.gradient(x))
    }
}
