//! Numerical checks of the standing assumptions (dissipativity, detectability at the
//! target, observability away from singular inputs) and the two observer-gain formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{
    self, determinant, eigenvalues, inverse, max_eig_symmetric, rank, row_equilibrate, smallest_singular_value,
    spectral_norm, ColVec, ComplexScalar, LinalgError, Mat, DEFAULT_RANK_TOL,
};
use crate::system::{box_vertices, FeedbackLaw, InputAffineSystem, LyapunovSpec, SystemError};

/// Relative tolerance on the largest eigenvalue of `PA(u) + A(u)ᵀP`.
pub const DEFAULT_DISSIPATIVITY_TOL: f64 = 1e-12;
/// Eigenvalues with real part `≥ -tol` are checked by the Hautus test.
pub const DEFAULT_HAUTUS_TOL: f64 = 1e-9;
/// Sampled `M₁` at or above this value means the Lyapunov function is not strict.
pub const STRICT_LYAPUNOV_THRESHOLD: f64 = -1e-12;
/// Inflation applied to the smallest sublevel value containing `K₁`.
pub const RHO_INFLATION: f64 = 1.05;
/// Grid values below this fraction of the largest magnitude are singular-input candidates.
pub const SINGULAR_SCAN_RTOL: f64 = 1e-9;
/// Final bracket width of the singular-input refinement.
pub const SINGULAR_REFINE_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("W is not a strict Lyapunov function on the sampled level set (M1 = {m1:e})")]
    NotStrictLyapunov { m1: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

fn invalid(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::InvalidArgument(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub pass: bool,
    pub worst_input: ColVec,
    /// Largest eigenvalue of `PA(u) + A(u)ᵀP` over the grid.
    pub worst_eig: f64,
    /// Same maximum restricted to the box vertices.
    pub vertex_worst_eig: f64,
    /// Reference magnitude the tolerance is relative to.
    pub scale: f64,
    pub grid_points: usize,
}

fn symmetric_dissipation(sys: &InputAffineSystem, u: &ColVec) -> Result<Mat> {
    let a = sys.eval_a(u)?;
    let pa = sys.p_mat() * &a;
    Ok(&pa + &pa.transpose())
}

fn grid_1d(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 || lo == hi {
        return vec![lo, hi];
    }
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 })
        .collect()
}

/// Largest eigenvalue of `PA(u) + A(u)ᵀP` over a tensor grid on the input box.
///
/// The symmetric part is affine in `u`, so its largest eigenvalue is convex and the box
/// vertices already attain the maximum; the vertices are always evaluated and the grid
/// is kept for diagnostics. `tol` is relative to the largest `‖PA + AᵀP‖∞` at the vertices.
pub fn check_dissipativity(sys: &InputAffineSystem, u_samples: usize, tol: f64) -> Result<DissipativityReport> {
    if u_samples < 2 {
        return Err(invalid("at least two samples per input channel are required"));
    }
    if !(tol >= 0.0) {
        return Err(invalid("tolerance must be nonnegative"));
    }
    let mut scale: f64 = 0.0;
    let mut vertex_worst = f64::NEG_INFINITY;
    let mut worst_input = ColVec::zeros(sys.m());
    for v in sys.input_vertices() {
        let s = symmetric_dissipation(sys, &v)?;
        scale = scale.max(s.norm_inf());
        let e = max_eig_symmetric(&s)?;
        if e > vertex_worst {
            vertex_worst = e;
            worst_input = v;
        }
    }
    let axes: Vec<Vec<f64>> = sys.input_box().iter().map(|&[lo, hi]| grid_1d(lo, hi, u_samples)).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut worst = vertex_worst;
    for flat in 0..total {
        let mut rem = flat;
        let u: Vec<f64> = axes
            .iter()
            .map(|ax| {
                let v = ax[rem % ax.len()];
                rem /= ax.len();
                v
            })
            .collect();
        let u = ColVec::new(u)?;
        let e = max_eig_symmetric(&symmetric_dissipation(sys, &u)?)?;
        if e > worst {
            worst = e;
            worst_input = u;
        }
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    Ok(DissipativityReport {
        pass: worst <= tol * scale,
        worst_input,
        worst_eig: worst,
        vertex_worst_eig: vertex_worst,
        scale,
        grid_points: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    pub pass: bool,
    pub offending_eigenvalue: Option<ComplexScalar>,
    /// Eigenvalues that were tested, with the Hautus rank found for each.
    pub tested: Vec<(ComplexScalar, usize)>,
    pub eigenvalues: Vec<ComplexScalar>,
}

/// Rank over ℂ of `[A − λI; C]`, via its real embedding.
fn hautus_rank(c: &Mat, a0: &Mat, lambda: ComplexScalar) -> usize {
    let n = a0.rows();
    let p = c.rows();
    let mut top = a0.clone();
    for i in 0..n {
        top[(i, i)] -= lambda.re;
    }
    let mr = Mat::vstack(&[&top, c]).expect("C has n columns");
    if lambda.im == 0.0 {
        return rank(&row_equilibrate(&mr), DEFAULT_RANK_TOL);
    }
    // [[Mr, -Mi], [Mi, Mr]] with Mi = [-Im(λ) I; 0]
    let rows = n + p;
    let mut big = Mat::zeros(2 * rows, 2 * n);
    for i in 0..rows {
        for j in 0..n {
            big[(i, j)] = mr[(i, j)];
            big[(rows + i, n + j)] = mr[(i, j)];
        }
    }
    for i in 0..n {
        big[(i, n + i)] = lambda.im;
        big[(rows + i, i)] = -lambda.im;
    }
    rank(&row_equilibrate(&big), DEFAULT_RANK_TOL) / 2
}

/// Hautus test of the pair `(C, A0)` on every eigenvalue with `Re λ ≥ −tol`.
pub fn check_detectability(c: &Mat, a0: &Mat, tol: f64) -> Result<DetectabilityReport> {
    let n = a0.require_square()?;
    if c.cols() != n {
        return Err(invalid(format!("C has {} columns, A0 is {n}x{n}", c.cols())));
    }
    let eig = eigenvalues(a0)?;
    let mut tested = Vec::new();
    let mut offending = None;
    for &lambda in eig.iter().filter(|e| e.re >= -tol) {
        let r = hautus_rank(c, a0, lambda);
        tested.push((lambda, r));
        if r < n && offending.is_none() {
            offending = Some(lambda);
        }
    }
    Ok(DetectabilityReport { pass: offending.is_none(), offending_eigenvalue: offending, tested, eigenvalues: eig })
}

/// `[C; CA; …; CA^{n−1}]`.
pub fn observability_matrix(c: &Mat, a: &Mat) -> Result<Mat> {
    let n = a.require_square()?;
    if c.cols() != n {
        return Err(invalid(format!("C has {} columns, A is {n}x{n}", c.cols())));
    }
    let mut blocks = vec![c.clone()];
    for _ in 1..n {
        let next = blocks.last().expect("nonempty").matmul(a)?;
        blocks.push(next);
    }
    Ok(Mat::vstack(&blocks.iter().collect::<Vec<_>>())?)
}

/// Rank of the observability matrix after scaling each block row to unit norm.
pub fn observability_rank(c: &Mat, a: &Mat) -> Result<usize> {
    Ok(rank(&row_equilibrate(&observability_matrix(c, a)?), DEFAULT_RANK_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMetric {
    /// Determinant of the square observability matrix (`p = 1`).
    Determinant,
    /// Smallest singular value of the row-scaled observability matrix.
    MinSingularValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularCandidate {
    pub u: f64,
    pub value: f64,
    /// Grid bracket the candidate was refined from.
    pub bracket: [f64; 2],
    /// Estimated multiplicity when located through a sign change.
    pub multiplicity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularInputScan {
    pub metric: ScanMetric,
    /// `(u, value)` for every grid point.
    pub points: Vec<(f64, f64)>,
    pub candidates: Vec<SingularCandidate>,
}

impl SingularInputScan {
    pub fn singular_inputs(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.u).collect()
    }
}

fn scan_value(sys: &InputAffineSystem, metric: ScanMetric, u: f64) -> Result<f64> {
    let a = sys.eval_a(&ColVec::new(vec![u])?)?;
    let obs = observability_matrix(sys.c(), &a)?;
    Ok(match metric {
        ScanMetric::Determinant => determinant(&obs)?,
        ScanMetric::MinSingularValue => smallest_singular_value(&row_equilibrate(&obs)),
    })
}

/// Evaluates observability along the single input channel and locates the inputs where
/// it is lost.
///
/// Sign changes of the determinant are bisected to [`SINGULAR_REFINE_WIDTH`]; for roots of
/// odd multiplicity above one the bisection point is then polished with a secant step on
/// `sign(f)|f|^{1/μ}`, which is locally linear where `f` itself is too flat for its sign to
/// be trusted. Near-zero grid values without a sign change are refined by golden-section
/// minimisation of `|f|`.
pub fn scan_singular_inputs(sys: &InputAffineSystem, grid: usize) -> Result<SingularInputScan> {
    if sys.m() != 1 {
        return Err(invalid("singular-input scans need a single input channel"));
    }
    if grid < 10 {
        return Err(invalid("the scan grid needs at least 10 points"));
    }
    let n = sys.n();
    let metric = if sys.p() == 1 { ScanMetric::Determinant } else { ScanMetric::MinSingularValue };
    let [lo, hi] = sys.input_box()[0];
    let us = grid_1d(lo, hi, grid);
    let f = |u: f64| scan_value(sys, metric, u);
    let points: Vec<(f64, f64)> = us.iter().map(|&u| Ok((u, f(u)?))).collect::<Result<_>>()?;
    let largest = points.iter().fold(0.0_f64, |m, p| m.max(p.1.abs()));
    let step = if us.len() > 1 { us[1] - us[0] } else { 0.0 };
    let mut candidates: Vec<SingularCandidate> = Vec::new();

    if largest == 0.0 {
        // unobservable everywhere on the box
        return Ok(SingularInputScan { metric, points, candidates });
    }

    if metric == ScanMetric::Determinant {
        for w in points.windows(2) {
            let ((a0, fa0), (b0, fb0)) = (w[0], w[1]);
            if fa0 * fb0 >= 0.0 {
                continue;
            }
            let (mut a, mut b, mut fa) = (a0, b0, fa0);
            while b - a > SINGULAR_REFINE_WIDTH {
                let mid = 0.5 * (a + b);
                let fm = f(mid)?;
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if (fm > 0.0) == (fa > 0.0) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            let mut root = 0.5 * (a + b);
            let mult = estimate_multiplicity(&f, a0, b0, n)?;
            if mult >= 3 {
                if let Some(polished) = polish_multiple_root(&f, root, step, mult, lo, hi)? {
                    if (a0..=b0).contains(&polished) {
                        root = polished;
                    }
                }
            }
            candidates.push(SingularCandidate { u: root, value: f(root)?, bracket: [a0, b0], multiplicity: Some(mult) });
        }
    }

    let threshold = SINGULAR_SCAN_RTOL * largest;
    for (i, &(u, val)) in points.iter().enumerate() {
        if val.abs() >= threshold {
            continue;
        }
        if candidates.iter().any(|c| (c.u - u).abs() <= step * 1.000001) {
            continue;
        }
        let a = points[i.saturating_sub(1)].0;
        let b = points[(i + 1).min(points.len() - 1)].0;
        let (umin, vmin) = golden_min_abs(&f, a, b)?;
        candidates.push(SingularCandidate { u: umin, value: vmin, bracket: [a, b], multiplicity: None });
    }
    candidates.sort_by(|x, y| x.u.total_cmp(&y.u));
    Ok(SingularInputScan { metric, points, candidates })
}

/// `μ ≈ (b − a) / (q(b) − q(a))` with `q = f / f'`, which is linear with slope `1/μ`
/// near a root of multiplicity `μ`.
fn estimate_multiplicity<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64, max: usize) -> Result<u32> {
    let h = 1e-3 * (b - a);
    let q = |u: f64| -> Result<f64> {
        let d = (f(u + h)? - f(u - h)?) / (2.0 * h);
        Ok(f(u)? / d)
    };
    let (qa, qb) = (q(a)?, q(b)?);
    let est = (b - a) / (qb - qa);
    if !est.is_finite() || est < 0.5 {
        return Ok(1);
    }
    Ok((est.round() as u32).clamp(1, max.max(1) as u32))
}

fn polish_multiple_root<F: Fn(f64) -> Result<f64>>(
    f: &F,
    root: f64,
    step: f64,
    mult: u32,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>> {
    let x1 = (root - step).max(lo);
    let x2 = (root + step).min(hi);
    let h = |u: f64| -> Result<f64> {
        let v = f(u)?;
        Ok(v.signum() * v.abs().powf(1.0 / mult as f64))
    };
    let (h1, h2) = (h(x1)?, h(x2)?);
    if h1 * h2 >= 0.0 {
        return Ok(None);
    }
    Ok(Some((x1 * h2 - x2 * h1) / (h2 - h1)))
}

fn golden_min_abs<F: Fn(f64) -> Result<f64>>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let ends = [(a, f(a)?.abs()), (b, f(b)?.abs())];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?.abs(), f(d)?.abs());
    while b - a > SINGULAR_REFINE_WIDTH {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?.abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?.abs();
        }
    }
    let mid = 0.5 * (a + b);
    let best = [(mid, f(mid)?.abs()), ends[0], ends[1]]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("three candidates");
    Ok((best.0, f(best.0)?))
}

/// Per-coordinate closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactBox {
    pub intervals: Vec<[f64; 2]>,
}

impl CompactBox {
    pub fn new(intervals: Vec<[f64; 2]>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(invalid("a box needs at least one coordinate"));
        }
        if intervals.iter().any(|&[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(invalid("box intervals must satisfy lo <= hi"));
        }
        Ok(Self { intervals })
    }

    /// The cube `[−r, r]^n`.
    pub fn symmetric(n: usize, r: f64) -> Result<Self> {
        Self::new(vec![[-r, r]; n])
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn vertices(&self) -> Vec<ColVec> {
        box_vertices(&self.intervals)
    }

    /// Scales every interval about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self { intervals: self.intervals.iter().map(|&[lo, hi]| [lo * s, hi * s]).collect() }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.intervals.iter().map(|&[lo, hi]| lo + (hi - lo) * rng.random::<f64>()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alpha0Estimate {
    pub alpha0: f64,
    /// `μ_max(P) · sup_{K₂} εᵀPε`.
    pub r: f64,
    pub rho: f64,
    /// `sup_{∂D(ρ)} L_f W`.
    pub m1: f64,
    /// `1 + sup_{∂D(ρ)} |∇W|`.
    pub m2: f64,
    pub pinv_norm: f64,
    pub c_norm: f64,
    pub level_set_points: usize,
}

/// Seed for the level-set sampler, from `DISSIPED_SEED` (default 0).
pub fn sampling_seed() -> u64 {
    std::env::var("DISSIPED_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

/// Sampled version of the gain bound `α₀ = −M₁ / (R M₂ |P⁻¹| |C|²)`.
///
/// `sys` is in deviation coordinates and `law` is the stabilising feedback. The level set
/// `∂D(ρ)` is sampled along random directions plus the coordinate axes.
pub fn estimate_alpha0(
    sys: &InputAffineSystem,
    law: &FeedbackLaw,
    w: &LyapunovSpec,
    k1: &CompactBox,
    k2: &CompactBox,
    samples: usize,
    seed: u64,
) -> Result<Alpha0Estimate> {
    let n = sys.n();
    law.validate_for(sys)?;
    w.validate()?;
    if w.n() != n || k1.dim() != n || k2.dim() != n {
        return Err(invalid(format!("W, K1 and K2 must all have dimension n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sys.p_mat();
    let mu_max = max_eig_symmetric(p)?;
    let quad_p = |e: &[f64]| -> f64 {
        let mut pe = vec![0.0; n];
        p.mul_slice_into(e, &mut pe);
        pe.iter().zip(e).map(|(a, b)| a * b).sum()
    };

    let mut sup_v = k2.vertices().iter().map(|v| quad_p(v.as_slice())).fold(0.0, f64::max);
    for _ in 0..samples {
        sup_v = sup_v.max(quad_p(&k2.sample(&mut rng)));
    }
    let r = mu_max * sup_v;

    let mut sup_w = k1.vertices().iter().map(|v| w.value(v.as_slice())).fold(0.0, f64::max);
    for _ in 0..samples {
        sup_w = sup_w.max(w.value(&k1.sample(&mut rng)));
    }
    let rho = RHO_INFLATION * sup_w;
    if !(rho > 0.0) {
        return Err(invalid("K1 must contain a point other than the origin"));
    }

    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(2 * n + samples);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            directions.push(d);
        }
    }
    for _ in 0..samples {
        directions.push((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let mut m1 = f64::NEG_INFINITY;
    let mut sup_grad: f64 = 0.0;
    let mut u = vec![0.0; sys.m()];
    let mut fx = vec![0.0; n];
    let mut used = 0;
    for d in &directions {
        let wd = w.value(d);
        if !(wd > 0.0) {
            continue;
        }
        let t = (rho / wd).sqrt();
        let x: Vec<f64> = d.iter().map(|v| v * t).collect();
        law.eval_into(&x, &mut u);
        sys.field_into(&x, &u, &mut fx);
        let grad = w.gradient(&x);
        let lie: f64 = grad.iter().zip(&fx).map(|(a, b)| a * b).sum();
        m1 = m1.max(lie);
        sup_grad = sup_grad.max(matrix::norm2(&grad));
        used += 1;
    }
    if m1 >= STRICT_LYAPUNOV_THRESHOLD {
        return Err(AnalysisError::NotStrictLyapunov { m1 });
    }
    let m2 = 1.0 + sup_grad;
    let pinv_norm = spectral_norm(&inverse(p)?);
    let c_norm = spectral_norm(sys.c());
    let alpha0 = -m1 / (r * m2 * pinv_norm * c_norm * c_norm);
    Ok(Alpha0Estimate { alpha0, r, rho, m1, m2, pinv_norm, c_norm, level_set_points: used })
}

/// Output-dependent observer gain `max{W(x̂),1} / (2(1+|∇W(x̂)|)(1+|P⁻¹Cᵀy|))`.
///
/// Always positive; `y_err` is the output mismatch `Cε`.
pub fn adaptive_gain(w: &LyapunovSpec, xhat: &ColVec, y_err: &ColVec, c: &Mat, p: &Mat) -> Result<f64> {
    let gain = AdaptiveGain::new(w.clone(), c, p)?;
    if xhat.dim() != w.n() || y_err.dim() != c.rows() {
        return Err(invalid("x̂ or y has the wrong dimension"));
    }
    Ok(gain.eval(xhat.as_slice(), y_err.as_slice()))
}

/// [`adaptive_gain`] with `P⁻¹Cᵀ` precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGain {
    pub w: LyapunovSpec,
    pinv_ct: Mat,
}

impl AdaptiveGain {
    pub fn new(w: LyapunovSpec, c: &Mat, p: &Mat) -> Result<Self> {
        w.validate()?;
        if w.n() != p.rows() || c.cols() != p.rows() {
            return Err(invalid("W, C and P dimensions disagree"));
        }
        let pinv_ct = inverse(p)?.matmul(&c.transpose())?;
        Ok(Self { w, pinv_ct })
    }

    #[inline]
    pub fn eval(&self, xhat: &[f64], y_err: &[f64]) -> f64 {
        let mut k = vec![0.0; self.pinv_ct.rows()];
        self.pinv_ct.mul_slice_into(y_err, &mut k);
        let num = self.w.value(xhat).max(1.0);
        num / (2.0 * (1.0 + self.w.gradient_norm(xhat)) * (1.0 + matrix::norm2(&k)))
    }

    /// Right-hand side of the correction bound `|α P⁻¹Cᵀy| ≤ max{W,1}/(2(1+|∇W|))`.
    pub fn correction_bound(&self, xhat: &[f64]) -> f64 {
        self.w.value(xhat).max(1.0) / (2.0 * (1.0 + self.w.gradient_norm(xhat)))
    }

    /// `|α(x̂, y) P⁻¹Cᵀy|`.
    pub fn correction_norm(&self, xhat: &[f64], y_err: &[f64]) -> f64 {
        let mut k = vec![0.0; self.pinv_ct.rows()];
        self.pinv_ct.mul_slice_into(y_err, &mut k);
        self.eval(xhat, y_err) * matrix::norm2(&k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    /// Rank of the observability matrix at `u = 0`.
    pub rank: usize,
    pub det: Option<f64>,
    pub singular_inputs_found: Vec<ColVec>,
    pub scan: Option<SingularInputScan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub dissipativity: DissipativityReport,
    pub detectability: DetectabilityReport,
    pub observability: ObservabilityReport,
    pub alpha0: Option<f64>,
    pub alpha0_detail: Option<Alpha0Estimate>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// Dissipativity and target detectability both pass.
    pub fn assumptions_hold(&self) -> bool {
        self.dissipativity.pass && self.detectability.pass
    }
}

/// Inputs for the optional `α₀` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alpha0Setup {
    pub law: FeedbackLaw,
    pub lyapunov: LyapunovSpec,
    pub k1: CompactBox,
    pub k2: CompactBox,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub u_samples: usize,
    pub dissipativity_tol: f64,
    pub hautus_tol: f64,
    pub scan_grid: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            u_samples: 101,
            dissipativity_tol: DEFAULT_DISSIPATIVITY_TOL,
            hautus_tol: DEFAULT_HAUTUS_TOL,
            scan_grid: 200,
            seed: 0,
        }
    }
}

/// Runs every check on a system written in deviation coordinates.
pub fn analyze(sys: &InputAffineSystem, alpha0: Option<&Alpha0Setup>, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let dissipativity = check_dissipativity(sys, opts.u_samples, opts.dissipativity_tol)?;
    let detectability = check_detectability(sys.c(), sys.a0(), opts.hautus_tol)?;
    let obs = observability_matrix(sys.c(), sys.a0())?;
    let mut notes = Vec::new();
    let scan = if sys.m() == 1 {
        Some(scan_singular_inputs(sys, opts.scan_grid)?)
    } else {
        notes.push("singular-input scan skipped: more than one input channel".to_string());
        None
    };
    let observability = ObservabilityReport {
        rank: rank(&row_equilibrate(&obs), DEFAULT_RANK_TOL),
        det: if obs.is_square() { Some(determinant(&obs)?) } else { None },
        singular_inputs_found: scan
            .iter()
            .flat_map(|s| s.candidates.iter().map(|c| ColVec::new(vec![c.u]).expect("finite")))
            .collect(),
        scan,
    };
    let mut report = AnalysisReport { dissipativity, detectability, observability, alpha0: None, alpha0_detail: None, notes };
    if let Some(setup) = alpha0 {
        match estimate_alpha0(sys, &setup.law, &setup.lyapunov, &setup.k1, &setup.k2, setup.samples, opts.seed) {
            Ok(est) => {
                report.alpha0 = Some(est.alpha0);
                report.alpha0_detail = Some(est);
            }
            Err(AnalysisError::NotStrictLyapunov { m1 }) => report.notes.push(format!(
                "alpha0 not available: the supplied W is not strict on the sampled level set (M1 = {m1:.3e})"
            )),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}
