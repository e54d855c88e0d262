//! Numerical certificates built on upper-triangular 2×2 amplification:
//! difference quotients of `ω`, the derivative of `v_q`, noncommutative-function
//! axioms, horodisc membership and boundary probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::algebra::{
    amplify, block, c, direct_sum, hermitian_deviation, hermitian_eigenvalues, identity, im_part, inverse,
    level_of, linearize_on_basis, min_eig_hermitian_part, op_norm, re_part, upper_triangular, AlgebraElement,
    HalfPlanePoint, LinearMapOnB, Mat, Side, C64,
};
use crate::error::{Error, Result};
use crate::model::OperatorDistribution;
use crate::subordination::{g_q, solve_vq, vq_raw, SolveReport, SolverConfig, SubordinationProblem, Variant};
use crate::transforms::Subordinated;

/// PSD slack used by horodisc membership.
pub const HORODISC_TOL: f64 = 1e-10;
/// Agreement required between the implicit and amplified derivatives of `v_q`.
pub const DERIVATIVE_TOL: f64 = 1e-8;
/// Relative agreement required against central finite differences.
pub const FD_TOL: f64 = 1e-5;
/// Step of the central finite differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumCertificate {
    pub eigenvalues: Vec<C64>,
    pub min_real: f64,
    pub spectral_radius: f64,
    pub claim: String,
    pub pass: bool,
    /// `‖lin(ΔH)·lin(Δω) − I‖` where applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_defect: Option<f64>,
}

impl SpectrumCertificate {
    fn new(map: &LinearMapOnB, claim: &str, pass: impl Fn(&[C64]) -> bool) -> Self {
        let eigenvalues = map.eigenvalues();
        let min_real = eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pass = pass(&eigenvalues);
        Self {
            eigenvalues,
            min_real,
            spectral_radius,
            claim: claim.to_string(),
            pass,
            inverse_defect: None,
        }
    }
}

/// Residual norm for a 2×2 block iterate whose (1,2) block is later divided by `λ`.
fn block_weighted(half: usize, lambda: f64) -> impl Fn(&Mat) -> f64 {
    move |r: &Mat| {
        let diag = op_norm(&block(r, half, 0, 0))
            .max(op_norm(&block(r, half, 1, 1)))
            .max(op_norm(&block(r, half, 1, 0)));
        diag.max(op_norm(&block(r, half, 0, 1)) / lambda)
    }
}

fn same_level(b1: &Mat, b2: &Mat, c: &Mat) -> Result<usize> {
    if b1.shape() != b2.shape() || b1.shape() != c.shape() {
        return Err(Error::DimensionMismatch {
            context: "difference quotient arguments",
            expected: b1.nrows(),
            found: if b2.shape() != b1.shape() { b2.nrows() } else { c.nrows() },
        });
    }
    Ok(b1.nrows())
}

fn upper_margin(b: &HalfPlanePoint) -> Result<f64> {
    if b.side() != Side::Upper {
        return Err(Error::NotInHalfPlane {
            side: "upper",
            margin: HalfPlanePoint::margin_of(b.value(), Side::Upper),
        });
    }
    Ok(b.margin())
}

/// Rescaling that keeps `[[b₁, λc],[0, b₂]]` in the upper half-plane.
pub fn admissible_lambda(m1: f64, m2: f64, c_norm: f64) -> f64 {
    (m1 * m2).min(1.0) / (2.0 * c_norm + 1.0)
}

struct DeltaSolve {
    value: Mat,
    report: SolveReport,
}

fn delta_omega_raw(p: &SubordinationProblem, b1: &Mat, b2: &Mat, lambda: f64, cm: &Mat, cfg: &SolverConfig) -> Result<DeltaSolve> {
    let half = b1.nrows();
    let big = upper_triangular(b1, &(cm * c(lambda, 0.0)), b2);
    let report = p.omega_raw(&big, cfg, block_weighted(half, lambda))?;
    if !report.converged {
        return Err(Error::NoConvergence(Box::new(report)));
    }
    let value = block(report.matrix(), half, 0, 1) / c(lambda, 0.0);
    Ok(DeltaSolve { value, report })
}

/// `Δω(b₁, b₂)(c)`: the (1,2) block of `ω` at `[[b₁, λc],[0, b₂]]`, divided by `λ`.
pub fn delta_omega(
    p: &SubordinationProblem,
    b1: &HalfPlanePoint,
    b2: &HalfPlanePoint,
    cm: &AlgebraElement,
    cfg: &SolverConfig,
) -> Result<AlgebraElement> {
    let (m1, m2) = (upper_margin(b1)?, upper_margin(b2)?);
    let (b1, b2) = (b1.value().matrix(), b2.value().matrix());
    same_level(b1, b2, cm.matrix())?;
    level_of(b1, p.base_dim())?;
    let lambda = admissible_lambda(m1, m2, cm.norm());
    Ok(AlgebraElement::wrap(delta_omega_raw(p, b1, b2, lambda, cm.matrix(), cfg)?.value))
}

/// The diagonal blocks of the amplified solve behind [`delta_omega`].
pub fn delta_omega_diagonal(
    p: &SubordinationProblem,
    b1: &HalfPlanePoint,
    b2: &HalfPlanePoint,
    cm: &AlgebraElement,
    cfg: &SolverConfig,
) -> Result<(AlgebraElement, AlgebraElement)> {
    let (m1, m2) = (upper_margin(b1)?, upper_margin(b2)?);
    let (b1, b2) = (b1.value().matrix(), b2.value().matrix());
    same_level(b1, b2, cm.matrix())?;
    let lambda = admissible_lambda(m1, m2, cm.norm());
    let r = delta_omega_raw(p, b1, b2, lambda, cm.matrix(), cfg)?.report;
    let half = b1.nrows();
    Ok((
        AlgebraElement::wrap(block(r.matrix(), half, 0, 0)),
        AlgebraElement::wrap(block(r.matrix(), half, 1, 1)),
    ))
}

/// `c ↦ Δω(b₁, b₂)(c)` as a matrix on `M_k(B)`.
pub fn delta_omega_linear(p: &SubordinationProblem, b1: &HalfPlanePoint, b2: &HalfPlanePoint, cfg: &SolverConfig) -> Result<LinearMapOnB> {
    let (m1, m2) = (upper_margin(b1)?, upper_margin(b2)?);
    let (b1m, b2m) = (b1.value().matrix(), b2.value().matrix());
    let dim = b1m.nrows();
    same_level(b1m, b2m, b1m)?;
    linearize_on_basis(
        |cm| {
            let lambda = admissible_lambda(m1, m2, op_norm(cm));
            Ok(delta_omega_raw(p, b1m, b2m, lambda, cm, cfg)?.value)
        },
        dim,
    )
}

/// `d ↦ ΔH(w₁, w₂)(d)`, the (1,2) block of `H` at `[[w₁, d],[0, w₂]]`.
pub fn delta_h_linear(p: &SubordinationProblem, w1: &Mat, w2: &Mat) -> Result<LinearMapOnB> {
    let dim = w1.nrows();
    linearize_on_basis(|d| Ok(block(&p.h_map(&upper_triangular(w1, d, w2))?, dim, 0, 1)), dim)
}

/// Spectrum of `Δω(b₁, b₂)`; the claim is `Re σ > 1/2`. Also records how far
/// `lin(ΔH(ω(b₁), ω(b₂)))·lin(Δω(b₁, b₂))` is from the identity.
pub fn delta_omega_spectrum(
    p: &SubordinationProblem,
    b1: &HalfPlanePoint,
    b2: &HalfPlanePoint,
    cfg: &SolverConfig,
) -> Result<SpectrumCertificate> {
    let dw = delta_omega_linear(p, b1, b2, cfg)?;
    let w1 = p.omega_value(b1.value().matrix(), cfg)?;
    let w2 = p.omega_value(b2.value().matrix(), cfg)?;
    let dh = delta_h_linear(p, &w1, &w2)?;
    let dim = dw.matrix().nrows();
    let defect = op_norm(&(dh.matrix() * dw.matrix() - Mat::identity(dim, dim)));
    let mut cert = SpectrumCertificate::new(&dw, "Re z > 1/2", |ev| ev.iter().all(|z| z.re > 0.5));
    cert.inverse_defect = Some(defect);
    Ok(cert)
}

fn vq_pieces(p: &SubordinationProblem, u: &Mat, v: &Mat) -> Result<(Mat, Mat, Mat)> {
    let model = p.model();
    let k = level_of(u, p.base_dim())?;
    let l = model.ambient_x(k) - model.embed(u)?;
    let ve = model.embed(v)?;
    let vinv = inverse(&ve)?;
    let qm = inverse(&(&l * &vinv * &l + ve))?;
    Ok((l, vinv, qm))
}

/// `∂_v g_q(u, v)(d) = η[Q(L v⁻¹ d v⁻¹ L − d)Q]`, `L = X − u`, `Q = (L v⁻¹ L + v)⁻¹`.
fn dv_g(p: &SubordinationProblem, u: &Mat, v: &Mat) -> Result<LinearMapOnB> {
    let (l, vinv, qm) = vq_pieces(p, u, v)?;
    let model = p.model();
    linearize_on_basis(
        |d| {
            let de = model.embed(d)?;
            let inner = &l * &vinv * &de * &vinv * &l - de;
            p.eta().apply_amplified(&(&qm * inner * &qm))
        },
        u.nrows(),
    )
}

/// `∂_u g_q(u, v)(c) = η[Q(L v⁻¹ c + c v⁻¹ L)Q]`.
fn du_g(p: &SubordinationProblem, u: &Mat, v: &Mat, cm: &Mat) -> Result<Mat> {
    let (l, vinv, qm) = vq_pieces(p, u, v)?;
    let ce = p.model().embed(cm)?;
    p.eta().apply_amplified(&(&qm * (&l * &vinv * &ce + &ce * &vinv * &l) * &qm))
}

/// The same derivative from the (1,2) block of `g_q` at `[[v, d],[0, v]]`.
fn dv_g_amplified(p: &SubordinationProblem, q: &Mat, u: &Mat, v: &Mat) -> Result<LinearMapOnB> {
    let dim = u.nrows();
    let (q2, u2) = (direct_sum(q, q), direct_sum(u, u));
    linearize_on_basis(|d| Ok(block(&g_q(p, &q2, &u2, &upper_triangular(v, d, v))?, dim, 0, 1)), dim)
}

fn converged_vq(p: &SubordinationProblem, q: &AlgebraElement, u: &AlgebraElement, cfg: &SolverConfig) -> Result<Mat> {
    Ok(solve_vq(p, q, u, cfg)?.into_result()?.into_matrix())
}

/// `v_q(u)` iterated past the solver tolerance down to the rounding floor, for
/// differences at step `FD_STEP`.
fn polished_vq(p: &SubordinationProblem, q: &Mat, u: &Mat, cfg: &SolverConfig) -> Result<Mat> {
    let rough = vq_raw(p, q, u, cfg, op_norm)?;
    if !rough.converged {
        return Err(Error::NoConvergence(Box::new(rough)));
    }
    let (mut v, mut best_res) = (rough.value.into_matrix(), rough.residual);
    let mut best = v.clone();
    let mut stale = 0;
    for _ in 0..POLISH_MAX {
        let next = g_q(p, q, u, &v)?;
        let res = op_norm(&(&next - &v));
        v = next;
        if res < best_res {
            best_res = res;
            best = v.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= 20 {
                break;
            }
        }
    }
    Ok(best)
}

const POLISH_MAX: usize = 5000;

fn generic(p: &SubordinationProblem) -> Result<()> {
    match p.variant() {
        Variant::Generic => Ok(()),
        Variant::Power(_) => Err(Error::invalid("this diagnostic needs a generic problem")),
    }
}

/// Spectrum of `∂_v g_q(u, v_q(u))`; the claim is spectral radius `< 1`. The
/// closed-form derivative is cross-checked against the 2×2 amplification.
pub fn dvg_spectrum(p: &SubordinationProblem, q: &AlgebraElement, u: &AlgebraElement, cfg: &SolverConfig) -> Result<SpectrumCertificate> {
    generic(p)?;
    let v = converged_vq(p, q, u, cfg)?;
    let (qm, um) = (re_part(q.matrix()), re_part(u.matrix()));
    let formula = dv_g(p, &um, &v)?;
    let amplified = dv_g_amplified(p, &qm, &um, &v)?;
    let gap = formula.distance(&amplified);
    if gap > DERIVATIVE_TOL * op_norm(formula.matrix()).max(1.0) {
        return Err(Error::DerivativeCrossCheck(format!("∂_v g routes differ by {gap:.3e}")));
    }
    Ok(SpectrumCertificate::new(&formula, "|z| < 1", |ev| ev.iter().all(|z| z.norm() < 1.0)))
}

#[derive(Clone, Debug, Serialize)]
pub struct VqDerivative {
    /// `[Id − ∂_v g_q]⁻¹ ∂_u g_q(c)`.
    pub implicit: AlgebraElement,
    /// `Δv_q(u, u)(c)` from the fixed point of `g_q` at `[[u, λc],[0, u]]`.
    pub amplified: AlgebraElement,
    /// `(v_q(u + sc) − v_q(u − sc))/(2s)`.
    pub finite_difference: AlgebraElement,
    pub amplified_error: f64,
    pub finite_difference_error: f64,
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// `∂_u v_q(c)` by the implicit-function formula, cross-checked against the
/// amplified fixed point and against central finite differences.
pub fn vq_derivative(
    p: &SubordinationProblem,
    q: &AlgebraElement,
    u: &AlgebraElement,
    cm: &AlgebraElement,
    cfg: &SolverConfig,
) -> Result<VqDerivative> {
    generic(p)?;
    if cm.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            context: "derivative direction",
            expected: u.dim(),
            found: cm.dim(),
        });
    }
    let deviation = hermitian_deviation(cm.matrix());
    if deviation > 1e-12 * cm.norm().max(1.0) {
        return Err(Error::NotSelfadjoint { deviation });
    }
    let cm_h = AlgebraElement::wrap(re_part(cm.matrix()));
    let v = converged_vq(p, q, u, cfg)?;
    let (qm, um) = (re_part(q.matrix()), re_part(u.matrix()));
    let dim = um.nrows();

    let dv = dv_g(p, &um, &v)?;
    let id_minus = LinearMapOnB::new(dim, Mat::identity(dim * dim, dim * dim) - dv.matrix())?;
    let implicit = id_minus.inverse()?.apply(&du_g(p, &um, &v, cm_h.matrix())?);

    let lambda = 1.0 / (1.0 + cm_h.norm());
    let q2 = direct_sum(&qm, &qm);
    let u2 = upper_triangular(&um, &(cm_h.matrix() * c(lambda, 0.0)), &um);
    let r = vq_raw(p, &q2, &u2, cfg, block_weighted(dim, lambda))?;
    if !r.converged {
        return Err(Error::NoConvergence(Box::new(r)));
    }
    let amplified = block(r.matrix(), dim, 0, 1) / c(lambda, 0.0);

    let fine = SolverConfig {
        tol: cfg.tol.min(1e-13),
        start: Some(v.clone()),
        ..cfg.clone()
    };
    let shifted = |sign: f64| polished_vq(p, &qm, &(&um + cm_h.matrix() * c(sign * FD_STEP, 0.0)), &fine);
    let fd = (shifted(1.0)? - shifted(-1.0)?) / c(2.0 * FD_STEP, 0.0);

    let scale = op_norm(&implicit);
    let amplified_error = relative(op_norm(&(&amplified - &implicit)), scale.max(1.0));
    let finite_difference_error = relative(op_norm(&(&fd - &implicit)), scale);
    if amplified_error > DERIVATIVE_TOL {
        return Err(Error::DerivativeCrossCheck(format!("implicit vs amplified: {amplified_error:.3e}")));
    }
    if finite_difference_error > FD_TOL {
        return Err(Error::DerivativeCrossCheck(format!("implicit vs finite differences: {finite_difference_error:.3e} (‖implicit‖ = {scale:.3e})")));
    }
    Ok(VqDerivative {
        implicit: AlgebraElement::wrap(implicit),
        amplified: AlgebraElement::wrap(amplified),
        finite_difference: AlgebraElement::wrap(fd),
        amplified_error,
        finite_difference_error,
    })
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct AxiomDeviation {
    pub direct_sum: f64,
    pub similarity: f64,
}

impl AxiomDeviation {
    pub fn max(&self) -> f64 {
        self.direct_sum.max(self.similarity)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub g: AxiomDeviation,
    pub h: AxiomDeviation,
    pub omega: AxiomDeviation,
}

impl AxiomReport {
    pub fn max(&self) -> f64 {
        self.g.max().max(self.h.max()).max(self.omega.max())
    }
}

fn axiom_deviation<F: Fn(&Mat) -> Result<Mat>>(f: F, a: &Mat, b: &Mat, t: &Mat, t_inv: &Mat) -> Result<AxiomDeviation> {
    let ab = direct_sum(a, b);
    let f_ab = f(&ab)?;
    let direct_sum_dev = op_norm(&(&f_ab - direct_sum(&f(a)?, &f(b)?)));
    let similarity = op_norm(&(f(&(t_inv * &ab * t))? - t_inv * f_ab * t));
    Ok(AxiomDeviation {
        direct_sum: direct_sum_dev,
        similarity,
    })
}

/// Direct-sum and similarity defects of `G = G_X∘ω`, `h = F − w` and `ω`
/// at `a`, `b` and `T⁻¹(a ⊕ b)T`, with `T` a scalar matrix acting on levels.
pub fn nc_function_axioms_check(
    p: &SubordinationProblem,
    a: &HalfPlanePoint,
    b: &HalfPlanePoint,
    t: &Mat,
    cfg: &SolverConfig,
) -> Result<AxiomReport> {
    upper_margin(a)?;
    upper_margin(b)?;
    let n = p.base_dim();
    let (am, bm) = (a.value().matrix(), b.value().matrix());
    let levels = level_of(am, n)? + level_of(bm, n)?;
    if t.nrows() != levels || t.ncols() != levels {
        return Err(Error::DimensionMismatch {
            context: "similarity T",
            expected: levels,
            found: t.nrows(),
        });
    }
    let tt = t.kronecker(&identity(n));
    let t_inv = inverse(&tt)?;
    let conj = &t_inv * direct_sum(am, bm) * &tt;
    let margin = min_eig_hermitian_part(&im_part(&conj));
    if margin <= cfg.tol {
        return Err(Error::NotInHalfPlane { side: "upper", margin });
    }
    let dist = Subordinated::with_config(p.clone(), cfg.clone())?;
    Ok(AxiomReport {
        g: axiom_deviation(|x| dist.cauchy(x), am, bm, &tt, &t_inv)?,
        h: axiom_deviation(|x| dist.h_transform(x), am, bm, &tt, &t_inv)?,
        omega: axiom_deviation(|x| p.omega_value(x, cfg), am, bm, &tt, &t_inv)?,
    })
}

/// `λ_min` of the Hermitian part of `ℓ − (w − c)*(Im w)⁻¹(w − c)`.
pub fn horodisc_slack(center: &Mat, ell: &Mat, w: &Mat) -> Result<f64> {
    let d = w - center;
    let m = d.adjoint() * inverse(&im_part(w))? * d;
    Ok(min_eig_hermitian_part(&(ell - m)))
}

/// `(w − c)*(Im w)⁻¹(w − c) ⪯ ℓ` (`≺` when `strict`), with PSD tolerance
/// [`HORODISC_TOL`].
pub fn horodisc_membership(center: &AlgebraElement, ell: &AlgebraElement, w: &HalfPlanePoint, strict: bool) -> Result<bool> {
    upper_margin(w)?;
    let wm = w.value().matrix();
    if center.dim() != wm.nrows() || ell.dim() != wm.nrows() {
        return Err(Error::DimensionMismatch {
            context: "horodisc data",
            expected: wm.nrows(),
            found: center.dim().min(ell.dim()),
        });
    }
    let slack = horodisc_slack(center.matrix(), ell.matrix(), wm)?;
    Ok(if strict { slack > HORODISC_TOL } else { slack >= -HORODISC_TOL })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct JcVerdicts {
    pub omega_limit_selfadjoint: bool,
    pub omega_cauchy: bool,
    pub ell_strictly_positive: bool,
    pub quotient_bounded: bool,
    pub hprime_bounded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct JcProbeResult {
    pub y_schedule: Vec<f64>,
    pub omega_values: Vec<AlgebraElement>,
    pub im_norms: Vec<f64>,
    pub increments: Vec<f64>,
    pub ell_estimate: AlgebraElement,
    pub ell_min_eigenvalue: f64,
    pub quotient: Vec<f64>,
    pub hprime_norms: Vec<f64>,
    pub verdicts: JcVerdicts,
    pub status: ProbeStatus,
    /// First schedule point where the solve failed, if any.
    pub truncated_at: Option<f64>,
    pub note: String,
}

/// Relative size of `Im ω` below which the limit counts as selfadjoint.
pub const JC_SELFADJOINT_TOL: f64 = 1e-3;
/// Slack of the "non-increasing" trend test.
pub const JC_TREND_SLACK: f64 = 0.05;
/// Slack on `‖h′(ℓ)(ℓ)‖ ≤ 1`.
pub const JC_HPRIME_SLACK: f64 = 1e-3;

/// `w ↦ η[(X − w)⁻¹]` (or `(α − Id)h_μ(w)` for powers), i.e. `f_b(w) − b − a`.
fn boundary_h(p: &SubordinationProblem, w: &Mat) -> Result<Mat> {
    let k = level_of(w, p.base_dim())?;
    Ok(p.correction(w)? - amplify(p.a().matrix(), k))
}

/// `h′(w)(d)` from the (1,2) block of `h` at `[[w, d],[0, w]]`.
pub fn boundary_h_derivative(p: &SubordinationProblem, w: &Mat, d: &Mat) -> Result<Mat> {
    Ok(block(&boundary_h(p, &upper_triangular(w, d, w))?, w.nrows(), 0, 1))
}

/// Follows `ω(α + iyv)` along the schedule and tests the hypotheses and the
/// conclusions of the boundary Julia–Carathéodory statements.
pub fn jc_probe(
    p: &SubordinationProblem,
    alpha: &AlgebraElement,
    v: &AlgebraElement,
    u: &AlgebraElement,
    ys: &[f64],
    cfg: &SolverConfig,
) -> Result<JcProbeResult> {
    cfg.validate()?;
    let n = p.base_dim();
    for (name, x) in [("alpha", alpha), ("v", v), ("u", u)] {
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "jc_probe data",
                expected: n,
                found: x.dim(),
            });
        }
        let deviation = hermitian_deviation(x.matrix());
        if deviation > 1e-12 * x.norm().max(1.0) {
            return Err(Error::invalid(format!("{name} must be selfadjoint (deviation {deviation:.3e})")));
        }
    }
    if min_eig_hermitian_part(v.matrix()) <= 0.0 || min_eig_hermitian_part(u.matrix()) <= 0.0 {
        return Err(Error::invalid("v and u must be strictly positive"));
    }
    if ys.len() < 3 || ys.iter().any(|&y| !(y > 0.0 && y <= 1.0)) || ys.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("y schedule must have at least 3 strictly decreasing points in (0, 1]"));
    }
    let (am, vm, um) = (re_part(alpha.matrix()), re_part(v.matrix()), re_part(u.matrix()));

    let mut omegas: Vec<Mat> = Vec::new();
    let mut used = Vec::new();
    let mut truncated_at = None;
    for &y in ys {
        let b = &am + &vm * c(0.0, y);
        let mut local = cfg.clone();
        if let Some(prev) = omegas.last() {
            local.start = Some(prev.clone());
        }
        match p.omega_mat(&b, &local) {
            Ok(r) if r.converged => {
                omegas.push(r.value.into_matrix());
                used.push(y);
            }
            _ => {
                truncated_at = Some(y);
                break;
            }
        }
    }
    if omegas.len() < 3 {
        return Err(Error::invalid("fewer than three schedule points solved"));
    }
    let last = omegas.last().cloned().unwrap_or_else(|| identity(n));
    let im_norms: Vec<f64> = omegas.iter().map(|w| op_norm(&im_part(w))).collect();
    let increments: Vec<f64> = omegas.windows(2).map(|w| op_norm(&(&w[1] - &w[0]))).collect();
    let scale = op_norm(&last).max(1.0);
    let last_im = *im_norms.last().unwrap_or(&0.0);
    let omega_limit_selfadjoint = last_im <= JC_SELFADJOINT_TOL * scale;
    let omega_cauchy = increments.last().is_some_and(|&d| d <= JC_SELFADJOINT_TOL * scale);

    let im_last = im_part(&last);
    let ell = if last_im > 0.0 { &im_last / c(last_im, 0.0) } else { identity(n) };
    let ell_min = hermitian_eigenvalues(&ell).map(|e| e[0]).unwrap_or(f64::NAN);
    let ell_strictly_positive = ell_min > 1e-8;

    let omega_est = re_part(&last);
    let mut quotient = Vec::with_capacity(used.len());
    let mut hprime_norms = Vec::with_capacity(used.len());
    for &y in &used {
        let wq = &omega_est + &um * c(0.0, y);
        let hq = boundary_h(p, &wq)?;
        quotient.push(normalized_trace_re(&im_part(&hq)) / y);
        let wl = &omega_est + &ell * c(0.0, y);
        hprime_norms.push(op_norm(&boundary_h_derivative(p, &wl, &ell)?));
    }
    let tail = &quotient[quotient.len() - 3..];
    let quotient_bounded = tail.iter().all(|q| q.is_finite()) && tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + JC_TREND_SLACK) + 1e-300);
    let hprime_bounded = hprime_norms.last().is_some_and(|&h| h <= 1.0 + JC_HPRIME_SLACK);

    let hypotheses = omega_limit_selfadjoint && omega_cauchy && ell_strictly_positive;
    let (status, note) = if !omega_limit_selfadjoint {
        (ProbeStatus::NotApplicable, "ω limit not selfadjoint".to_string())
    } else if !hypotheses {
        (ProbeStatus::NotApplicable, "hypotheses not met numerically".to_string())
    } else if quotient_bounded && hprime_bounded {
        (ProbeStatus::Pass, String::new())
    } else {
        (ProbeStatus::Fail, "conclusion violated".to_string())
    };
    Ok(JcProbeResult {
        y_schedule: used,
        omega_values: omegas.into_iter().map(AlgebraElement::wrap).collect(),
        im_norms,
        increments,
        ell_estimate: AlgebraElement::wrap(ell),
        ell_min_eigenvalue: ell_min,
        quotient,
        hprime_norms,
        verdicts: JcVerdicts {
            omega_limit_selfadjoint,
            omega_cauchy,
            ell_strictly_positive,
            quotient_bounded,
            hprime_bounded,
        },
        status,
        truncated_at,
        note,
    })
}

fn normalized_trace_re(m: &Mat) -> f64 {
    m.trace().re / m.nrows() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct HorodiscProbe {
    pub kappa: f64,
    pub samples: usize,
    pub min_slack: f64,
}

/// Samples the open horodisc `H̊(ω*, ℓ/κ)` and records the worst PSD slack of
/// `h(w)` in the closed horodisc `H(ω* − α, ℓ/κ)`.
pub fn horodisc_mapping_probe(
    p: &SubordinationProblem,
    omega_star: &Mat,
    alpha: &Mat,
    ell: &Mat,
    kappas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<HorodiscProbe>> {
    let n = omega_star.nrows();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let center_h = omega_star - alpha;
    let mut out = Vec::new();
    for &kappa in kappas {
        let target = ell / c(kappa, 0.0);
        let t_half_inv = inverse_sqrt_psd(&target)?;
        let mut min_slack = f64::INFINITY;
        for _ in 0..samples {
            let x = random_hermitian(&mut rng, n);
            let g = random_mat(&mut rng, n);
            let y = &g * g.adjoint() + identity(n) * c(0.05, 0.0);
            let dir = &x + &y * c(0.0, 1.0);
            let m = dir.adjoint() * inverse(&y)? * &dir;
            let top = hermitian_eigenvalues(&(&t_half_inv * &m * &t_half_inv))?.last().copied().unwrap_or(1.0);
            let s = (0.02 + 0.96 * rng.random::<f64>()) / top;
            let w = omega_star + dir * c(s, 0.0);
            let hw = boundary_h(p, &w)?;
            if min_eig_hermitian_part(&im_part(&hw)) <= 0.0 {
                min_slack = min_slack.min(min_eig_hermitian_part(&im_part(&hw)));
                continue;
            }
            min_slack = min_slack.min(horodisc_slack(&center_h, &target, &hw)?);
        }
        out.push(HorodiscProbe { kappa, samples, min_slack });
    }
    Ok(out)
}

fn inverse_sqrt_psd(m: &Mat) -> Result<Mat> {
    let h = re_part(m);
    let eig = nalgebra::linalg::SymmetricEigen::new(h);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::invalid("ℓ must be strictly positive"));
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| c(1.0 / l.sqrt(), 0.0)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

fn random_mat(rng: &mut ChaCha20Rng, n: usize) -> Mat {
    Mat::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_hermitian(rng: &mut ChaCha20Rng, n: usize) -> Mat {
    let g = random_mat(rng, n);
    (&g + g.adjoint()) * c(0.5, 0.0)
}
