//! Fixed-point solvers for the subordination function `ω`, the power
//! subordination `ω_α`, the boundary map `v_q`, and their left inverses `H`, `Φ_q`.

use serde::{Deserialize, Serialize};

use crate::algebra::{
    amplify, c, hermitian_deviation, identity, im_part, inverse, level_of, min_eig_hermitian_part,
    op_norm, re_part, AlgebraElement, CpMap, HalfPlanePoint, Mat, Side,
};
use crate::error::{Error, Result};
use crate::model::{OperatorDistribution, OperatorModel};

/// Choi slack allowed when certifying that `α − Id` is completely positive.
pub const CHOI_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Initial point; `None` selects `b` for `ω` and `q + 1` for `v_q`.
    #[serde(skip)]
    pub start: Option<Mat>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
            damping: 0.0,
            start: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn damped(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn starting_at(mut self, start: Mat) -> Self {
        self.start = Some(start);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::invalid(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub value: AlgebraElement,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl SolveReport {
    /// The solution, or `NoConvergence` carrying this report.
    pub fn into_result(self) -> Result<AlgebraElement> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NoConvergence(Box::new(self)))
        }
    }

    pub fn matrix(&self) -> &Mat {
        self.value.matrix()
    }
}

/// Damped Picard iteration `w_{m+1} = (1−d)·f(w_m) + d·w_m`, stopping at the
/// first `w_m` (`m ≥ 1`) with `residual(f(w_m) − w_m) ≤ tol`.
pub(crate) fn iterate<F, R>(start: Mat, cfg: &SolverConfig, mut map: F, residual: R) -> Result<SolveReport>
where
    F: FnMut(&Mat) -> Result<Mat>,
    R: Fn(&Mat) -> f64,
{
    cfg.validate()?;
    let (keep, take) = (c(cfg.damping, 0.0), c(1.0 - cfg.damping, 0.0));
    let mut w = start;
    let mut fw = map(&w)?;
    let mut res = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        w = if cfg.damping == 0.0 { fw } else { fw * take + w * keep };
        fw = map(&w)?;
        res = residual(&(&fw - &w));
        if !res.is_finite() {
            return Err(Error::NonFinite("fixed-point iterate"));
        }
        if res <= cfg.tol {
            return Ok(SolveReport {
                value: AlgebraElement::wrap(w),
                iterations: it,
                residual: res,
                converged: true,
            });
        }
    }
    Ok(SolveReport {
        value: AlgebraElement::wrap(w),
        iterations: cfg.max_iter,
        residual: res,
        converged: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `ω = b + a + η[(X − ω)^{-1}]`.
    Generic,
    /// `ω_α = b + (α − Id)(h(ω_α))`.
    Power(CpMap),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    model: OperatorModel,
    #[serde(default)]
    a: Option<AlgebraElement>,
    #[serde(default)]
    eta: Option<CpMap>,
    #[serde(default = "generic")]
    variant: Variant,
    #[serde(default)]
    solver: SolverConfig,
}

fn generic() -> Variant {
    Variant::Generic
}

#[derive(Serialize)]
struct ProblemJsonOut<'a> {
    model: &'a OperatorModel,
    a: &'a AlgebraElement,
    eta: &'a CpMap,
    variant: &'a Variant,
    solver: &'a SolverConfig,
}

/// A subordination equation over a fixed model.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(try_from = "ProblemJson")]
pub struct SubordinationProblem {
    model: OperatorModel,
    a: AlgebraElement,
    eta: CpMap,
    variant: Variant,
    solver: SolverConfig,
}

impl Serialize for SubordinationProblem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProblemJsonOut {
            model: &self.model,
            a: &self.a,
            eta: &self.eta,
            variant: &self.variant,
            solver: &self.solver,
        }
        .serialize(s)
    }
}

impl TryFrom<ProblemJson> for SubordinationProblem {
    type Error = Error;
    fn try_from(j: ProblemJson) -> Result<Self> {
        let n = j.model.base_dim();
        let a = j.a.unwrap_or_else(|| AlgebraElement::zeros(n));
        let mut p = match j.variant {
            Variant::Generic => {
                let eta = j.eta.ok_or_else(|| Error::invalid("generic problem needs \"eta\""))?;
                Self::generic(j.model, a, eta)?
            }
            Variant::Power(alpha) => Self::power(j.model, alpha)?,
        };
        j.solver.validate()?;
        p.solver = j.solver;
        Ok(p)
    }
}

impl SubordinationProblem {
    /// `η` may map either the ambient algebra or `B` to `B`; in the latter case
    /// it is composed with `E`.
    pub fn generic(model: OperatorModel, a: AlgebraElement, eta: CpMap) -> Result<Self> {
        let n = model.base_dim();
        if a.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "shift a",
                expected: n,
                found: a.dim(),
            });
        }
        let deviation = hermitian_deviation(a.matrix());
        if deviation > crate::model::MODEL_TOL * 1f64.max(a.norm()) {
            return Err(Error::NotSelfadjoint { deviation });
        }
        if eta.output_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "eta output",
                expected: n,
                found: eta.output_dim(),
            });
        }
        let ambient = model.ambient_dim();
        let eta = if eta.input_dim() == ambient {
            eta
        } else if eta.input_dim() == n {
            eta.compose_after(&model.expectation_map())?
        } else {
            return Err(Error::DimensionMismatch {
                context: "eta input",
                expected: ambient,
                found: eta.input_dim(),
            });
        };
        Ok(Self {
            model,
            a: a.re_part(),
            eta,
            variant: Variant::Generic,
            solver: SolverConfig::default(),
        })
    }

    /// `η = β∘E` with shift zero: the problem behind `ν ⊞ γ_β`.
    pub fn semicircular(model: OperatorModel, beta: CpMap) -> Result<Self> {
        if beta.input_dim() != model.base_dim() {
            return Err(Error::invalid("covariance map must act on B"));
        }
        let n = model.base_dim();
        Self::generic(model, AlgebraElement::zeros(n), beta)
    }

    pub fn power(model: OperatorModel, alpha: CpMap) -> Result<Self> {
        let n = model.base_dim();
        if alpha.input_dim() != n || alpha.output_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "alpha on B",
                expected: n,
                found: alpha.input_dim(),
            });
        }
        let min_eigenvalue = alpha.minus_identity_choi_min()?;
        if min_eigenvalue < -CHOI_TOL {
            return Err(Error::NotCompletelyPositive { min_eigenvalue });
        }
        let ambient = model.ambient_dim();
        Ok(Self {
            model,
            a: AlgebraElement::zeros(n),
            eta: CpMap::zero(n, ambient),
            variant: Variant::Power(alpha),
            solver: SolverConfig::default(),
        })
    }

    pub fn with_solver(mut self, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        self.solver = cfg;
        Ok(self)
    }

    pub fn model(&self) -> &OperatorModel {
        &self.model
    }

    pub fn a(&self) -> &AlgebraElement {
        &self.a
    }

    pub fn eta(&self) -> &CpMap {
        &self.eta
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn base_dim(&self) -> usize {
        self.model.base_dim()
    }

    /// Upper bound on `‖X‖ + ‖a‖` used by domain guards.
    pub fn shift_norm(&self) -> f64 {
        self.a.norm()
    }

    /// `f_b(w) − b`: `a + η[(X − w)^{-1}]`, or `(α − Id)h(w)` for the power variant.
    pub fn correction(&self, w: &Mat) -> Result<Mat> {
        let k = level_of(w, self.base_dim())?;
        match &self.variant {
            Variant::Generic => {
                let r = self.model.resolvent(w)?;
                Ok(amplify(self.a.matrix(), k) + self.eta.apply_amplified(&r)?)
            }
            Variant::Power(alpha) => {
                let h = self.model.h_transform(w)?;
                Ok(alpha.apply_amplified(&h)? - h)
            }
        }
    }

    /// `H(w) = w − correction(w)`.
    pub fn h_map(&self, w: &Mat) -> Result<Mat> {
        Ok(w - self.correction(w)?)
    }

    /// Solves at arbitrary level with a caller-chosen residual norm. The point
    /// is not checked against the half-plane.
    pub(crate) fn omega_raw<R: Fn(&Mat) -> f64>(&self, b: &Mat, cfg: &SolverConfig, residual: R) -> Result<SolveReport> {
        level_of(b, self.base_dim())?;
        let start = match &cfg.start {
            Some(s) if s.shape() == b.shape() => s.clone(),
            Some(_) => {
                return Err(Error::invalid("solver start has the wrong shape"));
            }
            None => b.clone(),
        };
        iterate(start, cfg, |w| Ok(b + self.correction(w)?), residual)
    }

    pub(crate) fn omega_mat(&self, b: &Mat, cfg: &SolverConfig) -> Result<SolveReport> {
        self.omega_raw(b, cfg, op_norm)
    }

    /// Converged `ω(b)` as a matrix, or `NoConvergence`.
    pub(crate) fn omega_value(&self, b: &Mat, cfg: &SolverConfig) -> Result<Mat> {
        Ok(self.omega_mat(b, cfg)?.into_result()?.into_matrix())
    }
}

fn check_upper(b: &HalfPlanePoint, tol: f64) -> Result<()> {
    let margin = b.margin();
    if b.side() != Side::Upper || margin <= tol {
        return Err(Error::NotInHalfPlane { side: "upper", margin });
    }
    Ok(())
}

/// `ω(b)` for `b ∈ H⁺(M_k(B))`, by iterating `f_b` from `b`.
pub fn solve_omega(p: &SubordinationProblem, b: &HalfPlanePoint, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    check_upper(b, cfg.tol)?;
    p.omega_mat(b.value().matrix(), cfg)
}

/// `‖H(w) − b‖`.
pub fn residual_h(p: &SubordinationProblem, w: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
    if w.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "residual_H arguments",
            expected: w.dim(),
            found: b.dim(),
        });
    }
    Ok(op_norm(&(p.h_map(w.matrix())? - b.matrix())))
}

/// `ω_α(b)` solving `w = b + (α − Id)h_μ(w)`.
pub fn solve_omega_alpha(model: &OperatorModel, alpha: &CpMap, b: &HalfPlanePoint, cfg: &SolverConfig) -> Result<SolveReport> {
    let p = SubordinationProblem::power(model.clone(), alpha.clone())?;
    solve_omega(&p, b, cfg)
}

fn generic_only(p: &SubordinationProblem) -> Result<()> {
    match p.variant {
        Variant::Generic => Ok(()),
        Variant::Power(_) => Err(Error::invalid("v_q and Φ_q are defined for generic problems only")),
    }
}

/// `g_q(u, v) = q + η[((X − u)v^{-1}(X − u) + v)^{-1}]` at any level; `u`, `v`, `q`
/// need not be selfadjoint, which the 2×2 amplifications rely on.
pub(crate) fn g_q(p: &SubordinationProblem, q: &Mat, u: &Mat, v: &Mat) -> Result<Mat> {
    let model = p.model();
    let k = level_of(u, p.base_dim())?;
    let l = model.ambient_x(k) - model.embed(u)?;
    let ve = model.embed(v)?;
    let inner = &l * inverse(&ve)? * &l + ve;
    Ok(q + p.eta.apply_amplified(&inverse(&inner)?)?)
}

pub(crate) fn vq_raw<R: Fn(&Mat) -> f64>(
    p: &SubordinationProblem,
    q: &Mat,
    u: &Mat,
    cfg: &SolverConfig,
    residual: R,
) -> Result<SolveReport> {
    let dim = q.nrows();
    let start = match &cfg.start {
        Some(s) if s.shape() == q.shape() => s.clone(),
        Some(_) => return Err(Error::invalid("solver start has the wrong shape")),
        None => q + identity(dim),
    };
    iterate(start, cfg, |v| g_q(p, q, u, v), residual)
}

fn check_vq_inputs(p: &SubordinationProblem, q: &AlgebraElement, u: &AlgebraElement, tol: f64) -> Result<()> {
    generic_only(p)?;
    if q.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            context: "q vs u",
            expected: q.dim(),
            found: u.dim(),
        });
    }
    level_of(q.matrix(), p.base_dim())?;
    let deviation = hermitian_deviation(q.matrix()).max(hermitian_deviation(u.matrix()));
    if deviation > 1e-12 * 1f64.max(q.norm()).max(u.norm()) {
        return Err(Error::NotSelfadjoint { deviation });
    }
    let margin = min_eig_hermitian_part(q.matrix());
    if margin <= tol {
        return Err(Error::invalid(format!("q must be strictly positive (λ_min = {margin:.3e})")));
    }
    Ok(())
}

/// `v_q(u)`: the positive fixed point of `g_q(u, ·)`.
pub fn solve_vq(p: &SubordinationProblem, q: &AlgebraElement, u: &AlgebraElement, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    check_vq_inputs(p, q, u, cfg.tol)?;
    vq_raw(p, &re_part(q.matrix()), &re_part(u.matrix()), cfg, op_norm)
}

/// `Φ_q(w) = w − a − η[v^{-1}(X − w)((X − w)v^{-1}(X − w) + v)^{-1}]` with `v = v_q(w)`.
pub fn phi_q(p: &SubordinationProblem, q: &AlgebraElement, w: &AlgebraElement, cfg: &SolverConfig) -> Result<AlgebraElement> {
    let v = solve_vq(p, q, w, cfg)?.into_result()?;
    let model = p.model();
    let wm = re_part(w.matrix());
    let k = level_of(&wm, p.base_dim())?;
    let l = model.ambient_x(k) - model.embed(&wm)?;
    let vinv = inverse(&model.embed(v.matrix())?)?;
    let inner = inverse(&(&l * &vinv * &l + model.embed(v.matrix())?))?;
    let corr = p.eta.apply_amplified(&(vinv * &l * inner))?;
    Ok(AlgebraElement::wrap(&wm - amplify(p.a.matrix(), k) - corr))
}

/// `Im ω(b) − Im b`, whose positivity the iteration preserves.
pub fn imaginary_gain(omega: &Mat, b: &Mat) -> f64 {
    min_eig_hermitian_part(&(im_part(omega) - im_part(b)))
}
