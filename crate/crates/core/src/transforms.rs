//! Semicircular convolution, convolution powers, R-transform evaluation,
//! Biane's scalar `v_t` and density recovery from boundary values of `G`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{
    c, block, identity, im_part, inverse, level_of, linearize_on_basis, min_eig_hermitian_part, op_norm,
    upper_triangular, AlgebraElement, CpMap, HalfPlanePoint, Mat, Side, C64,
};
use crate::error::{Error, Result};
use crate::model::{OperatorDistribution, OperatorModel, ScalarMeasure};
use crate::subordination::{iterate, SolverConfig, SubordinationProblem, Variant};

/// `ν ⊞ γ_β`, evaluated through `ω = b − β(G_ν(ω))`.
#[derive(Clone, Debug)]
pub struct SemicircularConvolution<D> {
    base: D,
    beta: CpMap,
    cfg: SolverConfig,
}

impl<D: OperatorDistribution> SemicircularConvolution<D> {
    pub fn new(base: D, beta: CpMap, cfg: SolverConfig) -> Result<Self> {
        let n = base.base_dim();
        if beta.input_dim() != n || beta.output_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "covariance map on B",
                expected: n,
                found: beta.input_dim(),
            });
        }
        cfg.validate()?;
        Ok(Self { base, beta, cfg })
    }

    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn omega(&self, b: &Mat) -> Result<Mat> {
        level_of(b, self.base.base_dim())?;
        let r = iterate(b.clone(), &self.cfg, |w| Ok(b - self.beta.apply_amplified(&self.base.cauchy(w)?)?), op_norm)?;
        Ok(r.into_result()?.into_matrix())
    }
}

impl<D: OperatorDistribution> OperatorDistribution for SemicircularConvolution<D> {
    fn base_dim(&self) -> usize {
        self.base.base_dim()
    }

    fn cauchy(&self, b: &Mat) -> Result<Mat> {
        self.base.cauchy(&self.omega(b)?)
    }

    fn radius_bound(&self) -> f64 {
        self.base.radius_bound() + 2.0 * self.beta.norm().sqrt()
    }
}

/// `μ^{⊞α}`, evaluated through `ω_α = b + (α − Id)h_μ(ω_α)`.
#[derive(Clone, Debug)]
pub struct ConvolutionPower<D> {
    base: D,
    alpha: CpMap,
    cfg: SolverConfig,
}

impl<D: OperatorDistribution> ConvolutionPower<D> {
    pub fn new(base: D, alpha: CpMap, cfg: SolverConfig) -> Result<Self> {
        let n = base.base_dim();
        if alpha.input_dim() != n || alpha.output_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "alpha on B",
                expected: n,
                found: alpha.input_dim(),
            });
        }
        let min_eigenvalue = alpha.minus_identity_choi_min()?;
        if min_eigenvalue < -crate::subordination::CHOI_TOL {
            return Err(Error::NotCompletelyPositive { min_eigenvalue });
        }
        cfg.validate()?;
        Ok(Self { base, alpha, cfg })
    }

    pub fn omega(&self, b: &Mat) -> Result<Mat> {
        level_of(b, self.base.base_dim())?;
        let r = iterate(
            b.clone(),
            &self.cfg,
            |w| {
                let h = self.base.h_transform(w)?;
                Ok(b + self.alpha.apply_amplified(&h)? - h)
            },
            op_norm,
        )?;
        Ok(r.into_result()?.into_matrix())
    }
}

impl<D: OperatorDistribution> OperatorDistribution for ConvolutionPower<D> {
    fn base_dim(&self) -> usize {
        self.base.base_dim()
    }

    fn cauchy(&self, b: &Mat) -> Result<Mat> {
        self.base.cauchy(&self.omega(b)?)
    }

    fn radius_bound(&self) -> f64 {
        self.alpha.norm().max(1.0) * self.base.radius_bound()
    }
}

/// `G_model ∘ ω` for an arbitrary subordination problem.
#[derive(Clone, Debug)]
pub struct Subordinated {
    problem: SubordinationProblem,
    cfg: SolverConfig,
}

impl Subordinated {
    pub fn new(problem: SubordinationProblem) -> Self {
        let cfg = problem.solver().clone();
        Self { problem, cfg }
    }

    pub fn with_config(problem: SubordinationProblem, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { problem, cfg })
    }

    pub fn problem(&self) -> &SubordinationProblem {
        &self.problem
    }
}

impl OperatorDistribution for Subordinated {
    fn base_dim(&self) -> usize {
        self.problem.base_dim()
    }

    fn cauchy(&self, b: &Mat) -> Result<Mat> {
        let w = self.problem.omega_value(b, &self.cfg)?;
        self.problem.model().cauchy(&w)
    }

    fn radius_bound(&self) -> f64 {
        let x = self.problem.model().x_norm();
        match self.problem.variant() {
            Variant::Generic => x + self.problem.a().norm() + 2.0 * self.problem.eta().norm().sqrt(),
            Variant::Power(alpha) => alpha.norm().max(1.0) * x,
        }
    }
}

fn require_upper(b: &HalfPlanePoint) -> Result<()> {
    if b.side() != Side::Upper {
        return Err(Error::NotInHalfPlane {
            side: "upper",
            margin: HalfPlanePoint::margin_of(b.value(), Side::Upper),
        });
    }
    Ok(())
}

/// `G_{ν⊞γ_β}(b) = G_ν(ω_β(b))` with `ω_β` from the generic problem `η = β∘E`, `a = 0`.
pub fn semicircular_convolve_g(
    model: &OperatorModel,
    beta: &CpMap,
    b: &HalfPlanePoint,
    cfg: &SolverConfig,
) -> Result<AlgebraElement> {
    require_upper(b)?;
    let p = SubordinationProblem::semicircular(model.clone(), beta.clone())?;
    let w = crate::subordination::solve_omega(&p, b, cfg)?.into_result()?;
    Ok(AlgebraElement::wrap(model.cauchy(w.matrix())?))
}

/// `G_{μ^{⊞α}}(b) = G_μ(ω_α(b))`.
pub fn convolution_power_g(
    model: &OperatorModel,
    alpha: &CpMap,
    b: &HalfPlanePoint,
    cfg: &SolverConfig,
) -> Result<AlgebraElement> {
    require_upper(b)?;
    let w = crate::subordination::solve_omega_alpha(model, alpha, b, cfg)?.into_result()?;
    Ok(AlgebraElement::wrap(model.cauchy(w.matrix())?))
}

/// Computable proxy for the R-transform domain: `‖g‖·(r + 2) < 1/2` with `r`
/// the distribution's radius bound.
pub fn r_domain_margin(dist: &impl OperatorDistribution, g: &Mat) -> f64 {
    0.5 - op_norm(g) * (dist.radius_bound() + 2.0)
}

const NEWTON_MAX: usize = 100;

/// `G'(w)` as a linear map on `B`, via `G` at `[[w, s·d],[0, w]]`.
pub(crate) fn cauchy_derivative(dist: &impl OperatorDistribution, w: &Mat) -> Result<crate::algebra::LinearMapOnB> {
    let n = dist.base_dim();
    let s = 0.25 * min_eig_hermitian_part(&im_part(w)).clamp(1e-6, 1.0);
    linearize_on_basis(
        |d| {
            let big = upper_triangular(w, &(d * c(s, 0.0)), w);
            Ok(block(&dist.cauchy(&big)?, n, 0, 1) / c(s, 0.0))
        },
        n,
    )
}

/// `R(g) = G^{⟨−1⟩}(g) − g^{-1}`, solving `G(w) = g` by Newton's method from `w₀ = g^{-1}`.
pub fn r_transform_eval(dist: &impl OperatorDistribution, g: &AlgebraElement, cfg: &SolverConfig) -> Result<AlgebraElement> {
    cfg.validate()?;
    let n = dist.base_dim();
    if g.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "R-transform argument",
            expected: n,
            found: g.dim(),
        });
    }
    let gm = g.matrix();
    if min_eig_hermitian_part(&(-im_part(gm))) <= 0.0 {
        return Err(Error::OutsideRDomain("Im g must be strictly negative".into()));
    }
    let margin = r_domain_margin(dist, gm);
    if margin <= 0.0 {
        return Err(Error::OutsideRDomain(format!(
            "‖g‖ = {:.3e} exceeds the guard (radius bound {:.3e})",
            op_norm(gm),
            dist.radius_bound()
        )));
    }
    let g_inv = inverse(gm).map_err(|_| Error::OutsideRDomain("g is singular".into()))?;
    let outside = |e: Error| match e {
        Error::NoConvergence(_) | Error::Singular(_) | Error::NonFinite(_) => Error::OutsideRDomain(e.to_string()),
        other => other,
    };
    let mut w = g_inv.clone();
    let step_tol = cfg.tol.max(1e-14);
    for _ in 0..NEWTON_MAX {
        if min_eig_hermitian_part(&im_part(&w)) <= 0.0 {
            return Err(Error::OutsideRDomain("Newton iterate left the upper half-plane".into()));
        }
        let resid = dist.cauchy(&w).map_err(outside)? - gm;
        let jac = cauchy_derivative(dist, &w).map_err(outside)?;
        let inv = jac.inverse().map_err(|_| Error::OutsideRDomain("Jacobian near-singular".into()))?;
        let step = inv.apply(&resid);
        w -= &step;
        if !crate::algebra::is_finite(&w) {
            return Err(Error::OutsideRDomain("Newton diverged".into()));
        }
        if op_norm(&step) <= step_tol * 1f64.max(op_norm(&w)) {
            let final_resid = op_norm(&(dist.cauchy(&w).map_err(outside)? - gm));
            if final_resid > 1e-10 * 1f64.max(op_norm(gm)) {
                return Err(Error::OutsideRDomain(format!("Newton stalled at residual {final_resid:.3e}")));
            }
            return Ok(AlgebraElement::wrap(w - g_inv));
        }
    }
    Err(Error::OutsideRDomain(format!("Newton did not converge in {NEWTON_MAX} steps")))
}

/// `inf{v ≥ 0 : Σ_j t·w_j/((u − x_j)² + v²) ≤ 1}`.
pub fn biane_v_scalar(m: &ScalarMeasure, t: f64, u: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) || !u.is_finite() {
        return Err(Error::invalid("biane_v_scalar needs t > 0 and finite u"));
    }
    let f = |v2: f64| -> f64 {
        m.atoms()
            .iter()
            .map(|&(x, w)| t * w / ((u - x) * (u - x) + v2))
            .sum()
    };
    if f(0.0) <= 1.0 {
        return Ok(0.0);
    }
    // f(v²) ≤ t/v², so the root lies in (0, t]; bisect on s = v².
    let (mut lo, mut hi) = (0.0f64, t);
    while f(hi) > 1.0 {
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    None,
    Richardson,
}

impl DensityMethod {
    fn label(self) -> &'static str {
        match self {
            DensityMethod::None => "none",
            DensityMethod::Richardson => "richardson",
        }
    }
}

/// Threshold below which an extrapolated value is treated as a violation
/// rather than rounding noise.
pub const DENSITY_NEG_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct DensityGrid {
    pub abscissae: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `raw[j][l] = −π⁻¹ Im τ(G(u_j + iε_l))`, `NaN` where the solve failed.
    pub raw: Vec<Vec<f64>>,
    pub density: Vec<f64>,
    pub method: DensityMethod,
    pub failed: Vec<bool>,
}

/// Evaluates `−π⁻¹ Im τ(G(u + iε))` on the grid and extrapolates linearly in `ε`
/// from the two smallest levels.
pub fn density_grid<D: OperatorDistribution>(dist: &D, abscissae: &[f64], epsilons: &[f64]) -> Result<DensityGrid> {
    if abscissae.is_empty() || abscissae.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::invalid("abscissae must be strictly increasing"));
    }
    if epsilons.is_empty() || epsilons.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::invalid("epsilons must be strictly decreasing"));
    }
    if !(epsilons[epsilons.len() - 1] >= 1e-8) {
        return Err(Error::invalid("smallest epsilon must be at least 1e-8"));
    }
    let n = dist.base_dim();
    let one = identity(n);
    let raw: Vec<Vec<f64>> = abscissae
        .par_iter()
        .map(|&u| {
            epsilons
                .iter()
                .map(|&eps| {
                    let b = &one * c(u, eps);
                    match dist.cauchy(&b) {
                        Ok(g) => -normalized_trace(&g).im / std::f64::consts::PI,
                        Err(_) => f64::NAN,
                    }
                })
                .collect()
        })
        .collect();
    let method = if epsilons.len() >= 2 {
        DensityMethod::Richardson
    } else {
        DensityMethod::None
    };
    let l = epsilons.len();
    let density: Vec<f64> = raw
        .iter()
        .map(|row| match method {
            DensityMethod::None => row[0],
            DensityMethod::Richardson => {
                let (e1, e2) = (epsilons[l - 2], epsilons[l - 1]);
                let (r1, r2) = (row[l - 2], row[l - 1]);
                r2 + (r2 - r1) * e2 / (e1 - e2)
            }
        })
        .collect();
    let failed = raw.iter().map(|row| row.iter().any(|v| !v.is_finite())).collect();
    Ok(DensityGrid {
        abscissae: abscissae.to_vec(),
        epsilons: epsilons.to_vec(),
        raw,
        density,
        method,
        failed,
    })
}

fn normalized_trace(g: &Mat) -> C64 {
    g.trace() / c(g.nrows() as f64, 0.0)
}

/// `m` equispaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..m).map(|j| lo + (hi - lo) * j as f64 / (m - 1) as f64).collect(),
    }
}

fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

impl DensityGrid {
    /// Density with negative values clipped to zero; `NaN` where the point failed.
    pub fn clipped_density(&self) -> Vec<f64> {
        self.density
            .iter()
            .zip(&self.failed)
            .map(|(&d, &f)| if f { f64::NAN } else { d.max(0.0) })
            .collect()
    }

    /// Indices whose extrapolated value falls below `−DENSITY_NEG_TOL`.
    pub fn negative_violations(&self) -> Vec<usize> {
        (0..self.density.len())
            .filter(|&j| !self.failed[j] && self.density[j] < -DENSITY_NEG_TOL)
            .collect()
    }

    fn row_method(&self, j: usize) -> String {
        if self.failed[j] {
            "failed".to_string()
        } else if self.density[j] < 0.0 {
            format!("{}+clip", self.method.label())
        } else {
            self.method.label().to_string()
        }
    }

    /// `u,density,method`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,density,method\n");
        let clipped = self.clipped_density();
        for j in 0..self.abscissae.len() {
            let _ = writeln!(out, "{},{},{}", fmt17(self.abscissae[j]), fmt17(clipped[j]), self.row_method(j));
        }
        out
    }

    /// `u,epsilon,raw`.
    pub fn to_raw_csv(&self) -> String {
        let mut out = String::from("u,epsilon,raw\n");
        for (j, row) in self.raw.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", fmt17(self.abscissae[j]), fmt17(self.epsilons[l]), fmt17(*v));
            }
        }
        out
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::from("# u density\n");
        for (u, d) in self.abscissae.iter().zip(self.clipped_density()) {
            let _ = writeln!(out, "{} {}", fmt17(*u), fmt17(d));
        }
        out
    }

    /// Trapezoid integral of the clipped density, skipping failed points.
    pub fn total_mass(&self) -> f64 {
        trapezoid(&self.abscissae, &self.clipped_density())
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .filter(|(_, p)| p[0].is_finite() && p[1].is_finite())
        .map(|(u, p)| 0.5 * (u[1] - u[0]) * (p[0] + p[1]))
        .sum()
}

/// Reads the `u,density,method` sheet back; rows marked `failed` are dropped.
pub fn read_density_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "u,density,method" => {}
        _ => return Err(Error::invalid("density CSV must start with \"u,density,method\"")),
    }
    let (mut us, mut ds) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::invalid(format!("density CSV line {}: expected 3 columns", i + 2)));
        }
        if cols[2].trim() == "failed" {
            continue;
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("density CSV line {}: bad number {s:?}", i + 2)))
        };
        us.push(parse(cols[0])?);
        ds.push(parse(cols[1])?);
    }
    if us.len() < 2 || us.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::invalid("density CSV abscissae must be strictly increasing"));
    }
    Ok((us, ds))
}
