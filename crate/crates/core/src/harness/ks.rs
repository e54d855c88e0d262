//! Kolmogorov–Smirnov distance between a pooled spectrum and a predicted density.

use serde::{Deserialize, Serialize};

use super::rmt::EmpiricalSpectrum;
use crate::error::{Error, Result};
use crate::transforms::DensityGrid;

/// Margin the predicted grid must extend past the extreme eigenvalues.
pub const COVERAGE_MARGIN: f64 = 0.5;

/// A sampled density on increasing abscissae. Failed points are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub u: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityCurve {
    pub fn new(u: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if u.len() != density.len() {
            return Err(Error::DimensionMismatch {
                context: "density curve",
                expected: u.len(),
                found: density.len(),
            });
        }
        if u.len() < 2 || u.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::invalid("density curve needs at least two strictly increasing abscissae"));
        }
        if density.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("density curve"));
        }
        Ok(Self {
            u,
            density: density.into_iter().map(|d| d.max(0.0)).collect(),
        })
    }

    pub fn from_grid(grid: &DensityGrid) -> Result<Self> {
        let (u, d): (Vec<f64>, Vec<f64>) = grid
            .abscissae
            .iter()
            .zip(grid.clipped_density())
            .filter(|(_, d)| d.is_finite())
            .map(|(&u, d)| (u, d))
            .unzip();
        Self::new(u, d)
    }

    /// Trapezoid cumulative mass at each abscissa.
    fn cumulative(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.u.len()];
        for j in 1..self.u.len() {
            acc[j] = acc[j - 1] + 0.5 * (self.u[j] - self.u[j - 1]) * (self.density[j] + self.density[j - 1]);
        }
        acc
    }
}

/// CDF of the piecewise-linear interpolant, normalized to unit mass.
struct PiecewiseCdf<'a> {
    curve: &'a DensityCurve,
    acc: Vec<f64>,
    total: f64,
}

impl<'a> PiecewiseCdf<'a> {
    fn new(curve: &'a DensityCurve) -> Result<Self> {
        let acc = curve.cumulative();
        let total = *acc.last().unwrap_or(&0.0);
        if !(total > 0.0) {
            return Err(Error::invalid("predicted density has zero mass"));
        }
        Ok(Self { curve, acc, total })
    }

    fn eval(&self, x: f64) -> f64 {
        let u = &self.curve.u;
        if x <= u[0] {
            return 0.0;
        }
        if x >= u[u.len() - 1] {
            return 1.0;
        }
        let j = u.partition_point(|&v| v <= x) - 1;
        let h = u[j + 1] - u[j];
        let s = x - u[j];
        let (d0, d1) = (self.curve.density[j], self.curve.density[j + 1]);
        let part = d0 * s + 0.5 * (d1 - d0) * s * s / h;
        ((self.acc[j] + part) / self.total).clamp(0.0, 1.0)
    }
}

/// `sup |F_emp − F_pred|` for a sorted sample.
pub fn compare_density_curve(emp: &EmpiricalSpectrum, curve: &DensityCurve) -> Result<f64> {
    let ev = &emp.eigenvalues;
    let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) else {
        return Err(Error::invalid("empty spectrum"));
    };
    if ev.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::invalid("spectrum must be sorted"));
    }
    let (u0, u1) = (curve.u[0], curve.u[curve.u.len() - 1]);
    if u0 > lo - COVERAGE_MARGIN || u1 < hi + COVERAGE_MARGIN {
        return Err(Error::Coverage(format!(
            "grid [{u0}, {u1}] must contain [{}, {}]",
            lo - COVERAGE_MARGIN,
            hi + COVERAGE_MARGIN
        )));
    }
    let cdf = PiecewiseCdf::new(curve)?;
    let n = ev.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in ev.iter().enumerate() {
        let f = cdf.eval(x);
        ks = ks.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(ks.clamp(0.0, 1.0))
}

pub fn compare_density(emp: &EmpiricalSpectrum, grid: &DensityGrid) -> Result<f64> {
    compare_density_curve(emp, &DensityCurve::from_grid(grid)?)
}
