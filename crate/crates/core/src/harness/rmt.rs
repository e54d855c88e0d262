//! Deterministic-plus-noise random matrix ensembles.

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::AlgebraElement;
use crate::error::{Error, Result};
use crate::model::ScalarMeasure;

/// Recorded in every provenance block.
pub const RNG_ALGORITHM: &str = "chacha20";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    DeterministicPlusGue,
    DeterministicPlusHaarRotated,
}

/// Either an explicit Hermitian matrix of the ensemble size or a scalar measure
/// whose atoms are laid out along the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Deterministic {
    Measure { measure: ScalarMeasure },
    Matrix(AlgebraElement),
}

impl Deterministic {
    /// Diagonal entries when the deterministic part is a measure: atom `j` gets
    /// `round(w_j N)` slots by largest remainder, in atom order.
    fn diagonal(m: &ScalarMeasure, size: usize) -> Vec<f64> {
        let atoms = m.atoms();
        let exact: Vec<f64> = atoms.iter().map(|a| a.1 * size as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut left = size - counts.iter().sum::<usize>().min(size);
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())).then(i.cmp(&j)));
        for &i in order.iter().cycle().take(atoms.len() * 2) {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        atoms
            .iter()
            .zip(&counts)
            .flat_map(|(a, &k)| std::iter::repeat_n(a.0, k))
            .collect()
    }

    fn matrix(&self, size: usize) -> Result<faer::Mat<c64>> {
        match self {
            Deterministic::Measure { measure } => {
                let d = Self::diagonal(measure, size);
                Ok(faer::Mat::from_fn(size, size, |i, j| if i == j { c64::new(d[i], 0.0) } else { c64::new(0.0, 0.0) }))
            }
            Deterministic::Matrix(a) => {
                if a.dim() != size {
                    return Err(Error::DimensionMismatch {
                        context: "deterministic matrix",
                        expected: size,
                        found: a.dim(),
                    });
                }
                let m = a.matrix();
                Ok(faer::Mat::from_fn(size, size, |i, j| m[(i, j)]))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub deterministic: Deterministic,
    pub t: f64,
    pub matrix_size: usize,
    pub samples: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.matrix_size < 2 {
            return Err(Error::invalid("matrix_size must be at least 2"));
        }
        if self.samples < 1 {
            return Err(Error::invalid("samples must be at least 1"));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::invalid("t must be finite and nonnegative"));
        }
        if let Deterministic::Matrix(a) = &self.deterministic {
            if a.dim() != self.matrix_size {
                return Err(Error::DimensionMismatch {
                    context: "deterministic matrix",
                    expected: self.matrix_size,
                    found: a.dim(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalSpectrum {
    pub eigenvalues: Vec<f64>,
    pub size: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Standard normal pairs by Box–Muller.
fn normal_pair(rng: &mut ChaCha20Rng) -> (f64, f64) {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

fn sample_rng(seed: u64, sample: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

/// Off-diagonal `E|h_ij|² = t/N`, diagonal real with variance `t/N`.
fn gue(rng: &mut ChaCha20Rng, size: usize, t: f64) -> faer::Mat<c64> {
    let mut h = faer::Mat::<c64>::zeros(size, size);
    let off = (t / (2.0 * size as f64)).sqrt();
    let diag = (t / size as f64).sqrt();
    for j in 0..size {
        h[(j, j)] = c64::new(diag * normal_pair(rng).0, 0.0);
        for i in j + 1..size {
            let (x, y) = normal_pair(rng);
            h[(i, j)] = c64::new(off * x, off * y);
            h[(j, i)] = c64::new(off * x, -off * y);
        }
    }
    h
}

/// Haar unitary from the QR factorization of a complex Ginibre matrix, with the
/// phases of `diag(R)` moved into `Q`.
fn haar_unitary(rng: &mut ChaCha20Rng, size: usize) -> faer::Mat<c64> {
    let mut g = faer::Mat::<c64>::zeros(size, size);
    for j in 0..size {
        for i in 0..size {
            let (x, y) = normal_pair(rng);
            g[(i, j)] = c64::new(x, y);
        }
    }
    let qr = g.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..size {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64::new(1.0, 0.0) };
        for i in 0..size {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// CDF of the semicircle law of variance `t`.
fn semicircle_cdf(x: f64, t: f64) -> f64 {
    let r = 2.0 * t.sqrt();
    if x <= -r {
        return 0.0;
    }
    if x >= r {
        return 1.0;
    }
    0.5 + x * (r * r - x * x).sqrt() / (4.0 * std::f64::consts::PI * t) + (x / r).asin() / std::f64::consts::PI
}

/// Quantiles of the semicircle at `(j + ½)/N`.
fn semicircle_quantiles(size: usize, t: f64) -> Vec<f64> {
    let r = 2.0 * t.sqrt();
    (0..size)
        .map(|j| {
            let p = (j as f64 + 0.5) / size as f64;
            let (mut lo, mut hi) = (-r, r);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if semicircle_cdf(mid, t) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

fn one_sample(e: &EnsembleSpec, a: &faer::Mat<c64>, quantiles: &[f64], idx: usize) -> Result<Vec<f64>> {
    let n = e.matrix_size;
    let mut rng = sample_rng(e.seed, idx);
    let mut m = a.clone();
    if e.t > 0.0 {
        match e.kind {
            EnsembleKind::DeterministicPlusGue => m += gue(&mut rng, n, e.t),
            EnsembleKind::DeterministicPlusHaarRotated => {
                let u = haar_unitary(&mut rng, n);
                let mut ud = u.clone();
                for j in 0..n {
                    for i in 0..n {
                        ud[(i, j)] *= quantiles[j];
                    }
                }
                m += &ud * u.adjoint();
            }
        }
    }
    // exact Hermitian symmetry before the solver sees it
    for j in 0..n {
        m[(j, j)] = c64::new(m[(j, j)].re, 0.0);
        for i in j + 1..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m.self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::invalid("eigenvalue solver failed"))
}

/// Pooled sorted spectra of `A + H` over independent samples. Sample `k` uses
/// stream `k` of the seeded generator, so the output does not depend on scheduling.
pub fn sample_rmt_spectrum(e: &EnsembleSpec) -> Result<EmpiricalSpectrum> {
    e.validate()?;
    let a = e.deterministic.matrix(e.matrix_size)?;
    let quantiles = match e.kind {
        EnsembleKind::DeterministicPlusHaarRotated if e.t > 0.0 => semicircle_quantiles(e.matrix_size, e.t),
        _ => Vec::new(),
    };
    let per: Vec<Vec<f64>> = (0..e.samples)
        .into_par_iter()
        .map(|k| one_sample(e, &a, &quantiles, k))
        .collect::<Result<_>>()?;
    let mut eigenvalues: Vec<f64> = per.into_iter().flatten().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(EmpiricalSpectrum {
        eigenvalues,
        size: e.matrix_size,
        samples: e.samples,
        seed: e.seed,
    })
}
