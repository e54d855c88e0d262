//! Finite-dimensional `B`-valued probability spaces `(M_N(C), E, M_n(C))` and
//! the analytic transforms of their distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    amplify, c, embed, hermitian_deviation, inverse, level_of, op_norm, CpMap,
    HalfPlanePoint, Mat, AlgebraElement, Side, C64,
};
use crate::error::{Error, Result};

/// Tolerance for `E(1) = 1` and for the selfadjointness of `X`.
pub const MODEL_TOL: f64 = 1e-12;

/// A `B`-valued distribution accessed through its noncommutative Cauchy
/// transform `G^{[k]}`. The level is read off the argument: `b` is `kn x kn`.
pub trait OperatorDistribution: Sync {
    fn base_dim(&self) -> usize;

    /// `G^{[k]}(b)`. Callers are responsible for `b` lying in the domain.
    fn cauchy(&self, b: &Mat) -> Result<Mat>;

    /// Upper bound on the norm of the underlying selfadjoint variable.
    fn radius_bound(&self) -> f64;

    fn f_transform(&self, b: &Mat) -> Result<Mat> {
        inverse(&self.cauchy(b)?)
    }

    /// `h(w) = F(w) − w`.
    fn h_transform(&self, w: &Mat) -> Result<Mat> {
        Ok(self.f_transform(w)? - w)
    }
}

impl<T: OperatorDistribution + ?Sized> OperatorDistribution for &T {
    fn base_dim(&self) -> usize {
        (**self).base_dim()
    }
    fn cauchy(&self, b: &Mat) -> Result<Mat> {
        (**self).cauchy(b)
    }
    fn radius_bound(&self) -> f64 {
        (**self).radius_bound()
    }
}

impl<T: OperatorDistribution + ?Sized> OperatorDistribution for Box<T> {
    fn base_dim(&self) -> usize {
        (**self).base_dim()
    }
    fn cauchy(&self, b: &Mat) -> Result<Mat> {
        (**self).cauchy(b)
    }
    fn radius_bound(&self) -> f64 {
        (**self).radius_bound()
    }
}

/// Public entry point for `G` with the half-plane precondition checked.
pub fn cauchy_transform(dist: &impl OperatorDistribution, b: &HalfPlanePoint) -> Result<AlgebraElement> {
    if b.side() != Side::Upper {
        return Err(Error::invalid("Cauchy transform needs a point of the upper half-plane"));
    }
    Ok(AlgebraElement::wrap(dist.cauchy(b.value().matrix())?))
}

pub fn h_transform(dist: &impl OperatorDistribution, w: &HalfPlanePoint) -> Result<AlgebraElement> {
    if w.side() != Side::Upper {
        return Err(Error::invalid("h-transform needs a point of the upper half-plane"));
    }
    Ok(AlgebraElement::wrap(dist.h_transform(w.value().matrix())?))
}

/// How `E: M_N(C) → M_n(C)` weights the `m = N/n` diagonal copies of `B`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expectation {
    /// `id_n ⊗ tr_m`, the normalized partial trace.
    PartialTrace,
    /// `E(x)_ij = Σ_s w_s x_{(i,s),(j,s)}`.
    Weighted(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExpectationJson {
    Named(String),
    Weights { weights: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    base_dim: usize,
    ambient_dim: usize,
    #[serde(rename = "X")]
    x: AlgebraElement,
    expectation: ExpectationJson,
}

/// `(A, E, B)` with `A = M_N(C)`, `B = M_n(C)` embedded as `b ⊗ 1_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct OperatorModel {
    base_dim: usize,
    x: AlgebraElement,
    expectation: Expectation,
    weights: Vec<f64>,
}

impl TryFrom<ModelJson> for OperatorModel {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        if j.ambient_dim != j.x.dim() {
            return Err(Error::DimensionMismatch {
                context: "ambient_dim vs X",
                expected: j.ambient_dim,
                found: j.x.dim(),
            });
        }
        let e = match j.expectation {
            ExpectationJson::Named(s) if s == "partial_trace" => Expectation::PartialTrace,
            ExpectationJson::Named(s) => return Err(Error::invalid(format!("unknown expectation {s:?}"))),
            ExpectationJson::Weights { weights } => Expectation::Weighted(weights),
        };
        OperatorModel::new(j.base_dim, j.x, e)
    }
}

impl From<OperatorModel> for ModelJson {
    fn from(m: OperatorModel) -> Self {
        ModelJson {
            base_dim: m.base_dim,
            ambient_dim: m.x.dim(),
            expectation: match m.expectation {
                Expectation::PartialTrace => ExpectationJson::Named("partial_trace".into()),
                Expectation::Weighted(w) => ExpectationJson::Weights { weights: w },
            },
            x: m.x,
        }
    }
}

impl OperatorModel {
    pub fn new(base_dim: usize, x: AlgebraElement, expectation: Expectation) -> Result<Self> {
        if base_dim == 0 {
            return Err(Error::invalid("base_dim must be positive"));
        }
        let ambient = x.dim();
        if ambient % base_dim != 0 {
            return Err(Error::invalid(format!(
                "ambient_dim {ambient} is not a multiple of base_dim {base_dim}"
            )));
        }
        let scale = 1f64.max(op_norm(x.matrix()));
        let deviation = hermitian_deviation(x.matrix());
        if deviation > MODEL_TOL * scale {
            return Err(Error::NotSelfadjoint { deviation });
        }
        let x = x.re_part();
        let m = ambient / base_dim;
        let weights = match &expectation {
            Expectation::PartialTrace => vec![1.0 / m as f64; m],
            Expectation::Weighted(w) => {
                if w.len() != m {
                    return Err(Error::DimensionMismatch {
                        context: "expectation weights",
                        expected: m,
                        found: w.len(),
                    });
                }
                if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                    return Err(Error::invalid("weights must be finite and nonnegative"));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > MODEL_TOL {
                    return Err(Error::invalid(format!("weights sum to {total}, not 1")));
                }
                w.clone()
            }
        };
        Ok(Self {
            base_dim,
            x,
            expectation,
            weights,
        })
    }

    /// The model with `n = N = 1` and `X = x`.
    pub fn point_mass(x: f64) -> Self {
        Self::new(1, AlgebraElement::real_diagonal(&[x]), Expectation::PartialTrace)
            .expect("point mass is valid")
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.x.dim()
    }

    /// `m = N/n`, the size of the traced-out factor.
    pub fn multiplicity(&self) -> usize {
        self.ambient_dim() / self.base_dim
    }

    pub fn x(&self) -> &AlgebraElement {
        &self.x
    }

    pub fn expectation(&self) -> &Expectation {
        &self.expectation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x_norm(&self) -> f64 {
        op_norm(self.x.matrix())
    }

    /// `(E ⊗ Id_k)(y)` for `y ∈ M_k(M_N(C))`.
    pub fn expect(&self, y: &Mat) -> Result<Mat> {
        let k = level_of(y, self.ambient_dim())?;
        let m = self.multiplicity();
        let kn = k * self.base_dim;
        let mut out = Mat::zeros(kn, kn);
        for p in 0..kn {
            for q in 0..kn {
                let mut acc = C64::default();
                for (s, &w) in self.weights.iter().enumerate() {
                    acc += y[(p * m + s, q * m + s)] * w;
                }
                out[(p, q)] = acc;
            }
        }
        Ok(out)
    }

    /// `E` as a Kraus map `M_N(C) → B`: `K_s = √w_s (1_n ⊗ e_s^T)`.
    pub fn expectation_map(&self) -> CpMap {
        let (n, m) = (self.base_dim, self.multiplicity());
        let kraus = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(s, &w)| {
                let mut k = Mat::zeros(n, n * m);
                for i in 0..n {
                    k[(i, i * m + s)] = c(w.sqrt(), 0.0);
                }
                k
            })
            .collect();
        if n == n * m && self.weights == [1.0] {
            return CpMap::identity(n);
        }
        CpMap::kraus_to_b(n, n * m, kraus).expect("shapes are consistent")
    }

    /// `b ⊗ 1_m`: the image of `b ∈ M_k(B)` in `M_k(A)`.
    pub fn embed(&self, b: &Mat) -> Result<Mat> {
        level_of(b, self.base_dim)?;
        Ok(embed(b, self.multiplicity()))
    }

    /// `X ⊗ 1_k`.
    pub fn ambient_x(&self, k: usize) -> Mat {
        amplify(self.x.matrix(), k)
    }

    /// `(X ⊗ 1_k − w)^{-1}` for `w ∈ M_k(B)`.
    pub fn resolvent(&self, w: &Mat) -> Result<Mat> {
        let k = level_of(w, self.base_dim)?;
        inverse(&(self.ambient_x(k) - self.embed(w)?))
    }

    pub fn moment(&self, req: &MomentRequest) -> Result<AlgebraElement> {
        let n = self.base_dim;
        if req.order == 0 {
            return Ok(AlgebraElement::identity(n));
        }
        let x = self.x.matrix();
        let mut prod = x.clone();
        for b in &req.arguments {
            if b.dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "moment argument",
                    expected: n,
                    found: b.dim(),
                });
            }
            prod = prod * embed(b.matrix(), self.multiplicity()) * x;
        }
        Ok(AlgebraElement::wrap(self.expect(&prod)?))
    }
}

impl OperatorDistribution for OperatorModel {
    fn base_dim(&self) -> usize {
        self.base_dim
    }

    fn cauchy(&self, b: &Mat) -> Result<Mat> {
        // G(b) = E[(b − X)^{-1}] = −E[(X − b)^{-1}]
        Ok(-self.expect(&self.resolvent(b)?)?)
    }

    fn radius_bound(&self) -> f64 {
        self.x_norm()
    }
}

/// Order `k` and the `max(k − 1, 0)` interleaved arguments of
/// `E[X b_1 X ⋯ b_{k−1} X]`.
#[derive(Clone, Debug)]
pub struct MomentRequest {
    order: usize,
    arguments: Vec<AlgebraElement>,
}

impl MomentRequest {
    pub fn new(order: usize, arguments: Vec<AlgebraElement>) -> Result<Self> {
        if arguments.len() != order.saturating_sub(1) {
            return Err(Error::invalid(format!(
                "moment of order {order} takes {} arguments, got {}",
                order.saturating_sub(1),
                arguments.len()
            )));
        }
        Ok(Self { order, arguments })
    }

    /// `E[X^k]`: all arguments equal to `1_n`.
    pub fn power(order: usize, n: usize) -> Self {
        Self {
            order,
            arguments: vec![AlgebraElement::identity(n); order.saturating_sub(1)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Max over sampled unit-norm argument tuples and orders `1..=k_max` of
/// `‖E[X b_1 ⋯ X]‖^{1/(k+1)}`.
pub fn moment_growth_bound(model: &OperatorModel, k_max: usize, trials: usize, seed: u64) -> Result<f64> {
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let n = model.base_dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for k in 1..=k_max {
        let reps = if k == 1 { 1 } else { trials.max(1) };
        for _ in 0..reps {
            let args = (0..k - 1).map(|_| unit_norm_sample(&mut rng, n)).collect();
            let m = model.moment(&MomentRequest::new(k, args)?)?;
            best = best.max(m.norm().powf(1.0 / (k as f64 + 1.0)));
        }
    }
    Ok(best)
}

fn unit_norm_sample(rng: &mut ChaCha20Rng, n: usize) -> AlgebraElement {
    loop {
        let m = Mat::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let s = op_norm(&m);
        if s > 1e-3 {
            return AlgebraElement::wrap(m / c(s, 0.0));
        }
    }
}

/// A finitely supported probability measure on the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct ScalarMeasure {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for ScalarMeasure {
    type Error = Error;
    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        ScalarMeasure::new(atoms)
    }
}

impl From<ScalarMeasure> for Vec<(f64, f64)> {
    fn from(m: ScalarMeasure) -> Self {
        m.atoms
    }
}

impl ScalarMeasure {
    /// `(location, weight)` pairs; weights must sum to 1.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("empty measure"));
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !w.is_finite() || w < 0.0) {
            return Err(Error::invalid("atoms need finite locations and nonnegative weights"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MODEL_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(x: f64) -> Self {
        Self { atoms: vec![(x, 1.0)] }
    }

    /// `½δ_{−1} + ½δ_1`.
    pub fn bernoulli() -> Self {
        Self {
            atoms: vec![(-1.0, 0.5), (1.0, 0.5)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// `Σ w_j / (z − x_j)`.
    pub fn cauchy(&self, z: C64) -> C64 {
        self.atoms.iter().map(|&(x, w)| c(w, 0.0) / (z - x)).sum()
    }
}

/// Embeds a scalar measure as `n = 1`, `X = diag(locations)`, `E = Σ w_j x_jj`.
pub fn scalar_to_model(m: &ScalarMeasure) -> Result<OperatorModel> {
    let locs: Vec<f64> = m.atoms.iter().map(|a| a.0).collect();
    let weights: Vec<f64> = m.atoms.iter().map(|a| a.1).collect();
    let all_equal = weights.iter().all(|&w| (w - weights[0]).abs() == 0.0);
    let e = if all_equal && (weights[0] * weights.len() as f64 - 1.0).abs() < 1e-15 {
        Expectation::PartialTrace
    } else {
        Expectation::Weighted(weights)
    };
    OperatorModel::new(1, AlgebraElement::real_diagonal(&locs), e)
}
