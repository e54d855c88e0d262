use serde::{Deserialize, Serialize};

use super::{basis, c, hermitian_eigenvalues, identity, level_of, rect_serde, AlgebraElement, Mat};
use crate::error::{Error, Result};

/// A completely positive map into `B = M_n(C)`, always held in Kraus form
/// `x ↦ Σ_j K_j x K_j*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", try_from = "RawCpMap")]
pub enum CpMap {
    /// `x ↦ scale·x` on `M_n(C)`.
    #[serde(rename = "scaled_identity")]
    ScaledIdentity { n: usize, scale: f64 },
    /// Square `n x n` Kraus operators, a map `B → B`.
    #[serde(rename = "kraus_on_B")]
    KrausOnB {
        n: usize,
        #[serde(with = "rect_serde")]
        kraus: Vec<Mat>,
    },
    /// Rectangular `n x N` Kraus operators, a map `M_N(C) → B`.
    #[serde(rename = "kraus_to_B")]
    KrausToB {
        n: usize,
        #[serde(rename = "N")]
        ambient: usize,
        #[serde(with = "rect_serde")]
        kraus: Vec<Mat>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "kind")]
enum RawCpMap {
    #[serde(rename = "scaled_identity")]
    ScaledIdentity { n: usize, scale: f64 },
    #[serde(rename = "kraus_on_B")]
    KrausOnB {
        n: usize,
        #[serde(with = "rect_serde")]
        kraus: Vec<Mat>,
    },
    #[serde(rename = "kraus_to_B")]
    KrausToB {
        n: usize,
        #[serde(rename = "N")]
        ambient: usize,
        #[serde(with = "rect_serde")]
        kraus: Vec<Mat>,
    },
}

impl TryFrom<RawCpMap> for CpMap {
    type Error = Error;
    fn try_from(raw: RawCpMap) -> Result<Self> {
        match raw {
            RawCpMap::ScaledIdentity { n, scale } => CpMap::scaled_identity(n, scale),
            RawCpMap::KrausOnB { n, kraus } => CpMap::kraus_on_b(n, kraus),
            RawCpMap::KrausToB { n, ambient, kraus } => CpMap::kraus_to_b(n, ambient, kraus),
        }
    }
}

impl CpMap {
    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("scaled_identity needs n >= 1"));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::invalid(format!("scale must be finite and nonnegative, got {scale}")));
        }
        Ok(CpMap::ScaledIdentity { n, scale })
    }

    pub fn identity(n: usize) -> Self {
        CpMap::ScaledIdentity { n, scale: 1.0 }
    }

    /// The zero map `M_N(C) → M_n(C)`.
    pub fn zero(n: usize, ambient: usize) -> Self {
        if n == ambient {
            CpMap::ScaledIdentity { n, scale: 0.0 }
        } else {
            CpMap::KrausToB {
                n,
                ambient,
                kraus: Vec::new(),
            }
        }
    }

    pub fn kraus_on_b(n: usize, kraus: Vec<Mat>) -> Result<Self> {
        check_kraus(&kraus, n, n)?;
        Ok(CpMap::KrausOnB { n, kraus })
    }

    pub fn kraus_to_b(n: usize, ambient: usize, kraus: Vec<Mat>) -> Result<Self> {
        if n == 0 || ambient == 0 {
            return Err(Error::invalid("kraus_to_B needs positive dimensions"));
        }
        check_kraus(&kraus, n, ambient)?;
        Ok(CpMap::KrausToB { n, ambient, kraus })
    }

    pub fn output_dim(&self) -> usize {
        match self {
            CpMap::ScaledIdentity { n, .. } | CpMap::KrausOnB { n, .. } | CpMap::KrausToB { n, .. } => *n,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CpMap::ScaledIdentity { n, .. } | CpMap::KrausOnB { n, .. } => *n,
            CpMap::KrausToB { ambient, .. } => *ambient,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CpMap::ScaledIdentity { scale, .. } => *scale == 0.0,
            CpMap::KrausOnB { kraus, .. } | CpMap::KrausToB { kraus, .. } => {
                kraus.iter().all(|k| k.iter().all(|z| *z == c(0.0, 0.0)))
            }
        }
    }

    /// Kraus operators of the map; `scale·Id` is returned as `√scale·1`.
    pub fn kraus_operators(&self) -> Vec<Mat> {
        match self {
            CpMap::ScaledIdentity { n, scale } => {
                if *scale == 0.0 {
                    Vec::new()
                } else {
                    vec![identity(*n) * c(scale.sqrt(), 0.0)]
                }
            }
            CpMap::KrausOnB { kraus, .. } | CpMap::KrausToB { kraus, .. } => kraus.clone(),
        }
    }

    /// `Σ_j K_j x K_j*` at level one.
    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "cp map input",
                expected: self.input_dim(),
                found: x.dim(),
            });
        }
        Ok(AlgebraElement::wrap(self.apply_amplified(x.matrix())?))
    }

    /// `(φ ⊗ Id_k)(x)`, applying the map to every `input_dim`-sized block of `x`.
    pub fn apply_amplified(&self, x: &Mat) -> Result<Mat> {
        let k = level_of(x, self.input_dim())?;
        match self {
            CpMap::ScaledIdentity { scale, .. } => Ok(x * c(*scale, 0.0)),
            CpMap::KrausOnB { n, kraus } | CpMap::KrausToB { n, kraus, .. } => {
                let n = *n;
                let big = self.input_dim();
                let mut out = Mat::zeros(k * n, k * n);
                for r in 0..k {
                    for s in 0..k {
                        let xb = x.view((r * big, s * big), (big, big));
                        let mut acc = Mat::zeros(n, n);
                        for kj in kraus {
                            acc += kj * xb * kj.adjoint();
                        }
                        out.view_mut((r * n, s * n), (n, n)).copy_from(&acc);
                    }
                }
                Ok(out)
            }
        }
    }

    /// `self ∘ inner`; `self` must act on `B`.
    pub fn compose_after(&self, inner: &CpMap) -> Result<CpMap> {
        if self.input_dim() != self.output_dim() {
            return Err(Error::invalid("outer map of a composition must act on B"));
        }
        if inner.output_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "cp map composition",
                expected: self.input_dim(),
                found: inner.output_dim(),
            });
        }
        if let (CpMap::ScaledIdentity { n, scale: s }, CpMap::ScaledIdentity { scale: t, .. }) = (self, inner) {
            return CpMap::scaled_identity(*n, s * t);
        }
        let mut kraus = Vec::new();
        for a in self.kraus_operators() {
            for b in inner.kraus_operators() {
                kraus.push(&a * &b);
            }
        }
        let n = self.output_dim();
        if inner.input_dim() == n && !matches!(inner, CpMap::KrausToB { .. }) {
            CpMap::kraus_on_b(n, kraus)
        } else {
            CpMap::kraus_to_b(n, inner.input_dim(), kraus)
        }
    }

    /// Choi matrix `Σ_ij E_ij ⊗ φ(E_ij)` of a map on `B`.
    pub fn choi(&self) -> Result<Mat> {
        let n_in = self.input_dim();
        let n_out = self.output_dim();
        let mut out = Mat::zeros(n_in * n_out, n_in * n_out);
        for i in 0..n_in {
            for j in 0..n_in {
                let img = self.apply_amplified(&basis(n_in, i, j))?;
                out.view_mut((i * n_out, j * n_out), (n_out, n_out)).copy_from(&img);
            }
        }
        Ok(out)
    }

    /// `λ_min(Choi(self) − Choi(Id))`; nonnegative iff `self − Id` is CP.
    pub fn minus_identity_choi_min(&self) -> Result<f64> {
        if self.input_dim() != self.output_dim() {
            return Err(Error::invalid("α must act on B"));
        }
        let id = CpMap::identity(self.input_dim()).choi()?;
        Ok(hermitian_eigenvalues(&(self.choi()? - id))?[0])
    }

    /// `‖φ(1)‖`, which equals the norm of a CP map.
    pub fn norm(&self) -> f64 {
        let one = identity(self.input_dim());
        self.apply_amplified(&one).map(|m| super::op_norm(&m)).unwrap_or(f64::INFINITY)
    }
}

fn check_kraus(kraus: &[Mat], rows: usize, cols: usize) -> Result<()> {
    for k in kraus {
        if k.nrows() != rows || k.ncols() != cols {
            return Err(Error::DimensionMismatch {
                context: "Kraus operator shape",
                expected: rows * cols,
                found: k.nrows() * k.ncols(),
            });
        }
        if !super::is_finite(k) {
            return Err(Error::NonFinite("Kraus operator"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{min_eig_hermitian_part, I};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_mat(rng: &mut impl Rng, r: usize, cols: usize) -> Mat {
        Mat::from_fn(r, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn scaled_identity_examples() {
        let id = CpMap::scaled_identity(1, 1.0).unwrap();
        let x = AlgebraElement::scalar(1, I);
        assert_eq!(id.apply(&x).unwrap(), x);
        let two = CpMap::scaled_identity(1, 2.0).unwrap();
        let y = AlgebraElement::scalar(1, c(3.0, 0.0));
        assert_eq!(two.apply(&y).unwrap()[(0, 0)], c(6.0, 0.0));
    }

    #[test]
    fn kraus_to_b_normalized_trace() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let k1 = Mat::from_row_slice(1, 2, &[c(s, 0.0), c(0.0, 0.0)]);
        let k2 = Mat::from_row_slice(1, 2, &[c(0.0, 0.0), c(s, 0.0)]);
        let e = CpMap::kraus_to_b(1, 2, vec![k1, k2]).unwrap();
        let x = AlgebraElement::real_diagonal(&[0.3, 1.7]);
        let out = e.apply(&x).unwrap();
        assert!((out[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let e = CpMap::zero(1, 2);
        assert!(matches!(
            e.apply(&AlgebraElement::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(CpMap::kraus_on_b(2, vec![Mat::zeros(2, 3)]).is_err());
        assert!(CpMap::scaled_identity(2, -1.0).is_err());
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let beta = CpMap::kraus_on_b(2, vec![random_mat(&mut rng, 2, 2), random_mat(&mut rng, 2, 2)]).unwrap();
        let e = CpMap::kraus_to_b(2, 6, vec![random_mat(&mut rng, 2, 6)]).unwrap();
        let comp = beta.compose_after(&e).unwrap();
        let x = AlgebraElement::new(random_mat(&mut rng, 6, 6)).unwrap();
        let lhs = comp.apply(&x).unwrap();
        let rhs = beta.apply(&e.apply(&x).unwrap()).unwrap();
        assert!(lhs.distance(&rhs) < 1e-13);
        let s = CpMap::scaled_identity(2, 0.25).unwrap().compose_after(&e).unwrap();
        let rhs = e.apply(&x).unwrap().scale(c(0.25, 0.0));
        assert!(s.apply(&x).unwrap().distance(&rhs) < 1e-14);
    }

    #[test]
    fn choi_of_identity_minus_identity() {
        let two = CpMap::scaled_identity(2, 2.0).unwrap();
        // 2·Id − Id = Id is CP; Choi(Id) has eigenvalues {0,0,0,2}
        assert!(two.minus_identity_choi_min().unwrap() > -1e-12);
        let half = CpMap::scaled_identity(2, 0.5).unwrap();
        assert!(half.minus_identity_choi_min().unwrap() < -0.5);
        // transpose-like depolarizing mix: Kraus of Id only gives Choi(Id) − Choi(Id) = 0
        assert!(CpMap::identity(3).minus_identity_choi_min().unwrap().abs() < 1e-12);
    }

    #[test]
    fn amplified_application_commutes_with_direct_sums() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let e = CpMap::kraus_to_b(2, 4, vec![random_mat(&mut rng, 2, 4), random_mat(&mut rng, 2, 4)]).unwrap();
        let a = random_mat(&mut rng, 4, 4);
        let b = random_mat(&mut rng, 8, 8);
        let lhs = e.apply_amplified(&crate::algebra::direct_sum(&a, &b)).unwrap();
        let rhs = crate::algebra::direct_sum(&e.apply_amplified(&a).unwrap(), &e.apply_amplified(&b).unwrap());
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn serde_shapes() {
        let js = r#"{"kind":"kraus_to_B","n":1,"N":2,"kraus":[{"rows":1,"cols":2,"entries":[[0.5,0],[0,0]]}]}"#;
        let m: CpMap = serde_json::from_str(js).unwrap();
        assert_eq!(m.input_dim(), 2);
        let back: CpMap = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"kind":"kraus_to_B","n":1,"N":3,"kraus":[{"rows":1,"cols":2,"entries":[[0.5,0],[0,0]]}]}"#;
        assert!(serde_json::from_str::<CpMap>(bad).is_err());
        let si: CpMap = serde_json::from_str(r#"{"kind":"scaled_identity","n":1,"scale":2.0}"#).unwrap();
        assert_eq!(si, CpMap::ScaledIdentity { n: 1, scale: 2.0 });
    }

    proptest! {
        #[test]
        fn psd_inputs_give_psd_outputs(seed in 0u64..500, n in 1usize..4, m in 1usize..4, nk in 1usize..4) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let big = n * m;
            let kraus: Vec<Mat> = (0..nk).map(|_| random_mat(&mut rng, n, big)).collect();
            let map = CpMap::kraus_to_b(n, big, kraus).unwrap();
            let g = random_mat(&mut rng, big, big);
            let x = &g * g.adjoint();
            let out = map.apply_amplified(&x).unwrap();
            let scale = crate::algebra::op_norm(&x);
            prop_assert!(min_eig_hermitian_part(&out) >= -1e-10 * scale);
            prop_assert!(crate::algebra::hermitian_deviation(&out) < 1e-12 * (1.0 + scale));
        }

        #[test]
        fn additive_and_homogeneous(seed in 0u64..500, zr in -2.0f64..2.0, zi in -2.0f64..2.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let map = CpMap::kraus_on_b(2, vec![random_mat(&mut rng, 2, 2), random_mat(&mut rng, 2, 2)]).unwrap();
            let x = random_mat(&mut rng, 2, 2);
            let y = random_mat(&mut rng, 2, 2);
            let z = c(zr, zi);
            let lhs = map.apply_amplified(&(&x * z + &y)).unwrap();
            let rhs = map.apply_amplified(&x).unwrap() * z + map.apply_amplified(&y).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
