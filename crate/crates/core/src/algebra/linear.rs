use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Serialize, Serializer};

use super::{basis, c, inverse, op_norm, unvec, vec_of, Mat, C64};
use crate::error::{Error, Result};

/// Superposition defect allowed by [`linearize_on_basis`].
pub const LINEARITY_TOL: f64 = 1e-10;

/// A linear self-map of `B = M_n(C)` as an `n² x n²` matrix on column-stacked
/// vectors (`E_ij` at index `i + n·j`).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMapOnB {
    n: usize,
    matrix: Mat,
}

impl LinearMapOnB {
    pub fn new(n: usize, matrix: Mat) -> Result<Self> {
        if matrix.nrows() != n * n || matrix.ncols() != n * n {
            return Err(Error::DimensionMismatch {
                context: "linear map on B",
                expected: n * n,
                found: matrix.nrows(),
            });
        }
        Ok(Self { n, matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            matrix: Mat::identity(n * n, n * n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        unvec(&(&self.matrix * vec_of(x)), self.n)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LinearMapOnB) -> LinearMapOnB {
        LinearMapOnB {
            n: self.n,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> Result<LinearMapOnB> {
        Ok(LinearMapOnB {
            n: self.n,
            matrix: inverse(&self.matrix)?,
        })
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        if self.matrix.nrows() == 1 {
            return vec![self.matrix[(0, 0)]];
        }
        let schur = nalgebra::linalg::Schur::new(self.matrix.clone());
        match schur.eigenvalues() {
            Some(ev) => ev.iter().copied().collect(),
            None => unreachable!("complex Schur form is triangular"),
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &LinearMapOnB) -> f64 {
        op_norm(&(&self.matrix - &other.matrix))
    }
}

impl Serialize for LinearMapOnB {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        super::MatrixJson::from_mat(&self.matrix).serialize(s)
    }
}

/// Samples a black-box map on every basis element `E_ij` and checks
/// superposition on random pairs.
pub fn linearize_on_basis<F>(f: F, n: usize) -> Result<LinearMapOnB>
where
    F: Fn(&Mat) -> Result<Mat>,
{
    let dim = n * n;
    let mut matrix = Mat::zeros(dim, dim);
    for j in 0..n {
        for i in 0..n {
            let img = f(&basis(n, i, j))?;
            if img.nrows() != n || img.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "linearized map output",
                    expected: n,
                    found: img.nrows(),
                });
            }
            matrix.set_column(i + n * j, &DVector::from_column_slice(img.as_slice()));
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0001);
    let x = random_entries(&mut rng, n);
    let y = random_entries(&mut rng, n);
    let (za, zb) = (c(0.7, -0.3), c(-0.4, 1.1));
    let (fx, fy) = (f(&x)?, f(&y)?);
    let fxy = f(&(&x * za + &y * zb))?;
    let defect = op_norm(&(&fxy - (&fx * za + &fy * zb)));
    let scale = 1f64.max(za.norm() * op_norm(&fx) + zb.norm() * op_norm(&fy));
    if defect > LINEARITY_TOL * scale {
        return Err(Error::NotLinear { defect });
    }
    LinearMapOnB::new(n, matrix)
}

fn random_entries(rng: &mut ChaCha20Rng, n: usize) -> Mat {
    Mat::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_scalings() {
        let id = linearize_on_basis(|x| Ok(x.clone()), 2).unwrap();
        assert_eq!(id.matrix(), &Mat::identity(4, 4));
        let two = linearize_on_basis(|x| Ok(x * c(2.0, 0.0)), 1).unwrap();
        assert_eq!(two.matrix()[(0, 0)], c(2.0, 0.0));
        let t = linearize_on_basis(|x| Ok(x * c(0.7, 0.0)), 2).unwrap();
        for z in t.eigenvalues() {
            assert!((z - c(0.7, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn nonlinear_map_rejected() {
        let err = linearize_on_basis(|x| Ok(x * x), 2).unwrap_err();
        assert!(err.to_string().contains("map not linear"));
        let affine = linearize_on_basis(|x| Ok(x + Mat::identity(2, 2)), 2);
        assert!(matches!(affine, Err(Error::NotLinear { .. })));
    }

    #[test]
    fn round_trip_on_random_inputs() {
        let k = Mat::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.3, 0.0), c(-0.2, 1.0), c(0.4, -0.1)]);
        let f = |x: &Mat| Ok(&k * x * k.adjoint() + x.transpose() * c(0.0, 0.3));
        let lin = linearize_on_basis(f, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x = random_entries(&mut rng, 2);
            assert!(op_norm(&(lin.apply(&x) - f(&x).unwrap())) < 1e-12);
        }
    }

    #[test]
    fn conjugation_spectrum_is_products() {
        // c ↦ k c k* with k = diag(λ1, λ2): eigenvalues λ_i·conj(λ_j)
        let (l1, l2) = (c(0.5, 0.5), c(-1.2, 0.0));
        let k = Mat::from_row_slice(2, 2, &[l1, c(0.0, 0.0), c(0.0, 0.0), l2]);
        let lin = linearize_on_basis(|x| Ok(&k * x * k.adjoint()), 2).unwrap();
        let mut got: Vec<f64> = lin.eigenvalues().iter().map(|z| z.norm()).collect();
        got.sort_by(f64::total_cmp);
        let mut want = vec![
            (l1 * l1.conj()).norm(),
            (l1 * l2.conj()).norm(),
            (l2 * l1.conj()).norm(),
            (l2 * l2.conj()).norm(),
        ];
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_with_inverse() {
        let k = Mat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.1), c(0.0, 0.0), c(1.0, 0.0)]);
        let lin = linearize_on_basis(|x| Ok(&k * x), 2).unwrap();
        let id = lin.compose(&lin.inverse().unwrap());
        assert!(id.distance(&LinearMapOnB::identity(2)) < 1e-13);
    }
}
