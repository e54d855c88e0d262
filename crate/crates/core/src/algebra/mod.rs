//! Dense complex matrix algebra for the base algebra `B = M_n(C)` and its
//! amplifications `M_k(B)`.
//!
//! An element of `M_k(B)` is stored as a `kn x kn` matrix whose `n x n`
//! blocks are the entries. With that convention the amplification of an
//! ambient element `X ∈ M_N(C)` is `I_k ⊗ X` (block diagonal) and the
//! embedding of `b ∈ M_k(B)` into `M_k(M_N(C))`, `N = n·m`, is `b ⊗ I_m`.

mod cp;
mod halfplane;
mod linear;

pub use cp::CpMap;
pub use halfplane::{HalfPlanePoint, Side};
pub use linear::{linearize_on_basis, LinearMapOnB};

use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

/// Absolute margin on `λ_min` used for every open-cone membership test.
pub const POSITIVITY_TOL: f64 = 1e-12;
/// Inputs closer than this to Hermitian are symmetrized, others rejected.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// An element of `B = M_n(C)` or of an amplification `M_k(B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement(Mat);

impl AlgebraElement {
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("empty matrix"));
        }
        if !is_finite(&m) {
            return Err(Error::NonFinite("algebra element"));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix produced by internal arithmetic; only finiteness is
    /// debug-checked.
    pub(crate) fn wrap(m: Mat) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "row-major entries",
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(Mat::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        let v: Vec<C64> = entries.iter().map(|&x| c(x, 0.0)).collect();
        Self::from_rows(dim, &v)
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Mat::zeros(n, n))
    }

    /// `z · 1_n`.
    pub fn scalar(n: usize, z: C64) -> Self {
        Self(Mat::identity(n, n) * z)
    }

    pub fn real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(Mat::from_fn(n, n, |i, j| if i == j { c(d[i], 0.0) } else { C64::default() }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `(x + x*)/2`.
    pub fn re_part(&self) -> Self {
        Self(re_part(&self.0))
    }

    /// `(x − x*)/2i`.
    pub fn im_part(&self) -> Self {
        Self(im_part(&self.0))
    }

    pub fn scale(&self, z: C64) -> Self {
        Self(&self.0 * z)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Returns `(x + x*)/2` when `x` is within [`HERMITIAN_TOL`] of Hermitian.
    pub fn symmetrized(&self) -> Result<Self> {
        symmetrize(&self.0).map(Self)
    }

    /// Ascending eigenvalues of a (near-)Hermitian element.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.hermitian_eigenvalues()?[0])
    }

    /// Operator (spectral) norm.
    pub fn norm(&self) -> f64 {
        op_norm(&self.0)
    }

    pub fn inverse(&self) -> Result<Self> {
        inverse(&self.0).map(Self)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Normalized trace `tr(x)/dim`.
    pub fn normalized_trace(&self) -> C64 {
        self.0.trace() / self.dim() as f64
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        Self(direct_sum(&self.0, &other.0))
    }

    /// `x ⊗ 1_k` in the block convention: `k` copies of `x` on the diagonal.
    pub fn amplify(&self, k: usize) -> Self {
        Self(amplify(&self.0, k))
    }

    /// The `(r, s)` block of size `n`.
    pub fn block(&self, n: usize, r: usize, s: usize) -> Self {
        Self(block(&self.0, n, r, s))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        op_norm(&(&self.0 - &other.0))
    }
}

impl Deref for AlgebraElement {
    type Target = Mat;
    fn deref(&self) -> &Mat {
        &self.0
    }
}

impl TryFrom<Mat> for AlgebraElement {
    type Error = Error;
    fn try_from(m: Mat) -> Result<Self> {
        Self::new(m)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&AlgebraElement> for &AlgebraElement {
            type Output = AlgebraElement;
            fn $method(self, rhs: &AlgebraElement) -> AlgebraElement {
                AlgebraElement((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<AlgebraElement> for AlgebraElement {
            type Output = AlgebraElement;
            fn $method(self, rhs: AlgebraElement) -> AlgebraElement {
                AlgebraElement(self.0.$method(rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Neg for AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        AlgebraElement(-self.0)
    }
}

/// Wire format: `{"dim": n, "entries": [[re, im], ...]}`, row-major.
/// Rectangular matrices (Kraus operators into `B`) use `"rows"`/`"cols"`.
#[derive(Serialize, Deserialize)]
pub(crate) struct MatrixJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_mat(m: &Mat) -> Self {
        let square = m.nrows() == m.ncols();
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        Self {
            dim: square.then_some(m.nrows()),
            rows: (!square).then_some(m.nrows()),
            cols: (!square).then_some(m.ncols()),
            entries,
        }
    }

    pub fn into_mat(self) -> Result<Mat> {
        let (r, cols) = match (self.dim, self.rows, self.cols) {
            (Some(d), None, None) => (d, d),
            (None, Some(r), Some(c)) => (r, c),
            (Some(d), Some(r), Some(c)) if d == r && d == c => (d, d),
            _ => return Err(Error::invalid("matrix needs \"dim\" or \"rows\"/\"cols\"")),
        };
        if self.entries.len() != r * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix entries",
                expected: r * cols,
                found: self.entries.len(),
            });
        }
        let m = Mat::from_fn(r, cols, |i, j| {
            let [re, im] = self.entries[i * cols + j];
            c(re, im)
        });
        if !is_finite(&m) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(m)
    }
}

impl Serialize for AlgebraElement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from_mat(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AlgebraElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let m = raw.into_mat().map_err(serde::de::Error::custom)?;
        AlgebraElement::new(m).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod rect_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<MatrixJson> = v.iter().map(MatrixJson::from_mat).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat>, D::Error> {
        let raw = Vec::<MatrixJson>::deserialize(d)?;
        raw.into_iter()
            .map(|m| m.into_mat().map_err(serde::de::Error::custom))
            .collect()
    }
}

// ---- matrix helpers shared by the solvers ---------------------------------

pub(crate) fn is_finite(m: &Mat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn re_part(m: &Mat) -> Mat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub(crate) fn im_part(m: &Mat) -> Mat {
    (m - m.adjoint()) * c(0.0, -0.5)
}

pub(crate) fn hermitian_deviation(m: &Mat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..=i {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub(crate) fn symmetrize(m: &Mat) -> Result<Mat> {
    let scale = 1.0f64.max(m.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let deviation = hermitian_deviation(m);
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotSelfadjoint { deviation });
    }
    Ok(re_part(m))
}

pub(crate) fn hermitian_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    let h = symmetrize(m)?;
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `λ_min` of the Hermitian part; used for half-plane margins where the
/// argument is Hermitian by construction.
pub(crate) fn min_eig_hermitian_part(m: &Mat) -> f64 {
    re_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn op_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

pub(crate) fn inverse(m: &Mat) -> Result<Mat> {
    let lu = m.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let a = u[(i, i)].norm();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if !(lo > hi * 1e-15) {
        return Err(Error::Singular("LU pivot below threshold"));
    }
    let inv = lu.try_inverse().ok_or(Error::Singular("LU inverse"))?;
    if !is_finite(&inv) {
        return Err(Error::NonFinite("matrix inverse"));
    }
    Ok(inv)
}

pub(crate) fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub(crate) fn direct_sum(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = (a.nrows(), b.nrows());
    let mut out = Mat::zeros(p + q, p + q);
    out.view_mut((0, 0), (p, p)).copy_from(a);
    out.view_mut((p, p), (q, q)).copy_from(b);
    out
}

pub(crate) fn amplify(x: &Mat, k: usize) -> Mat {
    if k == 1 {
        return x.clone();
    }
    identity(k).kronecker(x)
}

/// `b ⊗ I_m`: embeds `M_k(B)` into `M_k(M_N(C))` for `N = n·m`.
pub(crate) fn embed(b: &Mat, m: usize) -> Mat {
    if m == 1 {
        return b.clone();
    }
    b.kronecker(&identity(m))
}

pub(crate) fn block(m: &Mat, n: usize, r: usize, s: usize) -> Mat {
    m.view((r * n, s * n), (n, n)).into_owned()
}

/// `[[a, c], [0, b]]`.
pub(crate) fn upper_triangular(a: &Mat, c: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, n)).copy_from(c);
    out.view_mut((n, n), (n, n)).copy_from(b);
    out
}

/// Level of `m` over base dimension `n`.
pub(crate) fn level_of(m: &Mat, n: usize) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 || m.nrows() % n != 0 {
        return Err(Error::DimensionMismatch {
            context: "amplification level",
            expected: n,
            found: m.nrows(),
        });
    }
    Ok(m.nrows() / n)
}

/// Column-stacking vectorization; `E_ij` sits at index `i + n·j`.
pub(crate) fn vec_of(m: &Mat) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

pub(crate) fn unvec(v: &nalgebra::DVector<C64>, n: usize) -> Mat {
    Mat::from_column_slice(n, n, v.as_slice())
}

pub(crate) fn basis(n: usize, i: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(n, n);
    e[(i, j)] = c(1.0, 0.0);
    e
}

/// `h > tol·1` for a Hermitian `h`.
pub fn is_strictly_positive(h: &AlgebraElement, tol: f64) -> Result<bool> {
    let deviation = h.hermitian_deviation();
    if deviation > tol.max(HERMITIAN_TOL) {
        return Err(Error::NotSelfadjoint { deviation });
    }
    let ev = re_part(h.matrix()).symmetric_eigenvalues();
    Ok(ev.iter().all(|&l| l > tol))
}
