//! Dense symmetric / Hermitian matrix utilities.
//!
//! Everything downstream works on small dense matrices (order at most a few
//! dozen), so the routines here favour accuracy over asymptotics. Numerical
//! rank decisions are always relative to the largest eigenvalue magnitude so
//! that verdicts are invariant under rescaling.

use std::fmt;
use std::ops::Index;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Numerical thresholds shared by every decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative eigenvalue cutoff for numerical rank.
    pub rank_rel: f64,
    /// Relative singular-value cutoff for nullspace dimensions of linear maps.
    pub null_rel: f64,
    /// Absolute tightness threshold for angle inequalities (radians).
    pub tight_abs: f64,
    /// Duality-gap target for the interior-point solver.
    pub sdp_gap: f64,
    /// Minimum-eigenvalue slack for PSD verdicts.
    pub psd_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: 1e-7,
            null_rel: 1e-8,
            tight_abs: 1e-7,
            sdp_gap: 1e-9,
            psd_abs: 1e-8,
        }
    }
}

impl Tolerances {
    /// Tighter preset, for well-conditioned instances.
    pub fn strict() -> Self {
        Self {
            rank_rel: 1e-9,
            null_rel: 1e-10,
            tight_abs: 1e-9,
            sdp_gap: 1e-10,
            psd_abs: 1e-10,
        }
    }

    /// Looks up a preset by name (`default` or `strict`).
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "strict" => Ok(Self::strict()),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rank_rel", self.rank_rel),
            ("null_rel", self.null_rel),
            ("tight_abs", self.tight_abs),
            ("sdp_gap", self.sdp_gap),
            ("psd_abs", self.psd_abs),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance {name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.rank_rel >= 1.0 {
            return Err(Error::InvalidInput("rank_rel must be < 1".into()));
        }
        Ok(())
    }
}

/// Real symmetric matrix. Every constructor leaves the storage exactly
/// symmetric.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    /// Builds the matrix from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { data }
    }

    /// Symmetrizes an arbitrary square matrix as `(A + Aᵀ)/2`.
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::WrongShape {
                expected: "square",
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let n = m.nrows();
        Ok(Self::from_fn(n, |i, j| {
            if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)])
            }
        }))
    }

    /// Row-major constructor; rejects inputs whose asymmetry exceeds `1e-12`
    /// relative to the largest entry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::WrongShape {
                    expected: "square",
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let scale = m.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvariantViolation(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Self::from_dmatrix(&m)
    }

    /// `v vᵀ`
    pub fn outer(v: &DVector<f64>) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i, j)] = v;
        self.data[(j, i)] = v;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.data[(i, j)]).collect())
            .collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.amax()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.norm()
    }

    /// Trace inner product `⟨self, other⟩`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.data.dot(&other.data)
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: &self.data * s,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self {
            data: &self.data - &other.data,
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &SymMatrix) {
        self.data += &other.data * s;
    }

    /// `G self Gᵀ` for an arbitrary square `G`.
    pub fn congruence(&self, g: &DMatrix<f64>) -> Self {
        let m = g * &self.data * g.transpose();
        Self::from_dmatrix(&m).expect("congruence of square matrices is square")
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)]).collect()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*eig_sym(self)?.values.last().unwrap_or(&0.0))
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.data[idx]
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.data)
    }
}

/// Complex Hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct HermMatrix {
    data: DMatrix<Complex64>,
}

impl HermMatrix {
    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    /// Accepts `m` if `‖m − m†‖∞ ≤ 1e-10`, then stores `(m + m†)/2`.
    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::WrongShape {
                expected: "square",
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let adj = m.adjoint();
        let dev = (&m - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "matrix not Hermitian (deviation {dev:e})"
            )));
        }
        Ok(Self {
            data: (m + adj) * Complex64::new(0.5, 0.0),
        })
    }

    pub fn from_real(m: &SymMatrix) -> Self {
        Self {
            data: m.as_dmatrix().map(|x| Complex64::new(x, 0.0)),
        }
    }

    /// `ψ ψ†`
    pub fn projector(psi: &DVector<Complex64>) -> Self {
        Self {
            data: psi * psi.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn kron(&self, other: &HermMatrix) -> HermMatrix {
        HermMatrix {
            data: self.data.kronecker(&other.data),
        }
    }

    /// `tr(self · other)`; real up to roundoff for Hermitian factors.
    pub fn trace_product(&self, other: &HermMatrix) -> Complex64 {
        (&self.data * &other.data).trace()
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: &self.data * Complex64::new(s, 0.0),
        }
    }

    pub fn add(&self, other: &HermMatrix) -> Self {
        Self {
            data: &self.data + &other.data,
        }
    }

    /// Ascending real spectrum.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let eig = self
            .data
            .clone()
            .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
            .ok_or_else(|| Error::NumericalFailure("Hermitian eigensolver".into()))?;
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }
}

impl fmt::Debug for HermMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermMatrix{}", self.data)
    }
}

/// Spectral decomposition with eigenvalues sorted descending and matching
/// orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn rank(&self, rel: f64) -> usize {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0;
        }
        self.values.iter().filter(|v| v.abs() > rel * scale).count()
    }
}

pub fn eig_sym(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = m
        .as_dmatrix()
        .clone()
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

/// Count of eigenvalues with `|λ| > rank_rel · max|λ|`.
pub fn numerical_rank(m: &SymMatrix, tol: &Tolerances) -> usize {
    match eig_sym(m) {
        Ok(e) => e.rank(tol.rank_rel),
        // Fall back on the singular values, which always converge.
        Err(_) => matrix_rank(m.as_dmatrix(), tol.rank_rel),
    }
}

/// Rank of a general rectangular matrix from its singular values, relative
/// to the largest one.
pub fn matrix_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * smax).count()
}

/// Orthonormal basis of the numerical nullspace; its size is always
/// `dim − numerical_rank(m)`.
pub fn nullspace_basis(m: &SymMatrix, tol: &Tolerances) -> Vec<DVector<f64>> {
    let e = match eig_sym(m) {
        Ok(e) => e,
        Err(_) => return Vec::new(),
    };
    let r = e.rank(tol.rank_rel);
    // Eigenvalues are sorted by value, not magnitude; pick the n − r smallest
    // magnitudes.
    let mut by_mag: Vec<usize> = (0..m.dim()).collect();
    by_mag.sort_by(|&a, &b| e.values[a].abs().total_cmp(&e.values[b].abs()));
    by_mag
        .into_iter()
        .take(m.dim() - r)
        .map(|k| e.vector(k))
        .collect()
}

/// Gram vectors `x_i` with `⟨x_i, x_j⟩ = M_ij`, living in dimension
/// `numerical_rank(M)`.
pub fn gram_factor(m: &SymMatrix, tol: &Tolerances) -> Result<Vec<DVector<f64>>> {
    let e = eig_sym(m)?;
    let scale = e.max_abs();
    let lmin = e.values.last().copied().unwrap_or(0.0);
    if lmin < -tol.psd_abs * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::IndefiniteMatrix {
            min_eigenvalue: lmin,
        });
    }
    let r = e.rank(tol.rank_rel);
    let n = m.dim();
    Ok((0..n)
        .map(|i| DVector::from_fn(r, |k, _| e.values[k].max(0.0).sqrt() * e.vectors[(i, k)]))
        .collect())
}

/// `Gram(x_1, …, x_k)`
pub fn gram_matrix(vectors: &[DVector<f64>]) -> SymMatrix {
    SymMatrix::from_fn(vectors.len(), |i, j| vectors[i].dot(&vectors[j]))
}

/// Entrywise (Schur) product.
pub fn hadamard(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(SymMatrix {
        data: a.as_dmatrix().component_mul(b.as_dmatrix()),
    })
}
