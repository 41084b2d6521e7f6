//! Dense semidefinite programming in canonical form.
//!
//! Primal: `sup ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0`
//!
//! Dual:   `inf bᵀy  s.t.  Σ y_i A_i − C = Z ⪰ 0`
//!
//! [`solve`] runs a homogeneous self-dual interior-point method, so the
//! returned pair is the limit of a central path and is maximally
//! complementary. This matters for pure feasibility problems (`C = 0`),
//! where the trivial dual `Z = 0` is always optimal but carries no
//! information.

mod ipm;
pub mod lp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, matrix_rank, SymMatrix, Tolerances};

pub use ipm::{IpmSettings, ITERATION_CAP, STEP_FRACTION};

/// Residual bound used when certifying a pair as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: SymMatrix,
    pub constraints: Vec<(SymMatrix, f64)>,
}

impl SdpProblem {
    pub fn new(objective: SymMatrix, constraints: Vec<(SymMatrix, f64)>) -> Result<Self> {
        let dim = objective.dim();
        if dim == 0 {
            return Err(Error::InvalidInput("SDP of order 0".into()));
        }
        if constraints.is_empty() {
            return Err(Error::InvalidInput(
                "SDP needs at least one constraint".into(),
            ));
        }
        for (a, _) in &constraints {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.dim(),
                });
            }
        }
        Ok(Self {
            dim,
            objective,
            constraints,
        })
    }

    /// `Σ y_i A_i`
    pub fn adjoint(&self, y: &[f64]) -> SymMatrix {
        let mut out = SymMatrix::zeros(self.dim);
        for ((a, _), &yi) in self.constraints.iter().zip(y) {
            out.axpy(yi, a);
        }
        out
    }

    /// `(⟨A_i, X⟩)_i`
    pub fn apply(&self, x: &SymMatrix) -> Vec<f64> {
        self.constraints.iter().map(|(a, _)| a.inner(x)).collect()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|(_, b)| *b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalFailure,
}

/// Primal-dual pair returned by [`solve`].
///
/// For `PrimalInfeasible`, `y` holds a Farkas ray (`Σ y_i A_i ⪰ 0`,
/// `bᵀy < 0`) and `z = Σ y_i A_i`. For `DualInfeasible`, `x` holds a
/// primal improving ray.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: SymMatrix,
    pub y: Vec<f64>,
    pub z: SymMatrix,
    pub status: SdpStatus,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Solves `p` with default interior-point settings.
pub fn solve(p: &SdpProblem, tol: &Tolerances) -> SdpSolution {
    ipm::solve(p, tol, &IpmSettings::default())
}

/// Same as [`solve`] with explicit interior-point settings.
pub fn solve_with(p: &SdpProblem, tol: &Tolerances, settings: &IpmSettings) -> SdpSolution {
    ipm::solve(p, tol, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub weak_duality_ok: bool,
    pub feasible_primal: bool,
    pub feasible_dual: bool,
    pub complementarity_gap: f64,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Evaluates the duality certificates of a candidate pair from their
/// definitions.
pub fn check_pair(
    p: &SdpProblem,
    x: &SymMatrix,
    y: &[f64],
    z: &SymMatrix,
    tol: &Tolerances,
) -> Result<PairReport> {
    for d in [x.dim(), z.dim()] {
        if d != p.dim {
            return Err(Error::DimensionMismatch {
                expected: p.dim,
                found: d,
            });
        }
    }
    if y.len() != p.constraints.len() {
        return Err(Error::DimensionMismatch {
            expected: p.constraints.len(),
            found: y.len(),
        });
    }
    let primal_residual = primal_residual(p, x);
    let dual_residual = dual_residual(p, y, z);
    let primal_obj = p.objective.inner(x);
    let dual_obj: f64 = p.rhs().iter().zip(y).map(|(b, yi)| b * yi).sum();
    let psd_ok = |m: &SymMatrix| -> Result<bool> {
        let lmin = m.min_eigenvalue()?;
        Ok(lmin >= -tol.psd_abs * m.max_abs().max(1.0))
    };
    let feasible_primal = primal_residual <= FEASIBILITY_TOL && psd_ok(x)?;
    let feasible_dual = dual_residual <= FEASIBILITY_TOL && psd_ok(z)?;
    let scale = 1.0 + primal_obj.abs().max(dual_obj.abs());
    Ok(PairReport {
        weak_duality_ok: primal_obj <= dual_obj + 10.0 * tol.sdp_gap * scale,
        feasible_primal,
        feasible_dual,
        complementarity_gap: x.inner(z),
        primal_obj,
        dual_obj,
        primal_residual,
        dual_residual,
    })
}

/// `max_i |⟨A_i, X⟩ − b_i|`
pub fn primal_residual(p: &SdpProblem, x: &SymMatrix) -> f64 {
    p.constraints
        .iter()
        .map(|(a, b)| (a.inner(x) - b).abs())
        .fold(0.0, f64::max)
}

/// `‖Σ y_i A_i − C − Z‖∞` (max-norm)
pub fn dual_residual(p: &SdpProblem, y: &[f64], z: &SymMatrix) -> f64 {
    p.adjoint(y).sub(&p.objective).sub(z).max_abs()
}

/// Off-diagonal index pairs `(i, j)`, `i < j`, left free in a
/// nondegeneracy system.
pub type FreePattern = Vec<(usize, usize)>;

/// Free positions lying inside the two diagonal blocks of an `(n, m)`
/// partition; the cross block and the diagonal are pinned to zero.
pub fn block_diagonal_pattern(n: usize, m: usize) -> FreePattern {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((i, j));
        }
    }
    for i in n..n + m {
        for j in (i + 1)..n + m {
            out.push((i, j));
        }
    }
    out
}

/// Every off-diagonal position of an order-`dim` matrix.
pub fn all_offdiagonal_pattern(dim: usize) -> FreePattern {
    (0..dim)
        .flat_map(|i| ((i + 1)..dim).map(move |j| (i, j)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    pub null_dim: usize,
}

/// Decides whether `M = 0` is the only symmetric `M` supported on
/// `free_pattern` with `M Z = 0`.
///
/// `M Z = 0` is equivalent to `M V = 0` for an orthonormal basis `V` of the
/// numerical range of `Z`; the map is assembled in that form so its singular
/// values do not inherit the spread of `Z`'s spectrum.
pub fn dual_nondegenerate(
    z: &SymMatrix,
    free_pattern: &[(usize, usize)],
    tol: &Tolerances,
) -> Result<NondegeneracyReport> {
    let n = z.dim();
    for &(i, j) in free_pattern {
        if i >= j || j >= n {
            return Err(Error::InvalidInput(format!(
                "free position ({i}, {j}) is not strictly upper triangular in order {n}"
            )));
        }
    }
    if free_pattern.is_empty() {
        return Ok(NondegeneracyReport {
            nondegenerate: true,
            null_dim: 0,
        });
    }
    let e = eig_sym(z)?;
    let scale = e.max_abs();
    let range: Vec<DVector<f64>> = (0..n)
        .filter(|&k| scale > 0.0 && e.values[k].abs() > tol.rank_rel * scale)
        .map(|k| e.vector(k))
        .collect();
    let r = range.len();
    let mut map = DMatrix::<f64>::zeros(n * r, free_pattern.len());
    for (col, &(i, j)) in free_pattern.iter().enumerate() {
        for (k, v) in range.iter().enumerate() {
            // (M V)_{i,k} gets V_{j,k}; (M V)_{j,k} gets V_{i,k}.
            map[(i * r + k, col)] += v[j];
            map[(j * r + k, col)] += v[i];
        }
    }
    let rank = matrix_rank(&map, tol.null_rel);
    let null_dim = free_pattern.len() - rank;
    Ok(NondegeneracyReport {
        nondegenerate: null_dim == 0,
        null_dim,
    })
}
