//! Positive semidefinite completion of a correlator.
//!
//! A correlator `C` (n×m) is quantum iff the partial matrix
//!
//! ```text
//! ┌ 1  ?  C  ┐
//! └ ?  1  ?  ┘   (order n+m, unit diagonal, C in the off-diagonal block)
//! ```
//!
//! has a PSD completion. Rows `0..n` belong to the first party and rows
//! `n..n+m` to the second; in 1-based two-party notation the entry `c_xy`
//! sits at position `(x, n+y)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, hadamard, matrix_rank, numerical_rank, SymMatrix, Tolerances};
use crate::sdp::{
    self, block_diagonal_pattern, dual_nondegenerate, IpmSettings, SdpProblem, SdpSolution,
    SdpStatus,
};

/// Entries may exceed 1 in magnitude by this much (roundoff in parsed input).
pub const ENTRY_SLACK: f64 = 1e-12;
/// `arccos` accepts arguments this far outside `[-1, 1]` before refusing.
pub const ARCCOS_SLACK: f64 = 1e-10;

/// Candidate n×m correlation matrix.
#[derive(Clone, PartialEq)]
pub struct Correlator {
    entries: DMatrix<f64>,
}

impl Correlator {
    pub fn from_dmatrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::WrongShape {
                expected: "at least 1x1",
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        for &v in entries.iter() {
            if !v.is_finite() || v.abs() > 1.0 + ENTRY_SLACK {
                return Err(Error::OutOfRange {
                    what: "correlator entries must lie in [-1, 1]",
                    value: v,
                });
            }
        }
        Ok(Self { entries })
    }

    /// Row-major constructor.
    pub fn new(n: usize, m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::DimensionMismatch {
                expected: n * m,
                found: data.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_row_slice(n, m, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        for r in rows {
            if r.len() != m {
                return Err(Error::WrongShape {
                    expected: "rectangular rows",
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(n, m, &flat)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|x| (0..self.m()).map(|y| self.entries[(x, y)]).collect())
            .collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.to_rows().into_iter().flatten().collect()
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
        }
    }

    /// Relabels the outcomes of input `x` of the first party.
    pub fn switch_row(&self, x: usize) -> Self {
        let mut e = self.entries.clone();
        e.row_mut(x).neg_mut();
        Self { entries: e }
    }

    /// Relabels the outcomes of input `y` of the second party.
    pub fn switch_col(&self, y: usize) -> Self {
        let mut e = self.entries.clone();
        e.column_mut(y).neg_mut();
        Self { entries: e }
    }

    pub fn swap_rows(&self, a: usize, b: usize) -> Self {
        let mut e = self.entries.clone();
        e.swap_rows(a, b);
        Self { entries: e }
    }

    pub fn swap_cols(&self, a: usize, b: usize) -> Self {
        let mut e = self.entries.clone();
        e.swap_columns(a, b);
        Self { entries: e }
    }

    /// `(1 − w)·self + w·other`
    pub fn mix(&self, other: &Correlator, w: f64) -> Result<Self> {
        if self.entries.shape() != other.entries.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.n() * self.m(),
                found: other.n() * other.m(),
            });
        }
        Self::from_dmatrix(&self.entries * (1.0 - w) + &other.entries * w)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::from_dmatrix(&self.entries * s)
    }

    /// Numerical rank of the n×m matrix.
    pub fn rank(&self, tol: &Tolerances) -> usize {
        matrix_rank(&self.entries, tol.rank_rel)
    }

    /// Max-norm distance.
    pub fn distance(&self, other: &Correlator) -> f64 {
        if self.entries.shape() != other.entries.shape() {
            return f64::INFINITY;
        }
        (&self.entries - &other.entries).amax()
    }
}

impl fmt::Debug for Correlator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Correlator{:?}", self.to_rows())
    }
}

#[derive(Serialize, Deserialize)]
struct CorrelatorRecord {
    n: usize,
    m: usize,
    c: Vec<f64>,
}

impl Serialize for Correlator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CorrelatorRecord {
            n: self.n(),
            m: self.m(),
            c: self.row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Correlator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = CorrelatorRecord::deserialize(d)?;
        Correlator::new(r.n, r.m, &r.c).map_err(serde::de::Error::custom)
    }
}

/// `θ_xy = arccos(c_xy)` for every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMatrix {
    entries: DMatrix<f64>,
}

impl AngleMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
        }
    }
}

/// `arccos` with clamping of roundoff beyond `±1`.
pub fn arccos_clamped(c: f64) -> Result<f64> {
    if !c.is_finite() || c.abs() > 1.0 + ARCCOS_SLACK {
        return Err(Error::OutOfRange {
            what: "arccos argument outside [-1, 1]",
            value: c,
        });
    }
    Ok(c.clamp(-1.0, 1.0).acos())
}

pub fn angles(c: &Correlator) -> AngleMatrix {
    AngleMatrix {
        entries: c.entries.map(|v| v.clamp(-1.0, 1.0).acos()),
    }
}

/// `E_ij = ½(e_i e_jᵀ + e_j e_iᵀ)`
pub fn basis_matrix(dim: usize, i: usize, j: usize) -> SymMatrix {
    let mut e = SymMatrix::zeros(dim);
    if i == j {
        e.set(i, i, 1.0);
    } else {
        e.set(i, j, 0.5);
    }
    e
}

fn cross_constraints(c: &Correlator) -> Vec<(SymMatrix, f64)> {
    let (n, m) = (c.n(), c.m());
    let mut out = Vec::with_capacity(n * m);
    for x in 0..n {
        for y in 0..m {
            out.push((basis_matrix(n + m, x, n + y), c.get(x, y)));
        }
    }
    out
}

/// Feasibility SDP whose solutions are exactly the PSD completions:
/// `⟨E_ii, X⟩ = 1` for every `i`, then `⟨E_{x,n+y}, X⟩ = c_xy` row-major.
pub fn build_completion_sdp(c: &Correlator) -> SdpProblem {
    let dim = c.n() + c.m();
    let mut cons: Vec<(SymMatrix, f64)> =
        (0..dim).map(|i| (basis_matrix(dim, i, i), 1.0)).collect();
    cons.extend(cross_constraints(c));
    SdpProblem::new(SymMatrix::zeros(dim), cons).expect("completion SDP is well formed")
}

/// Margin form of the completion problem, posed in `W = X − t·I ⪰ 0`:
///
/// ```text
/// max −W₁₁  s.t.  W_ii − W₁₁ = 0 (i ≥ 2),  W_{x,n+y} = c_xy
/// ```
///
/// The optimum is `t* − 1` where `t*` is the largest minimum eigenvalue over
/// all unit-diagonal matrices with the prescribed off-diagonal block. Both
/// this problem and its dual are strictly feasible, and every dual solution
/// has trace 1.
pub fn build_margin_sdp(c: &Correlator) -> SdpProblem {
    let dim = c.n() + c.m();
    let e11 = basis_matrix(dim, 0, 0);
    let mut cons: Vec<(SymMatrix, f64)> = (1..dim)
        .map(|i| (basis_matrix(dim, i, i).sub(&e11), 0.0))
        .collect();
    cons.extend(cross_constraints(c));
    SdpProblem::new(e11.scale(-1.0), cons).expect("margin SDP is well formed")
}

/// Convergence data of one interior-point solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl SolverStats {
    pub fn from_solution(s: &SdpSolution) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            primal_obj: s.primal_obj,
            dual_obj: s.dual_obj,
            gap: s.gap,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
        }
    }

    /// Gap within `gap_rel·(1+|obj|)` and both residuals within `res`.
    pub fn healthy(&self, gap_rel: f64, res: f64) -> bool {
        self.status == SdpStatus::Optimal
            && self.gap.abs() <= gap_rel * (1.0 + self.primal_obj.abs())
            && self.primal_residual <= res
            && self.dual_residual <= res
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginClass {
    /// Some completion is positive definite.
    Interior,
    /// Completions exist, all of them singular (within `psd_abs`).
    Boundary,
    Exterior,
}

#[derive(Debug, Clone)]
pub struct MarginSolve {
    /// Largest minimum eigenvalue over unit-diagonal extensions.
    pub margin: f64,
    pub class: MarginClass,
    /// `W + t·I` at the optimum: unit diagonal, prescribed cross block.
    pub x: SymMatrix,
    /// Dual slack of the margin problem (trace 1).
    pub z: SymMatrix,
    pub stats: SolverStats,
}

pub fn solve_margin(c: &Correlator, tol: &Tolerances) -> Result<MarginSolve> {
    solve_margin_with(c, tol, &IpmSettings::default())
}

pub fn solve_margin_with(
    c: &Correlator,
    tol: &Tolerances,
    settings: &IpmSettings,
) -> Result<MarginSolve> {
    let p = build_margin_sdp(c);
    let sol = sdp::solve_with(&p, tol, settings);
    if !sol.is_optimal() {
        return Err(Error::NumericalFailure(format!(
            "margin SDP ended with status {:?} after {} iterations",
            sol.status, sol.iterations
        )));
    }
    let margin = 1.0 + sol.primal_obj;
    let dim = p.dim;
    let x = sol.x.add(&SymMatrix::identity(dim).scale(margin));
    let class = if margin > tol.psd_abs {
        MarginClass::Interior
    } else if margin >= -tol.psd_abs {
        MarginClass::Boundary
    } else {
        MarginClass::Exterior
    };
    Ok(MarginSolve {
        margin,
        class,
        x,
        stats: SolverStats::from_solution(&sol),
        z: sol.z,
    })
}

/// Dual optimal solution of the completion problem,
/// `Z = Σ λ_i E_ii + Σ λ_xy E_{x,n+y}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub z: SymMatrix,
    /// `λ_i`, one per row of the completion.
    pub lambda_diag: Vec<f64>,
    /// `λ_xy`, n rows of m entries.
    pub lambda_cross: Vec<Vec<f64>>,
}

impl DualCertificate {
    pub fn from_multipliers(n: usize, lambda_diag: Vec<f64>, lambda_cross: Vec<Vec<f64>>) -> Self {
        let m = lambda_cross.first().map_or(0, Vec::len);
        let mut z = SymMatrix::zeros(n + m);
        for (i, l) in lambda_diag.iter().enumerate() {
            z.set(i, i, *l);
        }
        for (x, row) in lambda_cross.iter().enumerate() {
            for (y, l) in row.iter().enumerate() {
                z.set(x, n + y, 0.5 * l);
            }
        }
        Self {
            z,
            lambda_diag,
            lambda_cross,
        }
    }

    /// Reads the multipliers off `z`; entries inside the diagonal blocks are
    /// discarded.
    pub fn from_slack(n: usize, z: &SymMatrix) -> Self {
        let m = z.dim() - n;
        let diag = z.diagonal();
        let cross = (0..n)
            .map(|x| (0..m).map(|y| 2.0 * z.get(x, n + y)).collect())
            .collect();
        Self::from_multipliers(n, diag, cross)
    }

    /// Dual objective `Σ λ_i + Σ λ_xy c_xy` (zero at optimality).
    pub fn objective(&self, c: &Correlator) -> f64 {
        let cross: f64 = self
            .lambda_cross
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().enumerate().map(move |(y, l)| l * c.get(x, y)))
            .sum();
        self.lambda_diag.iter().sum::<f64>() + cross
    }

    /// Completion-SDP dual vector in constraint order.
    pub fn y(&self) -> Vec<f64> {
        let mut y = self.lambda_diag.clone();
        y.extend(self.lambda_cross.iter().flatten());
        y
    }
}

/// How the returned completion was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompletionKind {
    /// Certified as the only completion.
    Unique,
    /// Central-path limit of the margin problem; lies in the relative
    /// interior of the set of completions of largest minimum eigenvalue.
    MaximallyComplementary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub member: bool,
    pub margin: f64,
    pub class: MarginClass,
    pub completion: Option<SymMatrix>,
    pub kind: Option<CompletionKind>,
    pub unique: bool,
    pub dual_certificate: Option<DualCertificate>,
    pub rank_c: usize,
    pub rank_completion: usize,
    pub rank_hadamard: usize,
    pub rank_dual: usize,
    /// `rank(X) + rank(Z) == n + m`
    pub strictly_complementary: bool,
    /// Dimension of the solution space of the uniqueness system.
    pub null_dim: usize,
    pub solver: SolverStats,
}

pub fn find_completion(c: &Correlator, tol: &Tolerances) -> Result<CompletionResult> {
    find_completion_with(c, tol, &IpmSettings::default())
}

pub fn find_completion_with(
    c: &Correlator,
    tol: &Tolerances,
    settings: &IpmSettings,
) -> Result<CompletionResult> {
    let (n, m) = (c.n(), c.m());
    let dim = n + m;
    let ms = solve_margin_with(c, tol, settings)?;
    let rank_c = c.rank(tol);
    if ms.class == MarginClass::Exterior {
        return Ok(CompletionResult {
            member: false,
            margin: ms.margin,
            class: ms.class,
            completion: None,
            kind: None,
            unique: false,
            dual_certificate: None,
            rank_c,
            rank_completion: 0,
            rank_hadamard: 0,
            rank_dual: 0,
            strictly_complementary: false,
            null_dim: 0,
            solver: ms.stats,
        });
    }

    let pattern = block_diagonal_pattern(n, m);
    let mut x = unit_diagonal(&ms.x);
    // A positive definite completion forces the zero dual.
    let mut cert = match ms.class {
        MarginClass::Interior => DualCertificate::from_slack(n, &SymMatrix::zeros(dim)),
        _ => DualCertificate::from_slack(n, &ms.z),
    };
    let mut nd = dual_nondegenerate(&cert.z, &pattern, tol)?;
    if ms.class == MarginClass::Boundary {
        if let Some((xp, zp)) = refine_boundary(c, &x, &cert.z, tol) {
            let ndp = dual_nondegenerate(&zp, &pattern, tol)?;
            if ndp.nondegenerate {
                x = xp;
                cert = DualCertificate::from_slack(n, &zp);
                nd = ndp;
            }
        }
    }
    let rank_completion = numerical_rank(&x, tol);
    let rank_hadamard = numerical_rank(&hadamard(&x, &x)?, tol);
    let rank_dual = numerical_rank(&cert.z, tol);
    Ok(CompletionResult {
        member: true,
        margin: ms.margin,
        class: ms.class,
        completion: Some(x),
        kind: Some(if nd.nondegenerate {
            CompletionKind::Unique
        } else {
            CompletionKind::MaximallyComplementary
        }),
        unique: nd.nondegenerate,
        dual_certificate: Some(cert),
        rank_c,
        rank_completion,
        rank_hadamard,
        rank_dual,
        strictly_complementary: rank_completion + rank_dual == dim,
        null_dim: nd.null_dim,
        solver: ms.stats,
    })
}

/// Eigenvalues above this fraction of the largest are treated as
/// unambiguously nonzero when seeding the low-rank refinement.
const REFINE_SEED_REL: f64 = 1e-3;
/// Largest max-norm move the refinement may make away from the
/// interior-point completion.
const REFINE_RADIUS: f64 = 1e-3;
const REFINE_RESIDUAL: f64 = 1e-13;
const REFINE_MAX_ITER: usize = 50;

/// Sharpens a boundary solution whose interior-point accuracy is limited by
/// a lack of strict complementarity.
///
/// Looks for an exact low-rank completion `VVᵀ` near `x` (Gauss-Newton on
/// the Gram factor, smallest rank first), then projects `z` onto the
/// subspace of pattern-respecting matrices whose range lies in the
/// nullspace of that completion. Returns `None` if either step fails; the
/// caller accepts the pair only if the projected dual certifies uniqueness.
fn refine_boundary(
    c: &Correlator,
    x: &SymMatrix,
    z: &SymMatrix,
    tol: &Tolerances,
) -> Option<(SymMatrix, SymMatrix)> {
    let e = eig_sym(x).ok()?;
    let lmax = e.max_abs();
    let seed_rank = e
        .values
        .iter()
        .filter(|v| **v > REFINE_SEED_REL * lmax)
        .count()
        .max(1);
    let top = numerical_rank(x, tol).max(seed_rank);
    let (xp, r) = (seed_rank..=top).find_map(|r| {
        let v = DMatrix::from_fn(x.dim(), r, |i, k| {
            e.values[k].max(0.0).sqrt() * e.vectors[(i, k)]
        });
        let v = gauss_newton_gram(c, v)?;
        let xp = SymMatrix::from_dmatrix(&(&v * v.transpose())).ok()?;
        (xp.sub(x).max_abs() <= REFINE_RADIUS).then_some((unit_diagonal(&xp), r))
    })?;
    let zp = project_dual_face(&xp, r, z, c.n(), tol)?;
    let scale = zp.max_abs();
    if scale == 0.0 || zp.min_eigenvalue().ok()? < -tol.psd_abs * scale {
        return None;
    }
    Some((xp, zp.scale(1.0 / zp.trace())))
}

/// Solves `‖v_i‖² = 1`, `⟨v_x, v_{n+y}⟩ = c_xy` for the rows of `v`.
fn gauss_newton_gram(c: &Correlator, mut v: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (n, m) = (c.n(), c.m());
    let (d, r) = v.shape();
    let rows = d + n * m;
    let residual = |v: &DMatrix<f64>| -> DVector<f64> {
        let mut f = DVector::zeros(rows);
        for i in 0..d {
            f[i] = v.row(i).norm_squared() - 1.0;
        }
        for x in 0..n {
            for y in 0..m {
                f[d + x * m + y] = v.row(x).dot(&v.row(n + y)) - c.get(x, y);
            }
        }
        f
    };
    for _ in 0..REFINE_MAX_ITER {
        let f = residual(&v);
        if f.amax() <= REFINE_RESIDUAL {
            return Some(v);
        }
        let mut j = DMatrix::zeros(rows, d * r);
        for i in 0..d {
            for k in 0..r {
                j[(i, i * r + k)] = 2.0 * v[(i, k)];
            }
        }
        for x in 0..n {
            for y in 0..m {
                let row = d + x * m + y;
                for k in 0..r {
                    j[(row, x * r + k)] = v[(n + y, k)];
                    j[(row, (n + y) * r + k)] = v[(x, k)];
                }
            }
        }
        // Minimum-norm step; the rotational gauge lies in the nullspace.
        let step = j.svd(true, true).solve(&(-&f), 1e-12).ok()?;
        for i in 0..d {
            for k in 0..r {
                v[(i, k)] += step[i * r + k];
            }
        }
        if !v.iter().all(|t| t.is_finite()) {
            return None;
        }
    }
    (residual(&v).amax() <= REFINE_RESIDUAL).then_some(v)
}

/// Orthogonal projection of `z` onto `{N S Nᵀ}` restricted to matrices that
/// vanish inside both diagonal blocks, where `N` spans the nullspace of the
/// rank-`r` matrix `x`.
fn project_dual_face(
    x: &SymMatrix,
    r: usize,
    z: &SymMatrix,
    n: usize,
    tol: &Tolerances,
) -> Option<SymMatrix> {
    let d = x.dim();
    let k = d - r;
    if k == 0 {
        return Some(SymMatrix::zeros(d));
    }
    let e = eig_sym(x).ok()?;
    let null = e.vectors.columns(r, k).into_owned();
    // Basis of k×k symmetric matrices, lifted through N.
    let mut lifted = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k {
        for b in a..k {
            let mut s = DMatrix::zeros(k, k);
            s[(a, b)] = 1.0;
            s[(b, a)] = 1.0;
            lifted.push(&null * s * null.transpose());
        }
    }
    let pattern = block_diagonal_pattern(n, d - n);
    let cons = DMatrix::from_fn(pattern.len(), lifted.len(), |p, q| {
        let (i, j) = pattern[p];
        lifted[q][(i, j)]
    });
    let free = if pattern.is_empty() {
        DMatrix::identity(lifted.len(), lifted.len())
    } else {
        right_nullspace(&cons, tol.null_rel)
    };
    if free.ncols() == 0 {
        return Some(SymMatrix::zeros(d));
    }
    let basis: Vec<DMatrix<f64>> = (0..free.ncols())
        .map(|q| {
            lifted
                .iter()
                .enumerate()
                .fold(DMatrix::zeros(d, d), |acc, (p, l)| acc + l * free[(p, q)])
        })
        .collect();
    let a = DMatrix::from_fn(d * d, basis.len(), |row, q| basis[q].as_slice()[row]);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(
            &DVector::from_column_slice(z.as_dmatrix().as_slice()),
            1e-12,
        )
        .ok()?;
    SymMatrix::from_dmatrix(&DMatrix::from_column_slice(d, d, (a * coef).as_slice())).ok()
}

/// Orthonormal basis (as columns) of `{v : A v = 0}`.
fn right_nullspace(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let cols = a.ncols();
    // Pad to at least as many rows as columns so the SVD yields a full Vᵀ.
    let mut padded = DMatrix::zeros(a.nrows().max(cols), cols);
    padded.rows_mut(0, a.nrows()).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= rel * smax)
        .collect();
    DMatrix::from_fn(cols, keep.len(), |i, q| vt[(keep[q], i)])
}

/// `D^{-1/2} X D^{-1/2}` with `D = diag(X)`, diagonal then set to exactly 1.
fn unit_diagonal(x: &SymMatrix) -> SymMatrix {
    let d: Vec<f64> = x
        .diagonal()
        .iter()
        .map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt())
        .collect();
    SymMatrix::from_fn(x.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            d[i] * x.get(i, j) * d[j]
        }
    })
}

/// Admissible range of `θ₃₄ = arccos(c₃₄)`, the angle between the two
/// second-party vectors, with `lo ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AngleInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, theta: f64) -> bool {
        (self.lo..=self.hi).contains(&theta)
    }
}

fn require_2x2(c: &Correlator) -> Result<()> {
    if c.n() != 2 || c.m() != 2 {
        return Err(Error::WrongShape {
            expected: "2x2",
            rows: c.n(),
            cols: c.m(),
        });
    }
    Ok(())
}

/// Range of `θ₃₄` compatible with both 3×3 principal blocks `{1,3,4}` and
/// `{2,3,4}`; `None` when the two ranges do not meet within `tight_abs`.
pub fn completion_interval_2x2(c: &Correlator, tol: &Tolerances) -> Result<Option<AngleInterval>> {
    require_2x2(c)?;
    let t = angles(c);
    let (t13, t14, t23, t24) = (t.get(0, 0), t.get(0, 1), t.get(1, 0), t.get(1, 1));
    let lo = (t13 - t14).abs().max((t23 - t24).abs());
    let hi = (t13 + t14)
        .min(t23 + t24)
        .min(2.0 * PI - (t13 + t14))
        .min(2.0 * PI - (t23 + t24));
    if lo > hi + tol.tight_abs {
        return Ok(None);
    }
    Ok(Some(AngleInterval {
        lo: lo.min(hi),
        hi: hi.max(lo),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Psd3 {
    pub psd: bool,
    pub singular: bool,
}

/// PSD test for the 3×3 unit-diagonal matrix with off-diagonal angles
/// `θ1, θ2, θ3`.
pub fn psd3_angles(t1: f64, t2: f64, t3: f64, tol: &Tolerances) -> Result<Psd3> {
    for t in [t1, t2, t3] {
        if !(t.is_finite() && (-ARCCOS_SLACK..=PI + ARCCOS_SLACK).contains(&t)) {
            return Err(Error::OutOfRange {
                what: "angle outside [0, pi]",
                value: t,
            });
        }
    }
    // Slack of each inequality; nonnegative means satisfied.
    let slacks = [
        t2 + t3 - t1,
        t1 + t3 - t2,
        t1 + t2 - t3,
        2.0 * PI - (t1 + t2 + t3),
    ];
    let psd = slacks.iter().all(|s| *s >= -tol.tight_abs);
    let singular = psd && slacks.iter().any(|s| s.abs() <= tol.tight_abs);
    Ok(Psd3 { psd, singular })
}

/// SDP-free membership test for 2×2 correlators.
pub fn chordal_membership_2x2(c: &Correlator, tol: &Tolerances) -> Result<bool> {
    Ok(completion_interval_2x2(c, tol)?.is_some())
}
