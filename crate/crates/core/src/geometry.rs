//! Membership, extremality, exposedness and locality decisions.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::completion::{
    angles, basis_matrix, build_completion_sdp, find_completion, solve_margin, AngleMatrix,
    CompletionResult, Correlator, DualCertificate, MarginClass, SolverStats,
};
use crate::error::{Error, Result};
use crate::linalg::{gram_factor, SymMatrix, Tolerances};
use crate::sdp::{
    self, all_offdiagonal_pattern, block_diagonal_pattern, check_pair, dual_nondegenerate,
    lp::{solve_lp, LpProblem, LpStatus},
    NondegeneracyReport, PairReport, SdpProblem,
};

/// Largest `n + m` accepted by [`is_local`].
pub const MAX_LOCAL_PARTIES: usize = 20;
/// L1 distance to the local polytope below which a point counts as local.
pub const LOCALITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    Lower,
    Upper,
}

/// One inequality of the angle description, indexed by 0-based entries
/// `(x, y)` of the correlator as given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    /// `0 ≤ θ_xy ≤ π`
    Box { entry: (usize, usize), bound: Bound },
    /// `0 ≤ θ_a + θ_b + θ_c − θ_minus ≤ 2π` over the four entries of a 2×2
    /// submatrix.
    Cycle {
        plus: [(usize, usize); 3],
        minus: (usize, usize),
        bound: Bound,
    },
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = |(x, y): (usize, usize)| format!("θ[{},{}]", x + 1, y + 1);
        match self {
            Inequality::Box { entry, bound } => match bound {
                Bound::Lower => write!(f, "{} >= 0", t(*entry)),
                Bound::Upper => write!(f, "{} <= pi", t(*entry)),
            },
            Inequality::Cycle { plus, minus, bound } => {
                let lhs = format!(
                    "{} + {} + {} - {}",
                    t(plus[0]),
                    t(plus[1]),
                    t(plus[2]),
                    t(*minus)
                );
                match bound {
                    Bound::Lower => write!(f, "{lhs} >= 0"),
                    Bound::Upper => write!(f, "{lhs} <= 2pi"),
                }
            }
        }
    }
}

/// An inequality evaluated at a point; `slack < 0` means violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityValue {
    pub inequality: Inequality,
    pub value: f64,
    pub slack: f64,
}

fn box_values(t: &AngleMatrix, transposed: bool) -> Vec<InequalityValue> {
    let orient = |x: usize, y: usize| if transposed { (y, x) } else { (x, y) };
    let mut out = Vec::new();
    for x in 0..t.n() {
        for y in 0..t.m() {
            let v = t.get(x, y);
            for (bound, slack) in [(Bound::Lower, v), (Bound::Upper, PI - v)] {
                out.push(InequalityValue {
                    inequality: Inequality::Box {
                        entry: orient(x, y),
                        bound,
                    },
                    value: v,
                    slack,
                });
            }
        }
    }
    out
}

/// Cycle inequalities of a two-row angle matrix, for every column pair.
fn cycle_values(t: &AngleMatrix, transposed: bool) -> Vec<InequalityValue> {
    let orient = |x: usize, y: usize| if transposed { (y, x) } else { (x, y) };
    let mut out = Vec::new();
    for i in 0..t.m() {
        for j in (i + 1)..t.m() {
            let entries = [(0, i), (0, j), (1, i), (1, j)];
            let total: f64 = entries.iter().map(|&(x, y)| t.get(x, y)).sum();
            for (k, &minus) in entries.iter().enumerate() {
                let value = total - 2.0 * t.get(minus.0, minus.1);
                let mut plus = [(0, 0); 3];
                for (slot, e) in entries
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| *l != k)
                    .map(|(_, e)| *e)
                    .enumerate()
                {
                    plus[slot] = orient(e.0, e.1);
                }
                for (bound, slack) in [(Bound::Lower, value), (Bound::Upper, 2.0 * PI - value)] {
                    out.push(InequalityValue {
                        inequality: Inequality::Cycle {
                            plus,
                            minus: orient(minus.0, minus.1),
                            bound,
                        },
                        value,
                        slack,
                    });
                }
            }
        }
    }
    out
}

/// Every box and cycle inequality of the angle description, evaluated at
/// `c`. Requires `min(n, m) ≤ 2`; the two-input party is oriented as rows.
pub fn inequalities(c: &Correlator) -> Result<Vec<InequalityValue>> {
    let (n, m) = (c.n(), c.m());
    let (t, transposed) = if n <= 2 {
        (angles(c), false)
    } else if m <= 2 {
        (angles(c).transpose(), true)
    } else {
        return Err(Error::WrongScenario { n, m });
    };
    let mut out = box_values(&t, transposed);
    if t.n() == 2 {
        out.extend(cycle_values(&t, transposed));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMembership {
    pub member: bool,
    pub violated: Vec<InequalityValue>,
}

pub fn membership_analytic(c: &Correlator, tol: &Tolerances) -> Result<AnalyticMembership> {
    let violated: Vec<InequalityValue> = inequalities(c)?
        .into_iter()
        .filter(|v| v.slack < -tol.tight_abs)
        .collect();
    Ok(AnalyticMembership {
        member: violated.is_empty(),
        violated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpMembership {
    pub member: bool,
    /// Largest minimum eigenvalue over unit-diagonal extensions.
    pub margin: f64,
    pub class: MarginClass,
    pub solver: SolverStats,
}

pub fn membership_sdp(c: &Correlator, tol: &Tolerances) -> Result<SdpMembership> {
    let ms = solve_margin(c, tol)?;
    Ok(SdpMembership {
        member: ms.class != MarginClass::Exterior,
        margin: ms.margin,
        class: ms.class,
        solver: ms.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremalityStatus {
    Extreme,
    NotExtreme,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremalityReason {
    UniqueCompletionRankOk,
    RankConditionFailed,
    NonUniqueStrictComp,
    DegenerateNoStrictComp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityVerdict {
    pub status: ExtremalityStatus,
    pub reason: ExtremalityReason,
    pub evidence: CompletionResult,
    pub strict_complementarity: bool,
    pub null_dim: usize,
}

/// Extremality from the completion problem.
///
/// A unique completion decides the question through the rank condition
/// `rank(X∘X) = r(r+1)/2`. Without a uniqueness certificate, a strictly
/// complementary pair proves the completion is not unique; otherwise the
/// test gives no answer.
pub fn is_extreme(c: &Correlator, tol: &Tolerances) -> Result<ExtremalityVerdict> {
    let r = find_completion(c, tol)?;
    if !r.member {
        return Err(Error::NotAMember { margin: r.margin });
    }
    let rank = r.rank_completion;
    let (status, reason) = if r.unique {
        if r.rank_hadamard == rank * (rank + 1) / 2 {
            (
                ExtremalityStatus::Extreme,
                ExtremalityReason::UniqueCompletionRankOk,
            )
        } else {
            (
                ExtremalityStatus::NotExtreme,
                ExtremalityReason::RankConditionFailed,
            )
        }
    } else if r.strictly_complementary {
        (
            ExtremalityStatus::NotExtreme,
            ExtremalityReason::NonUniqueStrictComp,
        )
    } else {
        (
            ExtremalityStatus::Inconclusive,
            ExtremalityReason::DegenerateNoStrictComp,
        )
    };
    Ok(ExtremalityVerdict {
        status,
        reason,
        strict_complementarity: r.strictly_complementary,
        null_dim: r.null_dim,
        evidence: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticExtremality {
    pub extreme: bool,
    pub tight_cycles: usize,
    pub tight_boxes: usize,
    pub rank: usize,
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

/// Extremality of a 2×2 correlator from its angles alone.
pub fn is_extreme_analytic_2x2(c: &Correlator, tol: &Tolerances) -> Result<AnalyticExtremality> {
    require_2x2(c)?;
    let all = inequalities(c)?;
    if let Some(worst) = all.iter().map(|v| v.slack).reduce(f64::min) {
        if worst < -tol.tight_abs {
            return Err(Error::NotAMember { margin: worst });
        }
    }
    let tight = |want_box: bool| {
        all.iter()
            .filter(|v| matches!(v.inequality, Inequality::Box { .. }) == want_box)
            .filter(|v| v.slack.abs() <= tol.tight_abs)
            .count()
    };
    let tight_cycles = tight(false);
    let tight_boxes = tight(true);
    let rank = c.rank(tol);
    let extreme = match rank {
        1 => c
            .as_dmatrix()
            .iter()
            .all(|v| (v.abs() - 1.0).abs() <= tol.tight_abs),
        2 => tight_cycles == 1 && tight_boxes <= 1,
        _ => false,
    };
    Ok(AnalyticExtremality {
        extreme,
        tight_cycles,
        tight_boxes,
        rank,
    })
}

/// Linear inequality `Σ Λ_xy c_xy ≤ offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub coefficients: Vec<Vec<f64>>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn evaluate(&self, c: &Correlator) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().enumerate().map(move |(y, l)| l * c.get(x, y)))
            .sum()
    }

    pub fn functional(&self) -> DMatrix<f64> {
        let n = self.coefficients.len();
        let m = self.coefficients.first().map_or(0, Vec::len);
        DMatrix::from_fn(n, m, |x, y| self.coefficients[x][y])
    }

    /// Scales so the largest coefficient magnitude is 1 and the first
    /// nonzero coefficient (row-major) is positive. The offset keeps its
    /// sign: the correlator set is symmetric under `C ↦ −C`, so negating the
    /// functional leaves the support value unchanged.
    pub fn normalized(&self) -> Hyperplane {
        let s = self
            .coefficients
            .iter()
            .flatten()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        if s == 0.0 {
            return self.clone();
        }
        let sign = self
            .coefficients
            .iter()
            .flatten()
            .find(|v| v.abs() > 1e-12 * s)
            .map_or(1.0, |v| v.signum());
        Hyperplane {
            coefficients: self
                .coefficients
                .iter()
                .map(|row| row.iter().map(|v| v * sign / s).collect())
                .collect(),
            offset: self.offset / s,
        }
    }

    /// Hyperplane `Λ_xy = −λ_xy`, offset `Σ λ_i` read off a dual solution of
    /// the completion problem.
    pub fn from_certificate(cert: &DualCertificate) -> Hyperplane {
        Hyperplane {
            coefficients: cert
                .lambda_cross
                .iter()
                .map(|row| row.iter().map(|l| -l).collect())
                .collect(),
            offset: cert.lambda_diag.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExposednessStatus {
    Exposed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposednessVerdict {
    pub status: ExposednessStatus,
    pub hyperplane: Option<Hyperplane>,
    pub certificate: DualCertificate,
    /// Solution-space dimension of the all-off-diagonal system.
    pub null_dim: usize,
}

/// Sufficient test for exposedness of an extreme point.
pub fn is_exposed(c: &Correlator, tol: &Tolerances) -> Result<ExposednessVerdict> {
    let v = is_extreme(c, tol)?;
    exposedness_from(&v, tol)
}

/// Same as [`is_exposed`], reusing an extremality verdict already computed
/// for the same point.
pub fn exposedness_from(v: &ExtremalityVerdict, tol: &Tolerances) -> Result<ExposednessVerdict> {
    if v.status != ExtremalityStatus::Extreme {
        return Err(Error::NotExtremeInput);
    }
    let cert = v
        .evidence
        .dual_certificate
        .clone()
        .ok_or_else(|| Error::InvariantViolation("member without dual solution".into()))?;
    let dim = cert.z.dim();
    let nd = dual_nondegenerate(&cert.z, &all_offdiagonal_pattern(dim), tol)?;
    let nonzero = cert.z.max_abs() > 0.0;
    Ok(ExposednessVerdict {
        status: if nd.nondegenerate && nonzero {
            ExposednessStatus::Exposed
        } else {
            ExposednessStatus::Unknown
        },
        hyperplane: nonzero.then(|| Hyperplane::from_certificate(&cert)),
        certificate: cert,
        null_dim: nd.null_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportResult {
    pub value: f64,
    pub argmax: Correlator,
    pub solver: SolverStats,
}

/// `max Σ Λ_xy c_xy` over the quantum correlator set.
pub fn support_value(lambda: &DMatrix<f64>, tol: &Tolerances) -> Result<SupportResult> {
    let (n, m) = lambda.shape();
    if n == 0 || m == 0 {
        return Err(Error::WrongShape {
            expected: "at least 1x1",
            rows: n,
            cols: m,
        });
    }
    if let Some(v) = lambda.iter().find(|v| !v.is_finite()) {
        return Err(Error::OutOfRange {
            what: "functional coefficients must be finite",
            value: *v,
        });
    }
    let dim = n + m;
    let mut obj = SymMatrix::zeros(dim);
    for x in 0..n {
        for y in 0..m {
            obj.set(x, n + y, 0.5 * lambda[(x, y)]);
        }
    }
    let cons = (0..dim).map(|i| (basis_matrix(dim, i, i), 1.0)).collect();
    let p = SdpProblem::new(obj.clone(), cons)?;
    let sol = sdp::solve(&p, tol);
    if !sol.is_optimal() {
        return Err(Error::NumericalFailure(format!(
            "support SDP ended with status {:?}",
            sol.status
        )));
    }
    let polished = polish_support(&obj, &sol.x, tol);
    let value = polished.as_ref().map_or(sol.primal_obj, |x| obj.inner(x));
    let x = polished.unwrap_or_else(|| sol.x.clone());
    let argmax = Correlator::from_dmatrix(DMatrix::from_fn(n, m, |a, b| {
        x.get(a, n + b).clamp(-1.0, 1.0)
    }))?;
    Ok(SupportResult {
        value,
        argmax,
        solver: SolverStats::from_solution(&sol),
    })
}

/// Sharpens the interior-point maximizer of `⟨c, X⟩` over the elliptope.
///
/// Newton's method on the factored optimality conditions
/// `(Diag(y) − c) V = 0`, `‖v_i‖ = 1` with `X = V Vᵀ`, started from the
/// Gram factor of `x`. The result is returned only when it converges close
/// to `x` and `Diag(y) − c ⪰ 0` certifies it as a global maximizer.
fn polish_support(c: &SymMatrix, x: &SymMatrix, tol: &Tolerances) -> Option<SymMatrix> {
    let dim = x.dim();
    let cm = c.as_dmatrix();
    let factor = gram_factor(x, tol).ok()?;
    let r = factor.first()?.len();
    if r == 0 {
        return None;
    }
    let mut v = DMatrix::from_fn(dim, r, |i, k| factor[i][k]);
    let cv = cm * &v;
    let mut y = DVector::from_fn(dim, |i, _| {
        cv.row(i).dot(&v.row(i)) / v.row(i).norm_squared().max(f64::MIN_POSITIVE)
    });
    let unknowns = dim * r + dim;
    let residual = |v: &DMatrix<f64>, y: &DVector<f64>| {
        let s = DMatrix::from_diagonal(y) - cm;
        let sv = s * v;
        let mut f = DVector::zeros(unknowns);
        for k in 0..r {
            for i in 0..dim {
                f[k * dim + i] = sv[(i, k)];
            }
        }
        for i in 0..dim {
            f[dim * r + i] = v.row(i).norm_squared() - 1.0;
        }
        f
    };
    let mut converged = false;
    for _ in 0..30 {
        let f = residual(&v, &y);
        if f.amax() <= 1e-14 {
            converged = true;
            break;
        }
        let mut j = DMatrix::zeros(unknowns, unknowns);
        for k in 0..r {
            for i in 0..dim {
                let row = k * dim + i;
                for jj in 0..dim {
                    let d = if i == jj { y[i] } else { 0.0 };
                    j[(row, k * dim + jj)] = d - cm[(i, jj)];
                }
                j[(row, dim * r + i)] = v[(i, k)];
            }
        }
        for i in 0..dim {
            for k in 0..r {
                j[(dim * r + i, k * dim + i)] = 2.0 * v[(i, k)];
            }
        }
        let svd = j.svd(true, true);
        let cut = 1e-12 * svd.singular_values.max();
        let step = svd.solve(&(-f), cut).ok()?;
        for k in 0..r {
            for i in 0..dim {
                v[(i, k)] += step[k * dim + i];
            }
        }
        for i in 0..dim {
            y[i] += step[dim * r + i];
        }
    }
    if !converged {
        return None;
    }
    let polished = SymMatrix::from_fn(
        dim,
        |i, j| {
            if i == j {
                1.0
            } else {
                v.row(i).dot(&v.row(j))
            }
        },
    );
    if polished.sub(x).max_abs() > 1e-3 {
        return None;
    }
    let slack = SymMatrix::from_dmatrix(&(DMatrix::from_diagonal(&y) - cm)).ok()?;
    let scale = slack.max_abs().max(1.0);
    (slack.min_eigenvalue().ok()? >= -1e-12 * scale).then_some(polished)
}

/// Deterministic strategy `c_xy = a_x b_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyWeight {
    pub a: Vec<i8>,
    pub b: Vec<i8>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityVerdict {
    pub local: bool,
    /// L1 distance from `c` to the local polytope.
    pub distance: f64,
    pub weights: Option<Vec<StrategyWeight>>,
}

/// The `2^{n+m−1}` deterministic correlators, with `a_0 = +1`.
pub fn deterministic_strategies(n: usize, m: usize) -> Vec<(Vec<i8>, Vec<i8>)> {
    let free = n + m - 1;
    (0..1usize << free)
        .map(|bits| {
            let sign = |k: usize| if bits >> k & 1 == 1 { -1 } else { 1 };
            let a = std::iter::once(1).chain((0..n - 1).map(sign)).collect();
            let b = (0..m).map(|y| sign(n - 1 + y)).collect();
            (a, b)
        })
        .collect()
}

/// Membership in the local (cut) polytope by linear programming.
pub fn is_local(c: &Correlator, _tol: &Tolerances) -> Result<LocalityVerdict> {
    let (n, m) = (c.n(), c.m());
    if n + m > MAX_LOCAL_PARTIES {
        return Err(Error::TooLarge(format!(
            "locality enumeration needs n + m <= {MAX_LOCAL_PARTIES}, got {}",
            n + m
        )));
    }
    let strategies = deterministic_strategies(n, m);
    let k = strategies.len();
    let nm = n * m;
    // Columns: strategy weights, then slack pairs s⁺, s⁻ per entry.
    let cols = k + 2 * nm;
    let mut a = DMatrix::zeros(nm + 1, cols);
    for (col, (sa, sb)) in strategies.iter().enumerate() {
        for x in 0..n {
            for y in 0..m {
                a[(x * m + y, col)] = f64::from(sa[x] * sb[y]);
            }
        }
        a[(nm, col)] = 1.0;
    }
    for e in 0..nm {
        a[(e, k + e)] = 1.0;
        a[(e, k + nm + e)] = -1.0;
    }
    let mut b = DVector::zeros(nm + 1);
    for x in 0..n {
        for y in 0..m {
            b[x * m + y] = c.get(x, y);
        }
    }
    b[nm] = 1.0;
    let cost = DVector::from_fn(cols, |j, _| if j >= k { 1.0 } else { 0.0 });
    let sol = solve_lp(&LpProblem { a, b, c: cost });
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(
            "locality linear program did not converge".into(),
        ));
    }
    let distance = sol.objective.max(0.0);
    let local = distance <= LOCALITY_TOL;
    let weights = local.then(|| {
        let mut w: Vec<StrategyWeight> = strategies
            .into_iter()
            .zip(sol.x.iter())
            .filter(|(_, w)| **w > 1e-9)
            .map(|((a, b), w)| StrategyWeight { a, b, weight: *w })
            .collect();
        w.sort_by(|p, q| q.weight.total_cmp(&p.weight));
        w
    });
    Ok(LocalityVerdict {
        local,
        distance,
        weights,
    })
}

/// For rank-2 points of the 2×2 scenario, extremality and self-testing of
/// the singlet coincide.
pub fn self_tests_singlet_2x2(c: &Correlator, tol: &Tolerances) -> Result<bool> {
    require_2x2(c)?;
    if c.rank(tol) != 2 {
        return Ok(false);
    }
    Ok(is_extreme(c, tol)?.status == ExtremalityStatus::Extreme)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    /// Duality data of `(x, z)` for the completion problem.
    pub pair: PairReport,
    /// `z` vanishes inside both diagonal blocks.
    pub pattern_ok: bool,
    /// Uniqueness system (free positions inside the diagonal blocks).
    pub uniqueness: NondegeneracyReport,
    /// Exposedness system (all off-diagonal positions free).
    pub exposedness: NondegeneracyReport,
    pub hyperplane: Hyperplane,
}

/// Checks a user-supplied completion `x` and dual matrix `z` for `c`.
pub fn verify_certificate(
    c: &Correlator,
    x: &SymMatrix,
    z: &SymMatrix,
    tol: &Tolerances,
) -> Result<CertificateCheck> {
    let (n, m) = (c.n(), c.m());
    if z.dim() != n + m {
        return Err(Error::DimensionMismatch {
            expected: n + m,
            found: z.dim(),
        });
    }
    let scale = z.max_abs().max(1.0);
    let pattern_ok = block_diagonal_pattern(n, m)
        .iter()
        .all(|&(i, j)| z.get(i, j).abs() <= 1e-12 * scale);
    let cert = DualCertificate::from_slack(n, z);
    let p = build_completion_sdp(c);
    let pair = check_pair(&p, x, &cert.y(), z, tol)?;
    Ok(CertificateCheck {
        pair,
        pattern_ok,
        uniqueness: dual_nondegenerate(z, &block_diagonal_pattern(n, m), tol)?,
        exposedness: dual_nondegenerate(z, &all_offdiagonal_pattern(n + m), tol)?,
        hyperplane: Hyperplane::from_certificate(&cert),
    })
}
