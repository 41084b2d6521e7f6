//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and a Mehrotra predictor-corrector.
//!
//! Internally the problem is held in minimization form
//! `min ⟨C̃, X⟩ s.t. A(X) = b, X ⪰ 0` with `C̃ = −C / c_scale` and every
//! constraint row normalized to unit Frobenius norm. The embedding adds the
//! scalars `τ, κ ≥ 0`:
//!
//! ```text
//! A(X) − bτ = 0,   Aᵀy + Z − C̃τ = 0,   bᵀy − ⟨C̃, X⟩ − κ = 0
//! ```
//!
//! and is always strictly feasible from `X = Z = I, τ = κ = 1`, so the
//! iterates follow a central path whose limit is maximally complementary.

use nalgebra::{DMatrix, DVector};

use super::{dual_residual, primal_residual, SdpProblem, SdpSolution, SdpStatus, FEASIBILITY_TOL};
use crate::linalg::{SymMatrix, Tolerances};

pub const ITERATION_CAP: usize = 200;
pub const STEP_FRACTION: f64 = 0.98;

#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub max_iter: usize,
    pub step_fraction: f64,
    /// Residual target (original units) for early termination.
    pub feas_tol: f64,
    /// Relative accuracy required of infeasibility certificates.
    pub infeas_tol: f64,
    /// Initial iterate is `X = Z = start_scale · I`.
    pub start_scale: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iter: ITERATION_CAP,
            step_fraction: STEP_FRACTION,
            feas_tol: 1e-10,
            infeas_tol: 1e-8,
            start_scale: 1.0,
        }
    }
}

struct Scaled {
    n: usize,
    a: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    ct: DMatrix<f64>,
    row_norm: Vec<f64>,
    c_scale: f64,
}

impl Scaled {
    fn new(p: &SdpProblem) -> Self {
        let mut a = Vec::with_capacity(p.constraints.len());
        let mut b = Vec::with_capacity(p.constraints.len());
        let mut row_norm = Vec::with_capacity(p.constraints.len());
        for (ai, bi) in &p.constraints {
            let nrm = ai.frobenius();
            let s = if nrm > 0.0 { nrm } else { 1.0 };
            a.push(ai.as_dmatrix() / s);
            b.push(bi / s);
            row_norm.push(s);
        }
        let c_scale = p.objective.frobenius().max(1.0);
        Self {
            n: p.dim,
            a,
            b: DVector::from_vec(b),
            ct: p.objective.as_dmatrix() * (-1.0 / c_scale),
            row_norm,
            c_scale,
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|ai| ai.dot(x)))
    }

    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (ai, yi) in self.a.iter().zip(y.iter()) {
            out += ai * *yi;
        }
        out
    }
}

#[derive(Clone)]
struct Iterate {
    x: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: DMatrix<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dtau: f64,
    dkappa: f64,
}

/// Nesterov-Todd scaling `G` with `Gᵀ Z G = G⁻¹ X G⁻ᵀ = diag(λ)`.
struct NtScaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root and its inverse of a positive definite matrix.
fn sqrt_pair(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let e = m.clone().try_symmetric_eigen(1e-15, 10_000)?;
    let lmax = e.eigenvalues.amax();
    let floor = (lmax * 1e-300).max(f64::MIN_POSITIVE);
    let s = e.eigenvalues.map(|l| l.max(floor).sqrt());
    let v = &e.eigenvectors;
    let half = v * DMatrix::from_diagonal(&s) * v.transpose();
    let half_inv = v * DMatrix::from_diagonal(&s.map(|x| 1.0 / x)) * v.transpose();
    Some((half, half_inv))
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<NtScaling> {
    let (xh, xh_inv) = sqrt_pair(x)?;
    let (zh, _) = sqrt_pair(z)?;
    let svd = (&zh * &xh).try_svd(true, true, 1e-15, 10_000)?;
    let v = svd.v_t.as_ref()?.transpose();
    let lambda = svd.singular_values.clone();
    if lambda
        .iter()
        .any(|l| l.is_nan() || *l <= 0.0 || l.is_infinite())
    {
        return None;
    }
    let sq = lambda.map(f64::sqrt);
    let g = &xh * &v * DMatrix::from_diagonal(&sq.map(|s| 1.0 / s));
    let g_inv = DMatrix::from_diagonal(&sq) * v.transpose() * &xh_inv;
    let w = &g * g.transpose();
    Some(NtScaling {
        g,
        g_inv,
        w,
        lambda,
    })
}

/// Solver for the (possibly singular) Schur complement: diagonally scaled
/// Cholesky when it succeeds, eigen pseudo-inverse otherwise.
struct SchurSolver {
    m: DMatrix<f64>,
    kind: SchurKind,
}

enum SchurKind {
    Cholesky {
        scale: DVector<f64>,
        factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
    Pinv {
        vectors: DMatrix<f64>,
        inv_values: DVector<f64>,
    },
}

impl SchurSolver {
    fn new(m: &DMatrix<f64>) -> Option<Self> {
        let m = sym(m);
        let diag = m.diagonal();
        if diag.iter().all(|d| *d > 0.0 && d.is_finite()) {
            let scale = diag.map(|d| 1.0 / d.sqrt());
            let ms = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| scale[i] * m[(i, j)] * scale[j]);
            if let Some(factor) = ms.cholesky() {
                let l = factor.l_dirty();
                let dmin = l
                    .diagonal()
                    .iter()
                    .fold(f64::INFINITY, |a, v| a.min(v.abs()));
                if dmin > 1e-7 {
                    return Some(Self {
                        m,
                        kind: SchurKind::Cholesky { scale, factor },
                    });
                }
            }
        }
        let e = m.clone().try_symmetric_eigen(1e-15, 10_000)?;
        let lmax = e.eigenvalues.amax();
        let cutoff = 1e-14 * lmax * (m.nrows() as f64).max(1.0);
        let inv_values = e
            .eigenvalues
            .map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
        Some(Self {
            m,
            kind: SchurKind::Pinv {
                vectors: e.eigenvectors,
                inv_values,
            },
        })
    }

    fn apply_inv(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            SchurKind::Cholesky { scale, factor } => {
                factor.solve(&rhs.component_mul(scale)).component_mul(scale)
            }
            SchurKind::Pinv {
                vectors,
                inv_values,
            } => {
                let t = vectors.transpose() * rhs;
                vectors * t.component_mul(inv_values)
            }
        }
    }

    /// Solve with two steps of iterative refinement.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.apply_inv(rhs);
        for _ in 0..2 {
            let r = rhs - &self.m * &x;
            x += self.apply_inv(&r);
        }
        x
    }
}

/// Largest `α` keeping `diag(λ) + α D ⪰ 0`.
fn max_step_scaled(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let s = lambda.map(|l| 1.0 / l.sqrt());
    let m = DMatrix::from_fn(n, n, |i, j| s[i] * d[(i, j)] * s[j]);
    let lmin = match sym(&m).try_symmetric_eigen(1e-15, 10_000) {
        Some(e) => e.eigenvalues.min(),
        None => return 0.0,
    };
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_scalar(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

struct Workspace<'a> {
    s: &'a Scaled,
    it: &'a Iterate,
    nt: NtScaling,
    schur: SchurSolver,
    /// `W A_j W`
    waw: Vec<DMatrix<f64>>,
    dy2: DVector<f64>,
    dx2: DMatrix<f64>,
    den: f64,
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    rg: f64,
}

impl<'a> Workspace<'a> {
    fn new(s: &'a Scaled, it: &'a Iterate) -> Option<Self> {
        let nt = nt_scaling(&it.x, &it.z)?;
        let l = s.a.len();
        let waw: Vec<DMatrix<f64>> = s.a.iter().map(|a| &nt.w * a * &nt.w).collect();
        let mut m = DMatrix::zeros(l, l);
        for i in 0..l {
            for j in i..l {
                let v = s.a[i].dot(&waw[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let schur = SchurSolver::new(&m)?;
        let wcw = &nt.w * &s.ct * &nt.w;
        let rhs2 = &s.b + s.apply(&wcw);
        let dy2 = schur.solve(&rhs2);
        let dx2 = sym(&(&nt.w * (s.adjoint(&dy2) - &s.ct) * &nt.w));
        let den = s.b.dot(&dy2) - s.ct.dot(&dx2) + it.kappa / it.tau;

        let rp = s.apply(&it.x) - &s.b * it.tau;
        let rd = s.adjoint(&it.y) + &it.z - &s.ct * it.tau;
        let rg = s.b.dot(&it.y) - s.ct.dot(&it.x) - it.kappa;
        Some(Self {
            s,
            it,
            nt,
            schur,
            waw,
            dy2,
            dx2,
            den,
            rp,
            rd,
            rg,
        })
    }

    /// Solves the linearized embedding with residual weight `eta`, scaled
    /// complementarity target `rc_tilde` and scalar target `r_tau`.
    fn direction(&self, eta: f64, rc_tilde: &DMatrix<f64>, r_tau: f64) -> Direction {
        let s = self.s;
        let it = self.it;
        let lam = &self.nt.lambda;
        let n = lam.len();
        let d = DMatrix::from_fn(n, n, |i, j| 2.0 * rc_tilde[(i, j)] / (lam[i] + lam[j]));
        let rc = sym(&(&self.nt.g * d * self.nt.g.transpose()));

        let wrdw = &self.nt.w * &self.rd * &self.nt.w;
        let rhs1 = -(&self.rp * eta) - s.apply(&(&rc + &wrdw * eta));
        let dy1 = self.schur.solve(&rhs1);
        let mut dx1 = &rc + &wrdw * eta;
        for (w, v) in self.waw.iter().zip(dy1.iter()) {
            dx1 += w * *v;
        }
        let dx1 = sym(&dx1);

        let num = -eta * self.rg - s.b.dot(&dy1) + s.ct.dot(&dx1) + r_tau / it.tau;
        let dtau = num / self.den;
        let dy = dy1 + &self.dy2 * dtau;
        let dx = dx1 + &self.dx2 * dtau;
        let dz = sym(&(-(&self.rd * eta) - s.adjoint(&dy) + &s.ct * dtau));
        let dkappa = (r_tau - it.kappa * dtau) / it.tau;
        Direction {
            dx,
            dy,
            dz,
            dtau,
            dkappa,
        }
    }

    fn scaled_pair(&self, dir: &Direction) -> (DMatrix<f64>, DMatrix<f64>) {
        let g = &self.nt.g;
        let gi = &self.nt.g_inv;
        (
            sym(&(gi * &dir.dx * gi.transpose())),
            sym(&(g.transpose() * &dir.dz * g)),
        )
    }

    fn max_step(&self, dir: &Direction) -> f64 {
        let (dxt, dzt) = self.scaled_pair(dir);
        max_step_scaled(&self.nt.lambda, &dxt)
            .min(max_step_scaled(&self.nt.lambda, &dzt))
            .min(max_step_scalar(self.it.tau, dir.dtau))
            .min(max_step_scalar(self.it.kappa, dir.dkappa))
    }
}

struct Metrics {
    pres: f64,
    dres: f64,
    pobj: f64,
    dobj: f64,
    gap: f64,
}

fn metrics(s: &Scaled, it: &Iterate) -> Metrics {
    let tau = it.tau;
    let rp = s.apply(&it.x) / tau - &s.b;
    let pres = rp
        .iter()
        .zip(&s.row_norm)
        .map(|(r, w)| (r * w).abs())
        .fold(0.0, f64::max);
    let rd = (s.adjoint(&it.y) + &it.z) / tau - &s.ct;
    let dres = rd.amax() * s.c_scale;
    let pobj = -s.ct.dot(&it.x) / tau * s.c_scale;
    let dobj = -s.b.dot(&it.y) / tau * s.c_scale;
    let gap = it.x.dot(&it.z) / (tau * tau) * s.c_scale;
    Metrics {
        pres,
        dres,
        pobj,
        dobj,
        gap,
    }
}

impl Metrics {
    fn gap_ok(&self, tol: &Tolerances) -> bool {
        let bound = tol.sdp_gap * (1.0 + self.pobj.abs());
        self.gap.abs() <= bound && (self.pobj - self.dobj).abs() <= bound
    }

    fn converged(&self, tol: &Tolerances, feas: f64) -> bool {
        self.pres <= feas && self.dres <= feas && self.gap_ok(tol)
    }
}

pub(super) fn solve(p: &SdpProblem, tol: &Tolerances, settings: &IpmSettings) -> SdpSolution {
    let s = Scaled::new(p);
    let n = s.n;
    let mut it = Iterate {
        x: DMatrix::identity(n, n) * settings.start_scale,
        y: DVector::zeros(s.a.len()),
        z: DMatrix::identity(n, n) * settings.start_scale,
        tau: 1.0,
        kappa: 1.0,
    };
    let mut iterations = 0;
    let mut status = SdpStatus::NumericalFailure;
    let mut best: Option<(Iterate, f64, usize)> = None;

    loop {
        let m = metrics(&s, &it);
        if m.converged(tol, FEASIBILITY_TOL) {
            let score = m.pres.max(m.dres);
            if best.as_ref().is_none_or(|(_, b, _)| score < *b) {
                best = Some((it.clone(), score, iterations));
            }
        }
        if m.converged(tol, settings.feas_tol) {
            status = SdpStatus::Optimal;
            break;
        }
        if let Some(st) = infeasibility(&s, &it, settings.infeas_tol) {
            status = st;
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        let Some(ws) = Workspace::new(&s, &it) else {
            break;
        };
        let mu = (it.x.dot(&it.z) + it.tau * it.kappa) / (n as f64 + 1.0);
        let lam2 = DMatrix::from_diagonal(&ws.nt.lambda.map(|l| l * l));

        let affine = ws.direction(1.0, &(-&lam2), -it.tau * it.kappa);
        let alpha_aff = ws.max_step(&affine).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        let (dxt, dzt) = ws.scaled_pair(&affine);
        let rc_tilde = DMatrix::identity(n, n) * (sigma * mu) - &lam2 - sym(&(&dxt * &dzt));
        let r_tau = sigma * mu - it.tau * it.kappa - affine.dtau * affine.dkappa;
        let dir = ws.direction(1.0 - sigma, &rc_tilde, r_tau);
        let alpha = (settings.step_fraction * ws.max_step(&dir)).min(1.0);
        if !(alpha.is_finite() && alpha > 1e-14) {
            break;
        }
        drop(ws);

        let mut next = it.clone();
        next.x = sym(&(&it.x + &dir.dx * alpha));
        next.y = &it.y + &dir.dy * alpha;
        next.z = sym(&(&it.z + &dir.dz * alpha));
        next.tau = it.tau + alpha * dir.dtau;
        next.kappa = it.kappa + alpha * dir.dkappa;
        if !(next.x.iter().all(|v| v.is_finite()) && next.z.iter().all(|v| v.is_finite())) {
            break;
        }
        it = next;
        iterations += 1;
    }

    if status == SdpStatus::NumericalFailure {
        // Stalled or capped: fall back to the most feasible iterate that
        // met the published bounds.
        if let Some((b, _, k)) = best {
            it = b;
            iterations = k;
            status = SdpStatus::Optimal;
        }
    }
    finish(p, &s, &it, status, iterations)
}

fn infeasibility(s: &Scaled, it: &Iterate, eps: f64) -> Option<SdpStatus> {
    if it.tau >= it.kappa {
        return None;
    }
    let by = s.b.dot(&it.y);
    if by > 0.0 {
        let ray = (s.adjoint(&it.y) + &it.z).amax();
        if ray <= eps * by {
            return Some(SdpStatus::PrimalInfeasible);
        }
    }
    let cx = -s.ct.dot(&it.x);
    if cx > 0.0 {
        let ray = s.apply(&it.x).amax();
        if ray <= eps * cx {
            return Some(SdpStatus::DualInfeasible);
        }
    }
    None
}

fn to_sym(m: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_dmatrix(m).expect("square iterate")
}

fn finish(
    p: &SdpProblem,
    s: &Scaled,
    it: &Iterate,
    status: SdpStatus,
    iterations: usize,
) -> SdpSolution {
    let rows = &s.row_norm;
    match status {
        SdpStatus::PrimalInfeasible => {
            // Farkas ray in the published sign convention, scaled to bᵀy = −1.
            let by = s.b.dot(&it.y);
            let y: Vec<f64> = it.y.iter().zip(rows).map(|(v, w)| -v / (w * by)).collect();
            let z = p.adjoint(&y);
            SdpSolution {
                x: to_sym(&it.x),
                z,
                y,
                status,
                primal_obj: f64::NAN,
                dual_obj: -1.0,
                gap: f64::NAN,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                iterations,
            }
        }
        SdpStatus::DualInfeasible => {
            let cx = -s.ct.dot(&it.x);
            let x = to_sym(&(&it.x / cx));
            SdpSolution {
                primal_obj: p.objective.inner(&x),
                x,
                y: vec![0.0; rows.len()],
                z: SymMatrix::zeros(s.n),
                status,
                dual_obj: f64::NAN,
                gap: f64::NAN,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                iterations,
            }
        }
        _ => {
            let tau = it.tau;
            let x = to_sym(&(&it.x / tau));
            let z = to_sym(&(&it.z * (s.c_scale / tau)));
            let y: Vec<f64> =
                it.y.iter()
                    .zip(rows)
                    .map(|(v, w)| -v * s.c_scale / (tau * w))
                    .collect();
            let primal_obj = p.objective.inner(&x);
            let dual_obj = p.rhs().iter().zip(&y).map(|(b, v)| b * v).sum();
            SdpSolution {
                gap: x.inner(&z),
                primal_residual: primal_residual(p, &x),
                dual_residual: dual_residual(p, &y, &z),
                x,
                y,
                z,
                status,
                primal_obj,
                dual_obj,
                iterations,
            }
        }
    }
}
