//! Behaviors, quantum realizations, named instances and the random
//! extremal generator.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completion::Correlator;
use crate::error::{Error, Result};
use crate::linalg::{Complex64, HermMatrix, Tolerances};

/// Normalization tolerance of probability tables and states.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Largest marginal discrepancy accepted as no-signaling.
pub const SIGNALING_TOL: f64 = 1e-8;
/// Observables may exceed the unit spectral radius by this much.
pub const SPECTRUM_SLACK: f64 = 1e-9;

fn outcome_index(v: i8) -> usize {
    usize::from(v < 0)
}

/// Two-outcome behavior `p(a, b | x, y)`, outcomes `a, b ∈ {+1, −1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    n: usize,
    m: usize,
    /// Indexed `[x][y][a][b]`, row-major, with `+1 ↦ 0` and `−1 ↦ 1`.
    p: Vec<f64>,
}

impl Behavior {
    /// Checks nonnegativity and normalization of every `(x, y)` block.
    /// No-signaling is checked by [`behavior_to_correlator`].
    pub fn new(n: usize, m: usize, p: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::WrongShape {
                expected: "at least one input per party",
                rows: n,
                cols: m,
            });
        }
        if p.len() != 4 * n * m {
            return Err(Error::DimensionMismatch {
                expected: 4 * n * m,
                found: p.len(),
            });
        }
        if let Some(v) = p
            .iter()
            .find(|v| !(v.is_finite() && **v >= -NORMALIZATION_TOL))
        {
            return Err(Error::OutOfRange {
                what: "probabilities must be nonnegative",
                value: *v,
            });
        }
        for block in p.chunks(4) {
            let s: f64 = block.iter().sum();
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::OutOfRange {
                    what: "probabilities of each setting pair must sum to 1",
                    value: s,
                });
            }
        }
        Ok(Self { n, m, p })
    }

    pub fn from_fn(n: usize, m: usize, f: impl Fn(i8, i8, usize, usize) -> f64) -> Result<Self> {
        let mut p = Vec::with_capacity(4 * n * m);
        for x in 0..n {
            for y in 0..m {
                for a in [1, -1] {
                    for b in [1, -1] {
                        p.push(f(a, b, x, y));
                    }
                }
            }
        }
        Self::new(n, m, p)
    }

    /// Inverse of the correlator map: `p = (1 + a·c_x + b·c_y + ab·c_xy)/4`.
    pub fn from_correlators(c_a: &[f64], c_b: &[f64], c: &Correlator) -> Result<Self> {
        if c_a.len() != c.n() {
            return Err(Error::DimensionMismatch {
                expected: c.n(),
                found: c_a.len(),
            });
        }
        if c_b.len() != c.m() {
            return Err(Error::DimensionMismatch {
                expected: c.m(),
                found: c_b.len(),
            });
        }
        Self::from_fn(c.n(), c.m(), |a, b, x, y| {
            let (a, b) = (f64::from(a), f64::from(b));
            (1.0 + a * c_a[x] + b * c_b[y] + a * b * c.get(x, y)) / 4.0
        })
    }

    /// Born-rule behavior of a realization with projectors `(I ± A)/2`.
    pub fn from_realization(r: &Realization) -> Result<Self> {
        let proj = |o: &HermMatrix, s: i8| {
            HermMatrix::identity(o.dim())
                .add(&o.scale(f64::from(s)))
                .scale(0.5)
        };
        Self::from_fn(
            r.observables_a.len(),
            r.observables_b.len(),
            |a, b, x, y| {
                let op = proj(&r.observables_a[x], a).kron(&proj(&r.observables_b[y], b));
                r.state.trace_product(&op).re
            },
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, a: i8, b: i8, x: usize, y: usize) -> f64 {
        self.p[((x * self.m + y) * 2 + outcome_index(a)) * 2 + outcome_index(b)]
    }

    fn marginal_a(&self, a: i8, x: usize, y: usize) -> f64 {
        self.get(a, 1, x, y) + self.get(a, -1, x, y)
    }

    fn marginal_b(&self, b: i8, x: usize, y: usize) -> f64 {
        self.get(1, b, x, y) + self.get(-1, b, x, y)
    }

    /// Largest change of a one-party marginal across the other party's
    /// settings.
    pub fn signaling_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for x in 0..self.n {
            for y in 0..self.m {
                for s in [1, -1] {
                    dev = dev.max((self.marginal_a(s, x, y) - self.marginal_a(s, x, 0)).abs());
                    dev = dev.max((self.marginal_b(s, x, y) - self.marginal_b(s, 0, y)).abs());
                }
            }
        }
        dev
    }
}

/// Marginal expectations and the correlator of a behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorTriple {
    pub c_a: Vec<f64>,
    pub c_b: Vec<f64>,
    pub c: Correlator,
}

pub fn behavior_to_correlator(b: &Behavior) -> Result<CorrelatorTriple> {
    let deviation = b.signaling_deviation();
    if deviation > SIGNALING_TOL {
        return Err(Error::SignalingInput { deviation });
    }
    let c_a = (0..b.n)
        .map(|x| b.marginal_a(1, x, 0) - b.marginal_a(-1, x, 0))
        .collect();
    let c_b = (0..b.m)
        .map(|y| b.marginal_b(1, 0, y) - b.marginal_b(-1, 0, y))
        .collect();
    let c = Correlator::from_dmatrix(DMatrix::from_fn(b.n, b.m, |x, y| {
        [(1, 1), (1, -1), (-1, 1), (-1, -1)]
            .iter()
            .map(|&(s, t)| f64::from(s * t) * b.get(s, t, x, y))
            .sum()
    }))?;
    Ok(CorrelatorTriple { c_a, c_b, c })
}

/// Shared state and local observables.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    dim_a: usize,
    dim_b: usize,
    state: HermMatrix,
    observables_a: Vec<HermMatrix>,
    observables_b: Vec<HermMatrix>,
}

impl Realization {
    pub fn new(
        dim_a: usize,
        dim_b: usize,
        state: HermMatrix,
        observables_a: Vec<HermMatrix>,
        observables_b: Vec<HermMatrix>,
    ) -> Result<Self> {
        if state.dim() != dim_a * dim_b {
            return Err(Error::DimensionMismatch {
                expected: dim_a * dim_b,
                found: state.dim(),
            });
        }
        if observables_a.is_empty() || observables_b.is_empty() {
            return Err(Error::InvalidInput("each party needs an observable".into()));
        }
        let tr = state.trace();
        if (tr.re - 1.0).abs() > NORMALIZATION_TOL || tr.im.abs() > NORMALIZATION_TOL {
            return Err(Error::InvariantViolation(format!("state has trace {tr}")));
        }
        let spec = state.eigenvalues()?;
        if spec[0] < -NORMALIZATION_TOL {
            return Err(Error::InvariantViolation(format!(
                "state has negative eigenvalue {:e}",
                spec[0]
            )));
        }
        for (o, d) in observables_a
            .iter()
            .map(|o| (o, dim_a))
            .chain(observables_b.iter().map(|o| (o, dim_b)))
        {
            if o.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: o.dim(),
                });
            }
            let s = o.eigenvalues()?;
            if s[0] < -1.0 - SPECTRUM_SLACK || s[s.len() - 1] > 1.0 + SPECTRUM_SLACK {
                return Err(Error::InvariantViolation(
                    "observable spectrum leaves [-1, 1]".into(),
                ));
            }
        }
        Ok(Self {
            dim_a,
            dim_b,
            state,
            observables_a,
            observables_b,
        })
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn state(&self) -> &HermMatrix {
        &self.state
    }

    pub fn observables_a(&self) -> &[HermMatrix] {
        &self.observables_a
    }

    pub fn observables_b(&self) -> &[HermMatrix] {
        &self.observables_b
    }

    /// Negates every observable of the second party.
    pub fn relabel_b(&self) -> Self {
        Self {
            observables_b: self.observables_b.iter().map(|o| o.scale(-1.0)).collect(),
            ..self.clone()
        }
    }
}

/// `c_xy = tr(ρ A_x ⊗ B_y)`
pub fn realization_to_correlator(r: &Realization) -> Result<Correlator> {
    let (n, m) = (r.observables_a.len(), r.observables_b.len());
    let mut c = DMatrix::zeros(n, m);
    for x in 0..n {
        for y in 0..m {
            let v = r
                .state
                .trace_product(&r.observables_a[x].kron(&r.observables_b[y]));
            if v.im.abs() > NORMALIZATION_TOL {
                return Err(Error::InvariantViolation(format!(
                    "expectation value has imaginary part {:e}",
                    v.im
                )));
            }
            c[(x, y)] = v.re;
        }
    }
    Correlator::from_dmatrix(c)
}

/// Qubit building blocks.
pub mod qubit {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn herm(entries: [Complex64; 4]) -> HermMatrix {
        HermMatrix::from_dmatrix(DMatrix::from_row_slice(2, 2, &entries))
            .expect("Pauli matrices are Hermitian")
    }

    pub fn pauli_x() -> HermMatrix {
        herm([c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
    }

    pub fn pauli_y() -> HermMatrix {
        herm([c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
    }

    pub fn pauli_z() -> HermMatrix {
        herm([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
    }

    /// `n·σ` for the unit vector along `dir`; spectrum exactly `{±1}`.
    pub fn bloch_observable(dir: [f64; 3]) -> Result<HermMatrix> {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput(
                "Bloch direction must be nonzero".into(),
            ));
        }
        let [x, y, z] = dir.map(|v| v / norm);
        Ok(herm([c(z, 0.0), c(x, -y), c(x, y), c(-z, 0.0)]))
    }

    /// Observable in the x-z plane at angle `phi` from the z axis.
    pub fn xz_observable(phi: f64) -> HermMatrix {
        bloch_observable([phi.sin(), 0.0, phi.cos()]).expect("unit direction")
    }

    /// `ψψ†` for `ψ` normalized.
    pub fn pure_state(psi: &[Complex64]) -> Result<HermMatrix> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput("state vector must be nonzero".into()));
        }
        Ok(HermMatrix::projector(&(v / Complex64::new(norm, 0.0))))
    }

    /// `(|01⟩ − |10⟩)/√2`
    pub fn singlet() -> HermMatrix {
        let s = FRAC_1_SQRT_2;
        pure_state(&[c(0.0, 0.0), c(s, 0.0), c(-s, 0.0), c(0.0, 0.0)]).expect("nonzero")
    }

    /// `|00⟩`
    pub fn product_zero() -> HermMatrix {
        pure_state(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).expect("nonzero")
    }

    pub fn maximally_mixed() -> HermMatrix {
        HermMatrix::identity(4).scale(0.25)
    }
}

/// Accepts three angles when `φ = θ₁+θ₂+θ₃` lies in `(0, π)` or `(2π, 3π)`
/// with a `tight_abs` margin from the endpoints, returning
/// `[[cos θ₁, cos θ₂], [cos θ₃, cos φ]]`.
pub fn accept_angles(t1: f64, t2: f64, t3: f64, tight_abs: f64) -> Option<Correlator> {
    let phi = t1 + t2 + t3;
    let ok = phi < PI - tight_abs || (2.0 * PI + tight_abs < phi && phi < 3.0 * PI - tight_abs);
    ok.then(|| {
        Correlator::new(2, 2, &[t1.cos(), t2.cos(), t3.cos(), phi.cos()])
            .expect("cosines lie in [-1, 1]")
    })
}

/// Rejection sampler of rank-2 extreme points of the 2×2 correlator set.
///
/// Angles are drawn uniformly from the open interval `(0, π)` using ChaCha8
/// seeded through `seed_from_u64`; each draw consumes three `f64`s in order.
#[derive(Debug, Clone)]
pub struct Extremal2x2Sampler {
    rng: ChaCha8Rng,
    tight_abs: f64,
    draws: u64,
}

impl Extremal2x2Sampler {
    pub fn new(seed: u64) -> Self {
        Self::with_tolerance(seed, Tolerances::default().tight_abs)
    }

    pub fn with_tolerance(seed: u64, tight_abs: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            tight_abs,
            draws: 0,
        }
    }

    /// Angle triples drawn so far, accepted or not.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn sample(&mut self) -> Correlator {
        loop {
            let mut angle = || PI * self.rng.sample::<f64, _>(Open01);
            let (t1, t2, t3) = (angle(), angle(), angle());
            self.draws += 1;
            if let Some(c) = accept_angles(t1, t2, t3, self.tight_abs) {
                return c;
            }
        }
    }
}

impl Iterator for Extremal2x2Sampler {
    type Item = Correlator;

    fn next(&mut self) -> Option<Correlator> {
        Some(self.sample())
    }
}

/// First sample of the generator seeded with `seed`.
pub fn random_extremal_2x2(seed: u64) -> Correlator {
    Extremal2x2Sampler::new(seed).sample()
}

/// Deterministic correlator `a bᵀ`.
pub fn deterministic(a: &[i8], b: &[i8]) -> Result<Correlator> {
    if let Some(v) = a.iter().chain(b).find(|v| v.abs() != 1) {
        return Err(Error::InvalidInput(format!(
            "deterministic outcomes must be +1 or -1, got {v}"
        )));
    }
    let data: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| f64::from(x * y)))
        .collect();
    Correlator::new(a.len(), b.len(), &data)
}

pub fn chsh() -> Correlator {
    let s = FRAC_1_SQRT_2;
    Correlator::new(2, 2, &[s, s, s, -s]).expect("valid")
}

pub fn mayers_yao() -> Correlator {
    let s = FRAC_1_SQRT_2;
    Correlator::new(3, 3, &[1.0, 0.0, s, 0.0, 1.0, s, s, s, 1.0]).expect("valid")
}

pub fn tilted_example3() -> Correlator {
    Correlator::new(2, 2, &[0.5, 0.5, 0.5, -1.0]).expect("valid")
}

/// Popescu-Rohrlich box correlator; not quantum.
pub fn pr_box() -> Correlator {
    Correlator::new(2, 2, &[1.0, 1.0, 1.0, -1.0]).expect("valid")
}

/// Names accepted by [`named`].
pub const NAMES: &[&str] = &[
    "chsh",
    "mayers_yao",
    "tilted_example3",
    "pr_box",
    "deterministic(a;b)",
];

/// Looks up a stored instance. `deterministic(1,-1;1,1)` gives `a bᵀ` with
/// `a = (1, −1)`, `b = (1, 1)`. Hyphens and underscores are interchangeable.
pub fn named(name: &str) -> Result<Correlator> {
    let raw = name.trim().to_ascii_lowercase();
    if raw.starts_with("deterministic(") {
        return parse_deterministic(&raw)
            .unwrap_or_else(|| Err(Error::UnknownName(name.to_string())));
    }
    match raw.replace('-', "_").as_str() {
        "chsh" => Ok(chsh()),
        "mayers_yao" | "my" => Ok(mayers_yao()),
        "tilted_example3" | "tilted" => Ok(tilted_example3()),
        "pr_box" | "pr" => Ok(pr_box()),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

fn parse_deterministic(key: &str) -> Option<Result<Correlator>> {
    let body = key.strip_prefix("deterministic(")?.strip_suffix(')')?;
    let (a, b) = body.split_once(';')?;
    let parse = |s: &str| -> Option<Vec<i8>> {
        s.split(',').map(|t| t.trim().parse::<i8>().ok()).collect()
    };
    Some(deterministic(&parse(a)?, &parse(b)?))
}
