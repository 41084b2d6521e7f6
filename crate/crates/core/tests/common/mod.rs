//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use corrlab::completion::Correlator;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|s| **s > rel * top.max(1e-300)).count()
}

/// 4×4 unit-diagonal matrix `[[1, c12, C], [Cᵀ, 1, c34]]`.
pub fn full_2x2(c: &Correlator, c12: f64, c34: f64) -> DMatrix<f64> {
    let (a, b, d, e) = (c.get(0, 0), c.get(0, 1), c.get(1, 0), c.get(1, 1));
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, c12, a, b, //
            c12, 1.0, d, e, //
            a, d, 1.0, c34, //
            b, e, c34, 1.0,
        ],
    )
}

/// Fills `c12` through the separator `{3, 4}`:
/// `c12 = X_{1S} X_{SS}⁺ X_{S2}`, the maximum-determinant choice.
pub fn chordal_c12(c: &Correlator, c34: f64) -> f64 {
    let s = DMatrix::from_row_slice(2, 2, &[1.0, c34, c34, 1.0]);
    let pinv = s.pseudo_inverse(1e-13).expect("2x2 pseudo-inverse");
    let u = nalgebra::RowDVector::from_row_slice(&[c.get(0, 0), c.get(0, 1)]);
    let v = nalgebra::DVector::from_row_slice(&[c.get(1, 0), c.get(1, 1)]);
    (u * pinv * v)[(0, 0)]
}

/// Sign changes and permutations of a 2×2 correlator, indexed `0..64`.
pub fn transform_2x2(c: &Correlator, k: usize) -> Correlator {
    let mut t = c.clone();
    if k & 1 != 0 {
        t = t.swap_rows(0, 1);
    }
    if k & 2 != 0 {
        t = t.swap_cols(0, 1);
    }
    for x in 0..2 {
        if k >> (2 + x) & 1 != 0 {
            t = t.switch_row(x);
        }
    }
    for y in 0..2 {
        if k >> (4 + y) & 1 != 0 {
            t = t.switch_col(y);
        }
    }
    t
}

/// Random sign changes, permutations and possibly a transpose.
pub fn random_switching(c: &Correlator, rng: &mut impl Rng) -> Correlator {
    let mut t = c.clone();
    for x in 0..t.n() {
        if rng.random::<bool>() {
            t = t.switch_row(x);
        }
    }
    for y in 0..t.m() {
        if rng.random::<bool>() {
            t = t.switch_col(y);
        }
    }
    let mut rows: Vec<usize> = (0..t.n()).collect();
    rows.shuffle(rng);
    let mut cols: Vec<usize> = (0..t.m()).collect();
    cols.shuffle(rng);
    let d = DMatrix::from_fn(t.n(), t.m(), |x, y| t.get(rows[x], cols[y]));
    let mut t = Correlator::from_dmatrix(d).expect("permuted entries stay in range");
    if rng.random::<bool>() {
        t = t.transpose();
    }
    t
}

/// `θ13 + θ23 + θ24 − θ14` in the row/column labelling `1,2 | 3,4`.
pub fn normal_cycle(c: &Correlator) -> f64 {
    let th = |x, y| c.get(x, y).clamp(-1.0, 1.0).acos();
    th(0, 0) + th(1, 0) + th(1, 1) - th(0, 1)
}

/// Entries `c12`, `c34` of the unique completion when the normal cycle is
/// tight.
pub fn closed_form(c: &Correlator) -> (f64, f64) {
    let (c13, c23, c24) = (c.get(0, 0), c.get(1, 0), c.get(1, 1));
    let c12 = c13 * c23 - ((1.0 - c13 * c13) * (1.0 - c23 * c23)).max(0.0).sqrt();
    let c34 = c23 * c24 - ((1.0 - c23 * c23) * (1.0 - c24 * c24)).max(0.0).sqrt();
    (c12, c34)
}

/// Rank-2 self-testing criterion in arcsin form: exactly one of the four
/// `|Σ arcsin c − 2 arcsin c_{x'y'}| ≤ π` is saturated, and at most one
/// `|arcsin c_xy| ≤ π/2`.
pub fn scarani(c: &Correlator, tight: f64) -> bool {
    let s: Vec<f64> = (0..4).map(|k| c.get(k / 2, k % 2).asin()).collect();
    let total: f64 = s.iter().sum();
    let cycles = s
        .iter()
        .filter(|v| (PI - (total - 2.0 * **v).abs()).abs() <= tight)
        .count();
    let boxes = s
        .iter()
        .filter(|v| (PI / 2.0 - v.abs()).abs() <= tight)
        .count();
    cycles == 1 && boxes <= 1
}

/// Entries of `C` uniform in `[−1, 1]`.
pub fn uniform(n: usize, m: usize, rng: &mut impl Rng) -> Correlator {
    let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Correlator::new(n, m, &data).unwrap()
}
