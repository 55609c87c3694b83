//! Exact trace classification in `SL(2)` and `SL(2)^±`, and the rank of the
//! differential of the commutator map.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::linsolve::rank;
use super::matrix::RatMat2;
use super::rat::{fmt_rat, int, ln_abs, to_f64, Rat};
use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sl2Class {
    PlusMinusIdentity,
    Elliptic,
    Parabolic,
    Hyperbolic,
    /// Determinant `-1`: real eigenvalues `x, -1/x`.
    Glide,
}

pub fn classify_sl2(m: &RatMat2) -> Result<Sl2Class> {
    let d = m.det();
    let tr = m.trace();
    if d == int(-1) {
        return Ok(Sl2Class::Glide);
    }
    if d != int(1) {
        return Err(ForgeError::Determinant { expected: "±1".into(), found: fmt_rat(&d) });
    }
    if m.is_plus_minus_identity() {
        return Ok(Sl2Class::PlusMinusIdentity);
    }
    let two = int(2);
    let a = tr.abs();
    Ok(if a > two {
        Sl2Class::Hyperbolic
    } else if a == two {
        Sl2Class::Parabolic
    } else {
        Sl2Class::Elliptic
    })
}

/// Largest eigenvalue modulus `(|tr| + sqrt(tr^2 - 4 det)) / 2` of a matrix
/// with real spectrum.
pub fn sl2_top_modulus(m: &RatMat2) -> Result<f64> {
    let tr = m.trace();
    let disc = &tr * &tr - int(4) * m.det();
    if disc.is_negative() {
        return Err(ForgeError::Invalid("elliptic matrix has no real top eigenvalue".into()));
    }
    Ok((to_f64(&tr).abs() + to_f64(&disc).sqrt()) / 2.0)
}

/// `ln` of the largest eigenvalue modulus, robust to huge traces. Elliptic
/// and parabolic matrices of determinant `1` give `0`.
pub fn log_top_modulus(m: &RatMat2) -> f64 {
    let tr = m.trace();
    let det = m.det();
    let disc = &tr * &tr - int(4) * &det;
    if disc.is_negative() || tr.is_zero() {
        return 0.5 * ln_abs(&det);
    }
    // top = |tr| (1 + sqrt(1 - 4 det / tr^2)) / 2
    let x = to_f64(&(int(4) * &det / (&tr * &tr)));
    ln_abs(&tr) + ((1.0 + (1.0 - x).max(0.0).sqrt()) / 2.0).ln()
}

fn coords(x: &RatMat2) -> [Rat; 3] {
    [x.m[0][0].clone(), x.m[0][1].clone(), x.m[1][0].clone()]
}

fn sl2_basis() -> [RatMat2; 3] {
    [
        RatMat2::from_i64([[1, 0], [0, -1]]),
        RatMat2::from_i64([[0, 1], [0, 0]]),
        RatMat2::from_i64([[0, 0], [1, 0]]),
    ]
}

/// Rank of `(X, Y) -> Ad_g(Ad_{h^-1} X - X) + (Ad_g Y - Y)` on `sl(2)^2`.
pub fn commutator_differential_rank(g: &RatMat2, h: &RatMat2) -> Result<usize> {
    for m in [g, h] {
        if m.det() != Rat::one() {
            return Err(ForgeError::Determinant { expected: "1".into(), found: fmt_rat(&m.det()) });
        }
    }
    let gi = g.inv()?;
    let hi = h.inv()?;
    let ad = |a: &RatMat2, ai: &RatMat2, x: &RatMat2| a.mul(x).mul(ai);
    let mut cols: Vec<[Rat; 3]> = Vec::with_capacity(6);
    for x in sl2_basis() {
        let inner = ad(&hi, h, &x).sub(&x);
        cols.push(coords(&ad(g, &gi, &inner)));
    }
    for y in sl2_basis() {
        cols.push(coords(&ad(g, &gi, &y).sub(&y)));
    }
    let rows: Vec<Vec<Rat>> = (0..3).map(|i| cols.iter().map(|c| c[i].clone()).collect()).collect();
    Ok(rank(&rows))
}

#[cfg(test)]
mod tests {
    use super::super::rat::rat;
    use super::*;

    #[test]
    fn canonical_classes() {
        assert_eq!(classify_sl2(&RatMat2::from_i64([[2, 1], [1, 1]])).unwrap(), Sl2Class::Hyperbolic);
        assert_eq!(classify_sl2(&RatMat2::from_i64([[1, 1], [0, 1]])).unwrap(), Sl2Class::Parabolic);
        assert_eq!(classify_sl2(&RatMat2::from_i64([[0, -1], [1, 0]])).unwrap(), Sl2Class::Elliptic);
        assert_eq!(classify_sl2(&RatMat2::from_i64([[-1, 0], [0, -1]])).unwrap(), Sl2Class::PlusMinusIdentity);
        assert_eq!(classify_sl2(&RatMat2::from_i64([[1, 0], [0, -1]])).unwrap(), Sl2Class::Glide);
        assert!(classify_sl2(&RatMat2::from_i64([[2, 0], [0, 1]])).is_err());
    }

    #[test]
    fn top_moduli() {
        let d = RatMat2::diag([int(2), rat(1, 2)]);
        assert!((sl2_top_modulus(&d).unwrap() - 2.0).abs() < 1e-15);
        let m = RatMat2::from_i64([[2, 1], [1, 1]]);
        assert!((sl2_top_modulus(&m).unwrap() - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        let r = RatMat2::from_i64([[1, 0], [0, -1]]);
        assert!((sl2_top_modulus(&r).unwrap() - 1.0).abs() < 1e-15);
        assert!(sl2_top_modulus(&RatMat2::from_i64([[0, -1], [1, 0]])).is_err());
    }

    #[test]
    fn log_moduli() {
        let m = RatMat2::from_i64([[2, 1], [1, 1]]);
        assert!((log_top_modulus(&m) - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-14);
        let big = m.pow(2000).unwrap();
        assert!((log_top_modulus(&big) - 2000.0 * ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-9);
        assert_eq!(log_top_modulus(&RatMat2::from_i64([[0, -1], [1, 0]])), 0.0);
        let glide = RatMat2::diag([int(3), rat(-1, 3)]);
        assert!((log_top_modulus(&glide) - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn differential_ranks() {
        let i = RatMat2::identity();
        assert_eq!(commutator_differential_rank(&i, &i).unwrap(), 0);
        let a = RatMat2::diag([int(2), rat(1, 2)]);
        let b = RatMat2::from_i64([[2, 1], [1, 1]]);
        assert_eq!(commutator_differential_rank(&a, &b).unwrap(), 3);
        let c = RatMat2::diag([int(3), rat(1, 3)]);
        assert!(commutator_differential_rank(&a, &c).unwrap() < 3);
    }
}
