//! Exact 2x2 and 3x3 rational matrices.

use std::fmt;

use nalgebra::{Matrix2, Matrix3};
use num::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::rat::{fmt_rat, int, log2_magnitude, parse_rat, shift, to_f64, Rat};
use crate::error::{ForgeError, Result};

macro_rules! rat_matrix {
    ($name:ident, $n:expr, $float:ident) => {
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name {
            pub m: [[Rat; $n]; $n],
        }

        impl $name {
            pub fn zero() -> Self {
                $name { m: std::array::from_fn(|_| std::array::from_fn(|_| Rat::zero())) }
            }

            pub fn identity() -> Self {
                Self::scalar(Rat::one())
            }

            pub fn scalar(s: Rat) -> Self {
                let mut z = Self::zero();
                for i in 0..$n {
                    z.m[i][i] = s.clone();
                }
                z
            }

            pub fn from_fn(f: impl Fn(usize, usize) -> Rat) -> Self {
                $name { m: std::array::from_fn(|i| std::array::from_fn(|j| f(i, j))) }
            }

            pub fn from_i64(rows: [[i64; $n]; $n]) -> Self {
                Self::from_fn(|i, j| int(rows[i][j]))
            }

            pub fn from_strs(rows: [[&str; $n]; $n]) -> Result<Self> {
                let mut z = Self::zero();
                for i in 0..$n {
                    for j in 0..$n {
                        z.m[i][j] = parse_rat(rows[i][j])?;
                    }
                }
                Ok(z)
            }

            pub fn diag(d: [Rat; $n]) -> Self {
                let mut z = Self::zero();
                for (i, x) in d.into_iter().enumerate() {
                    z.m[i][i] = x;
                }
                z
            }

            pub fn mul(&self, o: &Self) -> Self {
                Self::from_fn(|i, j| {
                    let mut s = Rat::zero();
                    for k in 0..$n {
                        if !self.m[i][k].is_zero() && !o.m[k][j].is_zero() {
                            s += &self.m[i][k] * &o.m[k][j];
                        }
                    }
                    s
                })
            }

            pub fn add(&self, o: &Self) -> Self {
                Self::from_fn(|i, j| &self.m[i][j] + &o.m[i][j])
            }

            pub fn sub(&self, o: &Self) -> Self {
                Self::from_fn(|i, j| &self.m[i][j] - &o.m[i][j])
            }

            pub fn scale(&self, s: &Rat) -> Self {
                Self::from_fn(|i, j| &self.m[i][j] * s)
            }

            pub fn transpose(&self) -> Self {
                Self::from_fn(|i, j| self.m[j][i].clone())
            }

            pub fn trace(&self) -> Rat {
                (0..$n).fold(Rat::zero(), |s, i| s + &self.m[i][i])
            }

            pub fn is_identity(&self) -> bool {
                *self == Self::identity()
            }

            pub fn is_zero(&self) -> bool {
                self.m.iter().all(|r| r.iter().all(|x| x.is_zero()))
            }

            pub fn inv(&self) -> Result<Self> {
                let d = self.det();
                if d.is_zero() {
                    return Err(ForgeError::Singular);
                }
                Ok(self.adjugate().scale(&(Rat::one() / d)))
            }

            /// Integer power; negative exponents invert first.
            pub fn pow(&self, e: i64) -> Result<Self> {
                let mut base = if e < 0 { self.inv()? } else { self.clone() };
                let mut k = e.unsigned_abs();
                let mut acc = Self::identity();
                while k > 0 {
                    if k & 1 == 1 {
                        acc = acc.mul(&base);
                    }
                    k >>= 1;
                    if k > 0 {
                        base = base.mul(&base);
                    }
                }
                Ok(acc)
            }

            /// Float copy scaled by `2^-e`, returning `(matrix, e)`, so that
            /// large or tiny entries survive conversion.
            pub fn to_f64_scaled(&self) -> ($float<f64>, i64) {
                let mag = self
                    .m
                    .iter()
                    .flat_map(|r| r.iter())
                    .filter(|x| !x.is_zero())
                    .map(log2_magnitude)
                    .max();
                let e = match mag {
                    Some(b) if !(-900..=900).contains(&b) => b,
                    _ => 0,
                };
                let mut f = $float::<f64>::zeros();
                for i in 0..$n {
                    for j in 0..$n {
                        f[(i, j)] = if e == 0 { to_f64(&self.m[i][j]) } else { to_f64(&shift(&self.m[i][j], -e)) };
                    }
                }
                (f, e)
            }

            pub fn to_f64(&self) -> $float<f64> {
                let mut f = $float::<f64>::zeros();
                for i in 0..$n {
                    for j in 0..$n {
                        f[(i, j)] = to_f64(&self.m[i][j]);
                    }
                }
                f
            }

            /// Row-major string entries.
            pub fn to_strings(&self) -> Vec<Vec<String>> {
                self.m.iter().map(|r| r.iter().map(fmt_rat).collect()).collect()
            }

            pub fn from_strings(rows: &[Vec<String>]) -> Result<Self> {
                if rows.len() != $n || rows.iter().any(|r| r.len() != $n) {
                    return Err(ForgeError::Parse(format!("expected a {}x{} matrix", $n, $n)));
                }
                let mut z = Self::zero();
                for i in 0..$n {
                    for j in 0..$n {
                        z.m[i][j] = parse_rat(&rows[i][j])?;
                    }
                }
                Ok(z)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", self.to_strings())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                self.to_strings().serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let rows = Vec::<Vec<String>>::deserialize(d)?;
                Self::from_strings(&rows).map_err(serde::de::Error::custom)
            }
        }
    };
}

rat_matrix!(RatMat3, 3, Matrix3);
rat_matrix!(RatMat2, 2, Matrix2);

impl RatMat3 {
    pub fn det(&self) -> Rat {
        let m = &self.m;
        &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1]) - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
            + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
    }

    /// Transpose of the cofactor matrix, so `M adj(M) = det(M) I`.
    pub fn adjugate(&self) -> Self {
        let m = &self.m;
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| &m[r0][c0] * &m[r1][c1] - &m[r0][c1] * &m[r1][c0];
        let cof = [
            [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
            [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
            [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
        ];
        Self::from_fn(|i, j| cof[j][i].clone())
    }

    /// Monic characteristic polynomial `x^3 + c2 x^2 + c1 x + c0` as `[c2, c1, c0]`.
    pub fn charpoly(&self) -> [Rat; 3] {
        let m = &self.m;
        let minors = &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0] + &m[0][0] * &m[2][2] - &m[0][2] * &m[2][0]
            + &m[1][1] * &m[2][2]
            - &m[1][2] * &m[2][1];
        [-self.trace(), minors, -self.det()]
    }

    /// Upper-left 2x2 block.
    pub fn plane_block(&self) -> RatMat2 {
        RatMat2::from_fn(|i, j| self.m[i][j].clone())
    }

    /// Block upper-triangular matrix `[[B, k], [0, d]]`.
    pub fn from_blocks(b: &RatMat2, kappa: &[Rat; 2], d: &Rat) -> Self {
        let mut z = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                z.m[i][j] = b.m[i][j].clone();
            }
            z.m[i][2] = kappa[i].clone();
        }
        z.m[2][2] = d.clone();
        z
    }

    /// Whether `span(e1, e2)` is invariant.
    pub fn preserves_coordinate_plane(&self) -> bool {
        self.m[2][0].is_zero() && self.m[2][1].is_zero()
    }

    pub fn apply(&self, v: &[Rat; 3]) -> [Rat; 3] {
        std::array::from_fn(|i| (0..3).fold(Rat::zero(), |s, k| s + &self.m[i][k] * &v[k]))
    }
}

impl RatMat2 {
    pub fn det(&self) -> Rat {
        &self.m[0][0] * &self.m[1][1] - &self.m[0][1] * &self.m[1][0]
    }

    pub fn adjugate(&self) -> Self {
        let m = &self.m;
        RatMat2 { m: [[m[1][1].clone(), -m[0][1].clone()], [-m[1][0].clone(), m[0][0].clone()]] }
    }

    /// Embeds as `diag(B, d)`.
    pub fn embed(&self, d: &Rat) -> RatMat3 {
        RatMat3::from_blocks(self, &[Rat::zero(), Rat::zero()], d)
    }

    pub fn is_plus_minus_identity(&self) -> bool {
        self.is_identity() || *self == Self::scalar(-Rat::one())
    }
}

pub fn det3(m: &RatMat3) -> Rat {
    m.det()
}

pub fn mul3(a: &RatMat3, b: &RatMat3) -> RatMat3 {
    a.mul(b)
}

pub fn inv3(m: &RatMat3) -> Result<RatMat3> {
    m.inv()
}

pub fn charpoly3(m: &RatMat3) -> [Rat; 3] {
    m.charpoly()
}

/// `|det| = 1` check shared by representation constructors.
pub fn require_det(m: &RatMat3, expected: &Rat) -> Result<()> {
    let d = m.det();
    if &d != expected {
        return Err(ForgeError::Determinant { expected: fmt_rat(expected), found: fmt_rat(&d) });
    }
    Ok(())
}

pub fn abs_rat(r: &Rat) -> Rat {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::super::rat::rat;
    use super::*;

    fn g() -> RatMat3 {
        RatMat3::from_strs([["2", "-2", "0"], ["2", "2", "0"], ["0", "0", "1/8"]]).unwrap()
    }

    #[test]
    fn determinant_and_inverse() {
        assert_eq!(det3(&g()), int(1));
        let gi = inv3(&g()).unwrap();
        assert!(mul3(&g(), &gi).is_identity());
        assert!(inv3(&RatMat3::identity()).unwrap().is_identity());
        assert_eq!(inv3(&RatMat3::zero()), Err(ForgeError::Singular));
    }

    #[test]
    fn charpoly_identity() {
        assert_eq!(charpoly3(&RatMat3::identity()), [int(-3), int(3), int(-1)]);
        let c = charpoly3(&g());
        // (x^2 - 4x + 8)(x - 1/8)
        assert_eq!(c, [rat(-33, 8), rat(17, 2), int(-1)]);
    }

    #[test]
    fn powers() {
        let g8 = g().pow(8).unwrap();
        assert_eq!(g8.m[0][0], int(4096));
        assert_eq!(g8.m[0][1], int(0));
        assert_eq!(g8.m[2][2], rat(1, 16_777_216));
        assert_eq!(g().pow(-2).unwrap().mul(&g().pow(2).unwrap()), RatMat3::identity());
    }

    #[test]
    fn serde_round_trip() {
        let s = serde_json::to_string(&g()).unwrap();
        assert_eq!(s, r#"[["2","-2","0"],["2","2","0"],["0","0","1/8"]]"#);
        let back: RatMat3 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g());
    }

    #[test]
    fn scaled_conversion() {
        let big = RatMat3::scalar(super::super::rat::shift(&int(1), 2000));
        let (f, e) = big.to_f64_scaled();
        assert!(e >= 1990);
        assert!(f[(0, 0)].is_finite() && f[(0, 0)] > 0.0);
    }
}
