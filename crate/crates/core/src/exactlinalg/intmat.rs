//! Rational 3x3 matrices kept as an integer matrix over one common
//! denominator. Products need no gcd work, which makes long runs of exact
//! multiplications along the Cayley tree cheap.

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};

use super::float::{top_singular_value, M3};
use super::matrix::RatMat3;
use super::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenMat3 {
    pub num: [[BigInt; 3]; 3],
    /// Positive common denominator.
    pub den: BigInt,
}

fn lcm(a: &BigInt, b: &BigInt) -> BigInt {
    num::integer::lcm(a.clone(), b.clone())
}

impl DenMat3 {
    pub fn identity() -> Self {
        DenMat3 {
            num: std::array::from_fn(|i| std::array::from_fn(|j| if i == j { BigInt::one() } else { BigInt::zero() })),
            den: BigInt::one(),
        }
    }

    pub fn from_rat(m: &RatMat3) -> Self {
        let den = m.m.iter().flatten().fold(BigInt::one(), |d, x| lcm(&d, x.denom()));
        let num = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let x = &m.m[i][j];
                x.numer() * (&den / x.denom())
            })
        });
        DenMat3 { num, den }
    }

    pub fn to_rat(&self) -> RatMat3 {
        RatMat3::from_fn(|i, j| Rat::new(self.num[i][j].clone(), self.den.clone()))
    }

    pub fn mul(&self, o: &DenMat3) -> DenMat3 {
        let num = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut s = BigInt::zero();
                for k in 0..3 {
                    if !self.num[i][k].is_zero() && !o.num[k][j].is_zero() {
                        s += &self.num[i][k] * &o.num[k][j];
                    }
                }
                s
            })
        });
        DenMat3 { num, den: &self.den * &o.den }
    }

    /// Float matrix `N * 2^-e` together with `e`, where `N` is the integer part.
    fn scaled_numerator(&self) -> (M3, i64) {
        let bits = self.num.iter().flatten().map(|x| x.bits()).max().unwrap_or(0) as i64;
        let e = (bits - 60).max(0);
        let mut f = M3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let x = if e > 0 { &self.num[i][j] >> (e as usize) } else { self.num[i][j].clone() };
                f[(i, j)] = x.to_f64().unwrap_or(0.0);
            }
        }
        (f, e)
    }

    pub fn ln_den(&self) -> f64 {
        ln_big(&self.den)
    }

    /// Natural log of the operator norm.
    pub fn log_top_singular_value(&self) -> f64 {
        let (f, e) = self.scaled_numerator();
        top_singular_value(&f).ln() + e as f64 * std::f64::consts::LN_2 - self.ln_den()
    }

    /// Trace equals 3.
    pub fn trace_is_three(&self) -> bool {
        let t = &self.num[0][0] + &self.num[1][1] + &self.num[2][2];
        t == &self.den * BigInt::from(3)
    }

    /// Exact `(M - I)^3 = 0`.
    pub fn is_unipotent(&self) -> bool {
        if !self.trace_is_three() {
            return false;
        }
        let mut d = self.clone();
        for i in 0..3 {
            d.num[i][i] -= &self.den;
        }
        let c = d.mul(&d).mul(&d);
        c.num.iter().flatten().all(|x| x.is_zero())
    }

    pub fn is_identity(&self) -> bool {
        (0..3).all(|i| (0..3).all(|j| if i == j { self.num[i][j] == self.den } else { self.num[i][j].is_zero() }))
    }
}

/// Natural log of a positive big integer.
pub fn ln_big(x: &BigInt) -> f64 {
    let bits = x.bits() as i64;
    let e = (bits - 60).max(0);
    let top = if e > 0 { x.abs() >> (e as usize) } else { x.abs() };
    top.to_f64().unwrap_or(0.0).ln() + e as f64 * std::f64::consts::LN_2
}
