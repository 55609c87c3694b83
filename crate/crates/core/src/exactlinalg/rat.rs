//! Exact rationals and their string form.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::error::{ForgeError, Result};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"-0.125"`.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let t = s.trim();
    let bad = || ForgeError::Parse(format!("not a rational: {s:?}"));
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Rat::new(p, q));
    }
    if let Some((ip, fp)) = t.split_once('.') {
        let neg = ip.starts_with('-');
        let digits = format!("{}{}", ip.trim_start_matches(['-', '+']), fp);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let d = num::pow(BigInt::from(10), fp.len());
        let r = Rat::new(n, d);
        return Ok(if neg { -r } else { r });
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(Rat::from_integer(n))
}

/// `"p/q"` in lowest terms; integers print without a denominator.
pub fn fmt_rat(r: &Rat) -> String {
    r.to_string()
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| if r.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY })
}

/// Approximate base-2 logarithm of `|r|` from bit lengths (exact to within 1).
pub fn log2_magnitude(r: &Rat) -> i64 {
    if r.is_zero() {
        return i64::MIN / 4;
    }
    r.numer().bits() as i64 - r.denom().bits() as i64
}

/// `ln |r|` without overflow for huge or tiny rationals.
pub fn ln_abs(r: &Rat) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    let e = log2_magnitude(r);
    if (-900..=900).contains(&e) {
        return to_f64(r).abs().ln();
    }
    to_f64(&shift(r, -e)).abs().ln() + e as f64 * std::f64::consts::LN_2
}

/// Multiplies by `2^e` exactly.
pub fn shift(r: &Rat, e: i64) -> Rat {
    let two = BigInt::from(2);
    if e >= 0 {
        r * Rat::from_integer(num::pow(two, e as usize))
    } else {
        r / Rat::from_integer(num::pow(two, (-e) as usize))
    }
}

/// Best rational approximation by continued fractions, accepted once it is
/// within `tol` of `x` (denominators capped at `max_den`).
pub fn rationalize(x: f64, tol: f64, max_den: i64) -> Option<Rat> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (BigInt::zero(), BigInt::one());
    let (mut k0, mut k1) = (BigInt::one(), BigInt::zero());
    let mut y = x;
    for _ in 0..64 {
        let a = y.floor();
        let ai = BigInt::from(a as i64);
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        if k2 > BigInt::from(max_den) {
            return None;
        }
        let cand = Rat::new(h2.clone(), k2.clone());
        if (to_f64(&cand) - x).abs() <= tol {
            return Some(cand);
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let frac = y - a;
        if frac.abs() < 1e-300 {
            return None;
        }
        y = 1.0 / frac;
    }
    None
}

pub mod serde_rat {
    //! Serde adapters writing rationals as strings.
    use super::{fmt_rat, parse_rat, Rat};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::super::{fmt_rat, parse_rat, Rat};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Rat], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(fmt_rat).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rat>, D::Error> {
            let v = Vec::<String>::deserialize(d)?;
            v.iter().map(|s| parse_rat(s).map_err(serde::de::Error::custom)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rat("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rat("-7").unwrap(), int(-7));
        assert_eq!(parse_rat("-0.125").unwrap(), rat(-1, 8));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn formatting_is_canonical() {
        assert_eq!(fmt_rat(&rat(2, -4)), "-1/2");
        assert_eq!(fmt_rat(&int(5)), "5");
    }

    #[test]
    fn continued_fraction_recovery() {
        assert_eq!(rationalize(0.125, 1e-12, 1000), Some(rat(1, 8)));
        assert_eq!(rationalize(-2.0 / 3.0, 1e-12, 1000), Some(rat(-2, 3)));
        assert_eq!(rationalize(std::f64::consts::PI, 1e-15, 1000), None);
    }

    #[test]
    fn shifting() {
        assert_eq!(shift(&int(3), 2), int(12));
        assert_eq!(shift(&int(3), -1), rat(3, 2));
        assert_eq!(log2_magnitude(&int(1024)), 10);
    }
}
