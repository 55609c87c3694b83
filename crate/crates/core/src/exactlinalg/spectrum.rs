//! Spectral data of exact 3x3 matrices: exact discriminant dispatch, float
//! moduli, eigenlines, singular values and roots.

use num::Zero;
use serde::{Deserialize, Serialize};

use super::float::{self, eigen_structure_f64, EigenStructure, M3};
use super::matrix::RatMat3;
use super::poly::{cubic_discriminant, repeated_rational_root, sign, Poly};
use super::rat::{fmt_rat, serde_rat, shift, to_f64, Rat};
use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum3 {
    /// `[c2, c1, c0]` of `x^3 + c2 x^2 + c1 x + c0`.
    #[serde(with = "serde_rat::vec")]
    pub charpoly: Vec<Rat>,
    /// Sign of the discriminant: `1` three distinct real roots, `0` a
    /// repeated root, `-1` one real root and a complex pair.
    pub discriminant_sign: i8,
    /// `lambda_u >= lambda_c >= lambda_s`.
    pub moduli: [f64; 3],
    /// Realness of the root with the matching modulus.
    pub real: [bool; 3],
    /// Real eigenvalues `mu_u, mu_c, mu_s` when all roots are real.
    pub real_values: Option<[f64; 3]>,
    /// A rational root, when one was detected exactly.
    pub rational_root: Option<String>,
}

impl Spectrum3 {
    pub fn real_root_count(&self) -> usize {
        self.real.iter().filter(|&&r| r).count()
    }
}

pub fn spectrum3(m: &RatMat3) -> Spectrum3 {
    let cp = m.charpoly();
    let disc = cubic_discriminant(&cp);
    let dsign = sign(&disc);
    let (mf, e) = m.to_f64_scaled();
    let scale = 2f64.powi(e as i32);
    let mut ev = float::eigenvalues_f64(&mf);
    for z in ev.iter_mut() {
        *z *= scale;
    }
    let poly = Poly::monic_cubic(&cp);
    let mut rational_root = None;
    let mut values: [f64; 3] = [ev[0].re, ev[1].re, ev[2].re];
    let mut real = [true; 3];
    match dsign {
        0 => {
            // Repeated roots of a rational cubic are rational.
            if let Some(r) = repeated_rational_root(&poly) {
                let rest = poly.div(&Poly::new(vec![-r.clone(), Rat::from_integer(1.into())]));
                let rest = rest.div(&Poly::new(vec![-r.clone(), Rat::from_integer(1.into())]));
                let s = -rest.c[0].clone();
                let mut v = [to_f64(&r), to_f64(&r), to_f64(&s)];
                v.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
                values = v;
                rational_root = Some(fmt_rat(&r));
            }
        }
        -1 => {
            // The real root is the one with the smallest imaginary part.
            let ri = (0..3)
                .min_by(|&i, &j| ev[i].im.abs().partial_cmp(&ev[j].im.abs()).unwrap())
                .unwrap();
            for (i, r) in real.iter_mut().enumerate() {
                *r = i == ri;
            }
            values[ri] = ev[ri].re;
            if let Some(q) = super::rat::rationalize(ev[ri].re, 1e-9 * ev[ri].re.abs().max(1e-300), 1 << 40) {
                if poly.eval(&q).is_zero() {
                    rational_root = Some(fmt_rat(&q));
                    values[ri] = to_f64(&q);
                }
            }
        }
        _ => {}
    }
    // The complex pair has modulus sqrt(|det| / |real root|).
    let pair_modulus = (0..3)
        .find(|&i| real[i] && dsign < 0)
        .map(|i| (to_f64(&cp[2]).abs() / values[i].abs()).sqrt());
    let moduli_src: Vec<f64> = (0..3)
        .map(|i| if real[i] { values[i].abs() } else { pair_modulus.unwrap_or(ev[i].norm()) })
        .collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| moduli_src[j].partial_cmp(&moduli_src[i]).unwrap());
    let moduli = [moduli_src[order[0]], moduli_src[order[1]], moduli_src[order[2]]];
    let real_sorted = [real[order[0]], real[order[1]], real[order[2]]];
    let real_values = if dsign >= 0 {
        Some([values[order[0]], values[order[1]], values[order[2]]])
    } else {
        None
    };
    Spectrum3 {
        charpoly: cp.to_vec(),
        discriminant_sign: dsign,
        moduli,
        real: real_sorted,
        real_values,
        rational_root,
    }
}

/// Three real eigenvalues with pairwise distinct moduli, decided exactly:
/// positive discriminant, and no root `r != 0` with `-r` also a root.
pub fn is_loxodromic(m: &RatMat3) -> bool {
    let cp = m.charpoly();
    if sign(&cubic_discriminant(&cp)) <= 0 {
        return false;
    }
    let mut p = Poly::monic_cubic(&cp);
    if cp[2].is_zero() {
        p = p.div(&Poly::new(vec![Rat::zero(), Rat::from_integer(1.into())]));
    }
    p.gcd(&p.reflect()).degree() == Some(0)
}

/// Exact test `(M - I)^3 = 0`; the identity counts as unipotent.
pub fn is_unipotent(m: &RatMat3) -> bool {
    let d = m.sub(&RatMat3::identity());
    d.mul(&d).mul(&d).is_zero()
}

/// Eigenlines `E^u, E^c, E^s` and planes `E^cu, E^cs` of a loxodromic matrix.
pub fn eigen_structure(m: &RatMat3) -> Result<EigenStructure> {
    if !is_loxodromic(m) {
        return Err(ForgeError::NotLoxodromic);
    }
    let (mf, e) = m.to_f64_scaled();
    let adj = m.adjugate();
    let (af, _) = adj.to_f64_scaled();
    // Only directions matter for the inverse; rescale it to unit size.
    let af = af / af.amax();
    let mut es = eigen_structure_f64(&(mf / mf.amax()), Some(&af))?;
    let _ = e;
    // Recover eigenvalues from the exact spectrum for accuracy.
    let sp = spectrum3(m);
    if let Some(v) = sp.real_values {
        es.values = v;
    }
    Ok(es)
}

/// Singular values `s1 >= s2 >= s3`. The top value of `M` and of its
/// adjugate give all three via `s1 s2 = s1(adj M)` and `s1 s2 s3 = |det|`.
pub fn singular_values(m: &RatMat3) -> [f64; 3] {
    let (mf, e) = m.to_f64_scaled();
    let s1 = float::top_singular_value(&mf) * 2f64.powi(e as i32);
    let (af, ea) = m.adjugate().to_f64_scaled();
    let s12 = float::top_singular_value(&af) * 2f64.powi(ea as i32);
    let det = to_f64(&m.det()).abs();
    if s1 == 0.0 {
        return [0.0; 3];
    }
    let s2 = s12 / s1;
    let s3 = if s12 == 0.0 { 0.0 } else { det / s12 };
    [s1, s2, s3]
}

/// `log s1` robust to entries beyond double range.
pub fn log_top_singular_value(m: &RatMat3) -> f64 {
    let (mf, e) = m.to_f64_scaled();
    float::top_singular_value(&mf).ln() + e as f64 * std::f64::consts::LN_2
}

/// `(log s1, log s2, log s3)` robust to entries beyond double range.
pub fn log_singular_values(m: &RatMat3) -> [f64; 3] {
    let (mf, e) = m.to_f64_scaled();
    let l1 = float::top_singular_value(&mf).ln() + e as f64 * std::f64::consts::LN_2;
    let (af, ea) = m.adjugate().to_f64_scaled();
    let l12 = float::top_singular_value(&af).ln() + ea as f64 * std::f64::consts::LN_2;
    let d = m.det();
    let ld = if d.is_zero() {
        f64::NEG_INFINITY
    } else {
        let lm = super::rat::log2_magnitude(&d);
        to_f64(&shift(&d, -lm)).abs().ln() + lm as f64 * std::f64::consts::LN_2
    };
    [l1, l12 - l1, ld - l12]
}

/// Real `n`-th root of a loxodromic matrix (float result).
pub fn nth_root_loxodromic(m: &RatMat3, n: u32) -> Result<M3> {
    if !is_loxodromic(m) {
        return Err(ForgeError::NotLoxodromic);
    }
    let inv = m.inv()?.to_f64();
    float::nth_root_f64(&m.to_f64(), n, Some(&inv))
}

#[cfg(test)]
mod tests {
    use super::super::rat::{int, rat};
    use super::*;

    fn g() -> RatMat3 {
        RatMat3::from_strs([["2", "-2", "0"], ["2", "2", "0"], ["0", "0", "1/8"]]).unwrap()
    }

    #[test]
    fn spectrum_of_g() {
        let s = spectrum3(&g());
        assert_eq!(s.discriminant_sign, -1);
        assert!((s.moduli[0] - 8f64.sqrt()).abs() < 1e-12);
        assert!((s.moduli[1] - 8f64.sqrt()).abs() < 1e-12);
        assert!((s.moduli[2] - 0.125).abs() < 1e-15);
        assert_eq!(s.real, [false, false, true]);
        assert_eq!(s.rational_root.as_deref(), Some("1/8"));
    }

    #[test]
    fn loxodromy() {
        let d = RatMat3::diag([int(4), int(1), rat(1, 4)]);
        assert!(is_loxodromic(&d));
        assert!(!is_loxodromic(&g()));
        assert!(!is_loxodromic(&RatMat3::diag([int(2), int(-2), rat(1, 4)])));
        assert!(!is_loxodromic(&RatMat3::identity()));
    }

    #[test]
    fn unipotence() {
        let mut u = RatMat3::identity();
        u.m[0][2] = int(5);
        assert!(is_unipotent(&u));
        assert!(is_unipotent(&RatMat3::identity()));
        assert!(!is_unipotent(&RatMat3::diag([int(2), int(1), rat(1, 2)])));
    }

    #[test]
    fn singular_values_diagonal() {
        let s = singular_values(&RatMat3::diag([int(4), int(1), rat(1, 4)]));
        assert!((s[0] - 4.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12 && (s[2] - 0.25).abs() < 1e-12);
        let s = singular_values(&RatMat3::identity());
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn eigenlines_sorted_by_modulus() {
        let es = eigen_structure(&RatMat3::diag([rat(1, 4), int(1), int(4)])).unwrap();
        assert!(es.e_u.v[2] > 1.0 - 1e-12);
        assert!(eigen_structure(&g()).is_err());
    }

    #[test]
    fn repeated_root_spectrum() {
        let s = spectrum3(&RatMat3::diag([int(2), int(2), rat(1, 4)]));
        assert_eq!(s.discriminant_sign, 0);
        assert_eq!(s.rational_root.as_deref(), Some("2"));
        assert_eq!(s.real_values, Some([2.0, 2.0, 0.25]));
    }
}
