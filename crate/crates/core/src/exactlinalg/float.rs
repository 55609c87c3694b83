//! Double-precision projective geometry and spectral helpers for 3x3 matrices.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

pub type M3 = Matrix3<f64>;
pub type V3 = Vector3<f64>;

/// A line in `R^3` stored as a unit vector whose first nonzero coordinate is
/// positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjPoint {
    pub v: [f64; 3],
}

impl ProjPoint {
    pub fn new(v: V3) -> Option<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        let mut u = v / n;
        let lead = u.iter().copied().find(|x| x.abs() > 1e-15).unwrap_or(0.0);
        if lead < 0.0 {
            u = -u;
        }
        Some(ProjPoint { v: [u[0], u[1], u[2]] })
    }

    pub fn from_array(a: [f64; 3]) -> Option<Self> {
        Self::new(V3::new(a[0], a[1], a[2]))
    }

    pub fn axis(i: usize) -> Self {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        ProjPoint { v }
    }

    pub fn vec(&self) -> V3 {
        V3::new(self.v[0], self.v[1], self.v[2])
    }

    pub fn distance(&self, other: &ProjPoint) -> f64 {
        chordal_distance(self, other)
    }

    /// Image line under `m`.
    pub fn image(&self, m: &M3) -> Option<ProjPoint> {
        ProjPoint::new(m * self.vec())
    }
}

/// A plane through the origin, stored by its normalized normal line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneR3 {
    pub normal: ProjPoint,
}

impl PlaneR3 {
    pub fn from_normal(n: V3) -> Option<Self> {
        ProjPoint::new(n).map(|normal| PlaneR3 { normal })
    }

    pub fn span(a: &V3, b: &V3) -> Option<Self> {
        Self::from_normal(a.cross(b))
    }

    /// `|<n, v>|` for the unit representative of `line`: the chordal
    /// distance from the line to the plane.
    pub fn distance_to_line(&self, line: &ProjPoint) -> f64 {
        self.normal.vec().dot(&line.vec()).abs()
    }

    /// Image plane under `m` (normals transform by the inverse transpose).
    pub fn image(&self, m: &M3) -> Option<PlaneR3> {
        let mi = m.try_inverse()?;
        Self::from_normal(mi.transpose() * self.normal.vec())
    }

    /// Chordal distance between normals.
    pub fn distance(&self, other: &PlaneR3) -> f64 {
        chordal_distance(&self.normal, &other.normal)
    }
}

/// `|v x w|` for unit representatives: the sine of the angle between lines.
pub fn chordal_distance(a: &ProjPoint, b: &ProjPoint) -> f64 {
    a.vec().cross(&b.vec()).norm().min(1.0)
}

/// Singular values in decreasing order.
pub fn singular_values_f64(m: &M3) -> [f64; 3] {
    let s = m.singular_values();
    let mut v = [s[0], s[1], s[2]];
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Largest singular value: square root of the top eigenvalue of `m^T m`.
pub fn top_singular_value(m: &M3) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let a = m / scale;
    let e = (a.transpose() * a).symmetric_eigenvalues();
    e.max().max(0.0).sqrt() * scale
}

/// Dominant eigenvector by repeated squaring, refined by power steps.
/// Assumes a simple eigenvalue of strictly largest modulus.
pub fn dominant_eigenvector(m: &M3) -> Option<V3> {
    let mut a = m / m.amax();
    for _ in 0..80 {
        let sq = a * a;
        let s = sq.amax();
        if !(s.is_finite() && s > 0.0) {
            return None;
        }
        let next = sq / s;
        let done = (next - a).amax() < 1e-15;
        a = next;
        if done {
            break;
        }
    }
    let mut best = 0;
    for j in 1..3 {
        if a.column(j).norm() > a.column(best).norm() {
            best = j;
        }
    }
    let mut v: V3 = a.column(best).into_owned();
    v /= v.norm();
    let mn = m / m.amax();
    for _ in 0..4 {
        let w = mn * v;
        let n = w.norm();
        if n == 0.0 {
            return None;
        }
        let w = w / n;
        v = if w.dot(&v) < 0.0 { -w } else { w };
    }
    Some(v)
}

/// Eigen-data of a matrix with three real eigenvalues of distinct moduli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenStructure {
    /// `mu_u, mu_c, mu_s`: real eigenvalues sorted by decreasing modulus.
    pub values: [f64; 3],
    pub e_u: ProjPoint,
    pub e_c: ProjPoint,
    pub e_s: ProjPoint,
    pub e_cu: PlaneR3,
    pub e_cs: PlaneR3,
}

/// Complex eigenvalues sorted by decreasing modulus.
pub fn eigenvalues_f64(m: &M3) -> [num::complex::Complex64; 3] {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let ev = (m / scale).complex_eigenvalues();
    let mut v = [ev[0] * scale, ev[1] * scale, ev[2] * scale];
    v.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    v
}

/// Numerical loxodromy: real spectrum with moduli separated by `rel_gap`.
pub fn is_loxodromic_f64(m: &M3, rel_gap: f64) -> bool {
    let ev = eigenvalues_f64(m);
    if ev.iter().any(|z| z.im.abs() > 1e-9 * z.norm().max(1e-300)) {
        return false;
    }
    (ev[0].norm() - ev[1].norm()) > rel_gap * ev[0].norm() && (ev[1].norm() - ev[2].norm()) > rel_gap * ev[1].norm()
}

/// Eigenlines and invariant planes. `inverse` may be supplied when an
/// accurate inverse is known (for instance from exact arithmetic).
pub fn eigen_structure_f64(m: &M3, inverse: Option<&M3>) -> Result<EigenStructure> {
    if !is_loxodromic_f64(m, 1e-12) {
        return Err(ForgeError::NotLoxodromic);
    }
    let mi = match inverse {
        Some(x) => *x,
        None => m.try_inverse().ok_or(ForgeError::Singular)?,
    };
    let fail = || ForgeError::NotLoxodromic;
    let u = dominant_eigenvector(m).ok_or_else(fail)?;
    let s = dominant_eigenvector(&mi).ok_or_else(fail)?;
    let n_cs = dominant_eigenvector(&m.transpose()).ok_or_else(fail)?;
    let n_cu = dominant_eigenvector(&mi.transpose()).ok_or_else(fail)?;
    let c = n_cu.cross(&n_cs);
    let rayleigh = |v: &V3| v.dot(&(m * v)) / v.dot(v);
    let mu_u = rayleigh(&u);
    let mu_s = 1.0 / (s.dot(&(mi * s)) / s.dot(&s));
    let mu_c = m.determinant() / (mu_u * mu_s);
    Ok(EigenStructure {
        values: [mu_u, mu_c, mu_s],
        e_u: ProjPoint::new(u).ok_or_else(fail)?,
        e_c: ProjPoint::new(c).ok_or_else(fail)?,
        e_s: ProjPoint::new(s).ok_or_else(fail)?,
        e_cu: PlaneR3::from_normal(n_cu).ok_or_else(fail)?,
        e_cs: PlaneR3::from_normal(n_cs).ok_or_else(fail)?,
    })
}

/// Matrix with eigenlines `lines` (columns) and eigenvalues `values`.
pub fn from_eigen(lines: [V3; 3], values: [f64; 3]) -> Result<M3> {
    let s = M3::from_columns(&lines);
    let si = s.try_inverse().ok_or(ForgeError::Singular)?;
    Ok(s * M3::from_diagonal(&V3::new(values[0], values[1], values[2])) * si)
}

/// Real `n`-th root sharing eigenlines with `m`.
pub fn nth_root_f64(m: &M3, n: u32, inverse: Option<&M3>) -> Result<M3> {
    if n == 0 {
        return Err(ForgeError::Invalid("root order must be positive".into()));
    }
    let es = eigen_structure_f64(m, inverse)?;
    let mut roots = [0.0; 3];
    for (r, &mu) in roots.iter_mut().zip(es.values.iter()) {
        if mu < 0.0 && n % 2 == 0 {
            return Err(ForgeError::Invalid(format!("even root of negative eigenvalue {mu}")));
        }
        *r = mu.signum() * mu.abs().powf(1.0 / n as f64);
    }
    let r = from_eigen([es.e_u.vec(), es.e_c.vec(), es.e_s.vec()], roots)?;
    let rn = power_f64(&r, n as i64)?;
    let resid = (rn - m).norm() / m.norm();
    if !(resid <= 1e-9) {
        return Err(ForgeError::Invalid(format!("n-th root residual {resid:e} above 1e-9")));
    }
    Ok(r)
}

pub fn power_f64(m: &M3, e: i64) -> Result<M3> {
    let mut base = if e < 0 { m.try_inverse().ok_or(ForgeError::Singular)? } else { *m };
    let mut k = e.unsigned_abs();
    let mut acc = M3::identity();
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        k >>= 1;
        if k > 0 {
            base = base * base;
        }
    }
    Ok(acc)
}

pub fn to_rows(m: &M3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

pub fn from_rows(r: &[[f64; 3]; 3]) -> M3 {
    M3::from_fn(|i, j| r[i][j])
}

/// Serde adapter writing float matrices as row-major nested arrays.
pub mod serde_m3 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{from_rows, to_rows, M3};

    pub fn serialize<S: Serializer>(m: &M3, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<M3, D::Error> {
        Ok(from_rows(&<[[f64; 3]; 3]>::deserialize(d)?))
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        use super::super::{from_rows, to_rows, M3};

        pub fn serialize<S: Serializer>(v: &[M3], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<M3>, D::Error> {
            Ok(Vec::<[[f64; 3]; 3]>::deserialize(d)?.iter().map(from_rows).collect())
        }
    }
}

/// Rotation of the `(e1, e2)` plane by `angle`, extended by `1` on `e3`.
pub fn rotation_e3(angle: f64) -> M3 {
    let (s, c) = angle.sin_cos();
    M3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Relative Frobenius residual `|(m - I)^3| / |m|^3`.
pub fn unipotent_residual(m: &M3) -> f64 {
    let d = m - M3::identity();
    (d * d * d).norm() / m.norm().powi(3)
}
