//! Deformations that create unipotent elements: a compensated path moving one
//! eigenline of `ρ(a)` while `ρ(ω)` stays fixed, root-finding for the plane
//! incidence, the resulting commutator, and the two-step destabilization of
//! the finite-index restrictions `ρ_k`.

use num::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ForgeError, Result};
use crate::exactlinalg::float::{
    eigen_structure_f64, eigenvalues_f64, from_eigen, is_loxodromic_f64, nth_root_f64, power_f64, serde_m3,
    unipotent_residual,
};
use crate::exactlinalg::rat::{fmt_rat, rationalize, to_f64};
use crate::exactlinalg::{is_unipotent, rat, PlaneR3, ProjPoint, Rat, RatMat3, M3, V3};
use crate::freegroup::{commutator, Word};
use crate::pingpong::{dot_r, kernel_line, scalar_power_on_plane, shifted};
use crate::represent::{FloatRepresentation, Representation};
use crate::suspension::rational_sqrt;

/// Target for `|θ|` at the incidence root.
pub const THETA_TOL: f64 = 1e-12;
/// Bisection budget.
pub const BISECTION_STEPS: usize = 60;
/// Residual below which a commutator is accepted as unipotent.
pub const WITNESS_TOL: f64 = 1e-6;
/// Allowed relative drift of `ρ_t(ω)` along a path.
pub const DRIFT_TOL: f64 = 1e-9;
/// Sample count for loxodromy and drift checks along a path.
pub const PATH_SAMPLES: usize = 33;
/// Required distance between `ρ(γ)·P0` and the target plane.
pub const APPROACH_TOL: f64 = 1e-6;
/// Half-width of the window of rotation offsets explored for `ρ'(c_1)`.
pub const ROTATION_WINDOW: f64 = 0.75;

const CANDIDATES_PER_LENGTH: usize = 64;
const MIN_ROTATION: f64 = 1e-3;

/// `ω = a^m b^n`.
pub fn omega_word(a: usize, b: usize, m: u32, n: u32) -> Word {
    Word::letter(a as i32).pow(m as i64).concat(&Word::letter(b as i32).pow(n as i64))
}

/// `[ω^q, a^p ω^q a^-p]`.
pub fn incidence_commutator(a: usize, omega: &Word, q: u32, p: i64) -> Word {
    let x = omega.pow(q as i64);
    let ap = Word::letter(a as i32).pow(p);
    commutator(&x, &ap.concat(&x).concat(&ap.inverse()))
}

/// Eigen-data of `ρ(ω^q)`: a plane `P0` on which it is the scalar `mu` and
/// a line `L0` with eigenvalue `mu^-2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaFrame {
    pub mu: f64,
    pub plane: PlaneR3,
    pub line: ProjPoint,
}

fn singular_triples(m: &M3) -> ([f64; 3], [V3; 3]) {
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let vals = idx.map(|i| svd.singular_values[i]);
    let vecs = idx.map(|i| vt.row(i).transpose());
    (vals, vecs)
}

pub fn omega_frame(w: &M3) -> Result<OmegaFrame> {
    let ev = eigenvalues_f64(w);
    if ev.iter().any(|z| z.im.abs() > 1e-9 * z.norm()) {
        return Err(ForgeError::Hypothesis("ρ(ω^q) has non-real spectrum".into()));
    }
    let re = ev.map(|z| z.re);
    let pair = [(0, 1, 2), (0, 2, 1), (1, 2, 0)]
        .into_iter()
        .find(|&(i, j, _)| (re[i] - re[j]).abs() <= 1e-7 * re[i].abs());
    let Some((i, j, k)) = pair else {
        return Err(ForgeError::Hypothesis("ρ(ω^q) has no repeated eigenvalue".into()));
    };
    let mu = 0.5 * (re[i] + re[j]);
    let nu = re[k];
    if (nu * mu * mu - 1.0).abs() > 1e-6 || (nu - mu).abs() <= 1e-7 * mu.abs() {
        return Err(ForgeError::Hypothesis(format!("eigenvalues {mu}, {mu}, {nu} are not of the form mu, mu, mu^-2")));
    }
    let shifted_mu = w - M3::identity() * mu;
    let (s, _) = singular_triples(&shifted_mu);
    if s[1] > 1e-7 * s[0].max(w.norm() * 1e-12) {
        return Err(ForgeError::Hypothesis(format!("ρ(ω^q) - mu has rank 2 (second singular value {:e})", s[1])));
    }
    // Rows of ρ(ω^q) - mu all annihilate P0.
    let row = (0..3).map(|r| shifted_mu.row(r).transpose()).max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
    let (_, v) = singular_triples(&(w - M3::identity() * nu));
    let fail = || ForgeError::Hypothesis("degenerate eigen-data for ρ(ω^q)".into());
    Ok(OmegaFrame {
        mu,
        plane: PlaneR3::from_normal(row).ok_or_else(fail)?,
        line: ProjPoint::new(v[2]).ok_or_else(fail)?,
    })
}

/// Which invariant plane of `ρ(a)` contains `L0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidenceSide {
    CenterUnstable,
    CenterStable,
}

impl IncidenceSide {
    fn sign(self) -> i64 {
        match self {
            IncidenceSide::CenterUnstable => 1,
            IncidenceSide::CenterStable => -1,
        }
    }
}

const SIDE_TOL: f64 = 1e-9;

fn incidence_side(a: &M3, line: &ProjPoint) -> Result<IncidenceSide> {
    let es = eigen_structure_f64(a, None)?;
    let (du, ds) = (es.e_cu.distance_to_line(line), es.e_cs.distance_to_line(line));
    if du <= SIDE_TOL && du <= ds {
        Ok(IncidenceSide::CenterUnstable)
    } else if ds <= SIDE_TOL {
        Ok(IncidenceSide::CenterStable)
    } else {
        Err(ForgeError::Hypothesis(format!(
            "L0 lies in neither invariant plane of ρ(a) (distances {du:e}, {ds:e})"
        )))
    }
}

fn rel_diff(x: &M3, y: &M3) -> f64 {
    (x - y).norm() / y.norm()
}

/// `ρ(b)` solving `ρ(a)^m ρ(b)^n = Ω`.
fn compensate(a: &M3, omega: &M3, m: u32, n: u32) -> Result<M3> {
    let target = power_f64(a, -(m as i64))? * omega;
    if n == 1 {
        Ok(target)
    } else {
        nth_root_f64(&target, n, None)
    }
}

fn check_generators(rho: &FloatRepresentation, a: usize, b: usize, m: u32, n: u32) -> Result<()> {
    let rank = rho.rank();
    if a == 0 || b == 0 || a > rank || b > rank || a == b {
        return invalid(format!("generators a={a}, b={b} must be distinct indices in 1..={rank}"));
    }
    if m == 0 || n == 0 {
        return invalid("exponents m, n must be positive");
    }
    for (i, name) in [(a, "a"), (b, "b")] {
        if !is_loxodromic_f64(&rho.images[i - 1], 1e-9) {
            return Err(ForgeError::Hypothesis(format!("ρ({name}) is not loxodromic")));
        }
    }
    Ok(())
}

/// Result of pre-perturbing `ρ(a)` into general position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub rho: FloatRepresentation,
    pub changed: bool,
    pub side: IncidenceSide,
    /// `|ρ'(a) - ρ(a)| / |ρ(a)|`.
    pub displacement: f64,
    /// Sine of the angle between `E^c(ρ'(a))` and `L0`.
    pub center_margin: f64,
    /// Distance from `E^s(ρ'(a))` to `P0`.
    pub stable_margin: f64,
    pub omega_drift: f64,
}

/// Moves `E^c(ρ(a))` off `L0` and `E^s(ρ(a))` off `P0`, keeping the plane
/// of `ρ(a)` that contains `L0`, and recomputes `ρ(b)` so that
/// `ρ(a^m b^n)` is unchanged.
pub fn genericity_adjust(
    rho: &FloatRepresentation,
    a: usize,
    b: usize,
    m: u32,
    n: u32,
    q: u32,
    eta: f64,
) -> Result<GenericityReport> {
    check_generators(rho, a, b, m, n)?;
    if !(eta > 0.0 && eta < 0.5) {
        return invalid("eta must lie in (0, 0.5)");
    }
    let am = rho.images[a - 1];
    let omega = rho.evaluate(&omega_word(a, b, m, n))?;
    let frame = omega_frame(&power_f64(&omega, q as i64)?)?;
    let side = incidence_side(&am, &frame.line)?;
    let es = eigen_structure_f64(&am, None)?;
    let (l0, n0) = (frame.line.vec(), frame.plane.normal.vec());
    let margins = |es: &crate::exactlinalg::EigenStructure| {
        (es.e_c.distance(&frame.line), frame.plane.distance_to_line(&es.e_s))
    };
    let (c0, s0) = margins(&es);
    let floor = eta / 10.0;
    if c0 >= floor && s0 >= floor {
        return Ok(GenericityReport {
            rho: rho.clone(),
            changed: false,
            side,
            displacement: 0.0,
            center_margin: c0,
            stable_margin: s0,
            omega_drift: 0.0,
        });
    }
    let host = match side {
        IncidenceSide::CenterUnstable => es.e_cu.normal.vec(),
        IncidenceSide::CenterStable => es.e_cs.normal.vec(),
    };
    let center_push = host.cross(&l0).normalize();
    let stable_push = match side {
        IncidenceSide::CenterUnstable => n0,
        IncidenceSide::CenterStable => {
            let w = n0 - host * host.dot(&n0);
            if w.norm() < 1e-9 {
                return Err(ForgeError::Hypothesis("E^cs(ρ(a)) coincides with P0".into()));
            }
            w.normalize()
        }
    };
    let mut step = eta;
    for _ in 0..4 {
        let ec = if c0 < floor { es.e_c.vec() + center_push * step } else { es.e_c.vec() };
        let esv = if s0 < floor { es.e_s.vec() + stable_push * step } else { es.e_s.vec() };
        let a2 = from_eigen([es.e_u.vec(), ec, esv], es.values)?;
        let displacement = rel_diff(&a2, &am);
        if displacement > eta && step > eta / 4.0 {
            step /= 2.0;
            continue;
        }
        let es2 = eigen_structure_f64(&a2, None)?;
        let (c1, s1) = margins(&es2);
        if c1 < floor || s1 < floor || displacement > eta {
            break;
        }
        let b2 = compensate(&a2, &omega, m, n)?;
        let mut images = rho.images.clone();
        images[a - 1] = a2;
        images[b - 1] = b2;
        let out = FloatRepresentation { images };
        let drift = rel_diff(&out.evaluate(&omega_word(a, b, m, n))?, &omega);
        return Ok(GenericityReport {
            rho: out,
            changed: true,
            side,
            displacement,
            center_margin: c1,
            stable_margin: s1,
            omega_drift: drift,
        });
    }
    Err(ForgeError::SearchExhausted(format!("margins of at least {floor:e} not obtainable within eta = {eta}")))
}

/// One-parameter family `ρ_t` rotating one eigenline of `ρ_t(a)` across
/// the invariant plane of `ρ(a)` that contains `L0`, with `ρ_t(b)` solving
/// `ρ_t(a)^m ρ_t(b)^n = ρ(ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationPath {
    pub base: FloatRepresentation,
    pub a: usize,
    pub b: usize,
    pub m: u32,
    pub n: u32,
    pub q: u32,
    pub side: IncidenceSide,
    pub frame: OmegaFrame,
    pub eigenvalues: [f64; 3],
    /// The rotating line at `t = 0` (`E^u` or `E^s`) and the unit direction
    /// it turns towards.
    pub moving: [f64; 3],
    pub toward: [f64; 3],
    pub center: [f64; 3],
    /// The eigenline left fixed besides `E^c`.
    pub other: [f64; 3],
    #[serde(with = "serde_m3")]
    pub omega: M3,
    pub t_minus: f64,
    pub t_plus: f64,
    pub omega_drift: f64,
    /// Whether the requested amplitude had to be reduced.
    pub shrunk: bool,
}

fn v3(a: &[f64; 3]) -> V3 {
    V3::new(a[0], a[1], a[2])
}

fn arr(v: &V3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

impl DeformationPath {
    pub fn moving_line(&self, t: f64) -> V3 {
        v3(&self.moving) * t.cos() + v3(&self.toward) * t.sin()
    }

    pub fn a_at(&self, t: f64) -> Result<M3> {
        let mv = self.moving_line(t);
        let lines = match self.side {
            IncidenceSide::CenterUnstable => [mv, v3(&self.center), v3(&self.other)],
            IncidenceSide::CenterStable => [v3(&self.other), v3(&self.center), mv],
        };
        from_eigen(lines, self.eigenvalues)
    }

    pub fn b_at(&self, t: f64) -> Result<M3> {
        compensate(&self.a_at(t)?, &self.omega, self.m, self.n)
    }

    pub fn images_at(&self, t: f64) -> Result<FloatRepresentation> {
        let mut images = self.base.images.clone();
        images[self.a - 1] = self.a_at(t)?;
        images[self.b - 1] = self.b_at(t)?;
        Ok(FloatRepresentation { images })
    }

    /// Unit normal of the moving invariant plane `E^cu(ρ_t(a))` (or
    /// `E^cs`), oriented continuously in `t`.
    pub fn plane_normal(&self, t: f64) -> V3 {
        self.moving_line(t).cross(&v3(&self.center)).normalize()
    }

    /// `θ_t(v)` for the unit vector `v` of `L0`.
    pub fn theta(&self, t: f64) -> f64 {
        self.plane_normal(t).dot(&self.frame.line.vec())
    }

    /// `θ_{t,p}(v)`, whose kernel is `ρ_t(a)^{±p}·P0` (sign chosen by the
    /// side), oriented like `θ_t`.
    pub fn theta_p(&self, t: f64, p: u32) -> Result<f64> {
        let e = self.side.sign() * p as i64;
        let ap = power_f64(&self.a_at(t)?, e)?;
        let mi = ap.try_inverse().ok_or(ForgeError::Singular)?;
        let mut nrm = mi.transpose() * self.frame.plane.normal.vec();
        nrm /= nrm.norm();
        if nrm.dot(&self.plane_normal(t)) < 0.0 {
            nrm = -nrm;
        }
        Ok(nrm.dot(&self.frame.line.vec()))
    }

    /// Signed exponent of `a` in the witness word for search index `p`.
    pub fn exponent(&self, p: u32) -> i64 {
        self.side.sign() * p as i64
    }

    fn samples(&self, t_minus: f64, t_plus: f64) -> impl Iterator<Item = f64> {
        (0..PATH_SAMPLES).map(move |i| t_minus + (t_plus - t_minus) * i as f64 / (PATH_SAMPLES - 1) as f64)
    }

    fn check_domain(&self, amp: f64) -> Result<f64> {
        let word = omega_word(self.a, self.b, self.m, self.n);
        let mut drift: f64 = 0.0;
        for t in self.samples(-amp, amp) {
            let at = self.a_at(t)?;
            let bt = self.b_at(t)?;
            if !is_loxodromic_f64(&at, 1e-9) || !is_loxodromic_f64(&bt, 1e-9) {
                return Err(ForgeError::NotLoxodromic);
            }
            let mut images = self.base.images.clone();
            images[self.a - 1] = at;
            images[self.b - 1] = bt;
            drift = drift.max(rel_diff(&FloatRepresentation { images }.evaluate(&word)?, &self.omega));
        }
        Ok(drift)
    }
}

/// Builds the compensated path on `[-amplitude, amplitude]`, halving the
/// amplitude while loxodromy fails at a sample.
pub fn compensated_path(
    rho: &FloatRepresentation,
    a: usize,
    b: usize,
    m: u32,
    n: u32,
    q: u32,
    amplitude: f64,
) -> Result<DeformationPath> {
    check_generators(rho, a, b, m, n)?;
    if !(amplitude > 0.0 && amplitude < std::f64::consts::FRAC_PI_2) {
        return invalid("amplitude must lie in (0, π/2)");
    }
    let am = rho.images[a - 1];
    let omega = rho.evaluate(&omega_word(a, b, m, n))?;
    let frame = omega_frame(&power_f64(&omega, q as i64)?)?;
    let side = incidence_side(&am, &frame.line)?;
    let es = eigen_structure_f64(&am, None)?;
    let (moving, other) = match side {
        IncidenceSide::CenterUnstable => (es.e_u.vec(), es.e_s.vec()),
        IncidenceSide::CenterStable => (es.e_s.vec(), es.e_u.vec()),
    };
    let toward = (other - moving * moving.dot(&other)).normalize();
    // Stay well before the moving line meets the fixed one.
    let reach = 0.5 * moving.dot(&other).abs().min(1.0).acos();
    let mut path = DeformationPath {
        base: rho.clone(),
        a,
        b,
        m,
        n,
        q,
        side,
        frame,
        eigenvalues: es.values,
        moving: arr(&moving),
        toward: arr(&toward),
        center: arr(&es.e_c.vec()),
        other: arr(&other),
        omega,
        t_minus: -amplitude,
        t_plus: amplitude,
        omega_drift: 0.0,
        shrunk: false,
    };
    if rel_diff(&path.b_at(0.0)?, &rho.images[b - 1]) > 1e-8 {
        return Err(ForgeError::Hypothesis("the real n-th root does not recover ρ(b)".into()));
    }
    let mut amp = amplitude.min(reach);
    for _ in 0..30 {
        match path.check_domain(amp) {
            Ok(drift) => {
                if drift > DRIFT_TOL {
                    return Err(ForgeError::Hypothesis(format!("ρ_t(ω) drifts by {drift:e}")));
                }
                path.t_minus = -amp;
                path.t_plus = amp;
                path.omega_drift = drift;
                path.shrunk = amp < amplitude;
                return Ok(path);
            }
            Err(ForgeError::NotLoxodromic) | Err(ForgeError::Invalid(_)) => amp /= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(ForgeError::NotLoxodromic)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointValues {
    pub p: u32,
    pub at_minus: f64,
    pub at_plus: f64,
}

/// A parameter `t0` with `θ_{t0,p}(v) ≈ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incidence {
    pub t0: f64,
    pub p: u32,
    /// Signed exponent of `a` in the witness word.
    pub exponent: i64,
    pub theta: f64,
    pub steps: usize,
    /// Smallest `|θ|` seen after each bisection step.
    pub trace: Vec<f64>,
    pub endpoints: Vec<EndpointValues>,
}

/// Least `p <= p_max` for which `θ_{t,p}(v)` changes sign on the path
/// domain, then bisection to `|θ| <= tol`.
pub fn solve_incidence(path: &DeformationPath, p_max: u32, tol: f64) -> Result<Incidence> {
    if !(tol > 0.0 && tol.is_finite()) {
        return invalid("tolerance must be positive");
    }
    if p_max == 0 {
        return invalid("p_max must be positive");
    }
    let (lo, hi) = (path.t_minus, path.t_plus);
    let endpoints = (1..=p_max)
        .into_par_iter()
        .map(|p| Ok(EndpointValues { p, at_minus: path.theta_p(lo, p)?, at_plus: path.theta_p(hi, p)? }))
        .collect::<Result<Vec<_>>>()?;
    let Some(hit) = endpoints.iter().find(|e| e.at_minus * e.at_plus < 0.0) else {
        let table: Vec<String> =
            endpoints.iter().map(|e| format!("p={}: {:+.3e} / {:+.3e}", e.p, e.at_minus, e.at_plus)).collect();
        return Err(ForgeError::SearchExhausted(format!("no sign change up to p = {p_max} ({})", table.join(", "))));
    };
    let p = hit.p;
    let (mut a, mut b, mut fa) = (lo, hi, hit.at_minus);
    let (mut best_t, mut best) = if hit.at_minus.abs() <= hit.at_plus.abs() { (lo, hit.at_minus) } else { (hi, hit.at_plus) };
    let mut trace = Vec::new();
    for step in 1..=BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        let fm = path.theta_p(mid, p)?;
        if fm.abs() < best.abs() {
            best = fm;
            best_t = mid;
        }
        trace.push(best.abs());
        if best.abs() <= tol {
            return Ok(Incidence { t0: best_t, p, exponent: path.exponent(p), theta: best, steps: step, trace, endpoints });
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Err(ForgeError::SearchExhausted(format!(
        "bisection for p = {p} stalled at |θ| = {:e} after {BISECTION_STEPS} steps",
        best.abs()
    )))
}

/// Residual data of a candidate commutator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorDiagnostics {
    pub word: Word,
    #[serde(with = "serde_m3")]
    pub matrix: M3,
    pub residual: f64,
    pub charpoly_distance: f64,
}

/// Largest relative deviation of the characteristic polynomial of `m`
/// from `(x - 1)^3`.
pub fn charpoly_distance(m: &M3) -> f64 {
    let s = m.norm().max(1.0);
    let tr = m.trace();
    let c1 = 0.5 * (tr * tr - (m * m).trace());
    let det = m.determinant();
    ((tr - 3.0).abs() / s).max((c1 - 3.0).abs() / (s * s)).max((det - 1.0).abs() / (s * s * s))
}

fn diagnose(word: Word, m: M3) -> CommutatorDiagnostics {
    CommutatorDiagnostics { residual: unipotent_residual(&m), charpoly_distance: charpoly_distance(&m), matrix: m, word }
}

/// The commutator `[ω^q, a^p ω^q a^-p]` evaluated on `ρ_t`, whatever its
/// residual.
pub fn commutator_diagnostics(path: &DeformationPath, t: f64, p: u32) -> Result<CommutatorDiagnostics> {
    let omega = omega_word(path.a, path.b, path.m, path.n);
    let word = incidence_commutator(path.a, &omega, path.q, path.exponent(p));
    let m = path.images_at(t)?.evaluate(&word)?;
    Ok(diagnose(word, m))
}

/// How a witness was produced, with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "snake_case")]
pub enum WitnessConstruction {
    Incidence {
        a: usize,
        b: usize,
        m: u32,
        n: u32,
        omega: Word,
        q: u32,
        p: i64,
        t0: f64,
        t_minus: f64,
        t_plus: f64,
    },
    Destabilized {
        gamma: Word,
        q: u32,
        /// Parameter `t` of the rational rotation `((1-t^2), 2t)/(1+t^2)`
        /// composed with the `P0`-block of `ρ(c_1)`.
        rotation_parameter: String,
        /// Factor `σ` multiplying that block; `L0` is rescaled by `σ^-2`.
        modulus_factor: String,
        rotation_offset: f64,
        approach_distance: f64,
        c1_change: f64,
        c3_change: f64,
        words_searched: u64,
        n_max: usize,
    },
}

/// A word whose image under a perturbed representation is unipotent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnipotentWitness {
    pub word: Word,
    pub construction: WitnessConstruction,
    pub images: FloatRepresentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_images: Option<Representation>,
    #[serde(with = "serde_m3")]
    pub matrix: M3,
    pub residual: f64,
    pub charpoly_distance: f64,
    /// Exact test on the rationalized matrix, when every entry rationalizes.
    pub exact_unipotent: Option<bool>,
}

fn rationalized_unipotent(m: &M3) -> Option<bool> {
    let mut r = RatMat3::zero();
    for i in 0..3 {
        for j in 0..3 {
            r.m[i][j] = rationalize(m[(i, j)], 1e-12, 1_000_000)?;
        }
    }
    Some(is_unipotent(&r))
}

pub fn unipotent_commutator(path: &DeformationPath, incidence: &Incidence) -> Result<UnipotentWitness> {
    let d = commutator_diagnostics(path, incidence.t0, incidence.p)?;
    if !(d.residual <= WITNESS_TOL) {
        return Err(ForgeError::Hypothesis(format!(
            "commutator residual {:e} above {WITNESS_TOL:e} (charpoly distance {:e})",
            d.residual, d.charpoly_distance
        )));
    }
    Ok(UnipotentWitness {
        construction: WitnessConstruction::Incidence {
            a: path.a,
            b: path.b,
            m: path.m,
            n: path.n,
            omega: omega_word(path.a, path.b, path.m, path.n),
            q: path.q,
            p: incidence.exponent,
            t0: incidence.t0,
            t_minus: path.t_minus,
            t_plus: path.t_plus,
        },
        images: path.images_at(incidence.t0)?,
        exact_images: None,
        exact_unipotent: rationalized_unipotent(&d.matrix),
        word: d.word,
        matrix: d.matrix,
        residual: d.residual,
        charpoly_distance: d.charpoly_distance,
    })
}

/// Rank-two instance with `ω = ab`: `ρ(ab) = diag(2, 2, 1/4)`, so
/// `P0 = <e1, e2>` and `L0 = <e3>`, and `ρ(a)` has eigenlines
/// `(1,-2,-1), (1,-2,1), (2,1,1)` with eigenvalues `4, 1, 1/4`, putting `L0`
/// in `E^cu(ρ(a))` while `E^cu(ρ(a)) ∩ P0` is not an eigenline.
pub fn planted_incidence_instance() -> Representation {
    let s = RatMat3::from_i64([[1, 1, 2], [-2, -2, 1], [-1, 1, 1]]);
    let d = RatMat3::diag([rat(4, 1), rat(1, 1), rat(1, 4)]);
    let a = s.mul(&d).mul(&s.inv().expect("invertible"));
    let w = RatMat3::diag([rat(2, 1), rat(2, 1), rat(1, 4)]);
    let b = a.inv().expect("invertible").mul(&w);
    Representation::new(vec![a, b]).expect("rank two")
}

/// Everything computed once per `ρ_k` for the destabilization search.
struct RhoKData {
    c1: RatMat3,
    /// Columns: a basis of `P0` in which the `c_1` block is conformal, then `L0`.
    basis: RatMat3,
    plane_normal: [Rat; 3],
    q: u32,
    target_normal: [Rat; 3],
    complement: [Rat; 3],
    c2: RatMat3,
    c3: RatMat3,
}

fn nonzero_row(m: &RatMat3) -> Option<[Rat; 3]> {
    m.m.iter().find(|r| r.iter().any(|x| !x.is_zero())).cloned()
}

fn vec_f(v: &[Rat; 3]) -> V3 {
    V3::new(to_f64(&v[0]), to_f64(&v[1]), to_f64(&v[2]))
}

fn rho_k_data(rho: &Representation, q: Option<u32>) -> Result<RhoKData> {
    let c1 = rho.images()[0].clone();
    let (_, mu1, pw) = scalar_power_on_plane(&c1, 64)
        .map_err(|_| ForgeError::Hypothesis("no power of ρ(c_1) is scalar on a plane".into()))?;
    let plane_normal = nonzero_row(&shifted(&pw, &mu1)).ok_or(ForgeError::Singular)?;
    let line_ev = (&mu1 * &mu1).recip();
    let line = kernel_line(&shifted(&pw, &line_ev)).ok_or(ForgeError::Singular)?;
    // Eigenvalue of c_1 on L0, then trace and determinant of the P0 block.
    let c1l = c1.apply(&line);
    let k = (0..3).find(|&i| !line[i].is_zero()).unwrap();
    let lam = &c1l[k] / &line[k];
    let tau = c1.trace() - &lam;
    let delta = c1.det() / &lam;
    let w2 = &delta - &tau * &tau / rat(4, 1);
    let w = rational_sqrt(&w2).filter(|w| w.is_positive()).ok_or_else(|| {
        ForgeError::Hypothesis(format!("the P0-block of ρ(c_1) is not conformal over Q (w^2 = {})", fmt_rat(&w2)))
    })?;
    let p1 = (0..3)
        .map(|i| {
            let mut e = [Rat::zero(), Rat::zero(), Rat::zero()];
            e[i] = Rat::one();
            crate::pingpong::cross_r(&plane_normal, &e)
        })
        .find(|v| v.iter().any(|x| !x.is_zero()))
        .unwrap();
    let cp1 = c1.apply(&p1);
    let half = &tau / rat(2, 1);
    let p2: [Rat; 3] = std::array::from_fn(|i| (&cp1[i] - &half * &p1[i]) / &w);
    let basis = RatMat3::from_fn(|i, j| match j {
        0 => p1[i].clone(),
        1 => p2[i].clone(),
        _ => line[i].clone(),
    });
    let c3 = &rho.images()[2];
    let (q, mu3, c3q) = match q {
        Some(0) => return invalid("q must be positive"),
        Some(q) => {
            let c3q = c3.pow(q as i64)?;
            let (m, mu, _) = scalar_power_on_plane(&c3q, 1)
                .map_err(|_| ForgeError::Hypothesis(format!("ρ(c_3)^{q} is not scalar on a plane")))?;
            debug_assert_eq!(m, 1);
            (q, mu, c3q)
        }
        None => scalar_power_on_plane(c3, 64)
            .map_err(|_| ForgeError::Hypothesis("no power of ρ(c_3) is scalar on a plane".into()))?,
    };
    let target_normal = nonzero_row(&shifted(&c3q, &mu3)).ok_or(ForgeError::Singular)?;
    let complement = kernel_line(&shifted(&c3q, &(&mu3 * &mu3).recip())).ok_or(ForgeError::Singular)?;
    Ok(RhoKData {
        c1,
        basis,
        plane_normal,
        q,
        target_normal,
        complement,
        c2: rho.images()[1].clone(),
        c3: c3.clone(),
    })
}

fn rational_rotation(t: &Rat, sigma: &Rat) -> RatMat3 {
    let den = Rat::one() + t * t;
    let c = sigma * (Rat::one() - t * t) / &den;
    let s = sigma * (t + t) / &den;
    RatMat3 {
        m: [
            [c.clone(), -s.clone(), Rat::zero()],
            [s, c, Rat::zero()],
            [Rat::zero(), Rat::zero(), (sigma * sigma).recip()],
        ],
    }
}

/// `diag(e^x R(phi), e^-2x)`.
fn float_twist(x: f64, phi: f64) -> M3 {
    let (s, c) = phi.sin_cos();
    let e = x.exp();
    M3::new(e * c, -e * s, 0.0, e * s, e * c, 0.0, 0.0, 0.0, (-2.0 * x).exp())
}

fn normal_pair(m: &M3) -> Result<[M3; 2]> {
    let mi = m.try_inverse().ok_or(ForgeError::Singular)?;
    Ok([mi.transpose(), m.transpose()])
}

/// Grid of `(log modulus factor, rotation offset)` parameters.
const LOG_MODULUS_WINDOW: f64 = 0.5;
const GRID_X: usize = 12;
const GRID_PHI: usize = 24;

fn grid() -> Vec<(f64, f64)> {
    let mut g = Vec::with_capacity(GRID_X * GRID_PHI);
    for i in 0..GRID_X {
        let x = -LOG_MODULUS_WINDOW + 2.0 * LOG_MODULUS_WINDOW * (i as f64 + 0.5) / GRID_X as f64;
        for j in 0..GRID_PHI {
            g.push((x, -ROTATION_WINDOW + 2.0 * ROTATION_WINDOW * (j as f64 + 0.5) / GRID_PHI as f64));
        }
    }
    g
}

fn tangent_frame(t: &V3) -> [V3; 2] {
    let helper = if t[0].abs() < 0.9 { V3::x() } else { V3::y() };
    let e0 = t.cross(&helper).normalize();
    [e0, t.cross(&e0)]
}

/// Float data for evaluating `γ·P0` under the twisted `c_1`.
struct Evaluator {
    c1: M3,
    basis: M3,
    basis_inv: M3,
    c2: [M3; 2],
    start: V3,
    target: V3,
}

impl Evaluator {
    fn c1_at(&self, x: f64, phi: f64) -> M3 {
        self.c1 * self.basis * float_twist(x, phi) * self.basis_inv
    }

    /// Relative change of the `c_1`-image under the twist.
    fn c1_change(&self, p: [f64; 2]) -> f64 {
        (self.c1_at(p[0], p[1]) - self.c1).norm() / self.c1.norm()
    }

    fn normal(&self, letters: &[i32], x: f64, phi: f64) -> Option<V3> {
        let [c1n, c1ni] = normal_pair(&self.c1_at(x, phi)).ok()?;
        let mut v = self.start;
        for &l in letters.iter().rev() {
            v = match l {
                1 => c1n * v,
                -1 => c1ni * v,
                2 => self.c2[0] * v,
                _ => self.c2[1] * v,
            };
            v /= v.norm();
        }
        Some(v)
    }

    /// Chordal distance between `γ·P0` and the target plane.
    fn distance(&self, letters: &[i32], p: [f64; 2]) -> Option<f64> {
        Some(self.normal(letters, p[0], p[1])?.cross(&self.target).norm())
    }

    /// Tangent coordinates of the normal of `γ·P0` around the target.
    fn residual(&self, letters: &[i32], p: [f64; 2]) -> Option<[f64; 2]> {
        let mut v = self.normal(letters, p[0], p[1])?;
        if v.dot(&self.target) < 0.0 {
            v = -v;
        }
        let [e0, e1] = tangent_frame(&self.target);
        Some([v.dot(&e0), v.dot(&e1)])
    }

    fn in_domain(p: [f64; 2]) -> bool {
        p[0].abs() <= LOG_MODULUS_WINDOW && p[1].abs() <= ROTATION_WINDOW
    }

    /// Levenberg-Marquardt minimization of the residual; returns the final
    /// parameters and residual norm.
    fn refine(&self, letters: &[i32], mut p: [f64; 2]) -> Option<([f64; 2], f64)> {
        let norm = |r: [f64; 2]| r[0].hypot(r[1]);
        let mut r = self.residual(letters, p)?;
        let mut mu = 1e-3;
        for _ in 0..200 {
            if norm(r) <= 1e-15 {
                break;
            }
            let h = 1e-7;
            let mut j = [[0.0; 2]; 2];
            for k in 0..2 {
                let (mut a, mut b) = (p, p);
                a[k] += h;
                b[k] -= h;
                let (ra, rb) = (self.residual(letters, a)?, self.residual(letters, b)?);
                j[0][k] = (ra[0] - rb[0]) / (2.0 * h);
                j[1][k] = (ra[1] - rb[1]) / (2.0 * h);
            }
            // Normal equations (J^T J + mu diag) d = J^T r.
            let jtj = [
                [j[0][0] * j[0][0] + j[1][0] * j[1][0], j[0][0] * j[0][1] + j[1][0] * j[1][1]],
                [j[0][0] * j[0][1] + j[1][0] * j[1][1], j[0][1] * j[0][1] + j[1][1] * j[1][1]],
            ];
            let jtr = [j[0][0] * r[0] + j[1][0] * r[1], j[0][1] * r[0] + j[1][1] * r[1]];
            let mut improved = false;
            for _ in 0..40 {
                let m = [[jtj[0][0] * (1.0 + mu), jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + mu)]];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() > 0.0 {
                    let d = [(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det, (m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det];
                    let cand = [p[0] - d[0], p[1] - d[1]];
                    if let Some(rc) = self.residual(letters, cand).filter(|_| Self::in_domain(cand)) {
                        if norm(rc) < norm(r) {
                            p = cand;
                            r = rc;
                            mu = (mu / 3.0).max(1e-12);
                            improved = true;
                            break;
                        }
                    }
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        Some((p, norm(r)))
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    /// Letters in word order (leftmost first).
    letters: Vec<i32>,
    sample: usize,
    distance: f64,
}

fn candidate_key(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.distance.partial_cmp(&b.distance).unwrap().then_with(|| a.letters.cmp(&b.letters))
}

/// Plane-normal action of the letters at every grid parameter.
struct SearchSpace {
    c1: Vec<[M3; 2]>,
    c2: [M3; 2],
    target: V3,
    n_max: usize,
}

impl SearchSpace {
    fn letter(&self, sample: usize, l: i32) -> &M3 {
        match l {
            1 => &self.c1[sample][0],
            -1 => &self.c1[sample][1],
            2 => &self.c2[0],
            _ => &self.c2[1],
        }
    }

    fn step(&self, state: &[V3], l: i32) -> Vec<V3> {
        state
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w = self.letter(i, l) * v;
                w / w.norm()
            })
            .collect()
    }

    /// Keeps the best grid sample of the node; `rev_letters` lists letters
    /// in the order they act (rightmost first).
    fn record(&self, rev_letters: &[i32], state: &[V3], best: &mut [Vec<Candidate>]) {
        let (sample, distance) = state
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.cross(&self.target).norm()))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let bucket = &mut best[rev_letters.len()];
        bucket.push(Candidate { letters: rev_letters.iter().rev().copied().collect(), sample, distance });
        if bucket.len() > 4 * CANDIDATES_PER_LENGTH {
            bucket.sort_by(candidate_key);
            bucket.truncate(CANDIDATES_PER_LENGTH);
        }
    }

    /// Depth-first extension on the left.
    fn walk(&self, rev_letters: &mut Vec<i32>, state: &[V3], best: &mut [Vec<Candidate>], visited: &mut u64) {
        *visited += 1;
        self.record(rev_letters, state, best);
        if rev_letters.len() == self.n_max {
            return;
        }
        let last = *rev_letters.last().unwrap();
        for l in [-2, -1, 1, 2] {
            if l == -last {
                continue;
            }
            let next = self.step(state, l);
            rev_letters.push(l);
            self.walk(rev_letters, &next, best, visited);
            rev_letters.pop();
        }
    }
}

/// A word `γ` and twist parameters putting `γ·P0` on the target plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneApproach {
    pub gamma: Word,
    /// Logarithm of the factor applied to the modulus of the `P0`-block.
    pub log_modulus: f64,
    pub rotation_offset: f64,
    pub words_searched: u64,
}

/// Searches words `γ ∈ <c_1, c_2>` of length `<= n_max` whose rightmost
/// letter is `c_2^{±1}`. Every word is sampled on a grid of twists of
/// `ρ(c_1)`; the best `CANDIDATES_PER_LENGTH` words per length are refined
/// by Levenberg-Marquardt towards `γ·P0 = P̂`. Among the words landing well
/// within `APPROACH_TOL`, the one whose twist changes `ρ(c_1)` least wins, so
/// the reported perturbation can only shrink as `n_max` grows.
fn approach_search(data: &RhoKData, n_max: usize) -> Result<PlaneApproach> {
    let target = vec_f(&data.target_normal).normalize();
    let ev = Evaluator {
        c1: data.c1.to_f64(),
        basis: data.basis.to_f64(),
        basis_inv: data.basis.inv()?.to_f64(),
        c2: normal_pair(&data.c2.to_f64())?,
        start: vec_f(&data.plane_normal).normalize(),
        target,
    };
    let params = grid();
    let c1 = params.iter().map(|&(x, phi)| normal_pair(&ev.c1_at(x, phi))).collect::<Result<Vec<_>>>()?;
    let space = SearchSpace { c1, c2: ev.c2, target, n_max };
    let root_state = vec![ev.start; params.len()];

    // Words of length one are recorded directly; longer ones are walked
    // from their two rightmost letters, one task per pair.
    let mut seeds = Vec::new();
    for r in [-2, 2] {
        seeds.push(vec![r]);
        if n_max >= 2 {
            seeds.extend([-2, -1, 1, 2].into_iter().filter(|&l| l != -r).map(|l| vec![r, l]));
        }
    }
    let results: Vec<(Vec<Vec<Candidate>>, u64)> = seeds
        .par_iter()
        .map(|seed| {
            let mut best = vec![Vec::new(); n_max + 1];
            let mut visited = 0;
            let mut state = root_state.clone();
            for &l in seed {
                state = space.step(&state, l);
            }
            let mut rev = seed.clone();
            if seed.len() == 1 {
                visited += 1;
                space.record(&rev, &state, &mut best);
            } else {
                space.walk(&mut rev, &state, &mut best, &mut visited);
            }
            (best, visited)
        })
        .collect();
    let mut per_length: Vec<Vec<Candidate>> = vec![Vec::new(); n_max + 1];
    let mut words_searched = 0;
    for (best, visited) in results {
        words_searched += visited;
        for (len, mut c) in best.into_iter().enumerate() {
            per_length[len].append(&mut c);
        }
    }
    let mut pool = Vec::new();
    for mut bucket in per_length {
        bucket.sort_by(candidate_key);
        bucket.truncate(CANDIDATES_PER_LENGTH);
        pool.extend(bucket);
    }
    let refined: Vec<(f64, [f64; 2], Vec<i32>)> = pool
        .par_iter()
        .filter_map(|c| {
            let (x, phi) = params[c.sample];
            let (p, _) = ev.refine(&c.letters, [x, phi])?;
            Some((ev.distance(&c.letters, p)?, p, c.letters.clone()))
        })
        .collect();
    let closest = refined.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let (_, p, letters) = refined
        .into_iter()
        .filter(|(d, p, _)| *d <= 0.1 * APPROACH_TOL && p[1].abs() >= MIN_ROTATION)
        .map(|(_, p, w)| (ev.c1_change(p), p, w))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.2.cmp(&b.2)))
        .ok_or_else(|| {
            ForgeError::SearchExhausted(format!(
                "closest approach {closest:e} above {APPROACH_TOL:e} with words up to length {n_max} ({words_searched} searched)"
            ))
        })?;
    Ok(PlaneApproach { gamma: Word::from_reduced(letters), log_modulus: p[0], rotation_offset: p[1], words_searched })
}

/// Shear `I + l a^T` fixing the line `l` pointwise and carrying the plane
/// with normal `from` onto the plane with normal `to`.
fn plane_shear(l: &[Rat; 3], from: &[Rat; 3], to: &[Rat; 3]) -> Result<RatMat3> {
    let (tl, fl) = (dot_r(to, l), dot_r(from, l));
    if tl.is_zero() || fl.is_zero() {
        return Err(ForgeError::Hypothesis("complement line lies in one of the planes".into()));
    }
    let alpha: [Rat; 3] = std::array::from_fn(|i| &from[i] / &fl - &to[i] / &tl);
    Ok(RatMat3::from_fn(|i, j| {
        let base = if i == j { Rat::one() } else { Rat::zero() };
        base + &l[i] * &alpha[j]
    }))
}

fn rel_change(new: &RatMat3, old: &RatMat3) -> f64 {
    let (a, b) = (new.to_f64(), old.to_f64());
    (a - b).norm() / b.norm()
}

/// Two-step destabilization of `ρ_k` (rank `k >= 3`, generators
/// `c_1 = a, c_2 = b^2, c_3 = b a^p b^-1, ...`):
///
/// 1. the `P0`-block of `ρ(c_1)` is composed with a rational rotation of
///    irrational angle, so `ρ'(c_1)` acts minimally on the directions of `P0`;
/// 2. a word `γ ∈ <c_1, c_2>` (together with the rotation angle) is chosen so
///    that `ρ'(γ)·P0` is close to the plane `P̂` on which `ρ(c_3^q)` is
///    scalar, and `ρ(c_3)` is conjugated by the shear fixing the other
///    eigenline of `ρ(c_3^q)` and carrying `P̂` onto `ρ'(γ)·P0`.
///
/// Then `[c_3^q, γ c_1 γ^-1]` is unipotent; this is verified exactly.
pub fn rho_k_destabilize(rho: &Representation, q: Option<u32>, n_max: usize) -> Result<UnipotentWitness> {
    if rho.rank() < 3 {
        return invalid("the destabilization needs rank k >= 3");
    }
    if n_max == 0 {
        return invalid("n_max must be positive");
    }
    let data = rho_k_data(rho, q)?;
    let approach = approach_search(&data, n_max)?;
    let t_param = rationalize((approach.rotation_offset / 2.0).tan(), 1e-15, 1 << 40)
        .ok_or_else(|| ForgeError::SearchExhausted("rotation offset does not rationalize".into()))?;
    let sigma = rationalize(approach.log_modulus.exp(), 1e-15, 1 << 40)
        .ok_or_else(|| ForgeError::SearchExhausted("modulus factor does not rationalize".into()))?;
    if t_param.is_zero() || t_param.abs() == Rat::one() {
        return Err(ForgeError::SearchExhausted("rotation offset rationalized to a rational angle".into()));
    }
    let basis_inv = data.basis.inv()?;
    let c1_new = data.c1.mul(&data.basis).mul(&rational_rotation(&t_param, &sigma)).mul(&basis_inv);
    let mut images: Vec<RatMat3> = rho.images().to_vec();
    images[0] = c1_new.clone();
    let stage1 = Representation::new(images.clone())?;
    let g = stage1.evaluate(&approach.gamma)?;
    // Normals transform by the inverse transpose, i.e. by the transposed adjugate.
    let adj_t = g.adjugate().transpose();
    let reached = adj_t.apply(&data.plane_normal);
    let approach_distance = vec_f(&reached).normalize().cross(&vec_f(&data.target_normal).normalize()).norm();
    if !(approach_distance <= APPROACH_TOL) {
        return Err(ForgeError::SearchExhausted(format!(
            "closest approach {approach_distance:e} above {APPROACH_TOL:e} with words up to length {n_max} ({} searched)",
            approach.words_searched
        )));
    }
    let h = plane_shear(&data.complement, &data.target_normal, &reached)?;
    let c3_new = h.mul(&data.c3).mul(&h.inv()?);
    images[2] = c3_new.clone();
    let perturbed = Representation::new(images)?;
    let c1w = Word::letter(1);
    let conj = approach.gamma.concat(&c1w).concat(&approach.gamma.inverse());
    let word = commutator(&Word::letter(3).pow(data.q as i64), &conj);
    let m = perturbed.evaluate(&word)?;
    let exact = is_unipotent(&m);
    let d = m.sub(&RatMat3::identity());
    let cube = d.mul(&d).mul(&d);
    let (mf, scale) = m.to_f64_scaled();
    let (cf, cscale) = cube.to_f64_scaled();
    // |(M - I)^3| / |M|^3 with both norms carried in scaled form.
    let residual = if cube.is_zero() {
        0.0
    } else {
        cf.norm() / mf.norm().powi(3) * 2f64.powi((cscale - 3 * scale) as i32)
    };
    let matrix = m.to_f64();
    if !exact && !(residual <= WITNESS_TOL) {
        return Err(ForgeError::Hypothesis(format!("commutator residual {residual:e} above {WITNESS_TOL:e}")));
    }
    Ok(UnipotentWitness {
        word,
        construction: WitnessConstruction::Destabilized {
            gamma: approach.gamma.clone(),
            q: data.q,
            rotation_parameter: fmt_rat(&t_param),
            modulus_factor: fmt_rat(&sigma),
            rotation_offset: 2.0 * to_f64(&t_param).atan(),
            approach_distance,
            c1_change: rel_change(&c1_new, &data.c1),
            c3_change: rel_change(&c3_new, &data.c3),
            words_searched: approach.words_searched,
            n_max,
        },
        images: perturbed.to_float(),
        charpoly_distance: charpoly_distance(&matrix),
        exact_images: Some(perturbed),
        matrix,
        residual,
        exact_unipotent: Some(exact),
    })
}
