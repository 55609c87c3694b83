//! Ping-pong certificates in the projective plane.
//!
//! A certificate for a symmetric family `F` consists of one cone per element,
//! a base line outside every cone and an expansion constant `c > 1`. Cone
//! containments `g C_h ⊂ C_g` are checked either structurally, for matrices
//! preserving a plane and its orthogonal line, or on finite nets with a
//! local Lipschitz inflation of every net cell.

use std::f64::consts::{FRAC_PI_2, PI};

use num::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ForgeError, Result};
use crate::exactlinalg::float::{eigen_structure_f64, eigenvalues_f64, singular_values_f64};
use crate::exactlinalg::intmat::DenMat3;
use crate::exactlinalg::linsolve::rank;
use crate::exactlinalg::poly::{repeated_rational_root, Poly};
use crate::exactlinalg::rat::{rationalize, serde_rat};
use crate::exactlinalg::{
    chordal_distance, fmt_rat, is_loxodromic, singular_values, to_f64, PlaneR3, ProjPoint, Rat, RatMat3, M3, V3,
};
use crate::freegroup::{alphabet, par_walk_tree, require_ball_within, Word};
use crate::represent::{letter_slot, ENUMERATION_CAP};

/// Rounding allowance for structural arc comparisons.
pub const ARC_TOL: f64 = 1e-12;

/// Margin required of float-only hypothesis checks.
pub const FLOAT_MARGIN: f64 = 1e-9;

/// Angle between two lines given by nonzero vectors, in `[0, pi/2]`.
pub fn line_angle(u: &V3, v: &V3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v).abs())
}

fn unit(v: &V3) -> V3 {
    v / v.norm()
}

/// `s1 s2 / s3^2`: a global Lipschitz constant for the action on lines in
/// the chordal metric.
pub fn projective_lipschitz_bound(g: &RatMat3) -> Result<f64> {
    if g.det().is_zero() {
        return Err(ForgeError::Singular);
    }
    let s = singular_values(g);
    Ok(s[0] * s[1] / (s[2] * s[2]))
}

pub fn projective_lipschitz_bound_f64(g: &M3) -> f64 {
    let s = singular_values_f64(g);
    s[0] * s[1] / (s[2] * s[2])
}

/// Orthonormal frame `(p1, p2, n)` with `span(p1, p2)` a given plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    pub p1: [f64; 3],
    pub p2: [f64; 3],
    pub n: [f64; 3],
}

impl PlaneFrame {
    pub fn new(plane: &PlaneR3) -> Self {
        let n = plane.normal.vec();
        let i = (0..3).min_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap()).unwrap();
        let mut e = V3::zeros();
        e[i] = 1.0;
        let p1 = unit(&(e - n * n.dot(&e)));
        let p2 = n.cross(&p1);
        let arr = |v: V3| [v[0], v[1], v[2]];
        PlaneFrame { p1: arr(p1), p2: arr(p2), n: arr(n) }
    }

    fn p1(&self) -> V3 {
        V3::from(self.p1)
    }
    fn p2(&self) -> V3 {
        V3::from(self.p2)
    }
    pub fn normal(&self) -> V3 {
        V3::from(self.n)
    }

    /// Direction angle (mod pi) of the orthogonal projection to the plane,
    /// and the angle to the plane.
    pub fn coords(&self, v: &V3) -> (f64, f64) {
        let (x, y, z) = (v.dot(&self.p1()), v.dot(&self.p2()), v.dot(&self.normal()));
        let r = x.hypot(y);
        let theta = if r == 0.0 { 0.0 } else { y.atan2(x).rem_euclid(PI) };
        (theta, z.abs().atan2(r))
    }

    pub fn direction(&self, theta: f64) -> V3 {
        self.p1() * theta.cos() + self.p2() * theta.sin()
    }

    /// Unit vector at direction `theta` and signed height `phi`.
    pub fn point(&self, theta: f64, phi: f64) -> V3 {
        self.direction(theta) * phi.cos() + self.normal() * phi.sin()
    }

    /// The action of `m` on the plane in frame coordinates, when `m`
    /// preserves the plane and the normal line.
    fn block(&self, m: &M3) -> Option<([[f64; 2]; 2], f64)> {
        let (p1, p2, n) = (self.p1(), self.p2(), self.normal());
        let scale = m.norm();
        let mn = m * n;
        let (m1, m2) = (m * p1, m * p2);
        let tol = 1e-12 * scale;
        if mn.cross(&n).norm() > tol || m1.dot(&n).abs() > tol || m2.dot(&n).abs() > tol {
            return None;
        }
        Some(([[p1.dot(&m1), p1.dot(&m2)], [p2.dot(&m1), p2.dot(&m2)]], n.dot(&mn)))
    }
}

/// Arc `[start, start + len]` in the circle of lines of a plane (angles
/// mod pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub len: f64,
}

impl Arc {
    pub fn full() -> Self {
        Arc { start: 0.0, len: PI }
    }

    pub fn centered(center: f64, half_width: f64) -> Self {
        if 2.0 * half_width >= PI {
            return Self::full();
        }
        Arc { start: (center - half_width).rem_euclid(PI), len: 2.0 * half_width }
    }

    pub fn is_full(&self) -> bool {
        self.len >= PI
    }

    pub fn end(&self) -> f64 {
        (self.start + self.len).rem_euclid(PI)
    }

    pub fn center(&self) -> f64 {
        (self.start + 0.5 * self.len).rem_euclid(PI)
    }

    /// Signed distance of `t` from the complement: positive inside.
    pub fn depth(&self, t: f64) -> f64 {
        if self.is_full() {
            return f64::INFINITY;
        }
        let mut d = (t - self.start).rem_euclid(PI);
        if d > 0.5 * (PI + self.len) {
            d -= PI;
        }
        if (0.0..=self.len).contains(&d) {
            d.min(self.len - d)
        } else if d < 0.0 {
            d
        } else {
            self.len - d
        }
    }

    pub fn contains_arc(&self, o: &Arc, tol: f64) -> bool {
        if self.is_full() {
            return true;
        }
        if o.is_full() {
            return false;
        }
        let mut d = (o.start - self.start).rem_euclid(PI);
        if d > PI - tol {
            d -= PI;
        }
        d >= -tol && d + o.len <= self.len + tol
    }
}

/// Disjoint arcs covering the same set.
pub fn merge_arcs(arcs: &[Arc]) -> Vec<Arc> {
    if arcs.iter().any(Arc::is_full) {
        return vec![Arc::full()];
    }
    let mut v: Vec<Arc> = arcs.iter().map(|a| Arc { start: a.start.rem_euclid(PI), len: a.len }).collect();
    v.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
    let mut out: Vec<Arc> = Vec::new();
    for a in v {
        match out.last_mut() {
            Some(l) if a.start <= l.start + l.len => l.len = l.len.max(a.start + a.len - l.start),
            _ => out.push(a),
        }
    }
    if out.len() > 1 {
        let last = *out.last().unwrap();
        if last.start + last.len >= PI + out[0].start {
            let first = out.remove(0);
            let l = out.last_mut().unwrap();
            l.len = l.len.max(first.start + PI + first.len - l.start);
        }
    }
    if out.iter().any(|a| a.len >= PI) {
        return vec![Arc::full()];
    }
    out
}

fn arc_depth(arcs: &[Arc], t: f64) -> f64 {
    arcs.iter().map(|a| a.depth(t)).fold(f64::NEG_INFINITY, f64::max)
}

/// Image of an arc under a plane map given in frame coordinates.
fn map_arc(b: &[[f64; 2]; 2], a: &Arc) -> Arc {
    if a.is_full() {
        return Arc::full();
    }
    let img = |t: f64| {
        let (c, s) = (t.cos(), t.sin());
        (b[1][0] * c + b[1][1] * s).atan2(b[0][0] * c + b[0][1] * s).rem_euclid(PI)
    };
    let (x, y) = (img(a.start), img(a.start + a.len));
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let (s, e) = if det > 0.0 { (x, y) } else { (y, x) };
    let mut len = (e - s).rem_euclid(PI);
    if a.len > 0.5 * PI && len < ARC_TOL {
        len = PI;
    }
    Arc { start: s, len }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: ProjPoint,
    /// Chordal radius, in `(0, 1)`.
    pub radius: f64,
}

impl Ball {
    fn angle(&self) -> f64 {
        self.radius.asin()
    }
}

/// A region of the projective plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cone {
    /// Union of chordal balls.
    Balls { balls: Vec<Ball> },
    /// Lines within chordal distance `height` of a plane whose orthogonal
    /// projection to the plane lies in one of the arcs.
    Sector { frame: PlaneFrame, arcs: Vec<Arc>, height: f64 },
}

impl Cone {
    pub fn ball(center: ProjPoint, radius: f64) -> Cone {
        Cone::Balls { balls: vec![Ball { center, radius }] }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Cone::Balls { balls } => {
                if balls.is_empty() || balls.iter().any(|b| !(b.radius > 0.0 && b.radius < 1.0)) {
                    return invalid("ball radii must lie in (0, 1)");
                }
            }
            Cone::Sector { arcs, height, .. } => {
                if arcs.is_empty() || !(*height > 0.0 && *height < 1.0) {
                    return invalid("sector needs arcs and a height in (0, 1)");
                }
            }
        }
        Ok(())
    }

    /// Largest angle `r` such that the ball of angular radius `r` around
    /// `v` lies in the cone (negative when `v` is outside).
    pub fn inner_slack(&self, v: &V3) -> f64 {
        match self {
            Cone::Balls { balls } => balls
                .iter()
                .map(|b| b.angle() - line_angle(v, &b.center.vec()))
                .fold(f64::NEG_INFINITY, f64::max),
            Cone::Sector { frame, arcs, height } => {
                let (t, phi) = frame.coords(v);
                let h = height.asin() - phi;
                let d = arc_depth(&merge_arcs(arcs), t);
                let r = if d <= 0.0 { d } else { phi.cos() * d.min(FRAC_PI_2).sin() };
                h.min(r)
            }
        }
    }

    pub fn contains(&self, v: &V3) -> bool {
        self.inner_slack(v) >= 0.0
    }

    /// Lower bound for the angle from `v` to the cone (nonpositive when it
    /// may meet the cone).
    pub fn outer_gap(&self, v: &V3) -> f64 {
        match self {
            Cone::Balls { balls } => balls
                .iter()
                .map(|b| line_angle(v, &b.center.vec()) - b.angle())
                .fold(f64::INFINITY, f64::min),
            Cone::Sector { frame, arcs, height } => {
                let (t, phi) = frame.coords(v);
                let h = phi - height.asin();
                let d = -arc_depth(&merge_arcs(arcs), t);
                let r = if d <= 0.0 { d } else { phi.cos() * d.min(FRAC_PI_2).sin() };
                h.max(r)
            }
        }
    }

    /// Feature size used to pick net spacing.
    fn feature(&self) -> f64 {
        match self {
            Cone::Balls { balls } => balls.iter().map(|b| b.angle()).fold(f64::INFINITY, f64::min),
            Cone::Sector { height, .. } => height.asin(),
        }
    }

    /// Net with covering radius at most the returned angle.
    fn net(&self, resolution: usize) -> (Vec<V3>, f64) {
        let res = resolution.max(1) as f64;
        match self {
            Cone::Balls { balls } => {
                let s = self.feature() / res;
                let mut pts = Vec::new();
                for b in balls {
                    ball_net(&b.center.vec(), b.angle(), s, &mut pts);
                }
                (pts, s)
            }
            Cone::Sector { frame, arcs, height } => {
                let hgt = height.asin();
                let s_phi = 2.0 * hgt / res;
                let mut pts = Vec::new();
                let mut s_theta: f64 = 0.0;
                for a in merge_arcs(arcs) {
                    let nt = res.max((a.len / s_phi).ceil().min(64.0 * res)) as usize;
                    let st = a.len / nt as f64;
                    s_theta = s_theta.max(st);
                    for i in 0..nt {
                        let t = a.start + (i as f64 + 0.5) * st;
                        for j in 0..resolution.max(1) {
                            let phi = -hgt + (j as f64 + 0.5) * s_phi;
                            pts.push(frame.point(t, phi));
                        }
                    }
                }
                (pts, 0.5 * (s_phi + s_theta))
            }
        }
    }
}

fn ball_net(c: &V3, rho: f64, s: f64, out: &mut Vec<V3>) {
    let i = (0..3).min_by(|&a, &b| c[a].abs().partial_cmp(&c[b].abs()).unwrap()).unwrap();
    let mut e = V3::zeros();
    e[i] = 1.0;
    let t1 = unit(&(e - c * c.dot(&e)));
    let t2 = c.cross(&t1);
    let na = (rho / s).ceil().max(1.0) as usize;
    let sa = rho / na as f64;
    out.push(*c);
    for k in 1..=na {
        let a = k as f64 * sa;
        let amax = (a + 0.5 * sa).min(FRAC_PI_2);
        let nb = ((2.0 * PI * amax.sin() / s).ceil() as usize).max(3);
        for j in 0..nb {
            let b = 2.0 * PI * j as f64 / nb as f64;
            out.push(c * a.cos() + (t1 * b.cos() + t2 * b.sin()) * a.sin());
        }
    }
}

/// Angular footprint of a cone in a frame: directions and height range.
struct Footprint {
    arcs: Vec<Arc>,
    phi_min: f64,
    phi_max: f64,
}

fn footprint(cone: &Cone, frame: &PlaneFrame) -> Option<Footprint> {
    match cone {
        Cone::Sector { frame: f, arcs, height } => {
            (f == frame).then(|| Footprint { arcs: arcs.clone(), phi_min: 0.0, phi_max: height.asin() })
        }
        Cone::Balls { balls } => {
            let mut fp = Footprint { arcs: vec![], phi_min: FRAC_PI_2, phi_max: 0.0 };
            for b in balls {
                let (t, phi) = frame.coords(&b.center.vec());
                let rho = b.angle();
                fp.phi_min = fp.phi_min.min((phi - rho).max(0.0));
                fp.phi_max = fp.phi_max.max((phi + rho).min(FRAC_PI_2));
                let chord = 2.0 * (0.5 * rho).sin();
                let c = phi.cos();
                fp.arcs.push(if chord < c { Arc::centered(t, (chord / c).asin()) } else { Arc::full() });
            }
            Some(fp)
        }
    }
}

/// Outcome of one containment `M C_source ⊂ C_target` with expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    pub element: usize,
    pub source: usize,
    pub method: String,
    /// Angular slack of the containment (positive when certified).
    pub slack: f64,
    /// Lower bound of `|M v|` over unit `v` in the source cone.
    pub min_expansion: f64,
    /// Largest local Lipschitz constant used (0 for structural checks).
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<ProjPoint>,
}

fn structural_pair(m: &M3, frame: &PlaneFrame, source: &Cone, target: &Cone) -> Option<(f64, f64)> {
    let (b, ln) = frame.block(m)?;
    let fp = footprint(source, frame)?;
    let bm = nalgebra::Matrix2::new(b[0][0], b[0][1], b[1][0], b[1][1]);
    let sv = bm.singular_values();
    let (smax, smin) = (sv[0].max(sv[1]), sv[0].min(sv[1]));
    let ln = ln.abs();
    let hi = |phi: f64| if phi >= FRAC_PI_2 { FRAC_PI_2 } else { (ln / smin * phi.tan()).atan() };
    let lo = |phi: f64| if phi >= FRAC_PI_2 { FRAC_PI_2 } else { (ln / smax * phi.tan()).atan() };
    let expansion = |phi: f64| ((smin * phi.cos()).powi(2) + (ln * phi.sin()).powi(2)).sqrt();
    let min_exp = expansion(fp.phi_min).min(expansion(fp.phi_max));
    let slack = match target {
        Cone::Sector { frame: tf, arcs, height } if tf == frame => {
            let merged = merge_arcs(arcs);
            let arcs_ok = fp.arcs.iter().all(|a| {
                let img = map_arc(&b, a);
                merged.iter().any(|t| t.contains_arc(&img, ARC_TOL))
            });
            if !arcs_ok {
                return Some((-1.0, min_exp));
            }
            height.asin() - hi(fp.phi_max)
        }
        Cone::Balls { balls } if balls.len() == 1 && line_angle(&balls[0].center.vec(), &frame.normal()) == 0.0 => {
            lo(fp.phi_min) - (FRAC_PI_2 - balls[0].angle())
        }
        _ => return None,
    };
    Some((slack, min_exp))
}

fn net_pair(m: &M3, source: &Cone, target: &Cone, resolution: usize) -> (f64, f64, f64, Option<ProjPoint>) {
    let s = singular_values_f64(m);
    let (pts, h) = source.net(resolution);
    let shift = s[0] * 2.0 * (0.5 * h).sin();
    let sh = h.sin();
    let results: Vec<(f64, f64, f64, usize)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mp = m * p;
            let nm = mp.norm();
            let mlb = nm - shift;
            if !(mlb > 0.0) {
                return (f64::NEG_INFINITY, mlb, f64::INFINITY, i);
            }
            let k = s[0] * s[1] / (mlb * mlb);
            let ks = k * sh;
            if ks >= 1.0 {
                return (f64::NEG_INFINITY, mlb, k, i);
            }
            (target.inner_slack(&mp) - ks.asin(), mlb, k, i)
        })
        .collect();
    let mut slack = f64::INFINITY;
    let mut exp = f64::INFINITY;
    let mut kmax: f64 = 0.0;
    let mut worst = None;
    for (sl, e, k, i) in results {
        if sl < slack {
            slack = sl;
            worst = Some(i);
        }
        exp = exp.min(e);
        kmax = kmax.max(k);
    }
    (slack, exp, kmax, worst.and_then(|i| ProjPoint::new(pts[i])))
}

/// An element of a symmetric family, with the index of its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyElement {
    pub label: String,
    pub matrix: RatMat3,
    pub inverse: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarMargins {
    /// Least pairwise gap between cones (angle).
    pub disjointness: f64,
    /// Least gap from the base line to a cone (angle).
    pub base_outside: f64,
    /// Inner slack of `g L0` in `C_g`, per element.
    pub base_images: Vec<f64>,
    pub containments: Vec<PairMargin>,
    /// Least lower bound of `|g v| - c`.
    pub expansion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub family: Vec<FamilyElement>,
    pub cones: Vec<Cone>,
    pub c: f64,
    pub base_line: ProjPoint,
    pub net_resolution: usize,
    /// Largest local Lipschitz constant used per element.
    pub lipschitz: Vec<f64>,
    pub margins: StarMargins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarFailure {
    /// Failing item of the ping-pong condition, `1..=5`.
    pub condition: u8,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<ProjPoint>,
    /// Slack at the failure (nonpositive).
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StarOutcome {
    Certified(Certificate),
    Failed(StarFailure),
}

impl StarOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            StarOutcome::Certified(c) => Some(c),
            StarOutcome::Failed(_) => None,
        }
    }
}

fn cone_gap(a: &Cone, b: &Cone) -> f64 {
    match (a, b) {
        (Cone::Balls { balls }, other) | (other, Cone::Balls { balls }) => balls
            .iter()
            .map(|x| other.outer_gap(&x.center.vec()) - x.angle())
            .fold(f64::INFINITY, f64::min),
        (Cone::Sector { frame: fa, arcs: aa, .. }, Cone::Sector { frame: fb, arcs: ab, .. }) if fa == fb => {
            let (ma, mb) = (merge_arcs(aa), merge_arcs(ab));
            let disjoint = ma.iter().all(|x| {
                mb.iter().all(|y| x.depth(y.start) < 0.0 && x.depth(y.end()) < 0.0 && y.depth(x.start) < 0.0)
            });
            if disjoint {
                0.0_f64.max(f64::MIN_POSITIVE)
            } else {
                f64::NEG_INFINITY
            }
        }
        _ => f64::NEG_INFINITY,
    }
}

/// Pairs each element with its inverse by exact multiplication.
pub fn pair_inverses(family: &[(String, RatMat3)]) -> Result<Vec<FamilyElement>> {
    let mut out = Vec::with_capacity(family.len());
    for (i, (label, m)) in family.iter().enumerate() {
        let j = family
            .iter()
            .position(|(_, x)| m.mul(x).is_identity())
            .ok_or_else(|| ForgeError::Invalid(format!("family is not symmetric: no inverse for {label}")))?;
        if j == i {
            return invalid(format!("{label} is an involution"));
        }
        out.push(FamilyElement { label: label.clone(), matrix: m.clone(), inverse: j });
    }
    Ok(out)
}

/// Checks the five ping-pong conditions for `family` with the given cones.
pub fn certify_condition_star(
    family: &[(String, RatMat3)],
    cones: &[Cone],
    base_line: &ProjPoint,
    c: f64,
    net_resolution: usize,
) -> Result<StarOutcome> {
    if cones.len() != family.len() {
        return Err(ForgeError::RankMismatch { expected: family.len(), found: cones.len() });
    }
    if !(c > 1.0) {
        return invalid("expansion constant must exceed 1");
    }
    if net_resolution == 0 {
        return invalid("net resolution must be positive");
    }
    for cone in cones {
        cone.validate()?;
    }
    let elements = pair_inverses(family)?;
    let floats: Vec<M3> = elements.iter().map(|e| e.matrix.to_f64()).collect();
    let fail = |condition: u8, detail: String, witness: Option<ProjPoint>, slack: f64| {
        Ok(StarOutcome::Failed(StarFailure { condition, detail, witness, slack }))
    };

    let mut disjointness = f64::INFINITY;
    for i in 0..cones.len() {
        for j in i + 1..cones.len() {
            let g = cone_gap(&cones[i], &cones[j]);
            if !(g > 0.0) {
                return fail(
                    1,
                    format!("cones of {} and {} are not separated", elements[i].label, elements[j].label),
                    None,
                    g,
                );
            }
            disjointness = disjointness.min(g);
        }
    }

    let l0 = base_line.vec();
    let mut base_outside = f64::INFINITY;
    for (e, cone) in elements.iter().zip(cones) {
        let g = cone.outer_gap(&l0);
        if !(g > 0.0) {
            return fail(2, format!("base line is not outside the cone of {}", e.label), Some(*base_line), g);
        }
        base_outside = base_outside.min(g);
    }

    let mut base_images = Vec::new();
    for ((e, cone), m) in elements.iter().zip(cones).zip(&floats) {
        let img = m * l0;
        let s = cone.inner_slack(&img);
        if !(s > 0.0) {
            return fail(3, format!("{} maps the base line outside its cone", e.label), ProjPoint::new(img), s);
        }
        base_images.push(s);
    }

    let frame = cones.iter().find_map(|c| match c {
        Cone::Sector { frame, .. } => Some(*frame),
        _ => None,
    });
    let mut containments = Vec::new();
    let mut lipschitz = vec![0.0f64; elements.len()];
    let mut expansion = f64::INFINITY;
    for (i, e) in elements.iter().enumerate() {
        for (j, source) in cones.iter().enumerate() {
            if j == e.inverse {
                continue;
            }
            let target = &cones[i];
            let structural = frame.and_then(|fr| structural_pair(&floats[i], &fr, source, target));
            let pm = match structural {
                Some((slack, min_expansion)) => PairMargin {
                    element: i,
                    source: j,
                    method: "structural".into(),
                    slack,
                    min_expansion,
                    lipschitz: 0.0,
                    witness: None,
                },
                None => {
                    let (slack, min_expansion, k, witness) = net_pair(&floats[i], source, target, net_resolution);
                    PairMargin { element: i, source: j, method: "net".into(), slack, min_expansion, lipschitz: k, witness }
                }
            };
            if !(pm.slack > 0.0) {
                return fail(
                    4,
                    format!("{} does not map the cone of {} into its own cone", e.label, elements[j].label),
                    pm.witness,
                    pm.slack,
                );
            }
            if !(pm.min_expansion >= c) {
                return fail(
                    5,
                    format!("{} expands the cone of {} by less than c", e.label, elements[j].label),
                    pm.witness,
                    pm.min_expansion - c,
                );
            }
            expansion = expansion.min(pm.min_expansion - c);
            lipschitz[i] = lipschitz[i].max(pm.lipschitz);
            containments.push(pm);
        }
    }
    Ok(StarOutcome::Certified(Certificate {
        family: elements,
        cones: cones.to_vec(),
        c,
        base_line: *base_line,
        net_resolution,
        lipschitz,
        margins: StarMargins { disjointness, base_outside, base_images, containments, expansion },
    }))
}

/// Line that is exact when its inputs are, with a float shadow.
#[derive(Debug, Clone)]
struct Line {
    exact: Option<[Rat; 3]>,
    float: V3,
}

impl Line {
    fn exact(v: [Rat; 3]) -> Line {
        let float = V3::new(to_f64(&v[0]), to_f64(&v[1]), to_f64(&v[2]));
        Line { float: unit(&float), exact: Some(v) }
    }

    fn float(v: V3) -> Line {
        Line { exact: None, float: unit(&v) }
    }

    fn cross(&self, o: &Line) -> Line {
        match (&self.exact, &o.exact) {
            (Some(a), Some(b)) => Line::exact(cross_r(a, b)),
            _ => Line { exact: None, float: self.float.cross(&o.float) },
        }
    }

    fn is_zero(&self) -> bool {
        match &self.exact {
            Some(v) => v.iter().all(Zero::is_zero),
            None => self.float.norm() < 1e-14,
        }
    }

    fn apply(&self, m: &RatMat3, mf: &M3) -> Line {
        match &self.exact {
            Some(v) => Line::exact(m.apply(v)),
            None => Line::float(mf * self.float),
        }
    }

    fn point(&self) -> Option<ProjPoint> {
        ProjPoint::new(self.float)
    }
}

pub(crate) fn cross_r(a: &[Rat; 3], b: &[Rat; 3]) -> [Rat; 3] {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

pub(crate) fn dot_r(a: &[Rat; 3], b: &[Rat; 3]) -> Rat {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

/// Whether a line avoids a plane given by its normal; returns the verdict
/// and `|<n, v>|` for unit representatives.
fn off_plane(line: &Line, normal: &Line) -> (bool, f64, bool) {
    let margin = if line.float.norm() == 0.0 || normal.float.norm() == 0.0 {
        0.0
    } else {
        unit(&line.float).dot(&unit(&normal.float)).abs()
    };
    match (&line.exact, &normal.exact) {
        (Some(a), Some(b)) => (!dot_r(a, b).is_zero(), margin, true),
        _ => (margin >= FLOAT_MARGIN, margin, false),
    }
}

/// Kernel of a rank-2 matrix, as a cross product of independent rows.
pub(crate) fn kernel_line(m: &RatMat3) -> Option<[Rat; 3]> {
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = cross_r(&m.m[i], &m.m[j]);
        if c.iter().any(|x| !x.is_zero()) {
            return Some(c);
        }
    }
    None
}

pub(crate) fn rows(m: &RatMat3) -> Vec<Vec<Rat>> {
    m.m.iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn shifted(m: &RatMat3, x: &Rat) -> RatMat3 {
    m.sub(&RatMat3::scalar(x.clone()))
}

/// Eigenlines of `f` sorted by decreasing modulus: exact when all three
/// eigenvalues are rational.
fn eigenlines(f: &RatMat3) -> Result<([Line; 3], [f64; 3], bool)> {
    let cp = Poly::monic_cubic(&f.charpoly());
    let ev = eigenvalues_f64(&f.to_f64());
    let mut exact = Vec::new();
    for z in ev {
        if z.im.abs() > 1e-9 * z.norm() {
            break;
        }
        match rationalize(z.re, 1e-9 * z.re.abs().max(1e-300), 1 << 30) {
            Some(r) if cp.eval(&r).is_zero() && !exact.contains(&r) => exact.push(r),
            _ => break,
        }
    }
    if exact.len() == 3 {
        let mut lines = Vec::new();
        for r in &exact {
            lines.push(Line::exact(kernel_line(&shifted(f, r)).ok_or(ForgeError::NotLoxodromic)?));
        }
        let vals = [to_f64(&exact[0]), to_f64(&exact[1]), to_f64(&exact[2])];
        let [a, b, c]: [Line; 3] = lines.try_into().unwrap();
        return Ok(([a, b, c], vals, true));
    }
    let ff = f.to_f64();
    let fi = f.inv()?.to_f64();
    let es = eigen_structure_f64(&ff, Some(&fi))?;
    Ok(([Line::float(es.e_u.vec()), Line::float(es.e_c.vec()), Line::float(es.e_s.vec())], es.values, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCheck {
    pub name: String,
    pub passed: bool,
    /// `|<n, v>|` style distance backing the check.
    pub margin: f64,
    pub exact: bool,
}

/// Hypotheses making `{f^n, f^-n, g^n, g^-n}` a ping-pong family for
/// large `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricaqiReport {
    pub m: u32,
    #[serde(with = "serde_rat")]
    pub mu: Rat,
    /// Eigenvalue of `g^m` on the invariant line, `mu^-2`.
    #[serde(with = "serde_rat")]
    pub line_eigenvalue: Rat,
    pub plane: PlaneR3,
    pub plane_normal: [String; 3],
    pub line: ProjPoint,
    pub line_exact: [String; 3],
    pub f_eigenvalues: [f64; 3],
    pub f_exact: bool,
    pub f_lines: [ProjPoint; 3],
    /// `g^k((E^u + L0) ∩ P0)` then `g^k((E^s + L0) ∩ P0)` for `k < m`.
    pub orbit: Vec<ProjPoint>,
    pub checks: Vec<NamedCheck>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// `P0 = ker(g^m - mu)` of dimension 2 with `mu > 1`, for the least
/// `m <= m_max`.
pub fn scalar_power_on_plane(g: &RatMat3, m_max: u32) -> Result<(u32, Rat, RatMat3)> {
    let mut p = RatMat3::identity();
    for m in 1..=m_max {
        p = p.mul(g);
        let Some(mu) = repeated_rational_root(&Poly::monic_cubic(&p.charpoly())) else { continue };
        if mu > Rat::one() && rank(&rows(&shifted(&p, &mu))) == 1 {
            return Ok((m, mu, p));
        }
    }
    Err(ForgeError::SearchExhausted(format!("no m <= {m_max} with g^m scalar on a plane")))
}

pub fn check_fabricaqi(f: &RatMat3, g: &RatMat3, m_max: u32) -> Result<FabricaqiReport> {
    if f.det() != Rat::one() || g.det() != Rat::one() {
        return Err(ForgeError::Determinant { expected: "1".into(), found: "f or g".into() });
    }
    let (m, mu, gm) = scalar_power_on_plane(g, m_max)?;
    let line_ev = (&mu * &mu).recip();
    let a = shifted(&gm, &mu);
    let normal = a.m.iter().find(|r| r.iter().any(|x| !x.is_zero())).unwrap().clone();
    let n0 = Line::exact(normal.clone());
    let l0v = kernel_line(&shifted(&gm, &line_ev)).ok_or(ForgeError::Singular)?;
    let l0 = Line::exact(l0v.clone());
    let mut checks = Vec::new();
    let mut push = |name: String, (passed, margin, exact): (bool, f64, bool)| {
        checks.push(NamedCheck { name, passed, margin, exact });
    };
    let lox = is_loxodromic(f);
    push("f loxodromic".into(), (lox, 0.0, true), );
    let plane = PlaneR3::from_normal(n0.float).ok_or(ForgeError::Singular)?;
    let line = l0.point().ok_or(ForgeError::Singular)?;
    let fmt3 = |v: &[Rat; 3]| [fmt_rat(&v[0]), fmt_rat(&v[1]), fmt_rat(&v[2])];
    let mut report = FabricaqiReport {
        m,
        mu: mu.clone(),
        line_eigenvalue: line_ev,
        plane,
        plane_normal: fmt3(&normal),
        line,
        line_exact: fmt3(&l0v),
        f_eigenvalues: [0.0; 3],
        f_exact: false,
        f_lines: [line; 3],
        orbit: vec![],
        checks: vec![],
        passed: false,
        failure: None,
    };
    if !lox {
        report.checks = checks;
        report.failure = Some("f loxodromic".into());
        return Ok(report);
    }
    let ([eu, ec, es], vals, f_exact) = eigenlines(f)?;
    report.f_eigenvalues = vals;
    report.f_exact = f_exact;
    report.f_lines = [eu.point().unwrap(), ec.point().unwrap(), es.point().unwrap()];
    let n_cu = eu.cross(&ec);
    let n_cs = es.cross(&ec);
    for (name, l) in [("E^u", &eu), ("E^c", &ec), ("E^s", &es)] {
        push(format!("{name} not in P0"), off_plane(l, &n0));
    }
    push("L0 not in E^cu".into(), off_plane(&l0, &n_cu));
    push("L0 not in E^cs".into(), off_plane(&l0, &n_cs));
    let gf = g.to_f64();
    let mut orbit = Vec::new();
    for (tag, e) in [("u", &eu), ("s", &es)] {
        let mut x = e.cross(&l0).cross(&n0);
        if x.is_zero() {
            push(format!("(E^{tag} + L0) meets P0 in a line"), (false, 0.0, x.exact.is_some()));
            continue;
        }
        for k in 0..m {
            let (a, ma, ea) = off_plane(&x, &n_cs);
            let (b, mb, eb) = off_plane(&x, &n_cu);
            push(format!("g^{k}((E^{tag} + L0) ∩ P0) off E^cs ∪ E^cu"), (a && b, ma.min(mb), ea && eb));
            orbit.push(x.point().unwrap());
            x = x.apply(g, &gf);
        }
    }
    report.orbit = orbit;
    report.failure = checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
    report.passed = report.failure.is_none();
    report.checks = checks;
    Ok(report)
}

/// A `g`-invariant union of arcs in the circle of lines of `P0`, saturated
/// along `L0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedNbhd {
    pub g: RatMat3,
    pub m: u32,
    #[serde(with = "serde_rat")]
    pub mu: Rat,
    pub plane: PlaneR3,
    pub frame: PlaneFrame,
    pub line: ProjPoint,
    /// Distinct arcs of `A ∩ P0` in frame angles.
    pub arcs: Vec<Arc>,
    pub saturated: bool,
    /// Chordal distance from `A ∩ P0` to the avoided planes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    /// Largest endpoint mismatch of `g(A)` against `A`.
    pub invariance_residual: f64,
}

impl PreparedNbhd {
    /// Membership of a line: `L0` itself, or a line whose projection to
    /// `P0` along `L0` has direction in the arcs.
    pub fn contains(&self, v: &V3) -> bool {
        let l0 = self.line.vec();
        let n = self.plane.normal.vec();
        if line_angle(v, &l0) < 1e-15 {
            return true;
        }
        let p = v - l0 * (n.dot(v) / n.dot(&l0));
        let (t, _) = self.frame.coords(&p);
        arc_depth(&self.arcs, t) >= 0.0
    }
}

fn plane_block_map(frame: &PlaneFrame, m: &M3) -> [[f64; 2]; 2] {
    let (p1, p2) = (frame.p1(), frame.p2());
    let (m1, m2) = (m * p1, m * p2);
    [[p1.dot(&m1), p1.dot(&m2)], [p2.dot(&m1), p2.dot(&m2)]]
}

fn arc_same(a: &Arc, b: &Arc, tol: f64) -> bool {
    let d = (a.start - b.start).rem_euclid(PI);
    (d.min(PI - d) <= tol) && (a.len - b.len).abs() <= tol
}

fn dedup_arcs(arcs: Vec<Arc>, tol: f64) -> Vec<Arc> {
    let mut out: Vec<Arc> = Vec::new();
    for a in arcs {
        if !out.iter().any(|b| arc_same(&a, b, tol)) {
            out.push(a);
        }
    }
    out
}

/// Arcs of half-width `radius` around `x`, closed up under `g^j`, `j < m`.
pub fn prepared_neighborhood(
    g: &RatMat3,
    m: u32,
    mu: &Rat,
    x: &[ProjPoint],
    radius: f64,
    avoid: &[PlaneR3],
) -> Result<PreparedNbhd> {
    if !(radius > 0.0 && radius < FRAC_PI_2) {
        return invalid("arc radius must lie in (0, pi/2)");
    }
    let gm = g.pow(m as i64)?;
    let a = shifted(&gm, mu);
    if rank(&rows(&a)) != 1 {
        return Err(ForgeError::Hypothesis(format!("g^{m} is not {} on a plane", fmt_rat(mu))));
    }
    let normal = a.m.iter().find(|r| r.iter().any(|x| !x.is_zero())).unwrap().clone();
    let plane = PlaneR3::from_normal(Line::exact(normal).float).ok_or(ForgeError::Singular)?;
    let line_ev = (mu * mu).recip();
    let l0 = kernel_line(&shifted(&gm, &line_ev)).ok_or_else(|| ForgeError::Hypothesis("no invariant line".into()))?;
    let line = Line::exact(l0).point().unwrap();
    let frame = PlaneFrame::new(&plane);
    let gf = g.to_f64();
    for p in x {
        if plane.distance_to_line(p) > 1e-12 {
            return Err(ForgeError::Hypothesis("a line of X is not contained in P0".into()));
        }
        let img = p.image(&gf).ok_or(ForgeError::Singular)?;
        if x.iter().all(|q| chordal_distance(q, &img) > 1e-9) {
            return Err(ForgeError::Hypothesis("X is not g-invariant".into()));
        }
    }
    let b = plane_block_map(&frame, &gf);
    let mut arcs = Vec::new();
    let mut bj = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..m {
        for p in x {
            let (t, _) = frame.coords(&p.vec());
            arcs.push(map_arc(&bj, &Arc::centered(t, radius)));
        }
        bj = mul2(&b, &bj);
    }
    let arcs = dedup_arcs(arcs, 1e-9);
    let mut residual: f64 = 0.0;
    for a in &arcs {
        let img = map_arc(&b, a);
        let best = arcs
            .iter()
            .map(|c| {
                let d = (img.start - c.start).rem_euclid(PI);
                d.min(PI - d).max((img.len - c.len).abs())
            })
            .fold(f64::INFINITY, f64::min);
        residual = residual.max(best);
    }
    if residual > ARC_TOL {
        return Err(ForgeError::Hypothesis(format!("arc set is not g-invariant (residual {residual:.3e})")));
    }
    let mut epsilon0 = None;
    let merged = merge_arcs(&arcs);
    for pl in avoid {
        let n = pl.normal.vec();
        let trace = n.cross(&plane.normal.vec());
        let gap = if trace.norm() < 1e-14 {
            0.0
        } else {
            let (tt, _) = frame.coords(&trace);
            let inside = -arc_depth(&merged, tt);
            // |<n, dir(theta)>| = r |sin(theta - trace)|.
            let r = (n.dot(&frame.p1())).hypot(n.dot(&frame.p2()));
            if inside <= 0.0 {
                0.0
            } else {
                r * inside.min(FRAC_PI_2).sin()
            }
        };
        if !(gap > 0.0) {
            return Err(ForgeError::Hypothesis("arcs meet the trace of an avoided plane".into()));
        }
        epsilon0 = Some(epsilon0.map_or(gap, |e: f64| e.min(gap)));
    }
    Ok(PreparedNbhd {
        g: g.clone(),
        m,
        mu: mu.clone(),
        plane,
        frame,
        line,
        arcs,
        saturated: true,
        epsilon0,
        invariance_residual: residual,
    })
}

fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Any,
    Odd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSearch {
    pub n: u32,
    /// Cone size used, as an angle.
    pub epsilon: f64,
    pub arc_radius: f64,
    pub hypotheses: FabricaqiReport,
    pub certificate: Certificate,
    /// Tightest failure for every rejected `n`.
    pub trace: Vec<String>,
}

/// Cone sizes tried for each power: `EPS0 / 2^j`.
pub const EPS0: f64 = 0.2;
pub const EPS_STEPS: u32 = 8;
pub const DEFAULT_NET_RESOLUTION: usize = 16;

/// Least `n` of the requested parity for which the family
/// `{f^n, f^-n, g^n, g^-n}` passes [`certify_condition_star`] with `c = 2`
/// on the standard cones.
pub fn find_power(f: &RatMat3, g: &RatMat3, parity: Parity, n_max: u32) -> Result<PowerSearch> {
    find_power_with(f, g, parity, n_max, DEFAULT_NET_RESOLUTION)
}

pub fn find_power_with(f: &RatMat3, g: &RatMat3, parity: Parity, n_max: u32, net_resolution: usize) -> Result<PowerSearch> {
    let hyp = check_fabricaqi(f, g, 64)?;
    if !hyp.passed {
        return Err(ForgeError::Hypothesis(format!("check_fabricaqi failed: {}", hyp.failure.clone().unwrap())));
    }
    let l0 = hyp.line.vec();
    if chordal_distance(&hyp.line, &hyp.plane.normal) > 1e-12 {
        return Err(ForgeError::Hypothesis("cone construction needs L0 orthogonal to P0".into()));
    }
    let frame = PlaneFrame::new(&hyp.plane);
    let ff = f.to_f64();
    let es = eigen_structure_f64(&ff, Some(&f.inv()?.to_f64()))?;
    // Arc width: keep the orbit away from the traces of E^cs and E^cu.
    let mut sep = f64::INFINITY;
    for p in &hyp.orbit {
        let (t, _) = frame.coords(&p.vec());
        for pl in [es.e_cs, es.e_cu] {
            let tr = pl.normal.vec().cross(&hyp.plane.normal.vec());
            let (tt, _) = frame.coords(&tr);
            let d = (t - tt).rem_euclid(PI);
            sep = sep.min(d.min(PI - d));
        }
    }
    let arc_radius = (0.45 * sep).min(0.25);
    let base: Vec<ProjPoint> = hyp.orbit.clone();
    let nbhd = prepared_neighborhood(g, hyp.m, &hyp.mu, &base, arc_radius, &[es.e_cs, es.e_cu])?;
    let (theta_u, _) = frame.coords(&hyp.orbit[0].vec());
    let mut trace = Vec::new();
    let step = if parity == Parity::Odd { 2 } else { 1 };
    let mut n = 1;
    while n <= n_max {
        let fam = vec![
            (format!("f^{n}"), f.pow(n as i64)?),
            (format!("f^-{n}"), f.pow(-(n as i64))?),
            (format!("g^{n}"), g.pow(n as i64)?),
            (format!("g^-{n}"), g.pow(-(n as i64))?),
        ];
        let mut best: Option<StarFailure> = None;
        for j in 0..EPS_STEPS {
            let eps = EPS0 / 2f64.powi(j as i32);
            let r = eps.sin();
            let cones = vec![
                Cone::ball(es.e_u, r),
                Cone::ball(es.e_s, r),
                Cone::Sector { frame, arcs: nbhd.arcs.clone(), height: r },
                Cone::ball(hyp.line, r),
            ];
            let psi = 1.1 * eps;
            let Some(base_line) = ProjPoint::new(l0 * psi.cos() + frame.direction(theta_u) * psi.sin()) else {
                continue;
            };
            match certify_condition_star(&fam, &cones, &base_line, 2.0, net_resolution)? {
                StarOutcome::Certified(certificate) => {
                    return Ok(PowerSearch { n, epsilon: eps, arc_radius, hypotheses: hyp, certificate, trace });
                }
                StarOutcome::Failed(fl) => {
                    let better = best.as_ref().map_or(true, |b| (fl.condition, fl.slack) > (b.condition, b.slack));
                    if better {
                        best = Some(fl);
                    }
                }
            }
        }
        if let Some(b) = best {
            trace.push(format!("n = {n}: condition ({}) {} (slack {:.3e})", b.condition, b.detail, b.slack));
        }
        n += step;
    }
    Err(ForgeError::SearchExhausted(format!("no certified power up to {n_max}: {}", trace.last().cloned().unwrap_or_default())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum QiBoundOutcome {
    Pass {
        max_length: usize,
        words: u128,
        /// Least `ln s1(w) - (|w| - 1) ln c`.
        min_log_margin: f64,
    },
    Violation {
        word: Word,
        log_s1: f64,
        log_bound: f64,
    },
}

impl QiBoundOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, QiBoundOutcome::Pass { .. })
    }
}

/// Checks `s1(w) >= c^(|w| - 1) (1 - 1e-9)` for every reduced word of length
/// at most `max_len` in the certified alphabet. Letter `i` is the `i`-th
/// element of the family with inverse-paired elements forming generators.
pub fn qi_bound_check(cert: &Certificate, max_len: usize) -> Result<QiBoundOutcome> {
    qi_bound_check_with(&cert.family, cert.c, max_len)
}

pub fn qi_bound_check_with(family: &[FamilyElement], c: f64, max_len: usize) -> Result<QiBoundOutcome> {
    // Generators: the first element of every inverse pair.
    let gens: Vec<usize> = (0..family.len()).filter(|&i| family[i].inverse > i).collect();
    let rank = gens.len();
    if rank * 2 != family.len() {
        return invalid("family must consist of inverse pairs");
    }
    require_ball_within(rank, max_len, ENUMERATION_CAP)?;
    let letters: Vec<DenMat3> = alphabet(rank)
        .iter()
        .map(|&l| {
            let i = gens[l.unsigned_abs() as usize - 1];
            let idx = if l > 0 { i } else { family[i].inverse };
            DenMat3::from_rat(&family[idx].matrix)
        })
        .collect();
    let lc = c.ln();
    let slack = (1.0 - 1e-9f64).ln();
    let step = |s: &DenMat3, l: i32| s.mul(&letters[letter_slot(rank, l)]);
    type Acc = (u128, f64, Option<(Vec<i32>, f64, f64)>);
    let init = || (0u128, f64::INFINITY, None);
    let visit = |acc: &mut Acc, w: &[i32], s: &DenMat3| {
        acc.0 += 1;
        let ls = s.log_top_singular_value();
        let bound = (w.len() - 1) as f64 * lc + slack;
        acc.1 = acc.1.min(ls - (w.len() - 1) as f64 * lc);
        if ls < bound && acc.2.as_ref().map_or(true, |(bw, _, _)| (w.len(), w) < (bw.len(), bw.as_slice())) {
            acc.2 = Some((w.to_vec(), ls, bound));
        }
    };
    let parts = par_walk_tree(rank, max_len, &DenMat3::identity(), &step, &init, &visit);
    let words = parts.iter().map(|p| p.0).sum();
    let min_log_margin = parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let viol = parts.into_iter().filter_map(|p| p.2).min_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
    Ok(match viol {
        Some((w, log_s1, log_bound)) => QiBoundOutcome::Violation { word: Word::from_reduced(w), log_s1, log_bound },
        None => QiBoundOutcome::Pass { max_length: max_len, words, min_log_margin },
    })
}

/// Certified family as an exact representation of the free group on the
/// generators of the inverse pairs.
pub fn certified_representation(cert: &Certificate) -> Result<crate::represent::Representation> {
    let images = (0..cert.family.len())
        .filter(|&i| cert.family[i].inverse > i)
        .map(|i| cert.family[i].matrix.clone())
        .collect();
    crate::represent::Representation::new(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlinalg::{int, rat};

    fn g43() -> RatMat3 {
        RatMat3::from_strs([["2", "-2", "0"], ["2", "2", "0"], ["0", "0", "1/8"]]).unwrap()
    }

    fn d() -> RatMat3 {
        RatMat3::diag([int(4), int(1), rat(1, 4)])
    }

    fn conj(q: &RatMat3, m: &RatMat3) -> RatMat3 {
        q.mul(m).mul(&q.inv().unwrap())
    }

    #[test]
    fn lipschitz_examples() {
        assert!((projective_lipschitz_bound(&d()).unwrap() - 64.0).abs() < 1e-9);
        let rot = RatMat3::from_i64([[0, -1, 0], [1, 0, 0], [0, 0, 1]]);
        assert!((projective_lipschitz_bound(&rot).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arcs_and_merging() {
        let a = Arc::centered(0.1, 0.2);
        assert!(a.depth(0.0) > 0.0 && a.depth(PI - 0.05) > 0.0);
        assert!(a.depth(0.5) < 0.0);
        let m = merge_arcs(&[Arc::centered(0.0, 0.1), Arc::centered(0.15, 0.1), Arc::centered(1.5, 0.1)]);
        assert_eq!(m.len(), 2);
        assert!(m.iter().any(|x| x.contains_arc(&Arc::centered(0.1, 0.1), 0.0)));
        assert!(Arc::full().contains_arc(&a, 0.0));
    }

    #[test]
    fn fabricaqi_on_rotation_example() {
        let q = RatMat3::from_i64([[1, -2, -2], [-1, 1, 2], [1, 2, 1]]);
        let f = conj(&q, &d());
        let r = check_fabricaqi(&f, &g43(), 16).unwrap();
        assert_eq!(r.m, 8);
        assert_eq!(r.mu, int(4096));
        assert_eq!(r.line_eigenvalue, rat(1, 4096 * 4096));
        assert!(r.f_exact);
        assert!(r.passed, "{:?}", r.failure);
        let r = check_fabricaqi(&f, &RatMat3::diag([int(2), int(2), rat(1, 4)]), 4).unwrap();
        assert_eq!((r.m, r.mu.clone()), (1, int(2)));
    }

    #[test]
    fn fabricaqi_names_shared_eigenline() {
        let r = check_fabricaqi(&d(), &g43(), 16).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failure.as_deref(), Some("E^u not in P0"));
    }

    #[test]
    fn prepared_arcs_rotate() {
        let g = g43();
        let x0 = ProjPoint::from_array([1.0, 0.3, 0.0]).unwrap();
        let gf = g.to_f64();
        let mut x = vec![x0];
        for _ in 0..3 {
            x.push(x.last().unwrap().image(&gf).unwrap());
        }
        let a = prepared_neighborhood(&g, 8, &int(4096), &x, 0.1, &[]).unwrap();
        assert_eq!(a.arcs.len(), 4);
        assert!(a.invariance_residual <= ARC_TOL);
        assert!(a.contains(&V3::new(1.0, 0.3, 5.0)));
        assert!(!a.contains(&V3::new(1.0, -0.3, 0.0)));
        let tiny = prepared_neighborhood(&g, 8, &int(4096), &x, 1e-9, &[]).unwrap();
        assert!(tiny.arcs.iter().all(|a| a.len < 3e-9));
        let wall = PlaneR3::from_normal(V3::new(-0.629, 0.777, 0.2)).unwrap();
        assert!(prepared_neighborhood(&g, 8, &int(4096), &x, 0.1, &[wall]).is_ok());
        assert!(prepared_neighborhood(&g, 8, &int(4096), &x, 0.6, &[wall]).is_err());
    }

    fn schottky() -> Vec<(String, RatMat3)> {
        let q = RatMat3::from_i64([[2, 1, 1], [1, 3, 0], [1, 1, 2]]);
        let a = d().pow(6).unwrap();
        let b = conj(&q, &a);
        vec![
            ("a".into(), a.clone()),
            ("A".into(), a.inv().unwrap()),
            ("b".into(), b.clone()),
            ("B".into(), b.inv().unwrap()),
        ]
    }

    fn schottky_cones(r: f64) -> (Vec<Cone>, ProjPoint) {
        let fam = schottky();
        let mut cones = Vec::new();
        for (_, m) in &fam {
            let es = eigen_structure_f64(&m.to_f64(), None).unwrap();
            cones.push(Cone::ball(es.e_u, r));
        }
        (cones, ProjPoint::from_array([1.0, -2.0, 3.0]).unwrap())
    }

    #[test]
    fn schottky_family_certifies() {
        let (cones, l0) = schottky_cones(0.05);
        let out = certify_condition_star(&schottky(), &cones, &l0, 2.0, 12).unwrap();
        let cert = out.certificate().unwrap_or_else(|| panic!("{out:?}"));
        assert!(cert.margins.containments.iter().all(|p| p.method == "net"));
        assert!(qi_bound_check(cert, 4).unwrap().passed());
        // Shrinking radii keeps conditions (1)-(2).
        let (small, _) = schottky_cones(0.025);
        match certify_condition_star(&schottky(), &small, &l0, 2.0, 12).unwrap() {
            StarOutcome::Certified(_) => {}
            StarOutcome::Failed(f) => assert!(f.condition > 2),
        }
    }

    #[test]
    fn schottky_failures_are_named() {
        let (mut cones, l0) = schottky_cones(0.05);
        cones[1] = cones[0].clone();
        let out = certify_condition_star(&schottky(), &cones, &l0, 2.0, 8).unwrap();
        assert!(matches!(out, StarOutcome::Failed(StarFailure { condition: 1, .. })));
        let (cones, l0) = schottky_cones(0.05);
        let out = certify_condition_star(&schottky(), &cones, &l0, 1e6, 8).unwrap();
        assert!(matches!(out, StarOutcome::Failed(StarFailure { condition: 5, .. })));
    }

    #[test]
    fn shrunken_constant_violates_bound() {
        let fam = pair_inverses(&schottky()).unwrap();
        match qi_bound_check_with(&fam, 1e9, 3).unwrap() {
            QiBoundOutcome::Violation { word, .. } => assert_eq!(word.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn power_search_on_rotation_example() {
        let q = RatMat3::from_i64([[1, -2, -2], [-1, 1, 2], [1, 2, 1]]);
        let f = conj(&q, &d());
        let ps = find_power(&f, &g43(), Parity::Odd, 31).unwrap();
        assert_eq!(ps.n % 2, 1);
        assert!(qi_bound_check(&ps.certificate, 4).unwrap().passed());
        let json = serde_json::to_string(&ps.certificate).unwrap();
        let back: Certificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back.family, ps.certificate.family);
    }

    #[test]
    fn power_search_refuses_shared_lines() {
        assert!(find_power(&d(), &g43(), Parity::Odd, 5).is_err());
    }
}
