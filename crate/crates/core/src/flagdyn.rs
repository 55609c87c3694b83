//! Flags of `R^3` (a line inside a plane), the action of `SL(3, R)` on them,
//! finite samples of limit sets and grid coverage of the flag space.

use std::collections::HashSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ForgeError, Result};
use crate::exactlinalg::float::{eigen_structure_f64, is_loxodromic_f64};
use crate::exactlinalg::{PlaneR3, ProjPoint, M3, V3};
use crate::freegroup::{par_walk_tree, require_ball_within};
use crate::represent::{letter_slot, FloatRepresentation, ENUMERATION_CAP};

/// Largest `|<line, normal>|` accepted for a flag.
pub const INCIDENCE_TOL: f64 = 1e-10;
/// Resolution at which sampled flags are merged.
pub const DEDUP_RESOLUTION: f64 = 1e-6;
/// Largest product grid `coverage` agrees to scan.
pub const MAX_GRID_CELLS: u128 = 10_000_000;

/// A line contained in a plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub line: ProjPoint,
    pub plane: PlaneR3,
}

impl Flag {
    pub fn new(line: ProjPoint, plane: PlaneR3) -> Result<Self> {
        let gap = plane.distance_to_line(&line);
        if !(gap <= INCIDENCE_TOL) {
            return invalid(format!("line is not in the plane (|<l, n>| = {gap:e})"));
        }
        Ok(Flag { line, plane })
    }

    /// The flag `(line, plane)` after moving `line` orthogonally into `plane`.
    pub fn projected(line: &V3, plane: PlaneR3) -> Option<Self> {
        let n = plane.normal.vec();
        let l = ProjPoint::new(line - n * n.dot(line))?;
        // Projection leaves a rounding-level residue; remove it once more.
        let l = ProjPoint::new(l.vec() - n * n.dot(&l.vec()))?;
        Some(Flag { line: l, plane })
    }

    /// Product metric: the larger of the chordal distances between lines and
    /// between plane normals.
    pub fn distance(&self, other: &Flag) -> f64 {
        self.line.distance(&other.line).max(self.plane.distance(&other.plane))
    }
}

/// `(M·L, M·P)`.
pub fn act_flag(m: &M3, fl: &Flag) -> Result<Flag> {
    let mi = m.try_inverse().ok_or(ForgeError::Singular)?;
    let plane = PlaneR3::from_normal(mi.transpose() * fl.plane.normal.vec()).ok_or(ForgeError::Singular)?;
    Flag::projected(&(m * fl.line.vec()), plane).ok_or(ForgeError::Singular)
}

/// `(E^u(M), E^cu(M))`.
pub fn attracting_flag(m: &M3) -> Result<Flag> {
    let es = eigen_structure_f64(m, None)?;
    Flag::projected(&es.e_u.vec(), es.e_cu).ok_or(ForgeError::NotLoxodromic)
}

/// Attracting flag of the first loxodromic generator image.
pub fn default_base_flag(rho: &FloatRepresentation) -> Option<Flag> {
    rho.images.iter().find(|m| is_loxodromic_f64(m, 1e-9)).and_then(|m| attracting_flag(m).ok())
}

/// Finite proxy for the limit set in the flag space: attracting flags of
/// the loxodromic images of words of length `<= max_len`, together with the
/// orbit of a base flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSetSample {
    pub max_len: usize,
    pub base: Flag,
    pub flags: Vec<Flag>,
}

fn dedup_key(fl: &Flag) -> [i64; 6] {
    let q = |x: f64| (x / DEDUP_RESOLUTION).round() as i64;
    let (l, n) = (fl.line.v, fl.plane.normal.v);
    [q(l[0]), q(l[1]), q(l[2]), q(n[0]), q(n[1]), q(n[2])]
}

/// Flags are merged when their coordinates agree after rounding to
/// `DEDUP_RESOLUTION`; the first occurrence in word order is kept.
pub fn limit_set_sample(rho: &FloatRepresentation, max_len: usize, base: Option<Flag>) -> Result<LimitSetSample> {
    require_ball_within(rho.rank(), max_len, ENUMERATION_CAP)?;
    let base = match base {
        Some(b) => b,
        None => default_base_flag(rho)
            .ok_or_else(|| ForgeError::Hypothesis("no loxodromic generator to supply a base flag".into()))?,
    };
    let rank = rho.rank();
    let mut letters = Vec::with_capacity(2 * rank);
    for l in crate::freegroup::alphabet(rank) {
        let m = rho.images[l.unsigned_abs() as usize - 1];
        let m = if l > 0 { m } else { m.try_inverse().ok_or(ForgeError::Singular)? };
        letters.push((l, m));
    }
    letters.sort_by_key(|(l, _)| letter_slot(rank, *l));
    let step = |s: &M3, l: i32| s * letters[letter_slot(rank, l)].1;
    let init = Vec::new;
    let visit = |acc: &mut Vec<Flag>, _w: &[i32], m: &M3| {
        if is_loxodromic_f64(m, 1e-9) {
            if let Ok(f) = attracting_flag(m) {
                acc.push(f);
            }
        }
        if let Ok(f) = act_flag(m, &base) {
            acc.push(f);
        }
    };
    let parts = par_walk_tree(rank, max_len, &M3::identity(), &step, &init, &visit);
    let mut seen = HashSet::new();
    let mut flags = Vec::new();
    for f in std::iter::once(base).chain(parts.into_iter().flatten()) {
        if seen.insert(dedup_key(&f)) {
            flags.push(f);
        }
    }
    Ok(LimitSetSample { max_len, base, flags })
}

/// Roughly uniform points of `RP^2` at angular spacing `eta`: rings of
/// constant polar angle on the upper hemisphere.
pub fn projective_grid(eta: f64) -> Vec<V3> {
    let rings = (0.5 * PI / eta).ceil() as usize;
    let mut pts = vec![V3::z()];
    for i in 1..=rings {
        let theta = 0.5 * PI * i as f64 / rings as f64;
        // The equator is a projective circle: half of it suffices.
        let span = if i == rings { PI } else { 2.0 * PI };
        let count = ((span * theta.sin() / eta).ceil() as usize).max(1);
        for j in 0..count {
            let phi = span * j as f64 / count as f64;
            pts.push(V3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    pts
}

fn checked_grid(eta: f64) -> Result<Vec<V3>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return invalid("grid resolution must be positive");
    }
    let pts = projective_grid(eta);
    let cells = (pts.len() as u128) * (pts.len() as u128);
    if cells > MAX_GRID_CELLS {
        return Err(ForgeError::TooLarge { requested: cells, cap: MAX_GRID_CELLS });
    }
    Ok(pts)
}

/// Grid flags used by `coverage`: every pair (grid line, grid normal) with
/// `|<l, n>| <= eta`, the line then projected into the plane.
pub fn flag_grid(eta: f64) -> Result<Vec<Flag>> {
    let pts = checked_grid(eta)?;
    let normals = &pts;
    Ok(pts
        .par_iter()
        .flat_map_iter(|l| {
            normals.iter().filter(move |n| l.dot(n).abs() <= eta).filter_map(move |n| {
                let plane = PlaneR3::from_normal(*n)?;
                Flag::projected(l, plane)
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub max_len: usize,
    pub sample_size: usize,
    pub covered: usize,
    pub fraction: f64,
}

/// Fraction of grid flags within `delta` of a sample, for one or several
/// word lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub eta: f64,
    pub delta: f64,
    pub grid_flags: usize,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn fraction(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.fraction)
    }
}

/// Sample flags bucketed by the direction of their line, both unit
/// representatives inserted, so a query inspects 27 neighboring cells.
struct LineIndex<'a> {
    cell: f64,
    buckets: std::collections::HashMap<[i64; 3], Vec<&'a Flag>>,
}

impl<'a> LineIndex<'a> {
    fn new(sample: &'a [Flag], delta: f64) -> Self {
        // Unit vectors at chordal distance <= delta are within this
        // Euclidean distance of each other, up to sign.
        let cell = 2.0 * (0.5 * delta.min(1.0).asin()).sin();
        let cell = cell.max(1e-9);
        let mut buckets: std::collections::HashMap<[i64; 3], Vec<&Flag>> = Default::default();
        for f in sample {
            for v in [f.line.vec(), -f.line.vec()] {
                buckets.entry(Self::key(&v, cell)).or_default().push(f);
            }
        }
        LineIndex { cell, buckets }
    }

    fn key(v: &V3, cell: f64) -> [i64; 3] {
        [(v[0] / cell).floor() as i64, (v[1] / cell).floor() as i64, (v[2] / cell).floor() as i64]
    }

    fn covers(&self, g: &Flag, delta: f64) -> bool {
        let k = Self::key(&g.line.vec(), self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if b.iter().any(|s| g.distance(s) <= delta) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

fn count_covered(grid: &[Flag], sample: &[Flag], delta: f64) -> usize {
    if delta >= 1.0 {
        return if sample.is_empty() { 0 } else { grid.len() };
    }
    let index = LineIndex::new(sample, delta);
    grid.par_iter().filter(|g| index.covers(g, delta)).count()
}

/// Coverage of the flag grid of resolution `eta` by `sample` at radius `delta`.
pub fn coverage(sample: &LimitSetSample, eta: f64, delta: f64) -> Result<CoverageReport> {
    coverage_of(&sample.flags, sample.max_len, eta, delta)
}

/// As `coverage`, for a bare list of flags tagged with `max_len`.
pub fn coverage_of(flags: &[Flag], max_len: usize, eta: f64, delta: f64) -> Result<CoverageReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid("neighborhood radius must be positive");
    }
    let grid = flag_grid(eta)?;
    let covered = count_covered(&grid, flags, delta);
    Ok(CoverageReport {
        eta,
        delta,
        grid_flags: grid.len(),
        rows: vec![CoverageRow {
            max_len,
            sample_size: flags.len(),
            covered,
            fraction: fraction(covered, grid.len()),
        }],
    })
}

fn fraction(covered: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    }
}

/// Coverage of `limit_set_sample(rho, n)` for each `n` in `lengths`
/// (sorted ascending), sharing one grid.
pub fn coverage_schedule(
    rho: &FloatRepresentation,
    lengths: &[usize],
    base: Option<Flag>,
    eta: f64,
    delta: f64,
) -> Result<CoverageReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid("neighborhood radius must be positive");
    }
    let mut lengths = lengths.to_vec();
    lengths.sort_unstable();
    lengths.dedup();
    let grid = flag_grid(eta)?;
    let mut rows = Vec::new();
    for n in lengths {
        let sample = limit_set_sample(rho, n, base)?;
        let covered = count_covered(&grid, &sample.flags, delta);
        rows.push(CoverageRow { max_len: n, sample_size: sample.flags.len(), covered, fraction: fraction(covered, grid.len()) });
    }
    Ok(CoverageReport { eta, delta, grid_flags: grid.len(), rows })
}

impl LimitSetSample {
    /// Tab-separated point cloud: line coordinates then plane normal.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("l1\tl2\tl3\tn1\tn2\tn3\n");
        for f in &self.flags {
            let (l, n) = (f.line.v, f.plane.normal.v);
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\n", l[0], l[1], l[2], n[0], n[1], n[2]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag(a: f64, b: f64, c: f64) -> M3 {
        M3::from_diagonal(&V3::new(a, b, c))
    }

    fn std_flag() -> Flag {
        Flag::new(ProjPoint::axis(0), PlaneR3::from_normal(V3::z()).unwrap()).unwrap()
    }

    #[test]
    fn flag_rejects_non_incident_pairs() {
        let plane = PlaneR3::from_normal(V3::z()).unwrap();
        assert!(Flag::new(ProjPoint::axis(2), plane).is_err());
        assert!(Flag::new(ProjPoint::from_array([1.0, 0.0, 1e-12]).unwrap(), plane).is_ok());
    }

    #[test]
    fn identity_and_diagonal_fix_the_standard_flag() {
        let f = std_flag();
        assert!(act_flag(&M3::identity(), &f).unwrap().distance(&f) == 0.0);
        assert!(act_flag(&diag(4.0, 1.0, 0.25), &f).unwrap().distance(&f) < 1e-15);
    }

    #[test]
    fn plane_moves_by_inverse_transpose() {
        let m = M3::new(2.0, 1.0, 0.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0);
        let f = Flag::new(ProjPoint::axis(0), PlaneR3::from_normal(V3::new(0.0, 1.0, 1.0)).unwrap()).unwrap();
        let g = act_flag(&m, &f).unwrap();
        let expect = ProjPoint::new(m.try_inverse().unwrap().transpose() * V3::new(0.0, 1.0, 1.0)).unwrap();
        assert!(g.plane.normal.distance(&expect) < 1e-14);
        assert!(g.plane.distance_to_line(&g.line) <= INCIDENCE_TOL);
    }

    #[test]
    fn attracting_flags_of_diagonal_and_inverse() {
        let d = diag(4.0, 1.0, 0.25);
        assert!(attracting_flag(&d).unwrap().distance(&std_flag()) < 1e-12);
        let rep = attracting_flag(&d.try_inverse().unwrap()).unwrap();
        let expect = Flag::new(ProjPoint::axis(2), PlaneR3::from_normal(V3::x()).unwrap()).unwrap();
        assert!(rep.distance(&expect) < 1e-12);
        assert!(attracting_flag(&M3::identity()).is_err());
    }

    #[test]
    fn attracting_flag_is_covariant() {
        let s = M3::new(1.0, -2.0, -2.0, -1.0, 1.0, 2.0, 1.0, 2.0, 1.0);
        let m = s * diag(4.0, 1.0, 0.25) * s.try_inverse().unwrap();
        let f = attracting_flag(&m).unwrap();
        // Oracle: S e1 and the plane with normal S^-T e3.
        let line = ProjPoint::new(s * V3::x()).unwrap();
        let normal = ProjPoint::new(s.try_inverse().unwrap().transpose() * V3::z()).unwrap();
        assert!(f.line.distance(&line) < 1e-9);
        assert!(f.plane.normal.distance(&normal) < 1e-9);
    }

    #[test]
    fn single_generator_sample_is_its_two_fixed_flags() {
        let rho = FloatRepresentation { images: vec![diag(4.0, 1.0, 0.25)] };
        let s = limit_set_sample(&rho, 6, None).unwrap();
        assert_eq!(s.flags.len(), 2);
        assert!(s.flags[0].distance(&std_flag()) < 1e-12);
    }

    #[test]
    fn sample_is_deterministic_and_nested() {
        let s = M3::new(1.0, -2.0, -2.0, -1.0, 1.0, 2.0, 1.0, 2.0, 1.0);
        let f = s * diag(4.0, 1.0, 0.25) * s.try_inverse().unwrap();
        let rho = FloatRepresentation { images: vec![diag(4.0, 1.0, 0.25), f] };
        let a = limit_set_sample(&rho, 3, None).unwrap();
        assert_eq!(a, limit_set_sample(&rho, 3, None).unwrap());
        let b = limit_set_sample(&rho, 4, None).unwrap();
        assert!(a.flags.iter().all(|x| b.flags.iter().any(|y| x.distance(y) <= 2.0 * DEDUP_RESOLUTION)));
    }

    #[test]
    fn full_and_empty_samples() {
        let grid = flag_grid(0.2).unwrap();
        assert!(!grid.is_empty());
        assert!(grid.iter().all(|f| f.plane.distance_to_line(&f.line) <= INCIDENCE_TOL));
        assert_eq!(coverage_of(&grid, 0, 0.2, 0.05).unwrap().fraction(), 1.0);
        assert_eq!(coverage_of(&[], 0, 0.2, 0.05).unwrap().fraction(), 0.0);
    }

    #[test]
    fn coverage_validates_inputs() {
        assert!(matches!(coverage_of(&[], 0, 0.001, 0.1), Err(ForgeError::TooLarge { .. })));
        assert!(coverage_of(&[], 0, 0.0, 0.1).is_err());
        assert!(coverage_of(&[], 0, 0.2, 0.0).is_err());
    }

    #[test]
    fn coverage_matches_brute_force() {
        let rho = FloatRepresentation {
            images: vec![diag(4.0, 1.0, 0.25), M3::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0)],
        };
        let sample = limit_set_sample(&rho, 3, None).unwrap();
        let (eta, delta) = (0.15, 0.2);
        let grid = flag_grid(eta).unwrap();
        let brute = grid.iter().filter(|g| sample.flags.iter().any(|s| g.distance(s) <= delta)).count();
        assert_eq!(coverage(&sample, eta, delta).unwrap().rows[0].covered, brute);
    }

    #[test]
    fn coverage_grows_with_word_length() {
        let s = M3::new(1.0, -2.0, -2.0, -1.0, 1.0, 2.0, 1.0, 2.0, 1.0);
        let f = s * diag(4.0, 1.0, 0.25) * s.try_inverse().unwrap();
        let rho = FloatRepresentation { images: vec![diag(4.0, 1.0, 0.25), f] };
        let rep = coverage_schedule(&rho, &[1, 2, 3], None, 0.1, 0.1).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows.windows(2).all(|w| w[0].fraction <= w[1].fraction));
    }

    fn sl3() -> impl Strategy<Value = M3> {
        proptest::array::uniform9(-3i32..=3).prop_filter_map("singular", |e| {
            let m = M3::from_iterator(e.iter().map(|&x| x as f64));
            let d = m.determinant();
            (d.abs() > 0.5).then(|| m / d.abs().cbrt())
        })
    }

    proptest! {
        #[test]
        fn action_then_inverse_returns(m in sl3(), t in 0.0..6.28f64, s in 0.0..6.28f64) {
            let line = V3::new(t.cos(), t.sin(), 0.0);
            let n = V3::new(-t.sin() * s.cos(), t.cos() * s.cos(), s.sin());
            let f = Flag::projected(&line, PlaneR3::from_normal(n).unwrap()).unwrap();
            let g = act_flag(&m, &f).unwrap();
            prop_assert!(g.plane.distance_to_line(&g.line) <= INCIDENCE_TOL);
            let back = act_flag(&m.try_inverse().unwrap(), &g).unwrap();
            prop_assert!(back.distance(&f) <= 1e-9);
        }

        #[test]
        fn attracting_flag_of_powers(a in 1.5..4.0f64, b in -0.9..0.9f64, k in 2i32..5, e in proptest::array::uniform9(-2i32..=2)) {
            let s = M3::from_iterator(e.iter().map(|&x| x as f64)) + M3::identity() * 3.0;
            prop_assume!(s.determinant().abs() > 0.5);
            let m = s * diag(a, b, 1.0 / (a * b)) * s.try_inverse().unwrap();
            prop_assume!(b.abs() > 0.05 && (1.0 / (a * b)).abs() < b.abs() * 0.9);
            let f1 = attracting_flag(&m).unwrap();
            let fk = attracting_flag(&m.pow(k as u32)).unwrap();
            prop_assert!(f1.distance(&fk) <= 1e-9);
        }
    }
}
