//! Named example representations and suspensions, each carrying the list of
//! properties it is expected to satisfy.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ForgeError, Result};
use crate::exactlinalg::linsolve::rank as exact_rank;
use crate::exactlinalg::rat::ln_abs;
use crate::exactlinalg::{fmt_rat, int, log_top_modulus, parse_rat, rat, Rat, RatMat2, RatMat3, M3};
use crate::flagdyn::{coverage_schedule, default_base_flag};
use crate::freegroup::{finite_index_generators, Word};
use crate::pingpong::{check_fabricaqi, find_power, Parity};
use crate::represent::{
    anosov_gap_profile, float_profile, nonreal_spectrum_witness, qi_profile, FloatRepresentation, GrowthQuantity,
    Representation,
};
use crate::suspension::{dfb_evidence, hyperbolicity_scan, lahn_ratio, tau_iteration, Suspension};

/// Seed of the conjugator search that produced the frozen `f` of `rho2`.
pub const RHO2_SEARCH_SEED: u64 = 7;
/// Integer conjugator `Q` with `f = Q diag(4, 1, 1/4) Q^-1`.
pub const RHO2_CONJUGATOR: [[i64; 3]; 3] = [[0, 2, 2], [2, -1, 0], [-1, 2, -2]];
/// Odd exponent certified by the power search on the frozen pair.
pub const RHO2_POWER: u32 = 5;
/// Search bound for the odd power.
pub const RHO2_POWER_CAP: u32 = 63;
/// Rotation angle, in radians, of the plane block of `rho2_minimal`.
pub const MINIMAL_ANGLE: f64 = 1.0;

/// Every catalog name accepted by [`by_name`]; `rho<k>` works for any `k >= 3`.
pub const NAMES: [&str; 5] = ["barbot", "lahn-qi", "rho2", "rho3", "rho2-minimal"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EntryData {
    Representation(Representation),
    Suspension(Suspension),
    FloatRepresentation(FloatRepresentation),
}

/// A property an entry must satisfy, phrased as a call to an existing
/// operation plus a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "check")]
pub enum Check {
    /// Every generator image has determinant 1 (exactly, or within `tol`
    /// for float data).
    DeterminantOne { tol: f64 },
    NonrealSpectrum { word: Word },
    HyperbolicityScan { max_length: usize },
    LahnRatioAbove { max_length: usize, bound: f64 },
    /// The infimum and the ratio at `word` are both at most `bound`.
    LahnWitnessAtMost { max_length: usize, bound: f64, word: Word },
    AnosovGapSlopePositive { max_length: usize },
    DfbEvidence { max_length: usize },
    TauTerminates { max_iter: usize },
    /// The adjoint actions of the generators on `sl(3)` generate the full
    /// matrix algebra, so they share no invariant subspace.
    AdjointIrreducible,
    /// `check_fabricaqi(f, g)` with `g`, `f` the first two generators.
    Fabricaqi { m: u32, mu: String },
    CertifiedOddPower { n: u32, n_max: u32 },
    QiSlopePositive { max_length: usize },
    /// The plane block of the first generator has no scalar power up to
    /// `n_max`, measured relative to its norm.
    NoScalarPower { n_max: u32, tol: f64 },
    /// Coverage of this entry's flag sample strictly exceeds the reference
    /// entry's at the same depth and grid.
    CoverageExceeds { reference: String, max_length: usize, eta: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub data: EntryData,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Construction parameters, as exact strings.
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    /// The measured quantity compared against the threshold.
    pub value: f64,
    pub detail: String,
}

impl CatalogEntry {
    /// Pretty JSON; stable across runs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog entries serialize")
    }

    pub fn representation(&self) -> Result<Representation> {
        match &self.data {
            EntryData::Representation(r) => Ok(r.clone()),
            EntryData::Suspension(s) => s.assemble(),
            EntryData::FloatRepresentation(_) => invalid(format!("{} has float images only", self.name)),
        }
    }

    pub fn float_representation(&self) -> Result<FloatRepresentation> {
        match &self.data {
            EntryData::Representation(r) => Ok(r.to_float()),
            EntryData::Suspension(s) => s.assemble_float(),
            EntryData::FloatRepresentation(r) => Ok(r.clone()),
        }
    }

    pub fn suspension(&self) -> Result<&Suspension> {
        match &self.data {
            EntryData::Suspension(s) => Ok(s),
            _ => invalid(format!("{} is not a suspension", self.name)),
        }
    }

    pub fn run_checks(&self) -> Result<Vec<CheckResult>> {
        self.checks.iter().map(|c| self.run_check(c)).collect()
    }

    pub fn run_check(&self, check: &Check) -> Result<CheckResult> {
        let (passed, value, detail) = match check {
            Check::DeterminantOne { tol } => match &self.data {
                EntryData::FloatRepresentation(r) => {
                    let worst = r.images.iter().map(|m| (m.determinant() - 1.0).abs()).fold(0.0, f64::max);
                    (worst <= *tol, worst, format!("largest |det - 1| = {worst:e}"))
                }
                _ => {
                    let rho = self.representation()?;
                    let ok = rho.images().iter().all(|m| m.det() == Rat::one());
                    (ok, if ok { 0.0 } else { 1.0 }, "exact determinants".into())
                }
            },
            Check::NonrealSpectrum { word } => {
                let ok = nonreal_spectrum_witness(&self.representation()?, word)?;
                (ok, if ok { 1.0 } else { 0.0 }, format!("discriminant sign at {word:?}"))
            }
            Check::HyperbolicityScan { max_length } => {
                let out = hyperbolicity_scan(self.suspension()?, *max_length)?;
                (out.passed(), if out.passed() { 1.0 } else { 0.0 }, serde_json::to_string(&out).unwrap_or_default())
            }
            Check::LahnRatioAbove { max_length, bound } => match lahn_ratio(self.suspension()?, *max_length) {
                Ok(r) => (r.inf_ratio > *bound, r.inf_ratio, format!("witness {:?}", r.witness)),
                // No word moves the multiplier: the infimum is over the empty set.
                Err(ForgeError::Hypothesis(msg)) => (true, f64::INFINITY, msg),
                Err(e) => return Err(e),
            },
            Check::LahnWitnessAtMost { max_length, bound, word } => {
                let susp = self.suspension()?;
                let r = lahn_ratio(susp, *max_length)?;
                let at_word = log_top_modulus(&susp.plane_image(word)?) / ln_abs(&susp.multiplier(word)?).abs();
                let ok = r.inf_ratio <= *bound && at_word <= *bound;
                (ok, at_word, format!("infimum {} at {:?}", r.inf_ratio, r.witness))
            }
            Check::AnosovGapSlopePositive { max_length } => {
                let slope = match self.representation() {
                    Ok(rho) => anosov_gap_profile(&rho, *max_length)?.slope,
                    Err(_) => float_profile(&self.float_representation()?, *max_length, GrowthQuantity::LogSingularGap)?.slope,
                };
                (slope > 0.0, slope, "least-squares slope of per-length minima".into())
            }
            Check::DfbEvidence { max_length } => {
                let ev = dfb_evidence(self.suspension()?, *max_length)?;
                (ev.consistent, ev.plane_profile.slope, format!("{} unipotent words", ev.unipotent_words.len()))
            }
            Check::TauTerminates { max_iter } => {
                let run = tau_iteration(self.suspension()?, &Word::letter(1), &Word::letter(2), *max_iter)?;
                let ok = run.steps.len() <= *max_iter;
                (ok, run.steps.len() as f64, format!("final class {:?}", run.final_class))
            }
            Check::AdjointIrreducible => {
                let rho = self.representation()?;
                let dim = adjoint_algebra_dimension(rho.images())?;
                (dim == 64, dim as f64, format!("algebra dimension {dim} of 64"))
            }
            Check::Fabricaqi { m, mu } => {
                let (g, f) = self.g_and_f()?;
                let r = check_fabricaqi(&f, &g, 2 * m)?;
                let ok = r.passed && r.m == *m && fmt_rat(&r.mu) == *mu;
                (ok, r.m as f64, format!("m = {}, mu = {}", r.m, fmt_rat(&r.mu)))
            }
            Check::CertifiedOddPower { n, n_max } => {
                let (g, f) = self.g_and_f()?;
                let ps = find_power(&f, &g, Parity::Odd, *n_max)?;
                (ps.n == *n, ps.n as f64, format!("certified n = {}", ps.n))
            }
            Check::QiSlopePositive { max_length } => {
                let p = qi_profile(&self.representation()?, *max_length)?;
                (p.slope > 0.0, p.slope, "least-squares slope of per-length minima".into())
            }
            Check::NoScalarPower { n_max, tol } => {
                let (n, dev) = closest_scalar_power(&self.float_representation()?.images[0], *n_max);
                (dev > *tol, dev, format!("closest at n = {n}"))
            }
            Check::CoverageExceeds { reference, max_length, eta, delta } => {
                let other = by_name(reference)?.float_representation()?;
                let own = self.float_representation()?;
                let base = default_base_flag(&own).or_else(|| default_base_flag(&other));
                let mine = coverage_schedule(&own, &[*max_length], base, *eta, *delta)?.fraction();
                let theirs = coverage_schedule(&other, &[*max_length], base, *eta, *delta)?.fraction();
                (mine > theirs, mine - theirs, format!("{mine} against {theirs} for {reference}"))
            }
        };
        Ok(CheckResult { check: check.clone(), passed, value, detail })
    }

    fn g_and_f(&self) -> Result<(RatMat3, RatMat3)> {
        let rho = self.representation()?;
        if rho.rank() < 2 {
            return Err(ForgeError::RankMismatch { expected: 2, found: rho.rank() });
        }
        Ok((rho.images()[0].clone(), rho.images()[1].clone()))
    }
}

/// Looks an entry up by name. `rho<k>` builds the finite-index restriction.
pub fn by_name(name: &str) -> Result<CatalogEntry> {
    match name {
        "barbot" => barbot_anosov(&int(4), &rat(9, 8)),
        "lahn-qi" => Ok(lahn_qi_non_anosov()),
        "rho2" => Ok(rho2()),
        "rho2-minimal" => Ok(rho2_minimal()),
        _ => match name.strip_prefix("rho").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) => rho_k(k),
            None => Err(ForgeError::Invalid(format!("unknown catalog entry {name:?}; known: {}", NAMES.join(", ")))),
        },
    }
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// `diag(gap, 1/gap)` and its conjugate by a quarter-turn-like rational
/// matrix, so the attracting and repelling points of the two generators
/// interleave on the circle.
fn schottky_planes(gap: &Rat) -> (RatMat2, RatMat2) {
    let inv = gap.recip();
    let a = RatMat2::diag([gap.clone(), inv.clone()]);
    let half = rat(1, 2);
    let s = (gap + &inv) * &half;
    let d = (gap - &inv) * &half;
    let b = RatMat2 { m: [[s.clone(), d.clone()], [d, s]] };
    (a, b)
}

/// Suspension with Schottky plane parts of eigenvalue `gap` and the same
/// multiplier on both generators.
pub fn barbot_anosov(gap: &Rat, multiplier: &Rat) -> Result<CatalogEntry> {
    if *gap <= Rat::one() {
        return invalid(format!("gap {} must exceed 1", fmt_rat(gap)));
    }
    if !multiplier.is_positive() {
        return invalid(format!("multiplier {} must be positive", fmt_rat(multiplier)));
    }
    let (a, b) = schottky_planes(gap);
    let susp = Suspension::from_planes(vec![a, b], vec![multiplier.clone(), multiplier.clone()])?;
    match lahn_ratio(&susp, 1) {
        Ok(r) if r.inf_ratio <= 1.5 => {
            return invalid(format!(
                "multiplier {} gives ratio {} <= 3/2 at the generators",
                fmt_rat(multiplier),
                r.inf_ratio
            ))
        }
        Ok(_) | Err(ForgeError::Hypothesis(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(CatalogEntry {
        name: "barbot".into(),
        data: EntryData::Suspension(susp),
        checks: vec![
            Check::HyperbolicityScan { max_length: 8 },
            Check::LahnRatioAbove { max_length: 8, bound: 1.6 },
            Check::AnosovGapSlopePositive { max_length: 6 },
        ],
        notes: vec![
            "Schottky plane parts diag(gap, 1/gap) and its conjugate with eigenlines on the diagonals".into(),
            "equal multipliers on both generators, small enough for the Lahn ratio to clear 3/2".into(),
        ],
        parameters: params(&[("gap", fmt_rat(gap)), ("multiplier", fmt_rat(multiplier))]),
    })
}

/// Quasi-isometric suspension whose first generator has Lahn ratio `2/3`.
pub fn lahn_qi_non_anosov() -> CatalogEntry {
    let (a, b) = schottky_planes(&int(4));
    let susp = Suspension::from_planes(vec![a, b], vec![int(8), int(3)]).expect("fixed data is valid");
    CatalogEntry {
        name: "lahn-qi".into(),
        data: EntryData::Suspension(susp),
        checks: vec![
            Check::DfbEvidence { max_length: 6 },
            Check::HyperbolicityScan { max_length: 6 },
            Check::LahnWitnessAtMost { max_length: 6, bound: 2.0 / 3.0 + 1e-9, word: Word::letter(1) },
            Check::TauTerminates { max_iter: 100 },
        ],
        notes: vec![
            "plane part diag(4, 1/4) with multiplier 8 on the first generator".into(),
            "ratio log 4 / log 8 = 2/3 sits below the Anosov threshold".into(),
        ],
        parameters: params(&[("gap", "4".into()), ("multipliers", "8,3".into())]),
    }
}

/// The rotation-type matrix: a complex pair of modulus `2 sqrt 2` on the
/// coordinate plane and `1/8` on the third axis.
pub fn rho2_g() -> RatMat3 {
    RatMat3::from_strs([["2", "-2", "0"], ["2", "2", "0"], ["0", "0", "1/8"]]).expect("literal matrix")
}

fn f_from_conjugator(q: &RatMat3) -> Result<RatMat3> {
    let d = RatMat3::diag([int(4), int(1), rat(1, 4)]);
    Ok(q.mul(&d).mul(&q.inv()?))
}

/// The frozen loxodromic partner of [`rho2_g`].
pub fn rho2_f() -> RatMat3 {
    f_from_conjugator(&RatMat3::from_i64(RHO2_CONJUGATOR)).expect("frozen conjugator is invertible")
}

/// Outcome of the seeded search for `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugatorSearch {
    pub seed: u64,
    pub attempts: usize,
    pub conjugator: [[i64; 3]; 3],
    pub f: RatMat3,
    pub n: u32,
}

/// Draws integer conjugators with entries in `-2..=2` until
/// `f = Q diag(4, 1, 1/4) Q^-1` passes `check_fabricaqi` against `g`, the
/// adjoint rank test, and the odd power search.
pub fn search_rho2_f(seed: u64, max_attempts: usize) -> Result<ConjugatorSearch> {
    let g = rho2_g();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=max_attempts {
        let q: [[i64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-2..=2)));
        let qm = RatMat3::from_i64(q);
        if qm.det().is_zero() {
            continue;
        }
        let f = f_from_conjugator(&qm)?;
        if !check_fabricaqi(&f, &g, 16)?.passed {
            continue;
        }
        if adjoint_algebra_dimension(&[g.clone(), f.clone()])? != 64 {
            continue;
        }
        if let Ok(ps) = find_power(&f, &g, Parity::Odd, RHO2_POWER_CAP) {
            return Ok(ConjugatorSearch { seed, attempts: attempt, conjugator: q, f, n: ps.n });
        }
    }
    Err(ForgeError::SearchExhausted(format!("no admissible conjugator in {max_attempts} draws from seed {seed}")))
}

fn rho2_checks() -> Vec<Check> {
    vec![
        Check::DeterminantOne { tol: 0.0 },
        Check::NonrealSpectrum { word: Word::letter(1) },
        Check::AdjointIrreducible,
        Check::Fabricaqi { m: 8, mu: "4096".into() },
        Check::CertifiedOddPower { n: RHO2_POWER, n_max: RHO2_POWER_CAP },
    ]
}

/// Generator 1 maps to `g`, generator 2 to the frozen `f`.
pub fn rho2() -> CatalogEntry {
    let rho = Representation::new(vec![rho2_g(), rho2_f()]).expect("fixed images are in SL(3)");
    let q = RHO2_CONJUGATOR.iter().map(|r| format!("{} {} {}", r[0], r[1], r[2])).collect::<Vec<_>>().join("; ");
    CatalogEntry {
        name: "rho2".into(),
        data: EntryData::Representation(rho),
        checks: rho2_checks(),
        notes: vec![
            "g = [[2,-2,0],[2,2,0],[0,0,1/8]] acts on the coordinate plane by 2 sqrt 2 times a rotation by pi/4".into(),
            "f = Q diag(4,1,1/4) Q^-1 with Q found by the seeded conjugator search and frozen".into(),
        ],
        parameters: params(&[
            ("search_seed", RHO2_SEARCH_SEED.to_string()),
            ("conjugator", q),
            ("certified_odd_power", RHO2_POWER.to_string()),
        ]),
    }
}

/// Restriction of `rho2` to the index-`(k-1)` subgroup with the free basis
/// from [`finite_index_generators`], under `a -> g`, `b -> f`.
pub fn rho_k(k: usize) -> Result<CatalogEntry> {
    if k < 3 {
        return invalid(format!("rho_k needs k >= 3, got {k}"));
    }
    let basis = finite_index_generators(k)?;
    let base = rho2().representation()?;
    let images = basis.generators.iter().map(|w| base.evaluate(w)).collect::<Result<Vec<_>>>()?;
    let rho = Representation::new(images)?;
    let words: Vec<String> = basis.generators.iter().map(|w| format!("{:?}", w.letters())).collect();
    Ok(CatalogEntry {
        name: format!("rho{k}"),
        data: EntryData::Representation(rho),
        checks: vec![
            Check::DeterminantOne { tol: 0.0 },
            Check::NonrealSpectrum { word: Word::letter(1) },
            Check::QiSlopePositive { max_length: 4 },
        ],
        notes: vec![
            "images of the finite-index free basis under a -> g, b -> f".into(),
            "the first basis element is a itself, so g is an image".into(),
        ],
        parameters: params(&[("k", k.to_string()), ("basis", words.join(" ")), ("index", basis.index.to_string())]),
    })
}

/// `g` with its plane block replaced by `2 sqrt 2` times a rotation by
/// [`MINIMAL_ANGLE`], so no power acts on the plane as a scalar.
pub fn rho2_minimal_g() -> M3 {
    let r = 2.0 * std::f64::consts::SQRT_2;
    let (s, c) = MINIMAL_ANGLE.sin_cos();
    M3::new(r * c, -r * s, 0.0, r * s, r * c, 0.0, 0.0, 0.0, 0.125)
}

pub fn rho2_minimal() -> CatalogEntry {
    let rho = FloatRepresentation { images: vec![rho2_minimal_g(), rho2_f().to_f64()] };
    CatalogEntry {
        name: "rho2-minimal".into(),
        data: EntryData::FloatRepresentation(rho),
        checks: vec![
            Check::DeterminantOne { tol: 1e-12 },
            Check::NoScalarPower { n_max: 100, tol: 1e-6 },
            Check::CoverageExceeds { reference: "rho2".into(), max_length: 5, eta: 0.05, delta: 0.1 },
        ],
        notes: vec![
            "same f as rho2; the plane block of g rotates by one radian".into(),
            "images are double precision since the rotation is irrational".into(),
        ],
        parameters: params(&[("angle", MINIMAL_ANGLE.to_string()), ("modulus", "2 sqrt 2".into())]),
    }
}

/// Smallest relative distance `|B^n - (tr/2) I| / |B^n|` of the upper-left
/// block powers to scalars, with the `n` where it occurs.
pub fn closest_scalar_power(m: &M3, n_max: u32) -> (u32, f64) {
    let block = m.fixed_view::<2, 2>(0, 0).into_owned();
    let mut p = nalgebra::Matrix2::<f64>::identity();
    let mut best = (0, f64::INFINITY);
    for n in 1..=n_max {
        p = (p * block) / block.norm();
        let scalar = nalgebra::Matrix2::identity() * (p.trace() / 2.0);
        let dev = (p - scalar).norm() / p.norm();
        if dev < best.1 {
            best = (n, dev);
        }
    }
    best
}

/// Coordinates of a traceless matrix in the basis
/// `E_12, E_13, E_21, E_23, E_31, E_32, E_11 - E_22, E_22 - E_33`.
fn sl3_coords(x: &RatMat3) -> Vec<Rat> {
    let m = &x.m;
    vec![
        m[0][1].clone(),
        m[0][2].clone(),
        m[1][0].clone(),
        m[1][2].clone(),
        m[2][0].clone(),
        m[2][1].clone(),
        m[0][0].clone(),
        -m[2][2].clone(),
    ]
}

fn sl3_basis() -> Vec<RatMat3> {
    let mut out = Vec::new();
    for (i, j) in [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)] {
        let mut e = RatMat3::zero();
        e.m[i][j] = Rat::one();
        out.push(e);
    }
    out.push(RatMat3::diag([int(1), int(-1), int(0)]));
    out.push(RatMat3::diag([int(0), int(1), int(-1)]));
    out
}

/// `8 x 8` matrix of `X -> M X M^-1` on `sl(3)`, columns indexed by
/// [`sl3_basis`].
fn adjoint(m: &RatMat3) -> Result<Vec<Vec<Rat>>> {
    let mi = m.inv()?;
    let cols: Vec<Vec<Rat>> = sl3_basis().iter().map(|e| sl3_coords(&m.mul(e).mul(&mi))).collect();
    Ok((0..8).map(|i| (0..8).map(|j| cols[j][i].clone()).collect()).collect())
}

fn mat_mul(a: &[Vec<Rat>], b: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum()).collect()).collect()
}

/// Reduces `v` against echelon rows; returns the remainder when nonzero.
fn reduce_against(rows: &[(usize, Vec<Rat>)], mut v: Vec<Rat>) -> Option<(usize, Vec<Rat>)> {
    for (p, r) in rows {
        if !v[*p].is_zero() {
            let c = v[*p].clone() / &r[*p];
            for (x, y) in v.iter_mut().zip(r) {
                *x -= &c * y;
            }
        }
    }
    let p = v.iter().position(|x| !x.is_zero())?;
    Some((p, v))
}

/// Dimension of the unital algebra generated by the adjoint actions of
/// the given matrices on `sl(3)`. Equal to 64 exactly when the actions have
/// no common invariant subspace over the complex numbers.
pub fn adjoint_algebra_dimension(gens: &[RatMat3]) -> Result<usize> {
    let ads = gens.iter().map(adjoint).collect::<Result<Vec<_>>>()?;
    let flat = |m: &Vec<Vec<Rat>>| m.iter().flatten().cloned().collect::<Vec<Rat>>();
    let identity: Vec<Vec<Rat>> =
        (0..8).map(|i| (0..8).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect()).collect();
    let mut rows: Vec<(usize, Vec<Rat>)> = Vec::new();
    let mut queue = vec![identity];
    while let Some(x) = queue.pop() {
        if let Some(r) = reduce_against(&rows, flat(&x)) {
            rows.push(r);
            if rows.len() == 64 {
                break;
            }
            queue.extend(ads.iter().map(|a| mat_mul(a, &x)));
        }
    }
    debug_assert_eq!(rows.len(), exact_rank(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>()));
    Ok(rows.len())
}

/// Parses a `gap,multiplier` pair of rationals.
pub fn parse_barbot_params(s: &str) -> Result<(Rat, Rat)> {
    let (a, b) = s.split_once(',').ok_or_else(|| ForgeError::Parse(format!("expected gap,multiplier: {s:?}")))?;
    Ok((parse_rat(a)?, parse_rat(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_all_pass(e: &CatalogEntry) {
        for r in e.run_checks().unwrap() {
            assert!(r.passed, "{}: {:?} gave {} ({})", e.name, r.check, r.value, r.detail);
        }
    }

    #[test]
    fn frozen_conjugator_matches_seeded_search() {
        let s = search_rho2_f(RHO2_SEARCH_SEED, 50).unwrap();
        assert_eq!(s.conjugator, RHO2_CONJUGATOR);
        assert_eq!(s.f, rho2_f());
        assert_eq!(s.n, RHO2_POWER);
    }

    #[test]
    fn rho2_properties() {
        let e = rho2();
        assert_all_pass(&e);
        let g = rho2_g();
        assert_eq!(g.det(), Rat::one());
        assert_eq!(g.m[2][2], rat(1, 8));
        let f = rho2_f();
        assert_eq!(f.trace(), rat(21, 4));
        assert_eq!(f.det(), Rat::one());
    }

    #[test]
    fn rho3_images_follow_the_substitution() {
        let e = rho_k(3).unwrap();
        let rho = e.representation().unwrap();
        let (g, f) = (rho2_g(), rho2_f());
        assert_eq!(rho.images()[0], g);
        assert_eq!(rho.images()[1], f.mul(&f));
        assert_eq!(rho.images()[2], f.mul(&g).mul(&f.inv().unwrap()));
        assert_all_pass(&e);
        assert!(rho_k(2).is_err());
        assert_eq!(rho_k(4).unwrap().representation().unwrap().rank(), 4);
    }

    #[test]
    fn barbot_entry() {
        let e = barbot_anosov(&int(4), &rat(9, 8)).unwrap();
        assert_all_pass(&e);
        let r = lahn_ratio(e.suspension().unwrap(), 1).unwrap();
        assert!((r.inf_ratio - 4f64.ln() / (9.0f64 / 8.0).ln()).abs() < 1e-12);
        assert!(barbot_anosov(&int(4), &int(1000)).is_err());
        assert!(barbot_anosov(&int(1), &rat(9, 8)).is_err());
        let flat = barbot_anosov(&int(4), &int(1)).unwrap();
        let c = flat.run_check(&Check::LahnRatioAbove { max_length: 3, bound: 1.5 }).unwrap();
        assert!(c.passed && c.value.is_infinite());
    }

    #[test]
    fn lahn_entry() {
        let e = lahn_qi_non_anosov();
        assert_all_pass(&e);
        let r = lahn_ratio(e.suspension().unwrap(), 1).unwrap();
        assert!((r.inf_ratio - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn minimal_entry_has_no_scalar_power() {
        let e = rho2_minimal();
        for c in &e.checks[..2] {
            assert!(e.run_check(c).unwrap().passed);
        }
        // For r R(theta) the relative distance to scalars is |sin(n theta)|.
        let oracle = (1..=100).map(|n| (n as f64).sin().abs()).fold(f64::INFINITY, f64::min);
        let (n, dev) = closest_scalar_power(&rho2_minimal_g(), 100);
        assert_eq!(n, 22);
        assert!((dev - oracle).abs() < 1e-9);
        let exact = rho2().float_representation().unwrap();
        assert!(closest_scalar_power(&exact.images[0], 8).1 < 1e-12);
    }

    #[test]
    fn adjoint_dimension_detects_invariant_subspaces() {
        let d = RatMat3::diag([int(2), int(3), rat(1, 6)]);
        assert!(adjoint_algebra_dimension(&[d.clone()]).unwrap() <= 8);
        // A shared invariant line keeps the algebra proper.
        assert!(adjoint_algebra_dimension(&[rho2_g(), d]).unwrap() < 64);
        assert_eq!(adjoint_algebra_dimension(&[rho2_g(), rho2_f()]).unwrap(), 64);
    }

    #[test]
    fn entries_serialize_deterministically() {
        for name in ["barbot", "lahn-qi", "rho2", "rho3", "rho2-minimal"] {
            let a = by_name(name).unwrap();
            let j = a.to_json();
            assert_eq!(j, by_name(name).unwrap().to_json());
            let back: CatalogEntry = serde_json::from_str(&j).unwrap();
            assert_eq!(back, a);
        }
        assert!(by_name("rho1").is_err());
        assert!(by_name("nope").is_err());
        assert_eq!(parse_barbot_params("4,9/8").unwrap(), (int(4), rat(9, 8)));
    }

    #[test]
    fn minimal_entry_covers_more_flags() {
        let e = rho2_minimal();
        let r = e.run_check(&e.checks[2]).unwrap();
        assert!(r.passed, "{}", r.detail);
    }
}
