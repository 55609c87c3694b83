//! Reducible suspensions: representations preserving the plane
//! `P = span(e1, e2)`, stored in the normal form
//!
//! ```text
//! rho(c) = [[ t(c)^(-1/2) A(c),  kappa(c) ],
//!           [ 0,                 s(c) t(c) ]]
//! ```
//!
//! with `A(c)` in `SL(2)^±`, `t(c) > 0` rational and `s(c) = det A(c)`.
//! The complementary modulus `lambda_perp(w) = t(w)` is a character and is
//! kept exact; plane moduli are floats.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ForgeError, Result};
use crate::exactlinalg::float::{eigen_structure_f64, PlaneR3, ProjPoint, M3, V3};
use crate::exactlinalg::linsolve::{determinant, solve};
use crate::exactlinalg::rat::{ln_abs, rationalize, serde_rat};
use crate::exactlinalg::{fmt_rat, int, log_top_modulus, parse_rat, to_f64, Rat, RatMat2, RatMat3};
use crate::freegroup::{abelianize, alphabet, par_walk_tree, require_ball_within, GeneratorSet, Word};
use crate::represent::{letter_slot, qi_profile, unipotent_scan, FloatRepresentation, GrowthProfile, Representation, ENUMERATION_CAP};

/// Relative tolerance for `V` classification ties.
pub const V_CLASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Suspension {
    pub generators: GeneratorSet,
    pub plane_parts: Vec<RatMat2>,
    pub multipliers: Vec<Rat>,
    pub signs: Vec<i8>,
    pub kappas: Vec<[Rat; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SuspensionFile {
    rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    plane_parts: Vec<RatMat2>,
    #[serde(with = "serde_rat::vec")]
    multipliers: Vec<Rat>,
    signs: Vec<i8>,
    kappas: Vec<[String; 2]>,
}

impl Serialize for Suspension {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SuspensionFile {
            rank: self.rank(),
            names: Some(self.generators.names.clone()),
            plane_parts: self.plane_parts.clone(),
            multipliers: self.multipliers.clone(),
            signs: self.signs.clone(),
            kappas: self.kappas.iter().map(|k| [fmt_rat(&k[0]), fmt_rat(&k[1])]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Suspension {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let f = SuspensionFile::deserialize(d)?;
        let gens = match f.names {
            Some(n) => GeneratorSet::new(n),
            None => GeneratorSet::standard(f.rank),
        }
        .map_err(D::Error::custom)?;
        if gens.rank != f.rank {
            return Err(D::Error::custom("rank does not match the number of names"));
        }
        let kappas = f
            .kappas
            .iter()
            .map(|k| Ok([parse_rat(&k[0])?, parse_rat(&k[1])?]))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Suspension::with_generators(gens, f.plane_parts, f.multipliers, f.signs, kappas).map_err(D::Error::custom)
    }
}

/// Exact square root of a nonnegative rational, when it exists.
pub fn rational_sqrt(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    (&n * &n == *r.numer() && &d * &d == *r.denom()).then(|| Rat::new(n, d))
}

impl Suspension {
    pub fn new(plane_parts: Vec<RatMat2>, multipliers: Vec<Rat>, signs: Vec<i8>, kappas: Vec<[Rat; 2]>) -> Result<Self> {
        let g = GeneratorSet::standard(plane_parts.len())?;
        Self::with_generators(g, plane_parts, multipliers, signs, kappas)
    }

    /// Suspension with zero translation parts and signs `det A(c)`.
    pub fn from_planes(plane_parts: Vec<RatMat2>, multipliers: Vec<Rat>) -> Result<Self> {
        let signs = plane_parts.iter().map(|p| if p.det().is_negative() { -1 } else { 1 }).collect();
        let kappas = vec![[Rat::zero(), Rat::zero()]; plane_parts.len()];
        Self::new(plane_parts, multipliers, signs, kappas)
    }

    pub fn with_generators(
        generators: GeneratorSet,
        plane_parts: Vec<RatMat2>,
        multipliers: Vec<Rat>,
        signs: Vec<i8>,
        kappas: Vec<[Rat; 2]>,
    ) -> Result<Self> {
        let k = generators.rank;
        for len in [plane_parts.len(), multipliers.len(), signs.len(), kappas.len()] {
            if len != k {
                return Err(ForgeError::RankMismatch { expected: k, found: len });
            }
        }
        for p in &plane_parts {
            let d = p.det();
            if d.abs() != Rat::one() {
                return Err(ForgeError::Determinant { expected: "±1".into(), found: fmt_rat(&d) });
            }
        }
        if let Some(t) = multipliers.iter().find(|t| !t.is_positive()) {
            return invalid(format!("multiplier {} must be positive", fmt_rat(t)));
        }
        if signs.iter().any(|s| s.abs() != 1) {
            return invalid("signs must be +1 or -1");
        }
        Ok(Suspension { generators, plane_parts, multipliers, signs, kappas })
    }

    pub fn rank(&self) -> usize {
        self.generators.rank
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        if w.max_index() > self.rank() {
            let l = *w.letters().iter().find(|l| l.unsigned_abs() as usize > self.rank()).unwrap();
            return Err(ForgeError::LetterOutOfRange { index: l, rank: self.rank() });
        }
        Ok(())
    }

    fn plane_letter(&self, l: i32) -> RatMat2 {
        let p = &self.plane_parts[l.unsigned_abs() as usize - 1];
        if l > 0 {
            p.clone()
        } else {
            p.inv().expect("plane parts are invertible")
        }
    }

    fn multiplier_letter(&self, l: i32) -> Rat {
        let t = &self.multipliers[l.unsigned_abs() as usize - 1];
        if l > 0 {
            t.clone()
        } else {
            t.recip()
        }
    }

    /// `A(w)`, the normalized plane part along `w`.
    pub fn plane_image(&self, w: &Word) -> Result<RatMat2> {
        self.check_word(w)?;
        Ok(w.letters().iter().fold(RatMat2::identity(), |acc, &l| acc.mul(&self.plane_letter(l))))
    }

    /// `t(w) = lambda_perp(w)`, exactly.
    pub fn multiplier(&self, w: &Word) -> Result<Rat> {
        self.check_word(w)?;
        Ok(w.letters().iter().fold(Rat::one(), |acc, &l| acc * self.multiplier_letter(l)))
    }

    fn check_signs(&self) -> Result<()> {
        for (i, (p, &s)) in self.plane_parts.iter().zip(&self.signs).enumerate() {
            if p.det() != int(s as i64) {
                return Err(ForgeError::Determinant {
                    expected: "1".into(),
                    found: format!("{} at generator {}", fmt_rat(&(p.det() * int(s as i64))), i + 1),
                });
            }
        }
        Ok(())
    }

    /// Exact block upper-triangular images. Needs every multiplier to be a
    /// rational square so that `t^(-1/2)` stays rational.
    pub fn assemble(&self) -> Result<Representation> {
        self.check_signs()?;
        let mut images = Vec::with_capacity(self.rank());
        for i in 0..self.rank() {
            let t = &self.multipliers[i];
            let r = rational_sqrt(t)
                .ok_or_else(|| ForgeError::Invalid(format!("multiplier {} is not a rational square", fmt_rat(t))))?;
            let block = self.plane_parts[i].scale(&r.recip());
            images.push(RatMat3::from_blocks(&block, &self.kappas[i], &(t * int(self.signs[i] as i64))));
        }
        Representation::with_generators(self.generators.clone(), images)
    }

    /// Double-precision images, valid for any multipliers.
    pub fn assemble_float(&self) -> Result<FloatRepresentation> {
        ScaledSuspension::from(self.clone()).assemble_float()
    }

    /// `diag(A(c), det A(c))`: the plane part on its own, in `SL(3)`.
    pub fn plane_representation(&self) -> Result<Representation> {
        let images = self.plane_parts.iter().map(|p| p.embed(&p.det())).collect();
        Representation::with_generators(self.generators.clone(), images)
    }

    /// Normal form of a representation preserving the plane with rational
    /// normal `normal`.
    pub fn extract(rho: &Representation, normal: &[Rat; 3]) -> Result<Suspension> {
        let j = (0..3).rev().find(|&j| !normal[j].is_zero()).ok_or_else(|| ForgeError::Invalid("zero normal".into()))?;
        let others: Vec<usize> = (0..3).filter(|&i| i != j).collect();
        // Columns: two vectors spanning the plane, then e_j.
        let mut q = RatMat3::zero();
        for (col, &i) in others.iter().enumerate() {
            q.m[i][col] = Rat::one();
            q.m[j][col] = -&normal[i] / &normal[j];
        }
        q.m[j][2] = Rat::one();
        let qi = q.inv()?;
        let (mut parts, mut mults, mut signs, mut kappas) = (vec![], vec![], vec![], vec![]);
        for (c, img) in rho.images().iter().enumerate() {
            let conj = qi.mul(img).mul(&q);
            if !conj.preserves_coordinate_plane() {
                return Err(ForgeError::Hypothesis(format!("generator {} does not preserve the plane", c + 1)));
            }
            let d = conj.m[2][2].clone();
            let t = d.abs();
            let r = rational_sqrt(&t)
                .ok_or_else(|| ForgeError::Invalid(format!("normalization by sqrt({}) is irrational", fmt_rat(&t))))?;
            parts.push(conj.plane_block().scale(&r));
            mults.push(t);
            signs.push(if d.is_negative() { -1 } else { 1 });
            kappas.push([conj.m[0][2].clone(), conj.m[1][2].clone()]);
        }
        Suspension::with_generators(rho.generators.clone(), parts, mults, signs, kappas)
    }

    /// As [`Suspension::extract`], rationalizing a float plane normal first.
    pub fn extract_plane(rho: &Representation, plane: &PlaneR3) -> Result<Suspension> {
        let n = plane.normal.v;
        let big = n.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut normal: [Rat; 3] = std::array::from_fn(|_| Rat::zero());
        for i in 0..3 {
            normal[i] = rationalize(n[i] / big, 1e-10, 1 << 32)
                .ok_or_else(|| ForgeError::Invalid("plane normal could not be rationalized".into()))?;
        }
        Self::extract(rho, &normal)
    }
}

/// `ln` of the plane top modulus and of `lambda_perp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLambdas {
    /// `ln` of the largest eigenvalue modulus of `A(w)`.
    pub log_top: f64,
    pub log_perp: f64,
}

impl LogLambdas {
    pub fn log_lambda_1(&self) -> f64 {
        self.log_top - 0.5 * self.log_perp
    }

    pub fn log_lambda_2(&self) -> f64 {
        -self.log_top - 0.5 * self.log_perp
    }
}

/// Anything that can report `lambda` data for a word.
pub trait LambdaSource {
    fn rank(&self) -> usize;
    fn log_lambdas(&self, w: &Word) -> Result<LogLambdas>;
}

impl LambdaSource for Suspension {
    fn rank(&self) -> usize {
        Suspension::rank(self)
    }

    fn log_lambdas(&self, w: &Word) -> Result<LogLambdas> {
        Ok(LogLambdas { log_top: log_top_modulus(&self.plane_image(w)?), log_perp: ln_abs(&self.multiplier(w)?) })
    }
}

/// A suspension whose multipliers are further scaled by `exp(shift)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSuspension {
    pub base: Suspension,
    pub log_shifts: Vec<f64>,
}

impl From<Suspension> for ScaledSuspension {
    fn from(base: Suspension) -> Self {
        let k = base.rank();
        ScaledSuspension { base, log_shifts: vec![0.0; k] }
    }
}

impl ScaledSuspension {
    /// Multiplies `t(c0)` by `exp(eps)`; `c0` is one-based.
    pub fn scale_generator(&self, c0: usize, eps: f64) -> Result<ScaledSuspension> {
        if c0 == 0 || c0 > self.base.rank() {
            return Err(ForgeError::LetterOutOfRange { index: c0 as i32, rank: self.base.rank() });
        }
        let mut out = self.clone();
        out.log_shifts[c0 - 1] += eps;
        Ok(out)
    }

    /// Adds `eps * direction[c]` to the log multiplier of every generator.
    pub fn scale_along(&self, direction: &[f64], eps: f64) -> Result<ScaledSuspension> {
        if direction.len() != self.base.rank() {
            return Err(ForgeError::RankMismatch { expected: self.base.rank(), found: direction.len() });
        }
        let mut out = self.clone();
        for (s, d) in out.log_shifts.iter_mut().zip(direction) {
            *s += eps * d;
        }
        Ok(out)
    }

    /// Float block images including the shifts.
    pub fn assemble_float(&self) -> Result<FloatRepresentation> {
        self.base.check_signs()?;
        let mut images = Vec::with_capacity(self.base.rank());
        for i in 0..self.base.rank() {
            let log_t = ln_abs(&self.base.multipliers[i]) + self.log_shifts[i];
            let c = (-0.5 * log_t).exp();
            let a = self.base.plane_parts[i].to_f64();
            let k = &self.base.kappas[i];
            images.push(M3::new(
                c * a[(0, 0)],
                c * a[(0, 1)],
                to_f64(&k[0]),
                c * a[(1, 0)],
                c * a[(1, 1)],
                to_f64(&k[1]),
                0.0,
                0.0,
                self.base.signs[i] as f64 * log_t.exp(),
            ));
        }
        Ok(FloatRepresentation { images })
    }
}

impl LambdaSource for ScaledSuspension {
    fn rank(&self) -> usize {
        self.base.rank()
    }

    fn log_lambdas(&self, w: &Word) -> Result<LogLambdas> {
        let mut l = self.base.log_lambdas(w)?;
        let p = abelianize(w, self.base.rank());
        l.log_perp += p.iter().zip(&self.log_shifts).map(|(&pi, s)| pi as f64 * s).sum::<f64>();
        Ok(l)
    }
}

/// Scales the action of generator `c0` (one-based) on the plane.
pub fn scale_generator(susp: &Suspension, c0: usize, eps: f64) -> Result<ScaledSuspension> {
    ScaledSuspension::from(susp.clone()).scale_generator(c0, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTriple {
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub lambda_perp: f64,
    /// `lambda_perp` as an exact rational, when no float scaling is involved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_perp_exact: Option<String>,
}

pub fn lambda_triple(susp: &Suspension, w: &Word) -> Result<LambdaTriple> {
    let l = susp.log_lambdas(w)?;
    Ok(LambdaTriple {
        lambda_1: l.log_lambda_1().exp(),
        lambda_2: l.log_lambda_2().exp(),
        lambda_perp: to_f64(&susp.multiplier(w)?),
        lambda_perp_exact: Some(fmt_rat(&susp.multiplier(w)?)),
    })
}

pub fn lambda_triple_scaled(s: &ScaledSuspension, w: &Word) -> Result<LambdaTriple> {
    let l = s.log_lambdas(w)?;
    Ok(LambdaTriple {
        lambda_1: l.log_lambda_1().exp(),
        lambda_2: l.log_lambda_2().exp(),
        lambda_perp: l.log_perp.exp(),
        lambda_perp_exact: None,
    })
}

/// `(lambda_1, lambda_2, lambda_perp)` read directly off a block
/// upper-triangular float matrix.
pub fn lambdas_from_matrix(m: &M3) -> (f64, f64, f64) {
    let (l1, l2) = block_moduli(m);
    (l1, l2, m[(2, 2)].abs())
}

fn block_moduli(m: &M3) -> (f64, f64) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        let r = det.abs().sqrt();
        return (r, r);
    }
    let r1 = 0.5 * (tr + tr.signum() * disc.sqrt());
    let r2 = if r1 == 0.0 { 0.0 } else { det / r1 };
    let (x, y) = (r1.abs(), r2.abs());
    (x.max(y), x.min(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VClass {
    /// `lambda_1 < lambda_perp`.
    V,
    /// `lambda_perp < lambda_2`.
    VInverse,
    Neither,
}

/// Position of `w` relative to `V` and `V^-1`. Ties within
/// [`V_CLASS_TOL`] are reported as [`ForgeError::Boundary`].
pub fn v_class<S: LambdaSource + ?Sized>(s: &S, w: &Word) -> Result<VClass> {
    let l = s.log_lambdas(w)?;
    let d1 = l.log_lambda_1() - l.log_perp;
    let d2 = l.log_perp - l.log_lambda_2();
    if d1.abs() <= V_CLASS_TOL {
        return Err(ForgeError::Boundary(format!("lambda_1 and lambda_perp agree to {:.3e} in log", d1.abs())));
    }
    if d2.abs() <= V_CLASS_TOL {
        return Err(ForgeError::Boundary(format!("lambda_2 and lambda_perp agree to {:.3e} in log", d2.abs())));
    }
    Ok(if d1 < 0.0 {
        VClass::V
    } else if d2 < 0.0 {
        VClass::VInverse
    } else {
        VClass::Neither
    })
}

/// Order used for witnesses: shorter first, then generator order
/// `a, a^-1, b, b^-1, ...` letter by letter.
fn witness_key(w: &[i32]) -> (usize, Vec<(u32, bool)>) {
    (w.len(), w.iter().map(|&l| (l.unsigned_abs(), l < 0)).collect())
}

#[derive(Clone)]
struct PlaneState {
    a: RatMat2,
    t: Rat,
}

fn plane_step<'a>(susp: &'a Suspension) -> (Vec<RatMat2>, Vec<Rat>) {
    let alpha = alphabet(susp.rank());
    (
        alpha.iter().map(|&l| susp.plane_letter(l)).collect(),
        alpha.iter().map(|&l| susp.multiplier_letter(l)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LahnVerdict {
    /// Infimum above `3/2` at the scanned depth.
    AnosovConsistent,
    NonAnosovEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LahnReport {
    pub max_length: usize,
    pub inf_ratio: f64,
    pub witness: Word,
    pub words_with_nonzero_exponent: u128,
    pub verdict: LahnVerdict,
}

/// Minimum of `ln lambda_u(A(w)) / |ln t(w)|` over `1 <= |w| <= max_len`
/// with `t(w) != 1`.
pub fn lahn_ratio(susp: &Suspension, max_len: usize) -> Result<LahnReport> {
    require_ball_within(susp.rank(), max_len, ENUMERATION_CAP)?;
    let rank = susp.rank();
    let (planes, mults) = plane_step(susp);
    let root = PlaneState { a: RatMat2::identity(), t: Rat::one() };
    let step = |s: &PlaneState, l: i32| {
        let k = letter_slot(rank, l);
        PlaneState { a: s.a.mul(&planes[k]), t: &s.t * &mults[k] }
    };
    type Acc = (u128, Option<(f64, Vec<i32>)>);
    let init = || (0u128, None);
    let visit = |acc: &mut Acc, w: &[i32], s: &PlaneState| {
        if s.t.is_one() {
            return;
        }
        acc.0 += 1;
        let r = log_top_modulus(&s.a) / ln_abs(&s.t).abs();
        let replace = match &acc.1 {
            None => true,
            Some((best, bw)) => r < *best || (r == *best && witness_key(w) < witness_key(bw)),
        };
        if replace {
            acc.1 = Some((r, w.to_vec()));
        }
    };
    let parts: Vec<Acc> = par_walk_tree(rank, max_len, &root, &step, &init, &visit);
    let mut count = 0;
    let mut best: Option<(f64, Vec<i32>)> = None;
    for (c, b) in parts {
        count += c;
        if let Some((r, w)) = b {
            let replace = match &best {
                None => true,
                Some((br, bw)) => r < *br || (r == *br && witness_key(&w) < witness_key(bw)),
            };
            if replace {
                best = Some((r, w));
            }
        }
    }
    let (inf_ratio, w) =
        best.ok_or_else(|| ForgeError::Hypothesis(format!("no word of length <= {max_len} has t(w) != 1")))?;
    let verdict = if inf_ratio > 1.5 { LahnVerdict::AnosovConsistent } else { LahnVerdict::NonAnosovEvidence };
    Ok(LahnReport {
        max_length: max_len,
        inf_ratio,
        witness: Word::from_reduced(w),
        words_with_nonzero_exponent: count,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ScanOutcome {
    Pass { max_length: usize, words: u128 },
    Witness { word: Word, trace: String, determinant: String },
}

impl ScanOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, ScanOutcome::Pass { .. })
    }
}

fn is_hyperbolic_plane(a: &RatMat2) -> bool {
    let tr = a.trace();
    if a.det().is_negative() {
        !tr.is_zero()
    } else {
        tr.abs() > int(2)
    }
}

/// Exact trace test on `A(w)` for every `1 <= |w| <= max_len`. Returns the
/// first failure in shortlex generator order.
pub fn hyperbolicity_scan(susp: &Suspension, max_len: usize) -> Result<ScanOutcome> {
    require_ball_within(susp.rank(), max_len, ENUMERATION_CAP)?;
    let rank = susp.rank();
    let (planes, _) = plane_step(susp);
    let step = |s: &RatMat2, l: i32| s.mul(&planes[letter_slot(rank, l)]);
    type Acc = (u128, Option<(Vec<i32>, RatMat2)>);
    let init = || (0u128, None);
    let visit = |acc: &mut Acc, w: &[i32], a: &RatMat2| {
        acc.0 += 1;
        if !is_hyperbolic_plane(a) {
            let replace = acc.1.as_ref().map_or(true, |(bw, _)| witness_key(w) < witness_key(bw));
            if replace {
                acc.1 = Some((w.to_vec(), a.clone()));
            }
        }
    };
    let parts: Vec<Acc> = par_walk_tree(rank, max_len, &RatMat2::identity(), &step, &init, &visit);
    let words = parts.iter().map(|p| p.0).sum();
    let first = parts.into_iter().filter_map(|p| p.1).min_by(|x, y| witness_key(&x.0).cmp(&witness_key(&y.0)));
    Ok(match first {
        None => ScanOutcome::Pass { max_length: max_len, words },
        Some((w, a)) => {
            ScanOutcome::Witness { word: Word::from_reduced(w), trace: fmt_rat(&a.trace()), determinant: fmt_rat(&a.det()) }
        }
    })
}

/// Finite-depth evidence that the plane part is quasi-isometric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfbEvidence {
    pub hyperbolicity: ScanOutcome,
    pub plane_profile: GrowthProfile,
    pub slope_positive: bool,
    pub unipotent_words: Vec<Word>,
    pub consistent: bool,
}

pub fn dfb_evidence(susp: &Suspension, max_len: usize) -> Result<DfbEvidence> {
    let hyperbolicity = hyperbolicity_scan(susp, max_len)?;
    let plane = susp.plane_representation()?;
    let plane_profile = qi_profile(&plane, max_len)?;
    let slope_positive = plane_profile.slope > 0.0;
    let unipotent_words: Vec<Word> = unipotent_scan(&plane, max_len)?.into_iter().map(|(w, _)| w).collect();
    let consistent = hyperbolicity.passed() && slope_positive && unipotent_words.is_empty();
    Ok(DfbEvidence { hyperbolicity, plane_profile, slope_positive, unipotent_words, consistent })
}

/// One substitution `(a, b) <- (b, a b^-p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStep {
    pub p: u64,
    pub a: Word,
    pub b: Word,
    #[serde(with = "serde_rat")]
    pub tau_b: Rat,
    /// Determinant of the abelianized substitution relative to the input pair.
    pub abelian_determinant: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRun {
    pub inverted_b: bool,
    pub swapped: bool,
    pub steps: Vec<TauStep>,
    pub final_a: Word,
    pub final_b: Word,
    pub final_class: VClass,
    /// `tau` of the `b` slot after normalization and after every step.
    #[serde(with = "serde_rat::vec")]
    pub tau_trace: Vec<Rat>,
    /// The free basis with `final_a`, `final_b` first and the untouched
    /// generators after, when the inputs were distinct generators.
    pub basis: Option<Vec<Word>>,
}

/// Largest allowed `p` in one substitution step.
pub const TAU_P_CAP: u64 = 1_000_000;

fn abelian_det(rows: &[Vec<i64>]) -> i64 {
    let r: Vec<Vec<Rat>> = rows.iter().map(|row| row.iter().map(|&x| int(x)).collect()).collect();
    let d = determinant(&r);
    num::ToPrimitive::to_i64(d.numer()).unwrap_or(0)
}

/// Steers the pair `(a, b)` out of `V` and `V^-1` in the `b` slot by
/// substitutions `(a, b) <- (b, a b^-p)`.
pub fn tau_iteration(susp: &Suspension, a: &Word, b: &Word, max_iter: usize) -> Result<TauRun> {
    if v_class(susp, a)? != VClass::V {
        return Err(ForgeError::Hypothesis("the first element must lie in V".into()));
    }
    // Formal words over x = input a, y = input b.
    let (x, y) = (Word::letter(1), Word::letter(2));
    let (mut fa, mut fb) = (x.clone(), y.clone());
    let real = |f: &Word| f.substitute(&[a.clone(), b.clone()]);
    let tau = |w: &Word| -> Result<Rat> { Ok(susp.multiplier(w)?.recip()) };
    let class_b = v_class(susp, b)?;
    let mut run = TauRun {
        inverted_b: false,
        swapped: false,
        steps: vec![],
        final_a: a.clone(),
        final_b: b.clone(),
        final_class: class_b,
        tau_trace: vec![],
        basis: None,
    };
    if class_b != VClass::Neither {
        if class_b == VClass::VInverse {
            fb = fb.inverse();
            run.inverted_b = true;
        }
        if tau(&real(&fa)?)? > tau(&real(&fb)?)? {
            std::mem::swap(&mut fa, &mut fb);
            run.swapped = true;
        }
        run.tau_trace.push(tau(&real(&fb)?)?);
        let mut done = false;
        for _ in 0..max_iter {
            let (ta, tb) = (tau(&real(&fa)?)?, tau(&real(&fb)?)?);
            if tb >= Rat::one() {
                return Err(ForgeError::Hypothesis("tau of the b slot must stay below 1".into()));
            }
            // tau(a b^-p) = tau(a) tau(b)^-p increases with p.
            let mut p = 0u64;
            let mut v = ta.clone();
            while v <= tb {
                p += 1;
                v /= &tb;
                if p > TAU_P_CAP {
                    return Err(ForgeError::SearchExhausted(format!("no admissible p <= {TAU_P_CAP}")));
                }
            }
            debug_assert!(v <= Rat::one());
            let nb = fa.concat(&fb.pow(-(p as i64)));
            fa = fb;
            fb = nb;
            let det = abelian_det(&[abelianize(&fa, 2), abelianize(&fb, 2)]);
            let (ra, rb) = (real(&fa)?, real(&fb)?);
            let tb_new = tau(&rb)?;
            run.tau_trace.push(tb_new.clone());
            run.steps.push(TauStep { p, a: ra.clone(), b: rb.clone(), tau_b: tb_new, abelian_determinant: det });
            if v_class(susp, &rb)? == VClass::Neither {
                done = true;
                break;
            }
        }
        if !done {
            let trace: Vec<String> = run.tau_trace.iter().map(fmt_rat).collect();
            return Err(ForgeError::SearchExhausted(format!(
                "b slot still in V after {max_iter} iterations; tau trace {}",
                trace.join(", ")
            )));
        }
    }
    run.final_a = real(&fa)?;
    run.final_b = real(&fb)?;
    run.final_class = v_class(susp, &run.final_b)?;
    if let (&[la], &[lb]) = (a.letters(), b.letters()) {
        if la > 0 && lb > 0 && la != lb {
            let mut basis = vec![run.final_a.clone(), run.final_b.clone()];
            basis.extend((1..=susp.rank() as i32).filter(|&c| c != la && c != lb).map(Word::letter));
            run.basis = Some(basis);
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedWord {
    pub m: u32,
    pub n: u32,
    /// `ln(lambda_1 / lambda_perp)` of `a^m b^n`.
    pub log_ratio: f64,
}

fn log_ratio<S: LambdaSource + ?Sized>(s: &S, w: &Word) -> Result<f64> {
    let l = s.log_lambdas(w)?;
    Ok(l.log_lambda_1() - l.log_perp)
}

fn power_word(a: &Word, m: u32, b: &Word, n: u32) -> Word {
    a.pow(m as i64).concat(&b.pow(n as i64))
}

/// Smallest `m + n` (then smallest `m`) with `lambda_1 / lambda_perp` of
/// `a^m b^n` in `[1/C, C]` and such that the balancing shift keeps `a` in
/// `V`.
pub fn find_balanced_word<S: LambdaSource + ?Sized>(
    s: &S,
    a: &Word,
    b: &Word,
    c: f64,
    m_max: u32,
    n_max: u32,
) -> Result<BalancedWord> {
    if !(c > 1.0) {
        return invalid("the bound C must exceed 1");
    }
    if v_class(s, a)? != VClass::V {
        return Err(ForgeError::Hypothesis("a must lie in V".into()));
    }
    if v_class(s, b)? != VClass::Neither {
        return Err(ForgeError::Hypothesis("b must lie outside V and V^-1".into()));
    }
    let lc = c.ln();
    // Balancing shifts the log ratio of `a` by r / m; `a` must stay in V.
    let margin_a = -log_ratio(s, a)?;
    let mut trajectory = Vec::new();
    for total in 2..=(m_max + n_max) {
        for m in 1..total {
            let n = total - m;
            if m > m_max || n > n_max || n == 0 {
                continue;
            }
            let r = log_ratio(s, &power_word(a, m, b, n))?;
            if m == n {
                trajectory.push(format!("({m},{n}): {r:.6}"));
            }
            if r.abs() <= lc && margin_a + r / m as f64 > V_CLASS_TOL {
                return Ok(BalancedWord { m, n, log_ratio: r });
            }
        }
    }
    Err(ForgeError::SearchExhausted(format!("no a^m b^n within [1/C, C]; log ratios {}", trajectory.join("; "))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub epsilon: f64,
    pub word: Word,
    /// Shift direction on the original generators: the coordinate of `a`
    /// in the supplied basis.
    pub direction: Vec<i64>,
    pub log_ratio_before: f64,
    /// `|ln(lambda_1 / lambda_perp)|` recomputed from float matrices.
    pub residual: f64,
    pub lambda_1: f64,
    pub lambda_perp: f64,
    /// Eigenline of `lambda_2` inside the plane.
    pub l0: ProjPoint,
    /// Chordal distance from `l0` to `E^cs` of the scaled image of `a`.
    pub l0_residual: f64,
    pub scaled: ScaledSuspension,
}

/// Integer vectors of the abelianized basis and the dual coordinate of its
/// first element.
fn first_coordinate(basis: &[Word], rank: usize) -> Result<Vec<i64>> {
    if basis.len() != rank {
        return Err(ForgeError::RankMismatch { expected: rank, found: basis.len() });
    }
    let rows: Vec<Vec<Rat>> = basis.iter().map(|w| abelianize(w, rank).into_iter().map(int).collect()).collect();
    let det = determinant(&rows);
    if det.abs() != Rat::one() {
        return Err(ForgeError::Hypothesis(format!(
            "basis is not unimodular in homology (determinant {})",
            fmt_rat(&det)
        )));
    }
    let mut rhs = vec![Rat::zero(); rank];
    rhs[0] = Rat::one();
    let sol = solve(&rows, &rhs).ok_or(ForgeError::Singular)?;
    Ok(sol.iter().map(|x| num::ToPrimitive::to_i64(x.numer()).unwrap_or(0)).collect())
}

/// Eigenvector of the smaller-modulus eigenvalue of the upper-left block.
fn small_block_eigenline(m: &M3) -> Option<ProjPoint> {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return None;
    }
    let r1 = 0.5 * (tr + tr.signum() * disc.sqrt());
    let r2 = det / r1;
    let v1 = V3::new(b, r2 - a, 0.0);
    let v2 = V3::new(r2 - d, c, 0.0);
    ProjPoint::new(if v1.norm() >= v2.norm() { v1 } else { v2 })
}

/// Scales the generator slot of `basis[0]` so that `a^m b^n`, with
/// `a = basis[0]` and `b = basis[1]`, has `lambda_1 = lambda_perp`.
pub fn balance_scaling(susp: &Suspension, basis: &[Word], m: u32, n: u32) -> Result<BalanceReport> {
    if m == 0 || n == 0 {
        return invalid("m and n must be positive");
    }
    let rank = susp.rank();
    let direction = first_coordinate(basis, rank)?;
    let (a, b) = (&basis[0], &basis[1]);
    let word = power_word(a, m, b, n);
    let r0 = log_ratio(susp, &word)?;
    // The ratio picks up exp(-3/2 eps p) with p = m.
    let epsilon = 2.0 * r0 / (3.0 * m as f64);
    let dir: Vec<f64> = direction.iter().map(|&x| x as f64).collect();
    let scaled = ScaledSuspension::from(susp.clone()).scale_along(&dir, epsilon)?;
    let fr = scaled.assemble_float()?;
    let mw = fr.evaluate(&word)?;
    let (l1, _, lp) = lambdas_from_matrix(&mw);
    let residual = (l1.ln() - lp.ln()).abs();
    if l1.ln().abs() <= 1e-9 {
        return Err(ForgeError::Hypothesis("lambda_1 = 1 at the balanced point".into()));
    }
    let l0 = small_block_eigenline(&mw).ok_or_else(|| ForgeError::Hypothesis("plane block is not real".into()))?;
    let ma = fr.evaluate(a)?;
    let es = eigen_structure_f64(&ma, None)?;
    let l0_residual = es.e_cs.distance_to_line(&l0);
    Ok(BalanceReport {
        epsilon,
        word,
        direction,
        log_ratio_before: r0,
        residual,
        lambda_1: l1,
        lambda_perp: lp,
        l0,
        l0_residual,
        scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlinalg::rat;

    fn d4() -> RatMat2 {
        RatMat2::diag([int(4), rat(1, 4)])
    }

    fn b4() -> RatMat2 {
        RatMat2::from_strs([["17/8", "15/8"], ["15/8", "17/8"]]).unwrap()
    }

    fn lahn_like() -> Suspension {
        Suspension::from_planes(vec![d4(), b4()], vec![int(8), int(3)]).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let s = Suspension::from_planes(vec![RatMat2::diag([int(2), rat(1, 2)]), RatMat2::identity()], vec![int(1), int(4)])
            .unwrap();
        let rho = s.assemble().unwrap();
        assert_eq!(rho.images()[0], RatMat3::diag([int(2), rat(1, 2), int(1)]));
        assert_eq!(rho.images()[1], RatMat3::diag([rat(1, 2), rat(1, 2), int(4)]));
        assert!(lahn_like().assemble().is_err());
        let bad = Suspension::new(
            vec![d4(), d4()],
            vec![int(1), int(1)],
            vec![1, -1],
            vec![[Rat::zero(), Rat::zero()], [Rat::zero(), Rat::zero()]],
        )
        .unwrap();
        assert!(matches!(bad.assemble(), Err(ForgeError::Determinant { .. })));
    }

    #[test]
    fn extract_round_trip() {
        let s = Suspension::new(
            vec![d4(), b4()],
            vec![int(4), rat(9, 4)],
            vec![1, 1],
            vec![[rat(1, 2), int(0)], [int(-1), rat(1, 3)]],
        )
        .unwrap();
        let rho = s.assemble().unwrap();
        let back = Suspension::extract(&rho, &[int(0), int(0), int(1)]).unwrap();
        assert_eq!(back, s);
        assert!(Suspension::extract(&rho, &[int(1), int(0), int(0)]).is_err());
    }

    #[test]
    fn lambda_examples() {
        let s = Suspension::from_planes(vec![RatMat2::diag([int(2), rat(1, 2)]), d4()], vec![int(1), int(2)]).unwrap();
        let l = lambda_triple(&s, &Word::letter(1)).unwrap();
        assert!((l.lambda_1 - 2.0).abs() < 1e-14 && (l.lambda_2 - 0.5).abs() < 1e-14);
        assert_eq!(l.lambda_perp_exact.as_deref(), Some("1"));
        let c = crate::freegroup::commutator(&Word::letter(1), &Word::letter(2));
        assert_eq!(s.multiplier(&c).unwrap(), int(1));
    }

    #[test]
    fn v_classes() {
        let s = Suspension::from_planes(vec![RatMat2::diag([int(2), rat(1, 2)]), d4()], vec![int(4), rat(1, 2)]).unwrap();
        assert_eq!(v_class(&s, &Word::letter(1)).unwrap(), VClass::V);
        // lambda_1 = 4 sqrt 2, lambda_2 = sqrt 2 / 4 < lambda_perp = 1/2.
        assert_eq!(v_class(&s, &Word::letter(2)).unwrap(), VClass::Neither);
        assert_eq!(v_class(&s, &Word::letter(-1)).unwrap(), VClass::VInverse);
    }

    #[test]
    fn lahn_examples() {
        let s = Suspension::from_planes(vec![d4(), b4()], vec![int(2), int(1)]).unwrap();
        let r = lahn_ratio(&s, 1).unwrap();
        assert!((r.inf_ratio - 2.0).abs() < 1e-12);
        assert_eq!(r.witness, Word::letter(1));
        let r = lahn_ratio(&lahn_like(), 1).unwrap();
        assert!((r.inf_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.witness, Word::letter(1));
        assert_eq!(r.verdict, LahnVerdict::NonAnosovEvidence);
        let flat = Suspension::from_planes(vec![d4(), b4()], vec![int(1), int(1)]).unwrap();
        assert!(lahn_ratio(&flat, 3).is_err());
    }

    #[test]
    fn hyperbolicity() {
        assert!(hyperbolicity_scan(&lahn_like(), 5).unwrap().passed());
        let rot = RatMat2::from_i64([[0, -1], [1, 0]]);
        let s = Suspension::from_planes(vec![d4(), rot], vec![int(2), int(1)]).unwrap();
        match hyperbolicity_scan(&s, 3).unwrap() {
            ScanOutcome::Witness { word, .. } => assert_eq!(word, Word::letter(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tau_run_on_lahn_pair() {
        let s = lahn_like();
        let run = tau_iteration(&s, &Word::letter(1), &Word::letter(2), 50).unwrap();
        assert_eq!(run.steps.len(), 1);
        assert_eq!(run.steps[0].p, 1);
        assert_eq!(run.final_a, Word::letter(2));
        assert_eq!(run.final_b.letters(), &[1, -2]);
        assert_eq!(run.final_class, VClass::Neither);
        assert!(run.tau_trace.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(run.steps[0].abelian_determinant.abs(), 1);
    }

    #[test]
    fn balance_after_tau() {
        let s = lahn_like();
        let run = tau_iteration(&s, &Word::letter(1), &Word::letter(2), 50).unwrap();
        let basis = run.basis.unwrap();
        let bw = find_balanced_word(&s, &basis[0], &basis[1], 2.0, 40, 40).unwrap();
        let rep = balance_scaling(&s, &basis, bw.m, bw.n).unwrap();
        assert!(rep.residual <= 1e-10, "residual {}", rep.residual);
        assert!(rep.l0_residual <= 1e-8, "{} {:?} {} {}", rep.l0_residual, bw, rep.epsilon, rep.lambda_1);
        assert!(matches!(v_class(&rep.scaled, &rep.word), Err(ForgeError::Boundary(_))));
    }

    #[test]
    fn scaling_law_matches_recomputation() {
        let s = lahn_like();
        let sc = scale_generator(&s, 1, 0.3).unwrap();
        let fr = sc.assemble_float().unwrap();
        let w = crate::freegroup::reduce(2, &[1, 2, 1, -2, 1]).unwrap();
        let (l1, _, lp) = lambdas_from_matrix(&fr.evaluate(&w).unwrap());
        let base = lambda_triple(&s, &w).unwrap();
        let p = 3.0;
        assert!((lp / (base.lambda_perp * (0.3 * p as f64).exp()) - 1.0).abs() < 1e-12);
        assert!((l1 / (base.lambda_1 * (-0.15 * p as f64).exp()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serde_shape() {
        let s = lahn_like();
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["multipliers"], serde_json::json!(["8", "3"]));
        assert_eq!(j["plane_parts"][0], serde_json::json!([["4", "0"], ["0", "1/4"]]));
        let back: Suspension = serde_json::from_value(j).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rational_square_roots() {
        assert_eq!(rational_sqrt(&rat(9, 4)), Some(rat(3, 2)));
        assert_eq!(rational_sqrt(&int(8)), None);
    }
}
