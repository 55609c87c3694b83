//! Representations of free groups into `SL(3, Q)`, exact word evaluation,
//! growth profiles over the Cayley tree, and exact spectral witnesses.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::exactlinalg::float::{singular_values_f64, top_singular_value, M3};
use crate::exactlinalg::matrix::require_det;
use crate::exactlinalg::poly::{cubic_discriminant, sign};
use crate::exactlinalg::{int, DenMat3, RatMat3};
use crate::freegroup::{alphabet, par_walk_tree, require_ball_within, GeneratorSet, Word};

/// Exhaustive scans refuse balls with more words than this.
pub const ENUMERATION_CAP: u128 = 10_000_000;

const CACHE_MAX_LEN: usize = 12;
const CACHE_MAX_ENTRIES: usize = 1 << 15;

/// Generator images in `SL(3, Q)`.
#[derive(Debug)]
pub struct Representation {
    pub generators: GeneratorSet,
    images: Vec<RatMat3>,
    inverses: Vec<RatMat3>,
    cache: Mutex<HashMap<Vec<i32>, RatMat3>>,
}

impl Clone for Representation {
    fn clone(&self) -> Self {
        Representation {
            generators: self.generators.clone(),
            images: self.images.clone(),
            inverses: self.inverses.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for Representation {
    fn eq(&self, other: &Self) -> bool {
        self.generators == other.generators && self.images == other.images
    }
}

#[derive(Serialize, Deserialize)]
struct RepresentationFile {
    rank: usize,
    names: Vec<String>,
    images: Vec<RatMat3>,
}

impl Serialize for Representation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RepresentationFile {
            rank: self.rank(),
            names: self.generators.names.clone(),
            images: self.images.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Representation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = RepresentationFile::deserialize(d)?;
        if f.names.len() != f.rank {
            return Err(serde::de::Error::custom("rank does not match the number of names"));
        }
        let g = GeneratorSet::new(f.names).map_err(serde::de::Error::custom)?;
        Representation::with_generators(g, f.images).map_err(serde::de::Error::custom)
    }
}

impl Representation {
    /// Images must have determinant exactly 1.
    pub fn new(images: Vec<RatMat3>) -> Result<Self> {
        let g = GeneratorSet::standard(images.len())?;
        Self::with_generators(g, images)
    }

    pub fn with_generators(generators: GeneratorSet, images: Vec<RatMat3>) -> Result<Self> {
        if images.len() != generators.rank {
            return Err(ForgeError::RankMismatch { expected: generators.rank, found: images.len() });
        }
        let one = int(1);
        let mut inverses = Vec::with_capacity(images.len());
        for m in &images {
            require_det(m, &one)?;
            inverses.push(m.inv()?);
        }
        Ok(Representation { generators, images, inverses, cache: Mutex::new(HashMap::new()) })
    }

    /// The representation sending every generator to the identity.
    pub fn trivial(rank: usize) -> Result<Self> {
        Self::new(vec![RatMat3::identity(); rank])
    }

    pub fn rank(&self) -> usize {
        self.generators.rank
    }

    pub fn images(&self) -> &[RatMat3] {
        &self.images
    }

    /// Image of a signed letter.
    pub fn letter_image(&self, l: i32) -> &RatMat3 {
        let i = l.unsigned_abs() as usize - 1;
        if l > 0 {
            &self.images[i]
        } else {
            &self.inverses[i]
        }
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        if let Some(&l) = w.letters().iter().find(|l| l.unsigned_abs() as usize > self.rank()) {
            return Err(ForgeError::LetterOutOfRange { index: l, rank: self.rank() });
        }
        Ok(())
    }

    /// Exact image of `w`. Prefixes of short words are cached.
    pub fn evaluate(&self, w: &Word) -> Result<RatMat3> {
        self.check_word(w)?;
        let letters = w.letters();
        let (mut start, mut acc) = (0, RatMat3::identity());
        {
            let cache = self.cache.lock().expect("evaluation cache poisoned");
            for k in (1..=letters.len().min(CACHE_MAX_LEN)).rev() {
                if let Some(m) = cache.get(&letters[..k]) {
                    start = k;
                    acc = m.clone();
                    break;
                }
            }
        }
        let mut fresh = Vec::new();
        for (k, &l) in letters.iter().enumerate().skip(start) {
            acc = acc.mul(self.letter_image(l));
            if k < CACHE_MAX_LEN {
                fresh.push((letters[..=k].to_vec(), acc.clone()));
            }
        }
        if !fresh.is_empty() {
            let mut cache = self.cache.lock().expect("evaluation cache poisoned");
            if cache.len() + fresh.len() > CACHE_MAX_ENTRIES {
                cache.clear();
            }
            cache.extend(fresh);
        }
        Ok(acc)
    }

    /// Float copies of the generator images, for perturbation work.
    pub fn to_float(&self) -> FloatRepresentation {
        FloatRepresentation { images: self.images.iter().map(|m| m.to_f64()).collect() }
    }

    fn den_letters(&self) -> (Vec<DenMat3>, Vec<DenMat3>) {
        let alpha = alphabet(self.rank());
        let fwd = alpha.iter().map(|&l| DenMat3::from_rat(self.letter_image(l))).collect();
        let inv = alpha.iter().map(|&l| DenMat3::from_rat(self.letter_image(-l))).collect();
        (fwd, inv)
    }
}

/// Position of a letter in [`alphabet`] order.
pub(crate) fn letter_slot(rank: usize, l: i32) -> usize {
    let k = rank as i32;
    if l < 0 {
        (l + k) as usize
    } else {
        (l + k - 1) as usize
    }
}

/// Generator images as double-precision matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatRepresentation {
    #[serde(with = "crate::exactlinalg::float::serde_m3::vec")]
    pub images: Vec<M3>,
}

impl FloatRepresentation {
    pub fn rank(&self) -> usize {
        self.images.len()
    }

    pub fn evaluate(&self, w: &Word) -> Result<M3> {
        let mut acc = M3::identity();
        for &l in w.letters() {
            let i = l.unsigned_abs() as usize;
            let m = self.images.get(i - 1).ok_or(ForgeError::LetterOutOfRange { index: l, rank: self.rank() })?;
            if l > 0 {
                acc *= m;
            } else {
                acc *= m.try_inverse().ok_or(ForgeError::Singular)?;
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthQuantity {
    /// `log s1`.
    LogTopSingularValue,
    /// `log s1 - log s2`.
    LogSingularGap,
}

/// Minimum of the profiled quantity over all words of one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthMinimum {
    pub length: usize,
    pub words: u128,
    pub min: f64,
    pub witness: Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub quantity: GrowthQuantity,
    pub max_length: usize,
    /// False for sampled profiles.
    pub exhaustive: bool,
    pub per_length: Vec<LengthMinimum>,
    /// Least-squares fit of the minima against length.
    pub slope: f64,
    pub intercept: f64,
}

impl GrowthProfile {
    /// Tab-separated `length  min  words  witness` rows with a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("length\tmin\twords\twitness\n");
        for r in &self.per_length {
            let w: Vec<String> = r.witness.letters().iter().map(|l| l.to_string()).collect();
            out.push_str(&format!("{}\t{:.12e}\t{}\t{}\n", r.length, r.min, r.words, w.join(",")));
        }
        out
    }

    pub fn minimum_at(&self, n: usize) -> Option<&LengthMinimum> {
        self.per_length.iter().find(|r| r.length == n)
    }
}

/// Ordinary least squares `y = slope x + intercept`. Lengths 0 and 1 are
/// dropped when at least two longer lengths remain.
pub fn fit_line(points: &[(usize, f64)]) -> (f64, f64) {
    let long: Vec<_> = points.iter().filter(|(n, _)| *n >= 2).copied().collect();
    let pts = if long.len() >= 2 { long } else { points.to_vec() };
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    if pts.len() == 1 {
        return (0.0, pts[0].1);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

#[derive(Clone)]
struct TreeState {
    m: DenMat3,
    inv: Option<DenMat3>,
}

fn growth_value(q: GrowthQuantity, s: &TreeState) -> f64 {
    let l1 = s.m.log_top_singular_value();
    match q {
        GrowthQuantity::LogTopSingularValue => l1,
        // det = 1, so log s2 = -log s1 - log s3 and log s3 = -log s1(M^-1).
        GrowthQuantity::LogSingularGap => {
            let li = s.inv.as_ref().map(|m| m.log_top_singular_value()).unwrap_or(0.0);
            2.0 * l1 - li
        }
    }
}

fn better(v: f64, w: &[i32], best: &LengthMinimum) -> bool {
    v < best.min || (v == best.min && w < best.witness.letters())
}

fn merge_minima(parts: Vec<Vec<LengthMinimum>>, max_len: usize) -> Vec<LengthMinimum> {
    let mut out: Vec<LengthMinimum> = (1..=max_len)
        .map(|n| LengthMinimum { length: n, words: 0, min: f64::INFINITY, witness: Word::identity() })
        .collect();
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            o.words += p.words;
            if p.words > 0 && (o.words == p.words || better(p.min, p.witness.letters(), o)) {
                o.min = p.min;
                o.witness = p.witness;
            }
        }
    }
    out
}

fn profile(rho: &Representation, max_len: usize, q: GrowthQuantity) -> Result<GrowthProfile> {
    if max_len == 0 {
        return Err(ForgeError::Invalid("maximum length must be at least 1".into()));
    }
    require_ball_within(rho.rank(), max_len, ENUMERATION_CAP)?;
    let rank = rho.rank();
    let (fwd, inv) = rho.den_letters();
    let need_inv = q == GrowthQuantity::LogSingularGap;
    let root = TreeState { m: DenMat3::identity(), inv: need_inv.then(DenMat3::identity) };
    let step = |s: &TreeState, l: i32| {
        let k = letter_slot(rank, l);
        TreeState { m: s.m.mul(&fwd[k]), inv: s.inv.as_ref().map(|i| inv[k].mul(i)) }
    };
    let init = || {
        (1..=max_len)
            .map(|n| LengthMinimum { length: n, words: 0, min: f64::INFINITY, witness: Word::identity() })
            .collect::<Vec<_>>()
    };
    let visit = |acc: &mut Vec<LengthMinimum>, w: &[i32], s: &TreeState| {
        let slot = &mut acc[w.len() - 1];
        let v = growth_value(q, s);
        slot.words += 1;
        if slot.words == 1 || better(v, w, slot) {
            slot.min = v;
            slot.witness = Word::from_reduced(w.to_vec());
        }
    };
    let parts = par_walk_tree(rank, max_len, &root, &step, &init, &visit);
    let per_length = merge_minima(parts, max_len);
    let pts: Vec<(usize, f64)> = per_length.iter().map(|r| (r.length, r.min)).collect();
    let (slope, intercept) = fit_line(&pts);
    Ok(GrowthProfile { quantity: q, max_length: max_len, exhaustive: true, per_length, slope, intercept })
}

/// Exhaustive per-length minima of `log s1`.
pub fn qi_profile(rho: &Representation, max_len: usize) -> Result<GrowthProfile> {
    profile(rho, max_len, GrowthQuantity::LogTopSingularValue)
}

/// Exhaustive per-length minima of `log s1 - log s2`.
pub fn anosov_gap_profile(rho: &Representation, max_len: usize) -> Result<GrowthProfile> {
    profile(rho, max_len, GrowthQuantity::LogSingularGap)
}

/// Exhaustive profile from double-precision images, for representations
/// without exact rational images (irrational rotations, non-square
/// multipliers). Values carry float rounding.
pub fn float_profile(rho: &FloatRepresentation, max_len: usize, q: GrowthQuantity) -> Result<GrowthProfile> {
    if max_len == 0 {
        return Err(ForgeError::Invalid("maximum length must be at least 1".into()));
    }
    require_ball_within(rho.rank(), max_len, ENUMERATION_CAP)?;
    let rank = rho.rank();
    let letters: Vec<M3> = alphabet(rank).iter().map(|&l| rho.evaluate(&Word::letter(l))).collect::<Result<_>>()?;
    let step = |m: &M3, l: i32| m * letters[letter_slot(rank, l)];
    let init = || {
        (1..=max_len)
            .map(|n| LengthMinimum { length: n, words: 0, min: f64::INFINITY, witness: Word::identity() })
            .collect::<Vec<_>>()
    };
    let visit = |acc: &mut Vec<LengthMinimum>, w: &[i32], m: &M3| {
        let s = singular_values_f64(m);
        let v = match q {
            GrowthQuantity::LogTopSingularValue => s[0].ln(),
            GrowthQuantity::LogSingularGap => (s[0] / s[1]).ln(),
        };
        let slot = &mut acc[w.len() - 1];
        slot.words += 1;
        if slot.words == 1 || better(v, w, slot) {
            slot.min = v;
            slot.witness = Word::from_reduced(w.to_vec());
        }
    };
    let parts = par_walk_tree(rank, max_len, &M3::identity(), &step, &init, &visit);
    let per_length = merge_minima(parts, max_len);
    let pts: Vec<(usize, f64)> = per_length.iter().map(|r| (r.length, r.min)).collect();
    let (slope, intercept) = fit_line(&pts);
    Ok(GrowthProfile { quantity: q, max_length: max_len, exhaustive: true, per_length, slope, intercept })
}

/// Profile over `samples` uniformly random reduced words per length. The
/// result is marked non-exhaustive.
pub fn sampled_profile(
    rho: &Representation,
    max_len: usize,
    q: GrowthQuantity,
    samples: usize,
    seed: u64,
) -> Result<GrowthProfile> {
    if max_len == 0 || samples == 0 {
        return Err(ForgeError::Invalid("length and sample count must be positive".into()));
    }
    let rank = rho.rank();
    let alpha = alphabet(rank);
    let (fwd, inv) = rho.den_letters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_length = Vec::new();
    for n in 1..=max_len {
        let mut best = LengthMinimum { length: n, words: 0, min: f64::INFINITY, witness: Word::identity() };
        for _ in 0..samples {
            let mut w: Vec<i32> = Vec::with_capacity(n);
            while w.len() < n {
                let l = alpha[rng.gen_range(0..alpha.len())];
                if w.last() != Some(&-l) {
                    w.push(l);
                }
            }
            let mut s = TreeState { m: DenMat3::identity(), inv: Some(DenMat3::identity()) };
            for &l in &w {
                let k = letter_slot(rank, l);
                s = TreeState { m: s.m.mul(&fwd[k]), inv: s.inv.map(|i| inv[k].mul(&i)) };
            }
            let v = growth_value(q, &s);
            best.words += 1;
            if best.words == 1 || better(v, &w, &best) {
                best.min = v;
                best.witness = Word::from_reduced(w);
            }
        }
        per_length.push(best);
    }
    let pts: Vec<(usize, f64)> = per_length.iter().map(|r| (r.length, r.min)).collect();
    let (slope, intercept) = fit_line(&pts);
    Ok(GrowthProfile { quantity: q, max_length: max_len, exhaustive: false, per_length, slope, intercept })
}

/// True when the characteristic polynomial of `rho(w)` has negative
/// discriminant: one real eigenvalue and a complex-conjugate pair.
pub fn nonreal_spectrum_witness(rho: &Representation, w: &Word) -> Result<bool> {
    Ok(has_nonreal_spectrum(&rho.evaluate(w)?))
}

pub fn has_nonreal_spectrum(m: &RatMat3) -> bool {
    sign(&cubic_discriminant(&m.charpoly())) < 0
}

/// Every word of length `1..=max_len` whose image is unipotent and not the
/// identity, ordered by length then lexicographically.
pub fn unipotent_scan(rho: &Representation, max_len: usize) -> Result<Vec<(Word, RatMat3)>> {
    require_ball_within(rho.rank(), max_len, ENUMERATION_CAP)?;
    if max_len == 0 {
        return Ok(Vec::new());
    }
    let rank = rho.rank();
    let (fwd, _) = rho.den_letters();
    let step = |s: &DenMat3, l: i32| s.mul(&fwd[letter_slot(rank, l)]);
    let init = Vec::new;
    let visit = |acc: &mut Vec<(Word, RatMat3)>, w: &[i32], m: &DenMat3| {
        if m.is_unipotent() && !m.is_identity() {
            acc.push((Word::from_reduced(w.to_vec()), m.to_rat()));
        }
    };
    let parts = par_walk_tree(rank, max_len, &DenMat3::identity(), &step, &init, &visit);
    let mut all: Vec<(Word, RatMat3)> = parts.into_iter().flatten().collect();
    all.sort_by(|a, b| (a.0.len(), a.0.letters()).cmp(&(b.0.len(), b.0.letters())));
    Ok(all)
}

/// `log s1(rho(w))` from a float evaluation, for callers holding float data.
pub fn log_top_singular_value_f64(m: &M3) -> f64 {
    top_singular_value(m).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlinalg::rat;
    use crate::freegroup::{commutator, reduce};

    fn g() -> RatMat3 {
        RatMat3::from_strs([["2", "-2", "0"], ["2", "2", "0"], ["0", "0", "1/8"]]).unwrap()
    }

    fn schottky() -> Representation {
        let a = RatMat3::diag([int(4), int(1), rat(1, 4)]);
        let q = RatMat3::from_i64([[1, 1, 0], [0, 1, 1], [1, 0, 2]]);
        let b = q.mul(&a).mul(&q.inv().unwrap());
        Representation::new(vec![a, b]).unwrap()
    }

    #[test]
    fn evaluation_basics() {
        let rho = schottky();
        assert!(rho.evaluate(&Word::identity()).unwrap().is_identity());
        let aa = reduce(2, &[1, 1]).unwrap();
        assert_eq!(rho.evaluate(&aa).unwrap(), rho.images()[0].pow(2).unwrap());
        let c = commutator(&Word::letter(1), &Word::letter(2));
        let (a, b) = (&rho.images()[0], &rho.images()[1]);
        let expect = a.mul(b).mul(&a.inv().unwrap()).mul(&b.inv().unwrap());
        assert_eq!(rho.evaluate(&c).unwrap(), expect);
        // Cached prefix reuse gives the same answer.
        assert_eq!(rho.evaluate(&c).unwrap(), expect);
        assert!(rho.evaluate(&Word::letter(3)).is_err());
    }

    #[test]
    fn rejects_non_unimodular_images() {
        assert!(Representation::new(vec![RatMat3::scalar(int(2)), RatMat3::identity()]).is_err());
    }

    #[test]
    fn trivial_profiles_vanish() {
        let rho = Representation::trivial(2).unwrap();
        let p = qi_profile(&rho, 4).unwrap();
        assert!(p.per_length.iter().all(|r| r.min.abs() < 1e-12));
        assert!(p.slope.abs() < 1e-12);
        let q = anosov_gap_profile(&rho, 3).unwrap();
        assert!(q.per_length.iter().all(|r| r.min.abs() < 1e-12));
        assert_eq!(p.per_length[3].words, 4 * 27);
    }

    #[test]
    fn gap_of_rotation_powers_is_flat() {
        let f = RatMat3::diag([int(4), int(1), rat(1, 4)]);
        let rho = Representation::new(vec![g(), f]).unwrap();
        let p = anosov_gap_profile(&rho, 4).unwrap();
        for r in &p.per_length {
            assert!(r.min.abs() < 1e-9, "length {} min {}", r.length, r.min);
        }
    }

    #[test]
    fn witnesses_and_scans() {
        let rho = Representation::new(vec![g(), RatMat3::diag([int(2), int(1), rat(1, 2)])]).unwrap();
        assert!(nonreal_spectrum_witness(&rho, &Word::letter(1)).unwrap());
        assert!(!nonreal_spectrum_witness(&rho, &Word::letter(2)).unwrap());
        let mut u = RatMat3::identity();
        u.m[0][2] = int(1);
        let rho = Representation::new(vec![u, RatMat3::diag([int(2), int(1), rat(1, 2)])]).unwrap();
        let hits = unipotent_scan(&rho, 2).unwrap();
        let words: Vec<Vec<i32>> = hits.iter().map(|h| h.0.letters().to_vec()).collect();
        assert_eq!(words, vec![vec![-1], vec![1], vec![-1, -1], vec![1, 1]]);
        assert!(unipotent_scan(&Representation::trivial(2).unwrap(), 3).unwrap().is_empty());
    }

    #[test]
    fn float_profile_agrees_with_exact() {
        let rho = schottky();
        for q in [GrowthQuantity::LogTopSingularValue, GrowthQuantity::LogSingularGap] {
            let exact = profile(&rho, 4, q).unwrap();
            let float = float_profile(&rho.to_float(), 4, q).unwrap();
            for (a, b) in exact.per_length.iter().zip(&float.per_length) {
                assert_eq!(a.words, b.words);
                assert!((a.min - b.min).abs() < 1e-9, "{q:?} length {}: {} vs {}", a.length, a.min, b.min);
            }
        }
    }

    #[test]
    fn sampled_profiles_are_labelled() {
        let p = sampled_profile(&schottky(), 5, GrowthQuantity::LogTopSingularValue, 20, 7).unwrap();
        assert!(!p.exhaustive);
        assert_eq!(p.per_length.len(), 5);
        assert_eq!(p, sampled_profile(&schottky(), 5, GrowthQuantity::LogTopSingularValue, 20, 7).unwrap());
    }

    #[test]
    fn serde_round_trip() {
        let rho = schottky();
        let s = serde_json::to_string(&rho).unwrap();
        assert!(s.starts_with("{\"rank\":2,\"names\":[\"a\",\"b\"]"));
        let back: Representation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn line_fit() {
        let (s, i) = fit_line(&[(1, 100.0), (2, 3.0), (3, 5.0), (4, 7.0)]);
        assert!((s - 2.0).abs() < 1e-12 && (i + 1.0).abs() < 1e-12);
    }
}
