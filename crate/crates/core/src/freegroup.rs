//! Reduced words in a free group of finite rank.
//!
//! A letter is a nonzero signed generator index: `i > 0` is generator `i`
//! (one-based) and `-i` its inverse. The identity is the empty word.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ForgeError, Result};

/// Rank and display names of a free generating set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    pub rank: usize,
    pub names: Vec<String>,
}

impl GeneratorSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return invalid("a free generating set needs rank at least 2");
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return invalid(format!("duplicate generator name {n:?}"));
            }
        }
        Ok(GeneratorSet { rank: names.len(), names })
    }

    /// Default names `a, b, c, ...` (then `g27, g28, ...`).
    pub fn standard(rank: usize) -> Result<Self> {
        let names = (0..rank)
            .map(|i| {
                if i < 26 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("g{}", i + 1)
                }
            })
            .collect();
        Self::new(names)
    }

    pub fn format(&self, w: &Word) -> String {
        w.format(&self.names)
    }
}

/// A freely reduced word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Word {
    letters: Vec<i32>,
}

impl Word {
    pub fn identity() -> Self {
        Word { letters: Vec::new() }
    }

    /// The one-letter word for generator `i` (one-based, signed).
    pub fn letter(i: i32) -> Self {
        assert!(i != 0, "letter 0 is not a generator");
        Word { letters: vec![i] }
    }

    /// Wraps letters already known to be freely reduced.
    pub(crate) fn from_reduced(letters: Vec<i32>) -> Self {
        debug_assert!(letters.windows(2).all(|p| p[0] != -p[1] && p[0] != 0));
        Word { letters }
    }

    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    /// Largest generator index used.
    pub fn max_index(&self) -> usize {
        self.letters.iter().map(|l| l.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn pow(&self, n: i64) -> Word {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut out = Word::identity();
        for _ in 0..n.unsigned_abs() {
            out = out.concat(&base);
        }
        out
    }

    pub fn inverse(&self) -> Word {
        invert(self)
    }

    pub fn concat(&self, other: &Word) -> Word {
        concat(self, other)
    }

    pub fn format(&self, names: &[String]) -> String {
        if self.letters.is_empty() {
            return "1".to_string();
        }
        self.letters
            .iter()
            .map(|&l| {
                let i = l.unsigned_abs() as usize - 1;
                let base = names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
                if l < 0 {
                    format!("{base}^-1")
                } else {
                    base
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Substitute a word for each generator and reduce.
    pub fn substitute(&self, images: &[Word]) -> Result<Word> {
        let mut out = Word::identity();
        for &l in &self.letters {
            let i = l.unsigned_abs() as usize;
            let img = images
                .get(i - 1)
                .ok_or(ForgeError::LetterOutOfRange { index: l, rank: images.len() })?;
            out = if l > 0 { out.concat(img) } else { out.concat(&img.inverse()) };
        }
        Ok(out)
    }
}

/// Freely reduce a raw letter sequence over a rank-`rank` alphabet.
pub fn reduce(rank: usize, letters: &[i32]) -> Result<Word> {
    let mut out: Vec<i32> = Vec::with_capacity(letters.len());
    for &l in letters {
        if l == 0 || l.unsigned_abs() as usize > rank {
            return Err(ForgeError::LetterOutOfRange { index: l, rank });
        }
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    Ok(Word { letters: out })
}

/// Parses a word written as whitespace- or comma-separated tokens. A token
/// is a signed generator index (`2`, `-1`) or a generator name with an
/// optional integer exponent (`b`, `a^-1`, `c^3`). The result is reduced;
/// the empty string is the identity.
pub fn parse_word(s: &str, names: &[String]) -> Result<Word> {
    let mut letters = Vec::new();
    for tok in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
        if let Ok(i) = tok.parse::<i32>() {
            letters.push(i);
            continue;
        }
        let (base, exp) = match tok.split_once('^') {
            Some((b, e)) => (b, e.parse::<i32>().map_err(|_| ForgeError::Parse(format!("bad exponent in {tok:?}")))?),
            None => (tok, 1),
        };
        let i = names
            .iter()
            .position(|n| n == base)
            .ok_or_else(|| ForgeError::Parse(format!("unknown generator {base:?}")))? as i32
            + 1;
        let l = if exp < 0 { -i } else { i };
        letters.extend(std::iter::repeat(l).take(exp.unsigned_abs() as usize));
    }
    reduce(names.len(), &letters)
}

pub fn concat(w1: &Word, w2: &Word) -> Word {
    let a = &w1.letters;
    let b = &w2.letters;
    let mut k = 0;
    while k < a.len() && k < b.len() && a[a.len() - 1 - k] == -b[k] {
        k += 1;
    }
    let mut letters = Vec::with_capacity(a.len() + b.len() - 2 * k);
    letters.extend_from_slice(&a[..a.len() - k]);
    letters.extend_from_slice(&b[k..]);
    Word { letters }
}

pub fn invert(w: &Word) -> Word {
    Word { letters: w.letters.iter().rev().map(|l| -l).collect() }
}

/// `w1 w2 w1^-1 w2^-1`, reduced.
pub fn commutator(w1: &Word, w2: &Word) -> Word {
    w1.concat(w2).concat(&w1.inverse()).concat(&w2.inverse())
}

/// Signed letter counts per generator.
pub fn abelianize(w: &Word, rank: usize) -> Vec<i64> {
    let mut v = vec![0i64; rank];
    for &l in &w.letters {
        let i = l.unsigned_abs() as usize - 1;
        if i < rank {
            v[i] += l.signum() as i64;
        }
    }
    v
}

/// Letters in enumeration order: `-k, ..., -1, 1, ..., k`.
pub fn alphabet(rank: usize) -> Vec<i32> {
    let k = rank as i32;
    (-k..=k).filter(|&l| l != 0).collect()
}

/// Number of reduced words of length `n`.
pub fn sphere_size(rank: usize, n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    let k = rank as u128;
    (2 * k - 1).checked_pow(n as u32 - 1).and_then(|x| x.checked_mul(2 * k)).unwrap_or(u128::MAX)
}

/// Number of reduced words of length at most `n`.
pub fn ball_size(rank: usize, n: usize) -> u128 {
    (0..=n).fold(0u128, |acc, j| acc.saturating_add(sphere_size(rank, j)))
}

/// Refuses exhaustive work over the ball of radius `n` when it has more
/// than `cap` words.
pub fn require_ball_within(rank: usize, n: usize, cap: u128) -> Result<()> {
    let requested = ball_size(rank, n);
    if requested > cap {
        return Err(ForgeError::TooLarge { requested, cap });
    }
    Ok(())
}

/// Lexicographic stream of the reduced words of length exactly `n`.
pub fn enumerate(rank: usize, n: usize) -> WordStream {
    WordStream::new(rank, n, None)
}

/// Reduced words of length `n` beginning with `first`, in lexicographic order.
pub fn enumerate_with_prefix(rank: usize, n: usize, first: i32) -> WordStream {
    WordStream::new(rank, n, Some(first))
}

/// Odometer over alphabet positions that skips backtracking pairs.
pub struct WordStream {
    alpha: Vec<i32>,
    idx: Vec<usize>,
    fixed_first: bool,
    done: bool,
}

impl WordStream {
    fn new(rank: usize, n: usize, first: Option<i32>) -> Self {
        let alpha = alphabet(rank);
        let mut s = WordStream { alpha, idx: vec![0; n], fixed_first: first.is_some(), done: false };
        if let Some(f) = first {
            match s.alpha.iter().position(|&l| l == f) {
                Some(p) if n > 0 => s.idx[0] = p,
                _ => s.done = true,
            }
        }
        if !s.done {
            s.fill_tail(1);
        }
        s
    }

    // Smallest admissible letters from position `from` onwards.
    fn fill_tail(&mut self, from: usize) {
        for j in from.max(1)..self.idx.len() {
            self.idx[j] = 0;
            if self.alpha[0] == -self.alpha[self.idx[j - 1]] {
                self.idx[j] = 1;
            }
        }
    }

    // Moves to the next reduced tuple; false when exhausted.
    fn advance(&mut self) -> bool {
        let n = self.idx.len();
        if n == 0 {
            return false;
        }
        let lowest = if self.fixed_first { 1 } else { 0 };
        let mut pos = n;
        loop {
            if pos == lowest {
                return false;
            }
            pos -= 1;
            if self.idx[pos] + 1 < self.alpha.len() {
                self.idx[pos] += 1;
                if pos > 0 && self.alpha[self.idx[pos]] == -self.alpha[self.idx[pos - 1]] {
                    if self.idx[pos] + 1 < self.alpha.len() {
                        self.idx[pos] += 1;
                    } else {
                        self.idx[pos] = 0;
                        continue;
                    }
                }
                self.fill_tail(pos + 1);
                return true;
            } else {
                self.idx[pos] = 0;
            }
        }
    }
}

impl Iterator for WordStream {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        let w = Word { letters: self.idx.iter().map(|&i| self.alpha[i]).collect() };
        if !self.advance() {
            self.done = true;
        }
        Some(w)
    }
}

/// Depth-first walk of the Cayley tree up to depth `max_len`, threading a
/// state from parent to child. `visit` sees every reduced word once, parents
/// before children, in lexicographic order within each length class.
/// When `first` is given only the subtree under that letter (plus nothing
/// else, not even the identity) is visited.
pub fn walk_tree<S, V>(rank: usize, max_len: usize, root: S, first: Option<i32>, step: &dyn Fn(&S, i32) -> S, visit: &mut V)
where
    V: FnMut(&[i32], &S),
{
    let alpha = alphabet(rank);
    let mut letters = Vec::with_capacity(max_len);
    fn rec<S, V: FnMut(&[i32], &S)>(
        alpha: &[i32],
        max_len: usize,
        letters: &mut Vec<i32>,
        state: &S,
        step: &dyn Fn(&S, i32) -> S,
        visit: &mut V,
    ) {
        visit(letters, state);
        if letters.len() == max_len {
            return;
        }
        for &l in alpha {
            if letters.last() == Some(&-l) {
                continue;
            }
            let next = step(state, l);
            letters.push(l);
            rec(alpha, max_len, letters, &next, step, visit);
            letters.pop();
        }
    }
    match first {
        None => rec(&alpha, max_len, &mut letters, &root, step, visit),
        Some(l) => {
            if max_len == 0 {
                return;
            }
            let next = step(&root, l);
            letters.push(l);
            rec(&alpha, max_len, &mut letters, &next, step, visit);
        }
    }
}

/// Runs [`walk_tree`] on each first-letter subtree in parallel. Each subtree
/// gets its own accumulator from `init`; the results come back in alphabet
/// order, so merging them in sequence is deterministic. The identity is not
/// visited.
pub fn par_walk_tree<S, A>(
    rank: usize,
    max_len: usize,
    root: &S,
    step: &(dyn Fn(&S, i32) -> S + Sync),
    init: &(dyn Fn() -> A + Sync),
    visit: &(dyn Fn(&mut A, &[i32], &S) + Sync),
) -> Vec<A>
where
    S: Clone + Sync,
    A: Send,
{
    use rayon::prelude::*;
    alphabet(rank)
        .into_par_iter()
        .map(|first| {
            let mut acc = init();
            walk_tree(rank, max_len, root.clone(), Some(first), step, &mut |w: &[i32], s: &S| visit(&mut acc, w, s));
            acc
        })
        .collect()
}

/// Action of `a` and `b` on the sheets of a finite cover of the rose with
/// two petals. Sheet 0 carries the base point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetAutomaton {
    pub perm_a: Vec<usize>,
    pub perm_b: Vec<usize>,
}

impl CosetAutomaton {
    pub fn sheets(&self) -> usize {
        self.perm_a.len()
    }

    fn inverse_perm(p: &[usize]) -> Vec<usize> {
        let mut inv = vec![0; p.len()];
        for (i, &j) in p.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }

    /// Sheet reached by reading `w` from sheet `start` (right action).
    pub fn read(&self, start: usize, w: &Word) -> usize {
        let ia = Self::inverse_perm(&self.perm_a);
        let ib = Self::inverse_perm(&self.perm_b);
        w.letters().iter().fold(start, |v, &l| match l {
            1 => self.perm_a[v],
            -1 => ia[v],
            2 => self.perm_b[v],
            -2 => ib[v],
            _ => panic!("coset automaton reads rank-2 words only"),
        })
    }

    pub fn accepts(&self, w: &Word) -> bool {
        self.read(0, w) == 0
    }

    /// Number of sheets reachable from the base sheet.
    pub fn index(&self) -> usize {
        let n = self.sheets();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in [self.perm_a[v], self.perm_b[v]] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Coset table of the subgroup generated by `gens` inside `F(a, b)`,
/// obtained by identifying the endpoints of the generator loops until the
/// labelled graph is deterministic. Returns `None` when the subgroup has
/// infinite index (the folded graph is not a covering).
pub fn coset_table(gens: &[Word]) -> Option<CosetAutomaton> {
    // Edge maps: out[v][letter slot] = target; slots 0:a 1:a^-1 2:b 3:b^-1.
    let slot = |l: i32| -> usize {
        match l {
            1 => 0,
            -1 => 1,
            2 => 2,
            -2 => 3,
            _ => panic!("coset tables are computed over rank 2"),
        }
    };
    let mut edges: Vec<[Option<usize>; 4]> = vec![[None; 4]];
    let mut parent: Vec<usize> = vec![0];
    fn find(parent: &mut Vec<usize>, mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut pending: Vec<(usize, usize, usize)> = Vec::new(); // (from, slot, to)
    for g in gens {
        let letters = g.letters();
        let mut v = 0usize;
        for (i, &l) in letters.iter().enumerate() {
            let to = if i + 1 == letters.len() {
                0
            } else {
                edges.push([None; 4]);
                parent.push(parent.len());
                edges.len() - 1
            };
            pending.push((v, slot(l), to));
            pending.push((to, slot(-l), v));
            v = to;
        }
    }
    // Fold: process edges, merging targets whenever a slot is already used.
    let mut merges: Vec<(usize, usize)> = Vec::new();
    while let Some((from, s, to)) = pending.pop() {
        let f = find(&mut parent, from);
        let t = find(&mut parent, to);
        match edges[f][s] {
            None => edges[f][s] = Some(t),
            Some(existing) => {
                let e = find(&mut parent, existing);
                if e != t {
                    merges.push((e, t));
                }
            }
        }
        while let Some((x, y)) = merges.pop() {
            let x = find(&mut parent, x);
            let y = find(&mut parent, y);
            if x == y {
                continue;
            }
            let (keep, drop) = if x < y { (x, y) } else { (y, x) };
            parent[drop] = keep;
            let dropped = edges[drop];
            for (s2, tgt) in dropped.iter().enumerate() {
                if let Some(t2) = tgt {
                    pending.push((keep, s2, *t2));
                }
            }
        }
    }
    // Collect live vertices reachable from the base.
    let root = find(&mut parent, 0);
    let mut order = vec![root];
    let mut label = std::collections::HashMap::new();
    label.insert(root, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        i += 1;
        for s in 0..4 {
            let t = find(&mut parent, edges[v][s]?);
            if let std::collections::hash_map::Entry::Vacant(e) = label.entry(t) {
                e.insert(order.len());
                order.push(t);
            }
        }
    }
    let n = order.len();
    let mut perm_a = vec![0; n];
    let mut perm_b = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        perm_a[k] = label[&find(&mut parent, edges[v][0]?)];
        perm_b[k] = label[&find(&mut parent, edges[v][2]?)];
    }
    Some(CosetAutomaton { perm_a, perm_b })
}

/// Free basis of a finite-index subgroup of `F(a, b)` read off a cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteIndexBasis {
    pub generators: Vec<Word>,
    pub p: usize,
    pub index: usize,
    pub cover: CosetAutomaton,
    /// Tree edges used to read the basis, as `(sheet, letter)` pairs.
    pub spanning_tree: Vec<(usize, i32)>,
}

/// A free basis `c_1, ..., c_k` of a subgroup of index `k - 1` in `F(a, b)`
/// with `c_1 = a`, `c_2 = b^2` and `c_3 = b a^p b^-1`.
///
/// The cover has `k - 1` sheets: `b` swaps sheets 0 and 1 and fixes the
/// rest, `a` fixes sheet 0 and cycles sheets `1 -> 2 -> ... -> k-2 -> 1`.
/// The spanning tree is the `b`-edge `0 -> 1` followed by the `a`-path
/// through sheets `1, ..., k-2`, which gives `p = k - 2`.
pub fn finite_index_generators(k: usize) -> Result<FiniteIndexBasis> {
    if k < 3 {
        return invalid("finite_index_generators needs target rank k >= 3");
    }
    let n = k - 1;
    let mut perm_a = vec![0; n];
    let mut perm_b: Vec<usize> = (0..n).collect();
    perm_b[0] = 1;
    perm_b[1] = 0;
    for (v, slot) in perm_a.iter_mut().enumerate().skip(1) {
        *slot = if v + 1 < n { v + 1 } else { 1 };
    }
    let cover = CosetAutomaton { perm_a, perm_b };

    // Tree paths from the base sheet: sheet j >= 1 is reached by b a^(j-1).
    let a = Word::letter(1);
    let b = Word::letter(2);
    let path = |j: usize| -> Word {
        if j == 0 {
            Word::identity()
        } else {
            b.concat(&a.pow(j as i64 - 1))
        }
    };
    let mut spanning_tree = vec![(0usize, 2i32)];
    for j in 1..n - 1 {
        spanning_tree.push((j, 1));
    }
    let is_tree = |v: usize, l: i32| spanning_tree.contains(&(v, l));

    // Each non-tree edge v --l--> w yields path(v) l path(w)^-1.
    let schreier = |v: usize, l: i32| -> Word {
        let w = if l == 1 { cover.perm_a[v] } else { cover.perm_b[v] };
        path(v).concat(&Word::letter(l)).concat(&path(w).inverse())
    };
    let mut generators = vec![schreier(0, 1), schreier(1, 2), schreier(n - 1, 1)];
    for v in 2..n {
        generators.push(schreier(v, 2));
    }
    debug_assert!(!is_tree(0, 1) && !is_tree(1, 2));

    let table = coset_table(&generators)
        .ok_or_else(|| ForgeError::Invalid("constructed subgroup has infinite index".into()))?;
    let index = table.index();
    if index != n || generators.iter().any(|g| !cover.accepts(g)) || generators.len() != 1 + index {
        return Err(ForgeError::Invalid("cover and coset enumeration disagree".into()));
    }
    Ok(FiniteIndexBasis { generators, p: n - 1, index, cover, spanning_tree })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_parse_from_indices_and_names() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_word("1,-2, 1", &names).unwrap().letters(), &[1, -2, 1]);
        assert_eq!(parse_word("c^3 a^-1 a b", &names).unwrap().letters(), &[3, 3, 3, 2]);
        assert_eq!(parse_word("1", &names).unwrap(), Word::letter(1));
        assert_eq!(parse_word(" ", &names).unwrap(), Word::identity());
        assert!(parse_word("d", &names).is_err());
        assert!(parse_word("4", &names).is_err());
        let w = reduce(3, &[1, 3, -2]).unwrap();
        assert_eq!(parse_word(&w.format(&names), &names).unwrap(), w);
    }

    fn w(l: &[i32]) -> Word {
        reduce(4, l).unwrap()
    }

    #[test]
    fn reduce_cancels() {
        assert_eq!(w(&[1, -1, 2]).letters(), &[2]);
        assert!(w(&[]).is_identity());
        assert_eq!(w(&[1, 2, -2, 1]).letters(), &[1, 1]);
        assert!(reduce(2, &[3]).is_err());
        assert!(reduce(2, &[0]).is_err());
    }

    #[test]
    fn concat_and_invert() {
        assert!(concat(&w(&[1]), &w(&[-1])).is_identity());
        assert_eq!(concat(&w(&[1, 2]), &w(&[-2, 1])).letters(), &[1, 1]);
        assert_eq!(concat(&w(&[1]), &w(&[2])).letters(), &[1, 2]);
        assert_eq!(invert(&w(&[1, 2])).letters(), &[-2, -1]);
        assert!(invert(&Word::identity()).is_identity());
        assert_eq!(invert(&w(&[1, 1])).letters(), &[-1, -1]);
    }

    #[test]
    fn commutators() {
        let a = w(&[1]);
        let b = w(&[2]);
        assert!(commutator(&a, &a).is_identity());
        assert_eq!(commutator(&a, &b).letters(), &[1, 2, -1, -2]);
        assert!(commutator(&Word::identity(), &b).is_identity());
        assert_eq!(abelianize(&commutator(&a, &b), 2), vec![0, 0]);
        assert_eq!(abelianize(&w(&[1, 1, -2]), 2), vec![2, -1]);
    }

    #[test]
    fn enumeration_counts_small() {
        assert_eq!(enumerate(2, 1).count(), 4);
        assert_eq!(enumerate(2, 2).count(), 12);
        let zero: Vec<Word> = enumerate(3, 0).collect();
        assert_eq!(zero, vec![Word::identity()]);
    }

    #[test]
    fn enumeration_is_sorted_and_reduced() {
        let all: Vec<Word> = enumerate(2, 4).collect();
        assert!(all.windows(2).all(|p| p[0].letters() < p[1].letters()));
        assert!(all.iter().all(|x| reduce(2, x.letters()).unwrap() == *x));
    }

    #[test]
    fn prefix_stream_matches_filter() {
        let direct: Vec<Word> = enumerate(3, 3).filter(|x| x.letters()[0] == 2).collect();
        let pref: Vec<Word> = enumerate_with_prefix(3, 3, 2).collect();
        assert_eq!(direct, pref);
    }

    #[test]
    fn tree_walk_visits_ball() {
        let mut seen = Vec::new();
        walk_tree(2, 3, (), None, &|_, _| (), &mut |l: &[i32], _| seen.push(l.to_vec()));
        assert_eq!(seen.len() as u128, ball_size(2, 3));
    }

    #[test]
    fn cover_for_rank_three() {
        let fb = finite_index_generators(3).unwrap();
        assert_eq!(fb.p, 1);
        assert_eq!(fb.index, 2);
        let g: Vec<Vec<i32>> = fb.generators.iter().map(|x| x.letters().to_vec()).collect();
        assert_eq!(g, vec![vec![1], vec![2, 2], vec![2, 1, -2]]);
        assert!(finite_index_generators(2).is_err());
    }

    #[test]
    fn coset_table_of_whole_group() {
        let t = coset_table(&[w(&[1]), w(&[2])]).unwrap();
        assert_eq!(t.index(), 1);
        assert!(coset_table(&[w(&[1])]).is_none());
    }
}
