//! Cross-module invariants on randomly generated inputs.

use anosov_forge::exactlinalg::{chordal_distance, int, rat, spectrum3, ProjPoint, RatMat2, RatMat3, V3};
use anosov_forge::flagdyn::{act_flag, attracting_flag};
use anosov_forge::freegroup::{abelianize, coset_table, finite_index_generators, reduce, Word};
use anosov_forge::pingpong::projective_lipschitz_bound;
use anosov_forge::suspension::Suspension;
use proptest::prelude::*;

fn word(rank: usize, max_len: usize) -> impl Strategy<Value = Word> {
    let r = rank as i32;
    prop::collection::vec((1..=r, any::<bool>()), 0..=max_len)
        .prop_map(move |v| reduce(rank, &v.into_iter().map(|(l, s)| if s { l } else { -l }).collect::<Vec<_>>()).unwrap())
}

fn elementary() -> impl Strategy<Value = RatMat2> {
    (1i64..=3, any::<bool>()).prop_map(|(k, upper)| {
        if upper {
            RatMat2::from_i64([[1, k], [0, 1]])
        } else {
            RatMat2::from_i64([[1, 0], [k, 1]])
        }
    })
}

fn plane() -> impl Strategy<Value = RatMat2> {
    prop::collection::vec(elementary(), 1..4).prop_map(|v| v.iter().fold(RatMat2::identity(), |acc, m| acc.mul(m)))
}

fn suspension() -> impl Strategy<Value = Suspension> {
    (2usize..=3).prop_flat_map(|rank| {
        (
            prop::collection::vec(plane(), rank),
            prop::collection::vec((1i64..=9, 1i64..=9).prop_map(|(p, q)| rat(p, q)), rank),
        )
            .prop_map(|(planes, mults)| Suspension::from_planes(planes, mults).unwrap())
    })
}

fn invertible3() -> impl Strategy<Value = RatMat3> {
    prop::array::uniform3(prop::array::uniform3(-4i64..=4))
        .prop_map(RatMat3::from_i64)
        .prop_filter("singular", |m| m.det() != int(0))
}

fn unit_line() -> impl Strategy<Value = ProjPoint> {
    prop::array::uniform3(-1.0f64..1.0).prop_filter_map("tiny", |a| {
        if V3::from(a).norm() > 1e-3 {
            ProjPoint::from_array(a)
        } else {
            None
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn multiplier_is_a_morphism((s, u, v) in suspension().prop_flat_map(|s| {
        let r = s.rank();
        (Just(s), word(r, 7), word(r, 7))
    })) {
        let uv = s.multiplier(&u.concat(&v)).unwrap();
        prop_assert_eq!(uv, s.multiplier(&u).unwrap() * s.multiplier(&v).unwrap());
        prop_assert_eq!(s.multiplier(&u.inverse()).unwrap() * s.multiplier(&u).unwrap(), int(1));
    }

    #[test]
    fn assembled_matrices_evaluate_like_the_blocks((planes, roots, w) in (2usize..=3).prop_flat_map(|rank| (
        prop::collection::vec(plane(), rank),
        prop::collection::vec((1i64..=5, 1i64..=5).prop_map(|(p, q)| rat(p, q)), rank),
        word(rank, 6),
    ))) {
        // Square multipliers t_i = r_i^2, so r(w) is itself a multiplier of
        // the suspension built from the r_i.
        let squares = roots.iter().map(|r| r * r).collect();
        let s = Suspension::from_planes(planes.clone(), squares).unwrap();
        let r = Suspension::from_planes(planes, roots).unwrap().multiplier(&w).unwrap();
        let m = s.assemble().unwrap().evaluate(&w).unwrap();
        prop_assert_eq!(m.det(), int(1));
        prop_assert_eq!(m.plane_block().scale(&r), s.plane_image(&w).unwrap());
        prop_assert_eq!(m.m[2][2].clone(), s.multiplier(&w).unwrap());
    }

    #[test]
    fn lipschitz_bound_is_sound(g in invertible3(), l in unit_line(), l2 in unit_line()) {
        let k = projective_lipschitz_bound(&g).unwrap();
        let gf = g.to_f64();
        let (gl, gl2) = (l.image(&gf).unwrap(), l2.image(&gf).unwrap());
        prop_assert!(chordal_distance(&gl, &gl2) <= k * chordal_distance(&l, &l2) + 1e-12);
    }

    #[test]
    fn attracting_flags_are_equivariant(p in invertible3(), h in invertible3(), a in 2i64..6, c in 2i64..6) {
        // Distinct moduli a > 1 > 1/(a c) make g loxodromic with a known flag.
        let d = RatMat3::diag([int(a * c), int(1), rat(1, a * c * c)]);
        let g = p.mul(&d).mul(&p.inv().unwrap());
        let conj = h.mul(&g).mul(&h.inv().unwrap());
        let moved = act_flag(&h.to_f64(), &attracting_flag(&g.to_f64()).unwrap()).unwrap();
        let direct = attracting_flag(&conj.to_f64()).unwrap();
        prop_assert!(moved.distance(&direct) <= 1e-6, "{}", moved.distance(&direct));
    }

    #[test]
    fn spectrum_is_conjugation_invariant(p in invertible3(), g in invertible3()) {
        let c = p.mul(&g).mul(&p.inv().unwrap());
        prop_assert_eq!(spectrum3(&g).charpoly, spectrum3(&c).charpoly);
    }
}

#[test]
fn finite_index_bases_obey_nielsen_schreier() {
    for k in 3..=8 {
        let b = finite_index_generators(k).unwrap();
        let cover = coset_table(&b.generators).expect("finite index");
        assert_eq!(cover.index(), k - 1);
        assert_eq!(b.generators.len(), 1 + cover.index());
        for w in &b.generators {
            assert!(cover.accepts(w));
        }
        let a_exponents: i64 = b.generators.iter().map(|w| abelianize(w, 2)[0]).sum();
        assert!(a_exponents >= 1, "k = {k}");
    }
}

#[test]
fn finite_index_images_stay_in_the_subgroup() {
    let rho = anosov_forge::catalog::rho_k(4).unwrap().representation().unwrap();
    let base = anosov_forge::catalog::rho2().representation().unwrap();
    let b = finite_index_generators(4).unwrap();
    for (w, m) in b.generators.iter().zip(rho.images()) {
        assert_eq!(&base.evaluate(w).unwrap(), m);
    }
}
