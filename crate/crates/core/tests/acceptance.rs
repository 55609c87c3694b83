//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

use std::time::{Duration, Instant};

use anosov_forge::catalog::{self, rho2_g};
use anosov_forge::exactlinalg::poly::Poly;
use anosov_forge::exactlinalg::{
    chordal_distance, classify_sl2, commutator_differential_rank, int, rat, spectrum3, ProjPoint, Rat, RatMat2,
    RatMat3, Sl2Class, V3,
};
use anosov_forge::flagdyn::{coverage_schedule, default_base_flag};
use anosov_forge::freegroup::{commutator, coset_table, finite_index_generators, reduce, Word};
use anosov_forge::perturb::{
    compensated_path, planted_incidence_instance, rho_k_destabilize, solve_incidence, unipotent_commutator,
    WitnessConstruction, THETA_TOL,
};
use anosov_forge::pingpong::{check_fabricaqi, find_power, projective_lipschitz_bound, qi_bound_check, Parity, QiBoundOutcome};
use anosov_forge::represent::{nonreal_spectrum_witness, unipotent_scan, Representation};
use anosov_forge::suspension::{
    balance_scaling, find_balanced_word, lahn_ratio, lambda_triple, lambdas_from_matrix, scale_generator,
    tau_iteration, Suspension, VClass,
};
use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    ensure(start.elapsed() <= limit, format!("runtime {:?} over {:?}", start.elapsed(), limit))
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn rho2() -> Representation {
    catalog::rho2().representation().expect("catalog rho2 is exact")
}

fn c1_rotation_matrix() -> Outcome {
    let t = Instant::now();
    let g = rho2_g();
    ensure(g.det() == Rat::from_integer(1.into()), "det(g) != 1")?;
    let sp = spectrum3(&g);
    ensure(sp.discriminant_sign == -1, "discriminant is not negative")?;
    let top = 2.0 * std::f64::consts::SQRT_2;
    ensure((sp.moduli[0] - top).abs() <= 1e-9, format!("lambda_u = {}", sp.moduli[0]))?;
    ensure((sp.moduli[1] - top).abs() <= 1e-9, format!("complex pair modulus {}", sp.moduli[1]))?;
    ensure(sp.real == [false, false, true], "real flags")?;
    let cp = Poly::monic_cubic(&g.charpoly());
    ensure(cp.eval(&rat(1, 8)).is_zero(), "1/8 is not a root of the characteristic polynomial")?;
    ensure(nonreal_spectrum_witness(&rho2(), &Word::letter(1)).map_err(e)?, "no nonreal witness")?;
    within(Duration::from_secs(1), t)?;
    Ok(format!("lambda_u = {:.10}, real root 1/8 exact", sp.moduli[0]))
}

fn c2_fabricaqi() -> Outcome {
    let t = Instant::now();
    let (g, f) = (rho2_g(), catalog::rho2_f());
    let r = check_fabricaqi(&f, &g, 16).map_err(e)?;
    ensure(r.passed, format!("{:?}", r.failure))?;
    ensure(r.m == 8 && r.mu == int(4096), format!("m = {}, mu = {}", r.m, r.mu))?;
    let g8 = g.pow(8).map_err(e)?;
    ensure(g8.plane_block() == RatMat2::scalar(int(4096)), "g^8 is not 4096 I on the plane")?;
    ensure(g8.m[2][2] == rat(1, 4096 * 4096), "L0 eigenvalue of g^8 is not 4096^-2")?;
    ensure(r.line_eigenvalue == rat(1, 4096 * 4096), "reported line eigenvalue")?;
    within(Duration::from_secs(1), t)?;
    Ok("m = 8, mu = 4096, L0 eigenvalue 1/16777216".into())
}

fn c3_power_and_qi_bound() -> Outcome {
    let t = Instant::now();
    let ps = find_power(&catalog::rho2_f(), &rho2_g(), Parity::Odd, 64).map_err(e)?;
    ensure(ps.n % 2 == 1 && ps.n <= 64, format!("n = {}", ps.n))?;
    ensure(ps.certificate.c == 2.0, format!("c = {}", ps.certificate.c))?;
    ensure(ps.certificate.family.len() == 4, "certified alphabet does not have 4 letters")?;
    let words = match qi_bound_check(&ps.certificate, 6).map_err(e)? {
        QiBoundOutcome::Pass { words, .. } => words,
        v => return Err(format!("{v:?}")),
    };
    ensure(words <= 4 * 243 + 4 * 81 + 4 * 27 + 4 * 9 + 4 * 3 + 4, format!("{words} products"))?;
    within(Duration::from_secs(300), t)?;
    Ok(format!("n = {}, {} words of length <= 6 checked", ps.n, words))
}

fn c4_flat_gap() -> Outcome {
    let g = rho2_g();
    let mut worst: f64 = 0.0;
    for j in 1..=16 {
        let sp = spectrum3(&g.pow(j).map_err(e)?);
        worst = worst.max((sp.moduli[0] / sp.moduli[1] - 1.0).abs());
    }
    ensure(worst <= 1e-9, format!("largest |lambda1/lambda2 - 1| = {worst:e}"))?;
    Ok(format!("largest |lambda1/lambda2 - 1| = {worst:e}"))
}

fn c5_lahn() -> Outcome {
    let t = Instant::now();
    let barbot = catalog::by_name("barbot").map_err(e)?;
    let r = lahn_ratio(barbot.suspension().map_err(e)?, 8).map_err(e)?;
    ensure(r.inf_ratio > 1.5 + 0.1, format!("barbot infimum {}", r.inf_ratio))?;
    within(Duration::from_secs(120), t)?;
    let t = Instant::now();
    let lq = catalog::lahn_qi_non_anosov();
    let s = lq.suspension().map_err(e)?;
    let w = Word::letter(1);
    let at_a = anosov_forge::exactlinalg::log_top_modulus(&s.plane_image(&w).map_err(e)?)
        / anosov_forge::exactlinalg::rat::ln_abs(&s.multiplier(&w).map_err(e)?);
    ensure(at_a <= 2.0 / 3.0 + 1e-9, format!("ratio at a = {at_a}"))?;
    let r2 = lahn_ratio(s, 8).map_err(e)?;
    ensure(r2.inf_ratio <= 2.0 / 3.0 + 1e-9, format!("infimum {}", r2.inf_ratio))?;
    within(Duration::from_secs(120), t)?;
    Ok(format!("barbot infimum {:.4} at depth 8; ratio at a = {:.12}", r.inf_ratio, at_a))
}

fn random_plane(rng: &mut ChaCha8Rng) -> RatMat2 {
    let mut m = RatMat2::identity();
    for _ in 0..rng.gen_range(1..4) {
        let k = int(rng.gen_range(1..3));
        let e = if rng.gen_bool(0.5) {
            RatMat2 { m: [[int(1), k], [int(0), int(1)]] }
        } else {
            RatMat2 { m: [[int(1), int(0)], [k, int(1)]] }
        };
        m = m.mul(&e);
    }
    m
}

fn random_suspension(rng: &mut ChaCha8Rng) -> Suspension {
    let rank = rng.gen_range(2..4);
    let planes = (0..rank).map(|_| random_plane(rng)).collect();
    let mults = (0..rank).map(|_| rat(rng.gen_range(1..9), rng.gen_range(1..9))).collect();
    Suspension::from_planes(planes, mults).expect("random data is valid")
}

fn random_word(rng: &mut ChaCha8Rng, rank: usize, max_len: usize) -> Word {
    let n = rng.gen_range(1..=max_len);
    let letters: Vec<i32> = (0..n)
        .map(|_| {
            let l = rng.gen_range(1..=rank as i32);
            if rng.gen_bool(0.5) {
                l
            } else {
                -l
            }
        })
        .collect();
    reduce(rank, &letters).expect("letters in range")
}

fn c6_scaling_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 100 {
        let s = random_suspension(&mut rng);
        let w = random_word(&mut rng, s.rank(), 6);
        let pl = s.plane_image(&w).map_err(e)?;
        // A zero discriminant makes lambda_1 a defective double root; a float
        // matrix only pins it down to sqrt(machine epsilon).
        if w.is_identity() || (pl.trace() * pl.trace() - int(4) * pl.det()).is_zero() {
            continue;
        }
        let c0 = rng.gen_range(1..=s.rank());
        let eps: f64 = rng.gen_range(-1.0..1.0);
        let p = w.letters().iter().map(|&l| if l == c0 as i32 { 1.0 } else if l == -(c0 as i32) { -1.0 } else { 0.0 }).sum::<f64>();
        let base = lambda_triple(&s, &w).map_err(e)?;
        let m = scale_generator(&s, c0, eps).map_err(e)?.assemble_float().map_err(e)?.evaluate(&w).map_err(e)?;
        let (l1, _, lp) = lambdas_from_matrix(&m);
        let rel_p = (lp / (base.lambda_perp * (eps * p).exp()) - 1.0).abs();
        let rel_1 = (l1 / (base.lambda_1 * (-0.5 * eps * p).exp()) - 1.0).abs();
        worst = worst.max(rel_p).max(rel_1);
        done += 1;
    }
    ensure(worst <= 1e-10, format!("largest relative deviation {worst:e}"))?;
    for _ in 0..100 {
        let s = random_suspension(&mut rng);
        let (w1, w2) = (random_word(&mut rng, s.rank(), 8), random_word(&mut rng, s.rank(), 8));
        let lhs = s.multiplier(&w1.concat(&w2)).map_err(e)?;
        let rhs = s.multiplier(&w1).map_err(e)? * s.multiplier(&w2).map_err(e)?;
        ensure(lhs == rhs, format!("lambda_perp not multiplicative on {w1:?}, {w2:?}"))?;
    }
    Ok(format!("100 triples, largest relative deviation {worst:e}; 100 exact products"))
}

fn c7_balance() -> Outcome {
    let lq = catalog::lahn_qi_non_anosov();
    let s = lq.suspension().map_err(e)?;
    let run = tau_iteration(s, &Word::letter(1), &Word::letter(2), 100).map_err(e)?;
    let basis = run.basis.ok_or("no basis after tau iteration")?;
    let bw = find_balanced_word(s, &basis[0], &basis[1], 2.0, 40, 40).map_err(e)?;
    let rep = balance_scaling(s, &basis, bw.m, bw.n).map_err(e)?;
    let fr = rep.scaled.assemble_float().map_err(e)?;
    let (l1, _, lp) = lambdas_from_matrix(&fr.evaluate(&rep.word).map_err(e)?);
    let residual = (l1 / lp).ln().abs();
    ensure(residual <= 1e-10, format!("|log(lambda1/lambda_perp)| = {residual:e}"))?;
    ensure(l1.ln().abs() > 1e-9, "lambda_1 = 1")?;
    ensure(rep.l0_residual <= 1e-8, format!("L0 residual {:e}", rep.l0_residual))?;
    Ok(format!("epsilon* = {:.12}, residual {residual:e}, L0 residual {:e}", rep.epsilon, rep.l0_residual))
}

fn c8_tau() -> Outcome {
    let lq = catalog::lahn_qi_non_anosov();
    let run = tau_iteration(lq.suspension().map_err(e)?, &Word::letter(1), &Word::letter(2), 100).map_err(e)?;
    ensure(run.steps.len() <= 100, "too many iterations")?;
    ensure(run.final_class == VClass::Neither, format!("final class {:?}", run.final_class))?;
    ensure(run.tau_trace.windows(2).all(|w| w[0] < w[1]), "tau trace not strictly increasing")?;
    ensure(run.steps.iter().all(|s| s.abelian_determinant.abs() == 1), "substitution not in GL(Z)")?;
    Ok(format!("{} substitution(s), final b = {:?}", run.steps.len(), run.final_b.letters()))
}

fn c9_planted() -> Outcome {
    let t = Instant::now();
    let rho = planted_incidence_instance();
    let path = compensated_path(&rho.to_float(), 1, 2, 1, 1, 1, 0.6).map_err(e)?;
    let inc = solve_incidence(&path, 8, THETA_TOL).map_err(e)?;
    ensure(inc.theta.abs() <= 1e-12, format!("theta = {:e}", inc.theta))?;
    ensure(inc.steps <= 60, format!("{} bisection steps", inc.steps))?;
    let w = unipotent_commutator(&path, &inc).map_err(e)?;
    ensure(w.residual <= 1e-8, format!("residual {:e}", w.residual))?;
    let found = unipotent_scan(&rho, w.word.len()).map_err(e)?;
    ensure(found.is_empty(), format!("unperturbed scan found {:?}", found.first().map(|f| &f.0)))?;
    within(Duration::from_secs(60), t)?;
    Ok(format!("theta {:e} after {} steps, residual {:e}, control scan to length {} empty", inc.theta, inc.steps, w.residual, w.word.len()))
}

fn c10_destabilize() -> Outcome {
    let t = Instant::now();
    let rho = catalog::rho_k(3).map_err(e)?.representation().map_err(e)?;
    let w = rho_k_destabilize(&rho, None, 6).map_err(e)?;
    ensure(w.residual <= 1e-6, format!("residual {:e}", w.residual))?;
    let WitnessConstruction::Destabilized { gamma, q, .. } = &w.construction else {
        return Err("unexpected construction".into());
    };
    let c1 = Word::letter(1);
    let conj = gamma.concat(&c1).concat(&gamma.inverse());
    let expect = commutator(&Word::letter(3).pow(*q as i64), &conj);
    ensure(w.word == expect, "witness word is not [c3^q, gamma c1 gamma^-1]")?;
    within(Duration::from_secs(300), t)?;
    Ok(format!("q = {q}, gamma = {:?}, residual {:e}, exact unipotent {:?}", gamma.letters(), w.residual, w.exact_unipotent))
}

fn c11_finite_index() -> Outcome {
    let b3 = finite_index_generators(3).map_err(e)?;
    let a = Word::letter(1);
    let bb = Word::letter(2).pow(2);
    let bab = reduce(2, &[2, 1, -2]).map_err(e)?;
    ensure(b3.generators == vec![a, bb, bab], format!("k = 3 basis {:?}", b3.generators))?;
    ensure(b3.p == 1, "k = 3: p != 1")?;
    let idx3 = coset_table(&b3.generators).ok_or("k = 3: infinite index")?.index();
    ensure(idx3 == 2, format!("k = 3: enumerated index {idx3}"))?;
    let b4 = finite_index_generators(4).map_err(e)?;
    let idx4 = coset_table(&b4.generators).ok_or("k = 4: infinite index")?.index();
    ensure(b4.p == 2 && idx4 == 3, format!("k = 4: p = {}, index {idx4}", b4.p))?;
    for k in 3..=6 {
        let b = finite_index_generators(k).map_err(e)?;
        let idx = coset_table(&b.generators).ok_or("infinite index")?.index();
        ensure(b.generators.len() == 1 + idx, format!("k = {k}: rank {} with index {idx}", b.generators.len()))?;
        ensure(b.generators.len() == k, format!("k = {k}: rank {}", b.generators.len()))?;
    }
    Ok("bases, indices and ranks match for k = 3..6".into())
}

fn random_sl2(rng: &mut ChaCha8Rng) -> RatMat2 {
    let mut m = random_plane(rng);
    if rng.gen_bool(0.5) {
        m = m.transpose();
    }
    m.mul(&random_plane(rng).transpose())
}

fn c12_sl2() -> Outcome {
    let hyp = RatMat2::diag([int(2), rat(1, 2)]);
    let par = RatMat2::from_i64([[1, 1], [0, 1]]);
    let ell = RatMat2::from_i64([[0, -1], [1, 0]]);
    ensure(classify_sl2(&hyp).map_err(e)? == Sl2Class::Hyperbolic, "diag(2,1/2)")?;
    ensure(classify_sl2(&par).map_err(e)? == Sl2Class::Parabolic, "[[1,1],[0,1]]")?;
    ensure(classify_sl2(&ell).map_err(e)? == Sl2Class::Elliptic, "[[0,-1],[1,0]]")?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pairs = 0;
    while pairs < 1000 {
        let (g, h) = (random_sl2(&mut rng), random_sl2(&mut rng));
        let hyperbolic = |m: &RatMat2| m.trace().abs() > int(2);
        if !hyperbolic(&g) || !hyperbolic(&h) || g.mul(&h) == h.mul(&g) {
            continue;
        }
        let r = commutator_differential_rank(&g, &h).map_err(e)?;
        ensure(r == 3, format!("rank {r} at {g:?}, {h:?}"))?;
        pairs += 1;
    }
    let id = RatMat2::identity();
    ensure(commutator_differential_rank(&id, &id).map_err(e)? == 0, "rank at (I, I) is not 0")?;
    Ok("three classes exact; rank 3 on 1000 pairs, 0 at (I, I)".into())
}

fn random_line(rng: &mut ChaCha8Rng) -> ProjPoint {
    loop {
        let v = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 1e-3 {
            return ProjPoint::new(v).expect("nonzero");
        }
    }
}

fn c13_lipschitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = f64::NEG_INFINITY;
    let mut done = 0;
    while done < 10_000 {
        let g = RatMat3::from_i64(std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-5..=5))));
        if g.det().is_zero() {
            continue;
        }
        let k = projective_lipschitz_bound(&g).map_err(e)?;
        let gf = g.to_f64();
        let (l, l2) = (random_line(&mut rng), random_line(&mut rng));
        let (gl, gl2) = (ProjPoint::new(gf * l.vec()).ok_or("degenerate image")?, ProjPoint::new(gf * l2.vec()).ok_or("degenerate image")?);
        let slack = chordal_distance(&gl, &gl2) - k * chordal_distance(&l, &l2);
        ensure(slack <= 1e-12, format!("violated by {slack:e} at {g:?}"))?;
        worst = worst.max(slack);
        done += 1;
    }
    Ok(format!("10000 triples, largest d(gL,gL') - K d(L,L') = {worst:e}"))
}

fn c14_coverage() -> Outcome {
    let (a, b) = (catalog::rho2().float_representation().map_err(e)?, catalog::rho2_minimal().float_representation().map_err(e)?);
    let base = default_base_flag(&a);
    let ca = coverage_schedule(&a, &[5], base, 0.05, 0.1).map_err(e)?;
    let cb = coverage_schedule(&b, &[5], base, 0.05, 0.1).map_err(e)?;
    let (fa, fb) = (ca.fraction(), cb.fraction());
    ensure(fb > fa, format!("rho2' {fb:.5} <= rho2 {fa:.5}"))?;
    Ok(format!("rho2' {fb:.5} > rho2 {fa:.5} over {} grid flags", ca.grid_flags))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("rotation matrix g: det, spectrum, nonreal witness", c1_rotation_matrix),
        ("check_fabricaqi on (f, g): m = 8, mu = 4096", c2_fabricaqi),
        ("odd power certificate and exhaustive qi bound to length 6", c3_power_and_qi_bound),
        ("flat eigenvalue gap of g^j for j = 1..16", c4_flat_gap),
        ("Lahn ratios of the barbot and lahn-qi fixtures", c5_lahn),
        ("scaling laws and exact multiplicativity of lambda_perp", c6_scaling_laws),
        ("balance_scaling after tau iteration", c7_balance),
        ("tau_iteration termination and unimodularity", c8_tau),
        ("planted incidence and unipotent commutator", c9_planted),
        ("rho_k_destabilize on catalog rho3", c10_destabilize),
        ("finite_index_generators bases and indices", c11_finite_index),
        ("SL(2) classification and commutator differential rank", c12_sl2),
        ("projective Lipschitz bound soundness", c13_lipschitz),
        ("coverage of rho2' exceeds rho2 at depth 5", c14_coverage),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        match result {
            Ok(detail) => println!("PASS criterion {:>2}: {name} ({detail}; {dt:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name} ({why}; {dt:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
