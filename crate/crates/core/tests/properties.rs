//! Property tests for the algebraic and measure-theoretic invariants.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use skewprod::actions::{ActionSpec, Word};
use skewprod::bernoulli::{Cylinder, IndexSource, ProbabilitySequence, ShiftWindow};
use skewprod::cli::{execute, parse_config};
use skewprod::equidist::{equidist_report, star_discrepancy_1d, weyl_sum, EquidistConfig};
use skewprod::groups::{GeneratorSet, GroupElement, GroupSpec};
use skewprod::measures::{
    folner_average, push_forward, weakstar_distance, weakstar_distance_to_haar, ConvexWordCombination,
    DenseFunctionFamily, EmpiricalMeasure, FolnerSet,
};
use skewprod::products::{orbit_points, OrbitConfig};

const TOL: f64 = 1e-9;

fn groups() -> Vec<GroupSpec> {
    ["torus:1", "torus:3", "cyclic:12", "product:4x6", "perm:5", "su2"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

fn group() -> impl Strategy<Value = GroupSpec> {
    proptest::sample::select(groups())
}

fn draw(spec: &GroupSpec, seed: u64, n: usize) -> Vec<GroupElement> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| spec.haar_sample(&mut r)).collect()
}

fn close(spec: &GroupSpec, a: &GroupElement, b: &GroupElement) -> bool {
    spec.metric(a, b).unwrap() <= TOL
}

fn translation(spec: &GroupSpec, seed: u64, k: usize) -> ActionSpec {
    let gens = draw(spec, seed ^ 0xabc, k);
    ActionSpec::translation(GeneratorSet::new(spec.clone(), gens, false).unwrap())
}

fn word(symbols: &[u64]) -> Word {
    Word::from_indices(symbols).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_axioms(spec in group(), seed in any::<u64>()) {
        let v = draw(&spec, seed, 3);
        let (a, b, c) = (&v[0], &v[1], &v[2]);
        let e = spec.identity();
        let ab_c = spec.compose(&spec.compose(a, b).unwrap(), c).unwrap();
        let a_bc = spec.compose(a, &spec.compose(b, c).unwrap()).unwrap();
        prop_assert!(close(&spec, &ab_c, &a_bc));
        prop_assert!(close(&spec, &spec.compose(a, &e).unwrap(), a));
        prop_assert!(close(&spec, &spec.compose(&e, a).unwrap(), a));
        let inv = spec.inverse(a).unwrap();
        prop_assert!(close(&spec, &spec.compose(a, &inv).unwrap(), &e));
        prop_assert!(close(&spec, &spec.compose(&inv, a).unwrap(), &e));
    }

    #[test]
    fn metric_axioms(spec in group(), seed in any::<u64>()) {
        let v = draw(&spec, seed, 4);
        let (x, y, z, g) = (&v[0], &v[1], &v[2], &v[3]);
        let d = |a: &GroupElement, b: &GroupElement| spec.metric(a, b).unwrap();
        prop_assert!(d(x, x) <= TOL);
        prop_assert!((d(x, y) - d(y, x)).abs() <= TOL);
        prop_assert!(d(x, z) <= d(x, y) + d(y, z) + TOL);
        prop_assert!(d(x, y) >= 0.0);
        // translations are isometries on both sides
        let gx = spec.compose(g, x).unwrap();
        let gy = spec.compose(g, y).unwrap();
        let xg = spec.compose(x, g).unwrap();
        let yg = spec.compose(y, g).unwrap();
        prop_assert!((d(&gx, &gy) - d(x, y)).abs() <= TOL);
        prop_assert!((d(&xg, &yg) - d(x, y)).abs() <= TOL);
    }

    #[test]
    fn haar_measure_is_translation_invariant(dim in 1usize..=2, seed in any::<u64>()) {
        // The midpoint grid integrates the first family members exactly, and
        // so does every translate of it.
        let spec = GroupSpec::torus(dim).unwrap();
        let grid = EmpiricalMeasure::lebesgue_grid(&spec, 64).unwrap();
        let family = DenseFunctionFamily::new(spec.clone()).unwrap();
        let action = translation(&spec, seed, 1);
        let moved = push_forward(&action, &word(&[1]), &grid).unwrap();
        prop_assert!(weakstar_distance_to_haar(&family, &grid, 20).unwrap().value <= 1e-12);
        prop_assert!(weakstar_distance_to_haar(&family, &moved, 20).unwrap().value <= 1e-12);
    }

    #[test]
    fn finite_haar_is_translation_invariant(idx in 0usize..3, seed in any::<u64>()) {
        let spec: GroupSpec = ["cyclic:12", "product:4x6", "perm:4"][idx].parse().unwrap();
        let uniform = EmpiricalMeasure::lebesgue_grid(&spec, 1).unwrap();
        let action = translation(&spec, seed, 1);
        let moved = push_forward(&action, &word(&[1]), &uniform).unwrap();
        let mut a: Vec<u64> = uniform.atoms().iter().map(|(x, _)| spec.index_of(x).unwrap()).collect();
        let mut b: Vec<u64> = moved.atoms().iter().map(|(x, _)| spec.index_of(x).unwrap()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn shift_preserves_cylinder_events(seed in any::<u64>(), syms in prop::collection::vec(1u64..4, 1..4), start in -5i64..5) {
        let law = ProbabilitySequence::geometric(0.5).unwrap();
        let w = ShiftWindow::new(IndexSource::new(law.clone(), seed));
        let c = Cylinder::new(start, syms).unwrap();
        // T(r) ∈ C  ⇔  r ∈ C shifted by one coordinate, and both have the same λ
        prop_assert_eq!(c.matches(&w.shift()), c.at(start + 1).matches(&w));
        prop_assert_eq!(c.measure(&law), c.at(start + 1).measure(&law));
        // λ(C) = Σ_j λ(C extended by j), with the tail beyond 60 negligible
        let split: f64 = (1..60).map(|j| c.extended(j).unwrap().measure(&law)).sum();
        prop_assert!((split - c.measure(&law)).abs() <= 1e-15);
    }

    #[test]
    fn pushforward_is_a_homomorphism(spec in group(), seed in any::<u64>(), w1 in prop::collection::vec(1u64..4, 1..6), w2 in prop::collection::vec(1u64..4, 1..6)) {
        let action = translation(&spec, seed, 3);
        let sigma = EmpiricalMeasure::uniform(spec.clone(), draw(&spec, seed, 5)).unwrap();
        let (a, b) = (word(&w1), word(&w2));
        let once = push_forward(&action, &a.concat(&b), &sigma).unwrap();
        let twice = push_forward(&action, &b, &push_forward(&action, &a, &sigma).unwrap()).unwrap();
        for ((x, p), (y, q)) in once.atoms().iter().zip(twice.atoms()) {
            prop_assert!(close(&spec, x, y));
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn folner_average_is_a_convex_word_combination(spec in group(), seed in any::<u64>(), words in prop::collection::vec(prop::collection::vec(1u64..3, 1..5), 1..5)) {
        let action = translation(&spec, seed, 2);
        let family = DenseFunctionFamily::new(spec.clone()).unwrap();
        let nu = EmpiricalMeasure::uniform(spec.clone(), draw(&spec, seed, 3)).unwrap();
        let ws: Vec<Word> = words.iter().map(|w| word(w)).collect();
        let avg = folner_average(&action, &FolnerSet::Words(ws.clone()), &nu).unwrap();
        let comb = ConvexWordCombination::uniform(ws).unwrap().apply(&action, &nu).unwrap();
        prop_assert!(weakstar_distance(&family, &avg, &comb, 20).unwrap().value <= 1e-12);
    }

    #[test]
    fn weakstar_is_a_pseudometric(spec in group(), seed in any::<u64>()) {
        let family = DenseFunctionFamily::new(spec.clone()).unwrap();
        let pts = draw(&spec, seed, 9);
        let m: Vec<EmpiricalMeasure> = pts
            .chunks(3)
            .map(|c| EmpiricalMeasure::uniform(spec.clone(), c.to_vec()).unwrap())
            .collect();
        let d = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| weakstar_distance(&family, a, b, 20).unwrap().value;
        prop_assert!(d(&m[0], &m[0]) == 0.0);
        prop_assert!((d(&m[0], &m[1]) - d(&m[1], &m[0])).abs() <= 1e-15);
        prop_assert!(d(&m[0], &m[2]) <= d(&m[0], &m[1]) + d(&m[1], &m[2]) + 1e-15);
        // |f_n| ≤ 1 and the weights sum to below 1
        prop_assert!(d(&m[0], &m[1]) < 2.0);
    }

    #[test]
    fn statistics_ignore_point_order(spec in group(), seed in any::<u64>()) {
        let mut pts = draw(&spec, seed, 2000);
        let cfg = EquidistConfig::default();
        let a = equidist_report(&spec, &pts, &cfg, 0).unwrap();
        pts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)));
        let b = equidist_report(&spec, &pts, &cfg, 0).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        for (s, t) in a.tests.iter().zip(&b.tests) {
            prop_assert_eq!(&s.name, &t.name);
            prop_assert!((s.value - t.value).abs() <= 1e-9 * s.value.abs().max(1.0));
        }
        if matches!(spec, GroupSpec::Torus { dim: 1 }) {
            let xs: Vec<f64> = pts.iter().map(|p| p.as_torus().unwrap()[0]).collect();
            let mut ys = xs.clone();
            ys.reverse();
            prop_assert_eq!(star_discrepancy_1d(&xs).unwrap(), star_discrepancy_1d(&ys).unwrap());
            let w1 = weyl_sum(&pts, &[3]).unwrap();
            pts.reverse();
            prop_assert!((w1 - weyl_sum(&pts, &[3]).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn orbits_are_determined_by_the_seed(spec in group(), seed in any::<u64>()) {
        let action = translation(&spec, 1, 3);
        let law = ProbabilitySequence::geometric(0.5).unwrap();
        let cfg = OrbitConfig::new(action, spec.identity(), law, 200, seed);
        prop_assert_eq!(orbit_points(cfg.clone()).unwrap(), orbit_points(cfg).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_determined_by_config_and_seed(seed in any::<u64>(), kind in 0usize..3) {
        let body = [
            "kind = equidist\nn = 3000\n[model]\naction = translation(su2; gens=haar:2)\n",
            "kind = skew-test\nn = 5000\n[model]\naction = rotation(0.3819660112501051,0.7071067811865476)\n",
            "kind = sensitivity\n[model]\naction = doubling-fixture\n[sensitivity]\nwords = 32\nmax_len = 16\nek_grid = 8\n",
        ][kind];
        let text = format!("[experiment]\nseed = {seed}\n{body}");
        let cfg = parse_config(&text).unwrap();
        let a = execute(&cfg).unwrap();
        let b = execute(&cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.payload).unwrap(), serde_json::to_string(&b.payload).unwrap());
        prop_assert_eq!(a.files, b.files);
    }
}
