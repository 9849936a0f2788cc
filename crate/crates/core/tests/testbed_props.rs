use perfectsim::chain::{verify_fl_monte_carlo, ChainModel, Kernel};
use perfectsim::measure::{Piece, Prob1D};
use perfectsim::rng::open_unit;
use perfectsim::stats::{chi_square_gof, ks_one_sample, ks_two_sample, mean_and_se};
use perfectsim::testbed::{
    counterexample_step, longrun_oracle, minimal_dominator_drift, partition_class, partition_depth,
    AtomChain, CounterexampleChain, CounterexampleParams, FiniteChain,
};
use perfectsim::FLCertificate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PROBES: [f64; 6] = [1.0, 3.0, 6.25, 10.0, 28.125, 100.0];

#[test]
fn atom_chain_certificate_holds() {
    let chain = AtomChain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rep = verify_fl_monte_carlo(
        &chain,
        &chain.fl_certificate(),
        &PROBES,
        100_000,
        0.0,
        &mut rng,
    )
    .unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn halved_b_is_caught() {
    let chain = AtomChain::default();
    let bad = FLCertificate::new(0.2, 1.0, 6.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rep = verify_fl_monte_carlo(&chain, &bad, &PROBES, 100_000, 0.0, &mut rng).unwrap();
    assert!(!rep.pass);
    assert!(!rep.probes[0].pass);
}

#[test]
fn atom_chain_minorization_empirically() {
    let chain = AtomChain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let beta = chain.minorization_at(28.125).unwrap().beta;
    let n = 100_000;
    for x in [1.0, 3.0, 6.25, 6.3, 10.0, 20.0, 28.125] {
        let hits = (0..n).filter(|_| chain.step(&x, &mut rng) == 1.0).count();
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(p >= beta - 3.0 * se, "x = {x}: {p}");
    }
}

#[test]
fn atom_chain_kernel_matches_its_jump_law() {
    let chain = AtomChain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for x in [2.0, 6.25, 7.0, 50.0] {
        let draws: Vec<f64> = (0..50_000).map(|_| chain.step(&x, &mut rng)).collect();
        assert!(
            ks_one_sample(&draws, &chain.lambda_jump_law(&x))
                .unwrap()
                .pass,
            "x = {x}"
        );
    }
}

#[test]
fn oracle_means_agree_across_seeds() {
    let chain = AtomChain::default();
    let runs: Vec<Vec<f64>> = (0..10)
        .map(|s| longrun_oracle(&chain, 1.0, 10_000, 10_000, 20, 100 + s).unwrap())
        .collect();
    let pooled: Vec<f64> = runs.iter().flatten().copied().collect();
    let (m, _) = mean_and_se(&pooled);
    for r in &runs {
        let (mi, se) = mean_and_se(r);
        assert!((mi - m).abs() < 3.0 * se, "{mi} vs {m}");
    }
}

#[test]
fn finite_oracle_frequencies() {
    let chain = FiniteChain::two_state();
    let draws = longrun_oracle(&chain, 0, 10_000, 10_000, 20, 5).unwrap();
    let mut c = [0u64; 2];
    for d in draws {
        c[d] += 1;
    }
    assert!(chi_square_gof(&c, &chain.stationary()).unwrap().pass);
}

#[test]
fn counterexample_from_one_is_shifted_exponential() {
    let chain = CounterexampleChain::new(CounterexampleParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<f64> = (0..50_000)
        .map(|_| counterexample_step(1.0, &chain, &mut rng))
        .collect();
    let law = Prob1D::new(1.0, vec![], vec![Piece::exponential(1.0, 1.0, 1.0)]).unwrap();
    assert!(ks_one_sample(&draws, &law).unwrap().pass);
}

#[test]
fn counterexample_conditional_mean_under_regeneration_to_one() {
    let chain = CounterexampleChain::new(CounterexampleParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for x in [2.5, 3.0, 3.3, 7.77, 12.0, 40.1] {
        let draws: Vec<f64> = (0..200_000)
            .map(|_| counterexample_step(x, &chain, &mut rng))
            .collect();
        let (m, se) = mean_and_se(&draws);
        let want = chain.conditional_mean(x);
        assert!((m - want).abs() < 3.0 * se, "x = {x}: {m} vs {want}");
        let alpha = chain.params().alpha;
        assert!(
            (want
                - (alpha * x + 1.0 - alpha / chain.multiplier(partition_class(x, chain.params()))))
            .abs()
                < 1e-12
        );
    }
}

#[test]
fn counterexample_long_run_is_stable() {
    let chain = CounterexampleChain::new(CounterexampleParams::default()).unwrap();
    let states = longrun_oracle(&chain, 1.0, 10_000, 50_000, 20, 8).unwrap();
    let (a, b) = states.split_at(states.len() / 2);
    assert!(ks_two_sample(a, b).unwrap().pass);
}

#[test]
fn partition_classes_are_dense_at_desk_scale() {
    let p = CounterexampleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut all = [false; 9];
    let intervals: Vec<f64> = (0..20).map(|_| 1.0 + 8.99 * open_unit(&mut rng)).collect();
    let mut per_interval = Vec::new();
    for &u in &intervals {
        let mut seen = [false; 9];
        for j in 0..10_000 {
            let c = partition_class(u + 0.01 * (j as f64 + 0.5) / 10_000.0, &p) as usize;
            seen[c] = true;
            all[c] = true;
        }
        per_interval.push(seen);
    }
    for (u, seen) in intervals.iter().zip(&per_interval) {
        for c in 1..=8 {
            if all[c] {
                assert!(seen[c], "class {c} missing from ({u}, {})", u + 0.01);
            }
        }
    }
    assert!(all[1..].iter().all(|&s| s));
}

#[test]
fn partition_is_total() {
    let p = CounterexampleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10_000 {
        let x = 1.0 + 1000.0 * open_unit(&mut rng);
        let c = partition_class(x, &p);
        assert!((1..=8).contains(&c));
        assert_eq!(c, partition_depth(x, &p) % 8 + 1);
    }
}

#[test]
fn minimal_dominator_drift_values() {
    let n = 100_000;
    let tol = 3.0 / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (alpha, want) in [
        (0.5, 1.0 + 0.5f64.ln()),
        (0.2, 1.0 + 0.2f64.ln()),
        ((-1.0f64).exp(), 0.0),
    ] {
        let d = minimal_dominator_drift(alpha, n, &mut rng).unwrap();
        assert!((d - want).abs() < tol, "alpha = {alpha}: {d} vs {want}");
    }
    assert!((1.0 + 0.5f64.ln() - 0.30685).abs() < 1e-5);
    assert!((1.0 + 0.2f64.ln() + 0.6094).abs() < 1e-4);
}

#[test]
fn dominating_log_increment_law() {
    // P(Y' >= α z y | z) = 1/y means log(Y'/z) - log α ~ Exp(1).
    let alpha = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let z = 40.0;
    let inc: Vec<f64> = (0..50_000)
        .map(|_| {
            let y = alpha * z / open_unit(&mut rng);
            (y / z).ln() - alpha.ln()
        })
        .collect();
    let law = Prob1D::new(0.0, vec![], vec![Piece::exponential(0.0, 1.0, 1.0)]).unwrap();
    assert!(ks_one_sample(&inc, &law).unwrap().pass);
    assert!(mean_and_se(&inc).0 + alpha.ln() > 0.0);
}
