mod common;

use std::io::Write;

use common::{brute_force_beta_mu_tail, random_instance};
use perfectsim::chain::{
    subsample_certificate, verify_fl_monte_carlo, SubsampleVariant, Subsampled,
};
use perfectsim::coupling::build_mu;
use perfectsim::engine::{classic_cftp, diagnostics_summary, write_jsonl, PerfectSampler};
use perfectsim::measure::{dominates, fixed_point_sigma, Law1D};
use perfectsim::queue::{
    equilibrium_u, forward_step_u, reversed_step_u, sample_equilibrium, QueueParams,
};
use perfectsim::rng::derive_seed;
use perfectsim::stats::{chi_square_gof, ks_one_sample, ks_two_sample};
use perfectsim::testbed::{
    longrun_oracle, minimal_dominator_drift, AtomChain, FiniteChain, DEFAULT_THIN,
};
use perfectsim::{ChainModel, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEED: u64 = 20_241_014;

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line {
        pass,
        detail: detail.into(),
    }
}

fn report(id: usize, name: &str, l: &Line) {
    let tag = if l.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr().lock(),
        "criterion {id} [{tag}] {name}: {}",
        l.detail
    );
}

struct DcftpBatch {
    ks: Line,
    violations: Line,
    coalescence: Line,
}

fn dcftp_batch() -> DcftpBatch {
    let n = 10_000;
    let sampler = PerfectSampler::new(AtomChain::default()).unwrap();
    let results: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(derive_seed(SEED, i)))
        .collect();
    let violations = results
        .iter()
        .filter(|r| matches!(r, Err(Error::DominationViolated { .. })))
        .count();
    let other = results.iter().filter(|r| r.is_err()).count() - violations;
    let runs: Vec<_> = results.into_iter().filter_map(|r| r.ok()).collect();
    let checks: u64 = runs.iter().map(|r| r.stats.domination_checks).sum();
    let below = runs
        .iter()
        .filter(|r| r.lambda_sample > r.y_at_zero)
        .count();

    let oracle = longrun_oracle(&AtomChain::default(), 1.0, 10_000, n, DEFAULT_THIN, SEED).unwrap();
    let samples: Vec<f64> = runs.iter().map(|r| r.sample).collect();
    let ks = ks_two_sample(&samples, &oracle).unwrap();

    let beta = sampler.minorization().beta;
    let diag = diagnostics_summary(&runs, beta).unwrap();
    let dev = (diag.coalescence_frequency - beta).abs();
    DcftpBatch {
        ks: line(
            ks.pass && other == 0 && runs.len() == n,
            format!(
                "D = {:.5} vs critical {:.5} ({} runs, {other} failures)",
                ks.statistic,
                ks.critical,
                runs.len()
            ),
        ),
        violations: line(
            violations == 0 && below == 0,
            format!(
                "{violations} violations in {checks} checked steps, {below} time-zero excesses"
            ),
        ),
        coalescence: line(
            dev < 3.0 * diag.coalescence_std_error,
            format!(
                "frequency {:.5} vs beta {beta:.5} (se {:.5}, {} sub-threshold visits)",
                diag.coalescence_frequency, diag.coalescence_std_error, diag.sub_threshold_visits
            ),
        ),
    }
}

fn classic_chains() -> Line {
    let n = 10_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut details = vec![];
    let mut pass = true;
    for chain in [
        FiniteChain::two_state(),
        FiniteChain::random(5, &mut rng).unwrap(),
    ] {
        let mut counts = vec![0u64; chain.len()];
        let draws: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| {
                classic_cftp(
                    &chain.matrix,
                    chain.beta,
                    &chain.nu,
                    derive_seed(SEED ^ 0xc1, i),
                )
                .unwrap()
            })
            .collect();
        for d in draws {
            counts[d] += 1;
        }
        let out = chi_square_gof(&counts, &chain.stationary()).unwrap();
        pass &= out.pass;
        details.push(format!(
            "{}-state chi2 {:.2} vs {:.2}",
            chain.len(),
            out.statistic,
            out.critical
        ));
    }
    line(pass, details.join(", "))
}

fn mu_instances() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x6d75);
    let instances: Vec<_> = (0..1000).map(|_| random_instance(&mut rng)).collect();
    let errs: Vec<(f64, bool, bool, bool)> = instances
        .par_iter()
        .map(|inst| {
            let mu = build_mu(inst.beta, &inst.nu, &inst.law_v).unwrap();
            let mass_ok = (mu.total_mass() - 1.0).abs() < 1e-10;
            let dom_ok = dominates(&inst.nu, &mu, 1e-2);
            let mut bps = inst.law_v.breakpoints();
            bps.extend(mu.breakpoints());
            bps.sort_by(f64::total_cmp);
            bps.dedup();
            let sandwich_ok = bps.windows(2).all(|w| {
                let (a, b) = (w[0], w[1]);
                inst.beta * (mu.survival(a) - mu.survival(b))
                    <= inst.law_v.survival(a) - inst.law_v.survival(b) + 1e-10
                    && inst.beta * mu.atom_mass(a) <= inst.law_v.atom_mass(a) + 1e-10
            });
            let (grid, tail) = brute_force_beta_mu_tail(inst.beta, &inst.nu, &inst.law_v, 10_000);
            let err = grid
                .iter()
                .zip(&tail)
                .map(|(g, t)| (inst.beta * mu.survival(*g) - t).abs())
                .fold(0.0, f64::max);
            (err, mass_ok, dom_ok, sandwich_ok)
        })
        .collect();
    let worst = errs.iter().map(|e| e.0).fold(0.0, f64::max);
    let bad = errs.iter().filter(|e| !(e.1 && e.2 && e.3)).count();
    line(
        worst < 1e-6 && bad == 0,
        format!("max oracle error {worst:.2e}, {bad} structural failures in 1000"),
    )
}

fn subsampled_certificate() -> Line {
    let inner = AtomChain::default();
    let cert = subsample_certificate(&inner.fl_certificate(), 3, SubsampleVariant::Rate).unwrap();
    let chain = Subsampled { inner, k: 3 };
    let probes = [1.0, 3.0, 6.25, 28.125, 78.125, 100.0, 1000.0];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x34);
    let rep = verify_fl_monte_carlo(&chain, &cert, &probes, 100_000, 0.0, &mut rng).unwrap();
    let worst = rep
        .probes
        .iter()
        .map(|p| p.margin)
        .fold(f64::INFINITY, f64::min);
    line(
        rep.pass,
        format!(
            "(alpha, b, c) = ({:.3}, {:.3}, {:.3}), smallest margin {worst:.4}",
            cert.alpha(),
            cert.b(),
            cert.c()
        ),
    )
}

fn queue_checks() -> Line {
    let n = 100_000;
    let mut pass = true;
    let mut worst_res: f64 = 0.0;
    let mut details = vec![];
    for (k, d) in [1.2, 1.6094, 3.0, 10.0].into_iter().enumerate() {
        let s = fixed_point_sigma(d).unwrap();
        let res = (s - (-d * (1.0 - s)).exp()).abs();
        worst_res = worst_res.max(res);
        let p = QueueParams::new(d, 1.0).unwrap();
        let pi = equilibrium_u(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 100 + k as u64);
        let pushed: Vec<f64> = (0..n)
            .map(|_| forward_step_u(sample_equilibrium(&p, &mut rng), &p, &mut rng))
            .collect();
        let inv = ks_one_sample(&pushed, &pi).unwrap();
        let (mut f0, mut f1, mut r0, mut r1) = (vec![], vec![], vec![], vec![]);
        for _ in 0..n {
            let a = sample_equilibrium(&p, &mut rng);
            f0.push(a);
            f1.push(forward_step_u(a, &p, &mut rng));
            let b = sample_equilibrium(&p, &mut rng);
            r1.push(b);
            r0.push(reversed_step_u(b, &p, &mut rng));
        }
        let k0 = ks_two_sample(&f0, &r0).unwrap();
        let k1 = ks_two_sample(&f1, &r1).unwrap();
        pass &= res < 1e-12 && inv.pass && k0.pass && k1.pass;
        details.push(format!(
            "d={d}: inv {:.4}/{:.4} rev {:.4},{:.4}",
            inv.statistic, inv.critical, k0.statistic, k1.statistic
        ));
    }
    line(
        pass,
        format!("max sigma residual {worst_res:.1e}; {}", details.join("; ")),
    )
}

fn drift_checks() -> Line {
    let n = 100_000;
    let tol = 3.0 / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x88);
    let mut pass = true;
    let mut details = vec![];
    for alpha in [0.2, 0.3, (-1.0f64).exp(), 0.4, 0.5] {
        let got = minimal_dominator_drift(alpha, n, &mut rng).unwrap();
        let want = 1.0 + alpha.ln();
        pass &= (got - want).abs() < tol;
        if alpha < (-1.0f64).exp() {
            pass &= got < 0.0;
        } else if alpha > (-1.0f64).exp() {
            pass &= got > 0.0;
        }
        details.push(format!("alpha={alpha:.4}: {got:+.5} vs {want:+.5}"));
    }
    line(pass, format!("tol {tol:.4}; {}", details.join(", ")))
}

fn reproducibility() -> Line {
    let sampler = PerfectSampler::new(AtomChain::default()).unwrap();
    let render = |parallel: bool| {
        let seeds: Vec<u64> = (0..500).map(|i| derive_seed(SEED ^ 0x99, i)).collect();
        let runs: Vec<_> = if parallel {
            seeds
                .par_iter()
                .map(|&s| sampler.sample(s).unwrap())
                .collect()
        } else {
            seeds.iter().map(|&s| sampler.sample(s).unwrap()).collect()
        };
        let mut out = Vec::new();
        write_jsonl(&runs, false, &mut out).unwrap();
        out
    };
    let a = render(false);
    let b = render(true);
    let c = render(false);
    line(
        a == b && a == c && !a.is_empty(),
        format!(
            "{} bytes, serial and parallel renderings identical: {}",
            a.len(),
            a == b && a == c
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let batch = dcftp_batch();
    let lines = [
        ("dCFTP against long-run oracle", batch.ks),
        ("classic CFTP on finite chains", classic_chains()),
        ("regeneration law construction", mu_instances()),
        ("sub-sampled drift certificate", subsampled_certificate()),
        ("dominating queue", queue_checks()),
        ("dominance along every path", batch.violations),
        ("coalescence frequency", batch.coalescence),
        ("minimal dominator drift", drift_checks()),
        ("same-seed reproducibility", reproducibility()),
    ];
    for (i, (name, l)) in lines.iter().enumerate() {
        report(i + 1, name, l);
    }
    let failed: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| !l.pass)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
