use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perfectsim::chain::{threshold_h, verify_fl_monte_carlo};
use perfectsim::coupling::check_minorized;
use perfectsim::engine::{
    check_whole_space_minorization, classic_cftp_run, diagnostics_summary, CftpRun, PerfectSampler,
};
use perfectsim::queue::{
    equilibrium_u, forward_step_u, sample_equilibrium, DominatingPath, QueueParams,
};
use perfectsim::rng::{derive_seed, Streams};
use perfectsim::stats::{chi_square_gof, ks_one_sample, ks_two_sample};
use perfectsim::testbed::{
    longrun_oracle, minimal_dominator_drift, partition_class, AtomChain, ChainConfig,
    CounterexampleChain, FiniteChain, DEFAULT_THIN,
};
use perfectsim::{ChainModel, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const RUNS_SCHEMA: &str = "perfectsim.runs/1";

#[derive(Parser)]
#[command(
    name = "perfectsim",
    version,
    about = "Perfect simulation by dominated coupling from the past"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact samples from the chain's equilibrium.
    Sample(SampleArgs),
    /// Run the checks relevant to a chain and print a pass/fail table.
    Validate(ValidateArgs),
    /// Summarize backoff depths, attempts and coalescence over a batch of runs.
    Diagnose(SampleArgs),
    /// Drift of the minimal dominating log-walk for the counter-example chain.
    Counterexample(CounterexampleArgs),
    /// Write one dominating path, from time -n to 0, as CSV.
    Queue(QueueArgs),
}

#[derive(Args)]
struct Common {
    /// Chain configuration (JSON).
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    depth_cap: Option<u64>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Add per-run wall time to the records.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Sample size for the exactness checks.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct QueueArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

enum Failure {
    Validation(Vec<String>),
    Config(String),
    DepthCap(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DepthCapExceeded(_) => Failure::DepthCap(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Sample(a) => cmd_sample(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Counterexample(a) => cmd_counterexample(&a),
        Command::Queue(a) => cmd_queue(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(names)) => {
            eprintln!("validation failed: {}", names.join(", "));
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::DepthCap(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_chain(path: &Path) -> std::result::Result<ChainConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(ChainConfig::from_json(&text)?)
}

fn output(path: Option<&Path>) -> std::result::Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn need_positive(n: usize) -> CmdResult {
    if n == 0 {
        return Err(Failure::Config("--n must be at least 1".into()));
    }
    Ok(())
}

fn sampler(
    chain: AtomChain,
    cap: Option<u64>,
) -> std::result::Result<PerfectSampler<AtomChain>, Failure> {
    let s = PerfectSampler::new(chain)?;
    Ok(match cap {
        Some(c) => s.with_depth_cap(c),
        None => s,
    })
}

fn atom_runs(
    s: &PerfectSampler<AtomChain>,
    seed: u64,
    n: usize,
) -> Vec<perfectsim::Result<CftpRun<f64>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| s.sample(derive_seed(seed, i)))
        .collect()
}

fn first_error<T>(runs: Vec<perfectsim::Result<T>>) -> std::result::Result<Vec<T>, Failure> {
    runs.into_iter()
        .collect::<perfectsim::Result<Vec<T>>>()
        .map_err(Failure::from)
}

fn cmd_sample(a: &SampleArgs) -> CmdResult {
    need_positive(a.n)?;
    let config = load_chain(&a.common.chain)?;
    let seed = a.common.seed;
    if let Some(chain) = config.atom_chain() {
        let s = sampler(chain, a.common.depth_cap)?;
        let runs = first_error(atom_runs(&s, seed, a.n))?;
        let mut out = output(a.common.out.as_deref())?;
        match a.format {
            Format::Jsonl => {
                writeln!(out, "{{\"schema\":\"{RUNS_SCHEMA}\"}}")?;
                for r in &runs {
                    writeln!(out, "{}", r.to_json_line(a.timing))?;
                }
            }
            Format::Csv => {
                writeln!(out, "# schema: {RUNS_SCHEMA}")?;
                write!(out, "index,seed,T_final,attempts,sample,lambda_sample")?;
                writeln!(out, "{}", if a.timing { ",wall_ms" } else { "" })?;
                for (i, r) in runs.iter().enumerate() {
                    write!(
                        out,
                        "{i},{},{},{},{},{}",
                        r.seed, r.t_final, r.attempts, r.sample, r.lambda_sample
                    )?;
                    if a.timing {
                        write!(out, ",{}", r.stats.wall_time.as_secs_f64() * 1e3)?;
                    }
                    writeln!(out)?;
                }
            }
        }
        out.flush()?;
        return Ok(());
    }
    if let Some(chain) = config.finite_chain() {
        let chain = chain?;
        let runs: Vec<_> = (0..a.n as u64)
            .into_par_iter()
            .map(|i| {
                let s = derive_seed(seed, i);
                classic_cftp_run(&chain.matrix, chain.beta, &chain.nu, s).map(|r| (s, r))
            })
            .collect();
        let runs = first_error(runs)?;
        let mut out = output(a.common.out.as_deref())?;
        match a.format {
            Format::Jsonl => {
                writeln!(out, "{{\"schema\":\"{RUNS_SCHEMA}\"}}")?;
                for (s, r) in &runs {
                    let v = serde_json::json!({"seed": s, "T_final": r.t_final, "attempts": r.attempts, "sample": r.state});
                    writeln!(out, "{v}")?;
                }
            }
            Format::Csv => {
                writeln!(out, "# schema: {RUNS_SCHEMA}")?;
                writeln!(out, "index,seed,T_final,attempts,sample")?;
                for (i, (s, r)) in runs.iter().enumerate() {
                    writeln!(out, "{i},{s},{},{},{}", r.t_final, r.attempts, r.state)?;
                }
            }
        }
        out.flush()?;
        return Ok(());
    }
    Err(Failure::Config(
        "the counter-example chain admits no dominating process on its own scale; see the counterexample command".into(),
    ))
}

struct Row {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn print_table(rows: &[Row]) -> CmdResult {
    println!("{:<20} {:<6} detail", "check", "result");
    for r in rows {
        println!(
            "{:<20} {:<6} {}",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.name.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(failed))
    }
}

fn validate_atom(chain: AtomChain, a: &ValidateArgs) -> Vec<Row> {
    let seed = a.common.seed;
    let cert = chain.fl_certificate();
    let h = threshold_h(&cert);
    let mut rows = vec![];

    let probes = [1.0, 3.0, cert.c(), 10.0, h, 100.0];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf1));
    match verify_fl_monte_carlo(&chain, &cert, &probes, 100_000, 0.0, &mut rng) {
        Ok(rep) => {
            let worst = rep
                .probes
                .iter()
                .min_by(|x, y| x.margin.total_cmp(&y.margin))
                .unwrap();
            rows.push(Row {
                name: "fl-certificate",
                pass: rep.pass,
                detail: format!(
                    "worst probe {}: mean {:.4} vs bound {:.4}",
                    worst.lambda, worst.mean, worst.bound
                ),
            });
        }
        Err(e) => rows.push(Row {
            name: "fl-certificate",
            pass: false,
            detail: e.to_string(),
        }),
    }

    let minor = chain.minorization_at(h);
    let detail = match &minor {
        Ok(m) => probes
            .iter()
            .filter(|&&x| x <= h).try_for_each(|x| check_minorized(m.beta, &m.nu, &chain.lambda_jump_law(x)))
            .map(|_| format!("beta = {:.5} at h = {h:.4}", m.beta)),
        Err(e) => Err(e.clone()),
    };
    rows.push(Row {
        name: "minorization",
        pass: detail.is_ok(),
        detail: detail.unwrap_or_else(|e| e.to_string()),
    });

    let s = match sampler(chain.clone(), a.common.depth_cap) {
        Ok(s) => s,
        Err(Failure::Config(msg) | Failure::DepthCap(msg)) => {
            rows.push(Row {
                name: "subcritical",
                pass: false,
                detail: msg,
            });
            return rows;
        }
        Err(Failure::Validation(_)) => unreachable!(),
    };
    rows.push(Row {
        name: "subcritical",
        pass: true,
        detail: format!("gap d = {:.4}", s.queue_params().d()),
    });

    let results = atom_runs(&s, seed, a.n);
    let errors: Vec<String> = results
        .iter()
        .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
        .collect();
    let runs: Vec<_> = results.into_iter().filter_map(|r| r.ok()).collect();
    let violations = errors.iter().filter(|e| e.contains("domination")).count()
        + runs
            .iter()
            .filter(|r| r.lambda_sample > r.y_at_zero)
            .count();
    rows.push(Row {
        name: "domination",
        pass: violations == 0,
        detail: format!("{violations} violations over {} runs", runs.len()),
    });

    if runs.is_empty() {
        rows.push(Row {
            name: "exactness-ks",
            pass: false,
            detail: errors.first().cloned().unwrap_or_default(),
        });
    } else {
        let oracle = longrun_oracle(
            &chain,
            1.0,
            10_000,
            a.n,
            DEFAULT_THIN,
            derive_seed(seed, 0x0c),
        )
        .unwrap();
        let xs: Vec<f64> = runs.iter().map(|r| r.sample).collect();
        let ks = ks_two_sample(&xs, &oracle).unwrap();
        rows.push(Row {
            name: "exactness-ks",
            pass: ks.pass && errors.is_empty(),
            detail: format!(
                "D = {:.5} vs {:.5}, {} failed runs",
                ks.statistic,
                ks.critical,
                errors.len()
            ),
        });
        let beta = s.minorization().beta;
        let d = diagnostics_summary(&runs, beta).unwrap();
        rows.push(Row {
            name: "coalescence",
            pass: (d.coalescence_frequency - beta).abs() < 3.0 * d.coalescence_std_error,
            detail: format!(
                "{:.5} vs beta {beta:.5} (se {:.5})",
                d.coalescence_frequency, d.coalescence_std_error
            ),
        });
        let again: Vec<_> = (0..runs.len().min(100))
            .map(|i| s.sample(runs[i].seed))
            .collect();
        let same = again.iter().zip(&runs).all(|(x, r)| {
            x.as_ref()
                .is_ok_and(|x| x.to_json_line(false) == r.to_json_line(false))
        });
        rows.push(Row {
            name: "reproducibility",
            pass: same,
            detail: format!("{} reruns compared", again.len()),
        });
    }

    let p = *s.queue_params();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x9e));
    let pushed: Vec<f64> = (0..100_000)
        .map(|_| forward_step_u(sample_equilibrium(&p, &mut rng), &p, &mut rng))
        .collect();
    let ks = ks_one_sample(&pushed, &equilibrium_u(&p)).unwrap();
    rows.push(Row {
        name: "queue-stationarity",
        pass: ks.pass,
        detail: format!("D = {:.5} vs {:.5}", ks.statistic, ks.critical),
    });
    rows
}

fn validate_finite(chain: &FiniteChain, a: &ValidateArgs) -> Vec<Row> {
    let mut rows = vec![];
    let m = check_whole_space_minorization(&chain.matrix, chain.beta, &chain.nu);
    rows.push(Row {
        name: "minorization",
        pass: m.is_ok(),
        detail: m
            .as_ref()
            .map(|_| format!("beta = {:.5}", chain.beta))
            .unwrap_or_else(|e| e.to_string()),
    });
    if m.is_err() {
        return rows;
    }
    let draws: Vec<_> = (0..a.n as u64)
        .into_par_iter()
        .map(|i| {
            classic_cftp_run(
                &chain.matrix,
                chain.beta,
                &chain.nu,
                derive_seed(a.common.seed, i),
            )
        })
        .collect();
    let mut counts = vec![0u64; chain.len()];
    let mut errors = 0;
    for d in &draws {
        match d {
            Ok(r) => counts[r.state] += 1,
            Err(_) => errors += 1,
        }
    }
    match chi_square_gof(&counts, &chain.stationary()) {
        Ok(out) => rows.push(Row {
            name: "chi-square",
            pass: out.pass && errors == 0,
            detail: format!(
                "{:.3} vs {:.3} on {} states",
                out.statistic,
                out.critical,
                chain.len()
            ),
        }),
        Err(e) => rows.push(Row {
            name: "chi-square",
            pass: false,
            detail: e.to_string(),
        }),
    }
    rows
}

fn validate_counterexample(chain: &CounterexampleChain, a: &ValidateArgs) -> Vec<Row> {
    let p = chain.params();
    let mut seen = vec![false; p.classes as usize + 1];
    for j in 0..100_000 {
        seen[partition_class(1.0 + 9.0 * (j as f64 + 0.5) / 100_000.0, p) as usize] = true;
    }
    let hit = seen[1..].iter().filter(|&&s| s).count();
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let mut rows = vec![Row {
        name: "partition",
        pass: hit == p.classes as usize,
        detail: format!("{hit} of {} classes met on [1, 10]", p.classes),
    }];
    match minimal_dominator_drift(p.alpha, 100_000, &mut rng) {
        Ok(d) => rows.push(Row {
            name: "dominator-recurrent",
            pass: d < 0.0,
            detail: format!(
                "log-walk drift {d:+.5} (analytic {:+.5})",
                1.0 + p.alpha.ln()
            ),
        }),
        Err(e) => rows.push(Row {
            name: "dominator-recurrent",
            pass: false,
            detail: e.to_string(),
        }),
    }
    rows
}

fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    need_positive(a.n)?;
    let config = load_chain(&a.common.chain)?;
    let rows = if let Some(chain) = config.atom_chain() {
        validate_atom(chain, a)
    } else if let Some(chain) = config.finite_chain() {
        validate_finite(&chain?, a)
    } else if let Some(chain) = config.counterexample_chain() {
        validate_counterexample(&chain?, a)
    } else {
        unreachable!("every chain config has a constructor")
    };
    print_table(&rows)
}

fn cmd_diagnose(a: &SampleArgs) -> CmdResult {
    need_positive(a.n)?;
    let config = load_chain(&a.common.chain)?;
    let Some(chain) = config.atom_chain() else {
        return Err(Failure::Config(
            "diagnose needs a chain with a drift certificate".into(),
        ));
    };
    let s = sampler(chain, a.common.depth_cap)?;
    let runs = first_error(atom_runs(&s, a.common.seed, a.n))?;
    let rep = diagnostics_summary(&runs, s.minorization().beta)?;
    let mut out = output(a.common.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &rep).map_err(|e| Failure::Config(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_counterexample(a: &CounterexampleArgs) -> CmdResult {
    need_positive(a.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let drift = minimal_dominator_drift(a.alpha, a.n, &mut rng)?;
    let analytic = 1.0 + a.alpha.ln();
    let inv_e = (-1.0f64).exp();
    println!("alpha      {}", a.alpha);
    println!("drift      {drift:+.6}");
    println!("analytic   {analytic:+.6}");
    if (a.alpha - inv_e).abs() < 1e-9 {
        println!("warning: alpha is at the critical value 1/e; the log-walk has zero drift and the sign is not informative");
    }
    println!(
        "class      {}",
        if analytic < 0.0 {
            "RECURRENT"
        } else {
            "TRANSIENT"
        }
    );
    Ok(())
}

fn cmd_queue(a: &QueueArgs) -> CmdResult {
    need_positive(a.n)?;
    if a.format != Format::Csv {
        return Err(Failure::Config("paths are written as csv".into()));
    }
    let config = load_chain(&a.common.chain)?;
    let Some(chain) = config.atom_chain() else {
        return Err(Failure::Config(
            "queue needs a chain with a drift certificate".into(),
        ));
    };
    let params = QueueParams::from_certificate(&chain.fl_certificate())?;
    let mut path = DominatingPath::new(params, Streams::new(a.common.seed));
    path.extend_to(-(a.n as i64));
    let mut out = output(a.common.out.as_deref())?;
    path.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
