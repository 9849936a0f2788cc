//! Dominated coupling from the past, and the classic small-set special case.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::chain::{
    choose_subsampling_k, threshold_h, ChainModel, FLCertificate, MinorizationCertificate,
};
use crate::coupling::{DominatedTransition, StepRandomness};
use crate::error::{Error, Result};
use crate::queue::{DominatingPath, QueueParams, DEFAULT_DEPTH_CAP};
use crate::rng::{Role, Streams};

#[derive(Clone, Debug, PartialEq, Default, Serialize)]
pub struct PathStats {
    /// `|T_final|`.
    pub backoff_depth: u64,
    /// Candidate coalescence times examined, i.e. attempts.
    pub sub_threshold_visits: u64,
    /// Number of `Λ(X_t) <= Y_t` assertions made during reconstruction.
    pub domination_checks: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Outcome of one dominated CFTP run.
#[derive(Clone, Debug, PartialEq)]
pub struct CftpRun<S> {
    pub seed: u64,
    /// Time of the coalescing transition; the common state is born at `t_final + 1`.
    pub t_final: i64,
    pub attempts: u64,
    pub sample: S,
    pub lambda_sample: f64,
    pub y_at_zero: f64,
    pub stats: PathStats,
}

#[derive(Serialize)]
struct RunRecord<'a, S> {
    seed: u64,
    #[serde(rename = "T_final")]
    t_final: i64,
    attempts: u64,
    sample: &'a S,
    lambda_sample: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<f64>,
}

impl<S: Serialize> CftpRun<S> {
    /// One JSON line; `wall_ms` only when `timing` is set so that reruns
    /// with the same seed produce identical bytes.
    pub fn to_json_line(&self, timing: bool) -> String {
        let rec = RunRecord {
            seed: self.seed,
            t_final: self.t_final,
            attempts: self.attempts,
            sample: &self.sample,
            lambda_sample: self.lambda_sample,
            wall_ms: timing.then_some(self.stats.wall_time.as_secs_f64() * 1e3),
        };
        serde_json::to_string(&rec).expect("run record serializes")
    }
}

pub fn write_jsonl<S: Serialize, W: Write>(
    runs: &[CftpRun<S>],
    timing: bool,
    mut out: W,
) -> std::io::Result<()> {
    for run in runs {
        writeln!(out, "{}", run.to_json_line(timing))?;
    }
    Ok(())
}

/// Dominated CFTP for a chain satisfying a geometric drift condition.
#[derive(Clone, Debug)]
pub struct PerfectSampler<C> {
    chain: C,
    cert: FLCertificate,
    minor: MinorizationCertificate,
    h: f64,
    params: QueueParams,
    depth_cap: u64,
}

/// Everything a forward reconstruction touched, for replay checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub start: i64,
    pub states: Vec<S>,
    pub ys: Vec<f64>,
}

impl<C: ChainModel> PerfectSampler<C> {
    pub fn new(chain: C) -> Result<Self> {
        let cert = chain.fl_certificate();
        if choose_subsampling_k(&cert) != 1 {
            return Err(Error::Supercritical(-cert.alpha().ln()));
        }
        let h = threshold_h(&cert);
        let minor = chain.minorization_at(h)?;
        if minor.order != 1 {
            return Err(Error::InvalidCertificate(format!(
                "dominated CFTP needs an order-1 minorization, got order {}",
                minor.order
            )));
        }
        let params = QueueParams::from_certificate(&cert)?;
        Ok(Self {
            chain,
            cert,
            minor,
            h,
            params,
            depth_cap: DEFAULT_DEPTH_CAP,
        })
    }

    pub fn with_depth_cap(mut self, cap: u64) -> Self {
        self.depth_cap = cap;
        self
    }

    pub fn chain(&self) -> &C {
        &self.chain
    }

    pub fn certificate(&self) -> &FLCertificate {
        &self.cert
    }

    pub fn minorization(&self) -> &MinorizationCertificate {
        &self.minor
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }

    pub fn queue_params(&self) -> &QueueParams {
        &self.params
    }

    fn transition(&self, path: &DominatingPath, t: i64) -> Result<DominatedTransition> {
        DominatedTransition::new(
            &self.cert,
            &self.minor,
            self.h,
            path.y(t).expect("time already revealed"),
        )
    }

    /// Whether the transition `t -> t+1` of the revealed path regenerated.
    fn regenerated_at(&self, path: &DominatingPath, streams: &Streams, t: i64) -> Result<bool> {
        let tr = self.transition(path, t)?;
        let rand = StepRandomness::at(streams, t);
        Ok(tr
            .infer(path.y(t + 1).expect("time already revealed"), &rand)
            .0)
    }

    /// The dominating path of `seed` revealed back to `t`.
    pub fn path(&self, seed: u64, t: i64) -> DominatingPath {
        let mut path =
            DominatingPath::new(self.params, Streams::new(seed)).with_depth_cap(self.depth_cap);
        path.extend_to(t);
        path
    }

    /// One exact draw from the stationary law.
    pub fn sample(&self, seed: u64) -> Result<CftpRun<C::State>> {
        let clock = Instant::now();
        let streams = Streams::new(seed);
        let mut path = DominatingPath::new(self.params, streams).with_depth_cap(self.depth_cap);
        let mut attempts = 0u64;
        let t_final = loop {
            let t = path.extend_back_to_subthreshold(self.h)?;
            attempts += 1;
            if self.regenerated_at(&path, &streams, t)? {
                break t;
            }
            if path.frontier().unsigned_abs() > self.depth_cap {
                return Err(Error::DepthCapExceeded(self.depth_cap));
            }
        };
        let traj = self.reconstruct(&path, &streams, t_final, None)?;
        let sample = traj.states.last().expect("at least one state").clone();
        let stats = PathStats {
            backoff_depth: t_final.unsigned_abs(),
            sub_threshold_visits: attempts,
            domination_checks: traj.states.len() as u64,
            wall_time: clock.elapsed(),
        };
        Ok(CftpRun {
            seed,
            t_final,
            attempts,
            lambda_sample: self.chain.lambda(&sample),
            y_at_zero: path.y(0).expect("time 0 revealed"),
            sample,
            stats,
        })
    }

    /// Forward pass over the revealed path from `start` to 0. With `x = None`
    /// the transition at `start` must regenerate; otherwise `x` is the state
    /// at `start` and must satisfy `Λ(x) <= Y_start`.
    fn reconstruct(
        &self,
        path: &DominatingPath,
        streams: &Streams,
        start: i64,
        x: Option<C::State>,
    ) -> Result<Trajectory<C::State>> {
        let mut states = Vec::with_capacity(start.unsigned_abs() as usize);
        let mut ys = Vec::with_capacity(states.capacity());
        let mut current = x;
        for t in start..0 {
            let tr = self.transition(path, t)?;
            let rand = StepRandomness::at(streams, t);
            let y_next = path.y(t + 1).expect("time already revealed");
            let (regenerated, ticket) = tr.infer(y_next, &rand);
            let next = match (&current, regenerated) {
                (Some(x), _) => {
                    tr.advance(&self.chain, &self.minor, x, regenerated, ticket, &rand)?
                }
                (None, true) => {
                    let lambda = crate::measure::Law1D::sample(&self.minor.nu, ticket);
                    self.chain
                        .regeneration_state(lambda, &mut rand.conditional.clone())
                }
                (None, false) => {
                    return Err(Error::Precondition(format!(
                        "no regeneration at time {t} to start from"
                    )));
                }
            };
            let lambda = self.chain.lambda(&next);
            if !(lambda <= y_next) {
                return Err(Error::DominationViolated {
                    time: t + 1,
                    lambda,
                    y: y_next,
                });
            }
            states.push(next.clone());
            ys.push(y_next);
            current = Some(next);
        }
        Ok(Trajectory { start, states, ys })
    }

    /// Rerun the forward pass of a completed run.
    pub fn replay(&self, run: &CftpRun<C::State>) -> Result<Trajectory<C::State>> {
        let path = self.path(run.seed, run.t_final);
        self.reconstruct(&path, &Streams::new(run.seed), run.t_final, None)
    }

    /// Forward pass from an arbitrary earlier time and dominated state.
    /// Any start at or before the coalescence time funnels into the same `X_0`.
    pub fn replay_from(&self, seed: u64, start: i64, x: C::State) -> Result<Trajectory<C::State>> {
        let path = self.path(seed, start);
        let y = path.y(start).expect("revealed");
        let lambda = self.chain.lambda(&x);
        if lambda > y {
            return Err(Error::Precondition(format!(
                "start state lambda {lambda} above Y = {y}"
            )));
        }
        self.reconstruct(&path, &Streams::new(seed), start, Some(x))
    }

    /// Regeneration flags at every sub-threshold time of the path revealed
    /// back to `t`, as `(time, regenerated)`.
    pub fn regeneration_flags(&self, seed: u64, t: i64) -> Result<Vec<(i64, bool)>> {
        let path = self.path(seed, t);
        let streams = Streams::new(seed);
        let mut out = Vec::new();
        for s in (t..0).rev() {
            if path.y(s).expect("revealed") <= self.h {
                out.push((s, self.regenerated_at(&path, &streams, s)?));
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`PerfectSampler`].
pub fn perfect_sample<C: ChainModel + Clone>(chain: &C, seed: u64) -> Result<CftpRun<C::State>> {
    PerfectSampler::new(chain.clone())?.sample(seed)
}

/// Outcome of one classic CFTP run on a finite state space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassicRun {
    pub state: usize,
    pub t_final: i64,
    pub attempts: u64,
}

/// Checks rows sum to 1, `ν` is a distribution and `P(i,j) >= β ν(j)`.
pub fn check_whole_space_minorization(kernel: &[Vec<f64>], beta: f64, nu: &[f64]) -> Result<()> {
    let n = kernel.len();
    if n == 0 {
        return Err(Error::InvalidKernel("empty kernel".into()));
    }
    if nu.len() != n {
        return Err(Error::InvalidKernel(format!(
            "nu has {} entries for {n} states",
            nu.len()
        )));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Precondition(format!("beta = {beta} not in (0,1]")));
    }
    check_distribution(nu, "nu")?;
    for (i, row) in kernel.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidKernel(format!(
                "row {i} has {} entries",
                row.len()
            )));
        }
        check_distribution(row, &format!("row {i}"))?;
        for (j, (&p, &q)) in row.iter().zip(nu).enumerate() {
            if p < beta * q - 1e-12 {
                return Err(Error::MinorizationViolation {
                    row: i,
                    col: j,
                    entry: p,
                    bound: beta * q,
                });
            }
        }
    }
    Ok(())
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidKernel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidKernel(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn pick(weights: impl Iterator<Item = f64>, total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Classic CFTP with constant dominating process: the whole space is small.
pub fn classic_cftp_run(
    kernel: &[Vec<f64>],
    beta: f64,
    nu: &[f64],
    seed: u64,
) -> Result<ClassicRun> {
    check_whole_space_minorization(kernel, beta, nu)?;
    let streams = Streams::new(seed);
    let mut t = -1i64;
    let mut attempts = 1u64;
    while streams.uniform(t, Role::Regen) >= beta {
        t -= 1;
        attempts += 1;
        if attempts > DEFAULT_DEPTH_CAP {
            return Err(Error::DepthCapExceeded(DEFAULT_DEPTH_CAP));
        }
    }
    let mut x = pick(nu.iter().copied(), 1.0, streams.uniform(t, Role::Ticket));
    for s in (t + 1)..0 {
        let u = streams.uniform(s, Role::Ticket);
        let row = &kernel[x];
        let rest = row.iter().zip(nu).map(|(&p, &q)| (p - beta * q).max(0.0));
        let total: f64 = rest.clone().sum();
        x = pick(rest, total, u);
    }
    Ok(ClassicRun {
        state: x,
        t_final: t,
        attempts,
    })
}

pub fn classic_cftp(kernel: &[Vec<f64>], beta: f64, nu: &[f64], seed: u64) -> Result<usize> {
    classic_cftp_run(kernel, beta, nu, seed).map(|r| r.state)
}

/// `β = Σ_j min_i P(i,j)` and `ν` proportional to the column minima.
pub fn min_row_minorization(kernel: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = kernel.len();
    if n == 0 || kernel.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidKernel(
            "kernel must be a non-empty square matrix".into(),
        ));
    }
    let mins: Vec<f64> = (0..n)
        .map(|j| kernel.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let beta: f64 = mins.iter().sum();
    if !(beta > 0.0) {
        return Err(Error::InvalidKernel("column minima are all zero".into()));
    }
    Ok((beta.min(1.0), mins.iter().map(|m| m / beta).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub runs: usize,
    /// Backoff depth `|T_final|` counts, bucketed by powers of two (`bucket k` holds depths in `[2^k, 2^(k+1))`).
    pub depth_histogram: BTreeMap<u32, u64>,
    pub attempts_histogram: BTreeMap<u64, u64>,
    pub mean_attempts: f64,
    pub attempts_std_error: f64,
    pub max_depth: u64,
    pub wall_ms_p50: f64,
    pub wall_ms_p90: f64,
    pub wall_ms_p99: f64,
    pub sub_threshold_visits: u64,
    pub coalescence_frequency: f64,
    pub coalescence_std_error: f64,
    pub beta: f64,
}

/// Summary statistics over a batch of runs; `beta` is the comparison target.
pub fn diagnostics_summary<S>(runs: &[CftpRun<S>], beta: f64) -> Result<DiagnosticsReport> {
    if runs.is_empty() {
        return Err(Error::Precondition("no runs to summarize".into()));
    }
    let n = runs.len();
    let mut depth_histogram = BTreeMap::new();
    let mut attempts_histogram = BTreeMap::new();
    for r in runs {
        let depth = r.stats.backoff_depth.max(1);
        *depth_histogram
            .entry(63 - depth.leading_zeros())
            .or_insert(0) += 1;
        *attempts_histogram.entry(r.attempts).or_insert(0) += 1;
    }
    let attempts: Vec<f64> = runs.iter().map(|r| r.attempts as f64).collect();
    let (mean_attempts, attempts_std_error) = crate::stats::mean_and_se(&attempts);
    let mut wall: Vec<f64> = runs
        .iter()
        .map(|r| r.stats.wall_time.as_secs_f64() * 1e3)
        .collect();
    wall.sort_by(f64::total_cmp);
    let q = |p: f64| wall[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let visits: u64 = runs.iter().map(|r| r.stats.sub_threshold_visits).sum();
    let freq = n as f64 / visits as f64;
    Ok(DiagnosticsReport {
        runs: n,
        depth_histogram,
        attempts_histogram,
        mean_attempts,
        attempts_std_error,
        max_depth: runs
            .iter()
            .map(|r| r.stats.backoff_depth)
            .max()
            .unwrap_or(0),
        wall_ms_p50: q(0.5),
        wall_ms_p90: q(0.9),
        wall_ms_p99: q(0.99),
        sub_threshold_visits: visits,
        coalescence_frequency: freq,
        coalescence_std_error: (freq * (1.0 - freq) / visits as f64).sqrt(),
        beta,
    })
}
