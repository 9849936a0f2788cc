//! Target chains with known ground truth, and simulation oracles.

use std::io::Write;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainModel, FLCertificate, Kernel, MinorizationCertificate};
use crate::error::{Error, Result};
use crate::measure::{Atom, Piece, Prob1D};
use crate::rng::{open_unit, std_exp, Role, Streams};

/// Contraction of the large-state branch.
pub const ATOM_ALPHA0: f64 = 0.16;
/// Boundary of the small set of the drift certificate.
pub const ATOM_C: f64 = 6.25;

/// From `x <= 6.25`: `X' = 1` with probability 1/2, else `1 + Exp(1)`.
/// From `x > 6.25`: `X' = max(1, 0.32 U x)` with `U ~ Uniform(0,1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomChain {
    cert: FLCertificate,
}

impl Default for AtomChain {
    fn default() -> Self {
        Self {
            cert: FLCertificate::new(1.25 * ATOM_ALPHA0, 2.0, ATOM_C).expect("valid constants"),
        }
    }
}

impl AtomChain {
    /// Same kernel, advertised under a different (possibly wrong) certificate.
    pub fn with_certificate(cert: FLCertificate) -> Self {
        Self { cert }
    }

    fn spread(x: f64) -> f64 {
        2.0 * ATOM_ALPHA0 * x
    }
}

impl Kernel for AtomChain {
    type State = f64;

    fn lambda(&self, x: &f64) -> f64 {
        *x
    }

    fn step(&self, x: &f64, rng: &mut dyn RngCore) -> f64 {
        if *x <= ATOM_C {
            if open_unit(rng) < 0.5 {
                1.0
            } else {
                1.0 + std_exp(rng)
            }
        } else {
            (Self::spread(*x) * open_unit(rng)).max(1.0)
        }
    }
}

impl ChainModel for AtomChain {
    fn lambda_jump_law(&self, x: &f64) -> Prob1D {
        let (atom, piece) = if *x <= ATOM_C {
            (0.5, Piece::exponential(1.0, 1.0, 0.5))
        } else {
            let m = Self::spread(*x);
            (1.0 / m, Piece::uniform(1.0, m, 1.0 - 1.0 / m))
        };
        Prob1D::new(
            1.0,
            vec![Atom {
                loc: 1.0,
                mass: atom,
            }],
            vec![piece],
        )
        .expect("well formed")
    }

    fn conditional_given_lambda(&self, _x: &f64, lambda: f64, _rng: &mut dyn RngCore) -> f64 {
        lambda
    }

    fn regeneration_state(&self, lambda: f64, _rng: &mut dyn RngCore) -> f64 {
        lambda
    }

    fn fl_certificate(&self) -> FLCertificate {
        self.cert
    }

    fn minorization_at(&self, h: f64) -> Result<MinorizationCertificate> {
        let beta = if h <= ATOM_C {
            0.5
        } else {
            0.5f64.min(1.0 / Self::spread(h))
        };
        MinorizationCertificate::new(beta, 1, Prob1D::point_mass(1.0))
    }
}

/// Jumps to 1 from everywhere: total regeneration with β = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PointRegenChain;

impl Kernel for PointRegenChain {
    type State = f64;

    fn lambda(&self, x: &f64) -> f64 {
        *x
    }

    fn step(&self, _x: &f64, _rng: &mut dyn RngCore) -> f64 {
        1.0
    }
}

impl ChainModel for PointRegenChain {
    fn lambda_jump_law(&self, _x: &f64) -> Prob1D {
        Prob1D::point_mass(1.0)
    }

    fn conditional_given_lambda(&self, _x: &f64, lambda: f64, _rng: &mut dyn RngCore) -> f64 {
        lambda
    }

    fn regeneration_state(&self, lambda: f64, _rng: &mut dyn RngCore) -> f64 {
        lambda
    }

    fn fl_certificate(&self) -> FLCertificate {
        FLCertificate::new(0.2, 0.8, 1.0).expect("valid constants")
    }

    fn minorization_at(&self, _h: f64) -> Result<MinorizationCertificate> {
        MinorizationCertificate::new(1.0, 1, Prob1D::point_mass(1.0))
    }
}

/// A finite chain with its whole-space minorization; the scale is constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    pub matrix: Vec<Vec<f64>>,
    pub beta: f64,
    pub nu: Vec<f64>,
}

impl FiniteChain {
    pub fn new(matrix: Vec<Vec<f64>>, beta: f64, nu: Vec<f64>) -> Result<Self> {
        crate::engine::check_whole_space_minorization(&matrix, beta, &nu)?;
        Ok(Self { matrix, beta, nu })
    }

    /// Minorization from the column minima.
    pub fn with_min_row_minorization(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let (beta, nu) = crate::engine::min_row_minorization(&matrix)?;
        Self::new(matrix, beta, nu)
    }

    /// The 2-state example with stationary law (1/3, 2/3).
    pub fn two_state() -> Self {
        Self::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]], 0.5, vec![0.5, 0.5])
            .expect("valid example")
    }

    /// Random dense `n`-state matrix with rows bounded away from zero.
    pub fn random(n: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let matrix = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| 0.05 + open_unit(rng)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Self::with_min_row_minorization(matrix)
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    /// Solves `π P = π`, `Σ π = 1` by Gaussian elimination.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.len();
        // Rows of (P^T - I), with the last equation replaced by normalization.
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| self.matrix[j][i] - if i == j { 1.0 } else { 0.0 })
                    .collect();
                row.push(0.0);
                row
            })
            .collect();
        a[n - 1] = vec![1.0; n + 1];
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .expect("non-empty");
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    let pivot = a[col].clone();
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                        *x -= f * p;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }
}

impl Kernel for FiniteChain {
    type State = usize;

    fn lambda(&self, _x: &usize) -> f64 {
        1.0
    }

    fn step(&self, x: &usize, rng: &mut dyn RngCore) -> usize {
        let u = open_unit(rng);
        let row = &self.matrix[*x];
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduced rationals in `[0,1)` by increasing denominator, then numerator:
/// 0, 1/2, 1/3, 2/3, 1/4, 3/4, ...
pub fn rationals_unit(n: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut q = 2u64;
    while out.len() < n {
        for p in 1..q {
            if gcd(p, q) == 1 && out.len() < n {
                out.push(p as f64 / q as f64);
            }
        }
        q += 1;
    }
    out.truncate(n);
    out
}

/// Reduced rationals `p/q >= 1` along the diagonals `p + q = s`, `q` ascending:
/// 1, 2, 3, 4, 3/2, 5, 6, 5/2, 4/3, ...
pub fn rationals_above_one(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut s = 2u64;
    while out.len() < n {
        for q in 1..s {
            let p = s - q;
            if p >= q && gcd(p, q) == 1 && out.len() < n {
                out.push(p as f64 / q as f64);
            }
        }
        s += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterexampleParams {
    pub alpha: f64,
    pub n_max: usize,
    pub r_max: u32,
    pub classes: u32,
    pub alpha_part: f64,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_max: 40,
            r_max: 12,
            classes: 8,
            alpha_part: 0.25,
        }
    }
}

impl CounterexampleParams {
    pub fn validate(&self) -> Result<()> {
        let inv_e = (-1.0f64).exp();
        if !(self.alpha > inv_e && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha = {} must lie in (1/e, 1)",
                self.alpha
            )));
        }
        if self.n_max == 0 || self.r_max == 0 || self.classes == 0 {
            return Err(Error::Config("truncations must be positive".into()));
        }
        if !(self.alpha_part > 0.0 && self.alpha_part < 0.5) {
            return Err(Error::Config(format!(
                "alpha_part = {} must lie in (0, 1/2)",
                self.alpha_part
            )));
        }
        Ok(())
    }
}

fn in_shell(x: f64, r: u32, qs: &[f64], alpha_part: f64) -> bool {
    let scaled = x * f64::powi(2.0, r as i32);
    let base = scaled.floor();
    qs.iter().enumerate().any(|(n, &q)| {
        let width = alpha_part * f64::powi(2.0, -(r as i32) - n as i32);
        [base - 1.0, base].iter().any(|&k| {
            let lo = q + k;
            scaled >= lo && scaled <= lo + width
        })
    })
}

/// Deepest truncated level `r` whose set contains `x`, 0 if none.
pub fn partition_depth(x: f64, params: &CounterexampleParams) -> u32 {
    let qs = rationals_unit(params.n_max);
    (1..=params.r_max)
        .rev()
        .find(|&r| in_shell(x, r, &qs, params.alpha_part))
        .unwrap_or(0)
}

/// Class index in `1..=I` of the truncated dense partition.
pub fn partition_class(x: f64, params: &CounterexampleParams) -> u32 {
    partition_depth(x, params) % params.classes + 1
}

/// A chain satisfying a geometric drift condition with `α > 1/e` whose
/// every scale-based dominating process is transient.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleChain {
    params: CounterexampleParams,
    q: Vec<f64>,
}

impl CounterexampleChain {
    pub fn new(params: CounterexampleParams) -> Result<Self> {
        params.validate()?;
        let q = rationals_above_one(params.classes as usize);
        Ok(Self { params, q })
    }

    pub fn params(&self) -> &CounterexampleParams {
        &self.params
    }

    /// Multiplier `q_i` used on class `i`.
    pub fn multiplier(&self, class: u32) -> f64 {
        self.q[(class - 1) as usize]
    }

    pub fn conditional_mean(&self, x: f64) -> f64 {
        if x <= 1.0 / self.params.alpha {
            return 2.0;
        }
        let q = self.multiplier(partition_class(x, &self.params));
        self.params.alpha * x + (1.0 - self.params.alpha / q)
    }
}

impl Kernel for CounterexampleChain {
    type State = f64;

    fn lambda(&self, x: &f64) -> f64 {
        *x
    }

    fn step(&self, x: &f64, rng: &mut dyn RngCore) -> f64 {
        counterexample_step(*x, self, rng)
    }
}

pub fn counterexample_step(x: f64, chain: &CounterexampleChain, rng: &mut dyn RngCore) -> f64 {
    if x <= 1.0 / chain.params.alpha {
        return 1.0 + std_exp(rng);
    }
    let q = chain.multiplier(partition_class(x, &chain.params));
    if open_unit(rng) < chain.params.alpha / q {
        q * x
    } else {
        1.0
    }
}

/// Empirical mean of `n` increments `Exp(1) + log α` of the minimal
/// dominating log-walk.
pub fn minimal_dominator_drift(alpha: f64, n: usize, rng: &mut dyn RngCore) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha = {alpha} not in (0,1)")));
    }
    if n < 10_000 {
        return Err(Error::Precondition(format!(
            "need at least 10^4 increments, got {n}"
        )));
    }
    let la = alpha.ln();
    Ok((0..n).map(|_| std_exp(rng) + la).sum::<f64>() / n as f64)
}

pub const DEFAULT_THIN: usize = 20;

/// `n` states of one long trajectory, every `thin` steps after `burnin`.
pub fn longrun_oracle<K: Kernel>(
    chain: &K,
    start: K::State,
    burnin: usize,
    n: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<K::State>> {
    if burnin < 10_000 {
        return Err(Error::Precondition(format!("burn-in {burnin} below 10^4")));
    }
    if thin == 0 {
        return Err(Error::Precondition("thinning must be positive".into()));
    }
    let mut rng: ChaCha8Rng = Streams::new(seed).rng(0, Role::Oracle);
    let mut x = start;
    for _ in 0..burnin {
        x = chain.step(&x, &mut rng);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..thin {
            x = chain.step(&x, &mut rng);
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Oracle output as CSV `(index, state, lambda)` with a schema line.
pub fn write_oracle_csv<K: Kernel, W: Write>(
    chain: &K,
    states: &[K::State],
    mut out: W,
) -> std::io::Result<()>
where
    K::State: std::fmt::Display,
{
    writeln!(out, "# schema: perfectsim.oracle/1")?;
    writeln!(out, "index,state,lambda")?;
    for (i, s) in states.iter().enumerate() {
        writeln!(out, "{i},{s},{}", chain.lambda(s))?;
    }
    Ok(())
}

/// Chains constructible from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ChainConfig {
    Atom {
        #[serde(default)]
        cert: Option<FLCertificate>,
    },
    Counterexample(#[serde(default)] CounterexampleParams),
    Finite {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        nu: Option<Vec<f64>>,
    },
}

impl ChainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn atom_chain(&self) -> Option<AtomChain> {
        match self {
            ChainConfig::Atom { cert: Some(c) } => Some(AtomChain::with_certificate(*c)),
            ChainConfig::Atom { cert: None } => Some(AtomChain::default()),
            _ => None,
        }
    }

    pub fn finite_chain(&self) -> Option<Result<FiniteChain>> {
        match self {
            ChainConfig::Finite {
                matrix,
                beta: Some(b),
                nu: Some(nu),
            } => Some(FiniteChain::new(matrix.clone(), *b, nu.clone())),
            ChainConfig::Finite {
                matrix,
                beta: None,
                nu: None,
            } => Some(FiniteChain::with_min_row_minorization(matrix.clone())),
            ChainConfig::Finite { .. } => Some(Err(Error::Config(
                "give both beta and nu, or neither".into(),
            ))),
            _ => None,
        }
    }

    pub fn counterexample_chain(&self) -> Option<Result<CounterexampleChain>> {
        match self {
            ChainConfig::Counterexample(p) => Some(CounterexampleChain::new(p.clone())),
            _ => None,
        }
    }
}
