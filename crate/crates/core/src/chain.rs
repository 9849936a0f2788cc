//! Foster-Lyapunov certificates, sub-sampling, the dominating jump bound,
//! and the interfaces a target chain implements.

use std::fmt::Debug;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, Law1D, Piece, Prob1D};

/// Witness of `E[Λ(X') | x] <= α Λ(x) + b 1{Λ(x) <= c}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFl")]
pub struct FLCertificate {
    alpha: f64,
    b: f64,
    c: f64,
}

#[derive(Deserialize)]
struct RawFl {
    alpha: f64,
    b: f64,
    c: f64,
}

impl TryFrom<RawFl> for FLCertificate {
    type Error = Error;
    fn try_from(r: RawFl) -> Result<Self> {
        FLCertificate::new(r.alpha, r.b, r.c)
    }
}

impl FLCertificate {
    pub fn new(alpha: f64, b: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidCertificate(format!(
                "alpha = {alpha} not in (0,1)"
            )));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidCertificate(format!(
                "b = {b} must be positive"
            )));
        }
        // The scale is bounded below by 1, so the drift bound at Λ = 1 needs α + b >= 1.
        if alpha + b < 1.0 - 1e-12 {
            return Err(Error::InvalidCertificate(format!(
                "alpha + b = {} < 1",
                alpha + b
            )));
        }
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::InvalidCertificate(format!(
                "c = {c} must be at least 1"
            )));
        }
        Ok(Self { alpha, b, c })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `c + b/α`, the level at which the dominating process is reflected.
    pub fn reflection_level(&self) -> f64 {
        self.c + self.b / self.alpha
    }

    /// Right-hand side of the drift inequality at scale value `lambda`.
    pub fn drift_bound(&self, lambda: f64) -> f64 {
        self.alpha * lambda + if lambda <= self.c { self.b } else { 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsampleVariant {
    /// Contraction α^(k-1) with constants independent of `c`.
    Rate,
    /// Contraction α with constants independent of `c` and of `k >= 2`.
    Constants,
}

/// Drift certificate for the `k`-step kernel.
pub fn subsample_certificate(
    cert: &FLCertificate,
    k: u32,
    variant: SubsampleVariant,
) -> Result<FLCertificate> {
    if k == 0 {
        return Err(Error::Precondition(
            "sub-sampling period must be at least 1".into(),
        ));
    }
    let (a, b) = (cert.alpha, cert.b);
    match variant {
        SubsampleVariant::Constants if k == 1 => Err(Error::Precondition(
            "the constants variant needs k >= 2".into(),
        )),
        SubsampleVariant::Rate if k == 1 => Ok(*cert),
        SubsampleVariant::Rate => {
            let ak = a.powi(k as i32 - 1);
            FLCertificate::new(ak, b / (1.0 - a), b / (ak * (1.0 - a).powi(2)))
        }
        SubsampleVariant::Constants => {
            FLCertificate::new(a, b / (1.0 - a), b / (a * (1.0 - a).powi(2)))
        }
    }
}

/// Smallest `k` with `α^(k-1) < 1/e`.
pub fn choose_subsampling_k(cert: &FLCertificate) -> u32 {
    let limit = (-1.0f64).exp();
    let mut k = 1u32;
    let mut a = 1.0;
    if cert.alpha < limit {
        return 1;
    }
    loop {
        k += 1;
        a *= cert.alpha;
        if a < limit {
            return k;
        }
    }
}

/// Level below which the dominating process offers a regeneration chance:
/// `max{c + b/α, b/(α(1-α)) (1 + 1/(1-α))}`.
pub fn threshold_h(cert: &FLCertificate) -> f64 {
    let (a, b) = (cert.alpha, cert.b);
    let stable = b / (a * (1.0 - a)) * (1.0 + 1.0 / (1.0 - a));
    cert.reflection_level().max(stable)
}

/// `P(Y' > t | Y = z) = min(1, αz/t)` above the reflection level, 1 below it.
pub fn dominating_jump_survival(cert: &FLCertificate, z: f64, t: f64) -> Result<f64> {
    let r = cert.reflection_level();
    if !(z >= r) {
        return Err(Error::Precondition(format!(
            "dominating state {z} below reflection level {r}"
        )));
    }
    if t < r {
        return Ok(1.0);
    }
    Ok((cert.alpha * z / t).min(1.0))
}

/// Law of `Y' = max(c + b/α, αz e^E)`, `E ~ Exp(1)`, on `[1, ∞)`.
pub fn dominating_jump_law(cert: &FLCertificate, z: f64) -> Result<Prob1D> {
    let r = cert.reflection_level();
    if !(z >= r) {
        return Err(Error::Precondition(format!(
            "dominating state {z} below reflection level {r}"
        )));
    }
    let scale = cert.alpha * z;
    if scale >= r {
        Prob1D::new(1.0, vec![], vec![Piece::pareto(scale, 1.0)])
    } else {
        let tail = scale / r;
        Prob1D::new(
            1.0,
            vec![Atom {
                loc: r,
                mass: 1.0 - tail,
            }],
            vec![Piece::pareto(r, tail)],
        )
    }
}

/// Regeneration witness `P(Λ(X') ∈ B | x) >= β ν(B)` on the small set.
/// The state-space component is supplied by [`ChainModel::regeneration_state`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorizationCertificate {
    pub beta: f64,
    pub order: u32,
    pub nu: Prob1D,
}

impl MinorizationCertificate {
    pub fn new(beta: f64, order: u32, nu: Prob1D) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidCertificate(format!(
                "beta = {beta} not in (0,1]"
            )));
        }
        if order == 0 {
            return Err(Error::InvalidCertificate(
                "minorization order must be at least 1".into(),
            ));
        }
        if nu.lower_bound() != 1.0 {
            return Err(Error::InvalidCertificate(
                "nu must live on the scale [1, ∞)".into(),
            ));
        }
        Ok(Self { beta, order, nu })
    }
}

/// A transition kernel on some state space, with its scale function.
pub trait Kernel: Sync {
    type State: Clone + Debug + PartialEq + Send + Sync;

    /// Scale function value, at least 1.
    fn lambda(&self, x: &Self::State) -> f64;

    fn step(&self, x: &Self::State, rng: &mut dyn RngCore) -> Self::State;
}

/// Everything the dominated CFTP engine needs from a target chain.
pub trait ChainModel: Kernel {
    /// Exact law of `Λ(X')` given `X = x`.
    fn lambda_jump_law(&self, x: &Self::State) -> Prob1D;

    /// Draw `X'` given `X = x` and `Λ(X') = lambda`.
    fn conditional_given_lambda(
        &self,
        x: &Self::State,
        lambda: f64,
        rng: &mut dyn RngCore,
    ) -> Self::State;

    /// Draw from the state-space regeneration measure given its scale value.
    /// Must not depend on the current state.
    fn regeneration_state(&self, lambda: f64, rng: &mut dyn RngCore) -> Self::State;

    /// Draw `X'` from the non-regenerating remainder of the kernel, given
    /// `Λ(X') = lambda`. Agrees with [`Self::conditional_given_lambda`]
    /// whenever the scale is injective, which is the default.
    fn residual_given_lambda(
        &self,
        x: &Self::State,
        lambda: f64,
        _beta: f64,
        rng: &mut dyn RngCore,
    ) -> Self::State {
        self.conditional_given_lambda(x, lambda, rng)
    }

    fn fl_certificate(&self) -> FLCertificate;

    /// Order-1 minorization of `{Λ <= h}`.
    fn minorization_at(&self, h: f64) -> Result<MinorizationCertificate>;

    /// A draw from the regeneration measure: ν on the scale, then the state.
    fn sample_regeneration(&self, rng: &mut dyn RngCore, nu: &Prob1D) -> Self::State {
        let u = crate::measure::CouplingTicket::clamped(crate::rng::open_unit(rng));
        let lambda = nu.sample(u);
        self.regeneration_state(lambda, rng)
    }
}

/// The `k`-step composition of a kernel.
#[derive(Clone, Debug)]
pub struct Subsampled<K> {
    pub inner: K,
    pub k: u32,
}

impl<K: Kernel> Kernel for Subsampled<K> {
    type State = K::State;

    fn lambda(&self, x: &Self::State) -> f64 {
        self.inner.lambda(x)
    }

    fn step(&self, x: &Self::State, rng: &mut dyn RngCore) -> Self::State {
        let mut s = x.clone();
        for _ in 0..self.k {
            s = self.inner.step(&s, rng);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlProbe {
    pub lambda: f64,
    pub mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `bound + tol - (mean + 4 se)`; negative means a violation.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlReport {
    pub probes: Vec<FlProbe>,
    pub pass: bool,
}

/// Guard band, in standard errors, for the Monte Carlo drift check.
pub const FL_GUARD_SE: f64 = 4.0;

/// Monte Carlo check of the drift inequality at each probe state.
pub fn verify_fl_monte_carlo<K: Kernel>(
    chain: &K,
    cert: &FLCertificate,
    probe_states: &[K::State],
    n: usize,
    tol: f64,
    rng: &mut dyn RngCore,
) -> Result<FlReport> {
    if n < 1000 {
        return Err(Error::Precondition(format!(
            "need at least 1000 draws per probe, got {n}"
        )));
    }
    let probes: Vec<FlProbe> = probe_states
        .iter()
        .map(|x| {
            let lambda = chain.lambda(x);
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..n {
                let v = chain.lambda(&chain.step(x, rng));
                sum += v;
                sq += v * v;
            }
            let mean = sum / n as f64;
            let var = (sq / n as f64 - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
            let std_error = (var / n as f64).sqrt();
            let bound = cert.drift_bound(lambda);
            let margin = bound + tol - (mean + FL_GUARD_SE * std_error);
            FlProbe {
                lambda,
                mean,
                std_error,
                bound,
                margin,
                pass: margin >= 0.0,
            }
        })
        .collect();
    let pass = probes.iter().all(|p| p.pass);
    Ok(FlReport { probes, pass })
}
