//! Regeneration coupling between a target jump law and a dominating one.
//!
//! Given `Law(U) ⪯ Law(V)` and `Law(U) >= β ν`, [`build_mu`] produces the
//! probability measure μ with `ν ⪯ μ` and `β μ <= Law(V)`, defined through
//! its tail
//!
//! ```text
//! β μ((u,∞)) = P(V > u) - inf_{w <= u} { P(V > w) - β ν((w,∞)) }.
//! ```
//!
//! One coupled step then flips a shared coin with success probability β:
//! on success every dominated trajectory jumps to the same ν-draw while the
//! dominating process draws from μ; otherwise the two residual laws are
//! coupled monotonically.

use rand_chacha::ChaCha8Rng;

use crate::chain::{dominating_jump_law, ChainModel, FLCertificate, MinorizationCertificate};
use crate::error::{Error, Result};
use crate::measure::{
    comparison_points, dominates, interior_probes, segment_grid, sign_change_roots, sort_dedup,
    Atom, CouplingTicket, Law1D, Piece, Prob1D, Residual,
};
use crate::rng::{Role, Streams};

const NEG_TOL: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Mode {
    /// Running minimum flat: β μ follows Law(V).
    Flat,
    /// Running minimum tracks the survival difference: β μ follows β ν.
    Track,
}

struct MuBuilder<'a> {
    beta: f64,
    nu: &'a Prob1D,
    law_v: &'a Prob1D,
    mode: Mode,
    start: f64,
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
}

impl MuBuilder<'_> {
    fn switch(&mut self, mode: Mode, at: f64) {
        if mode != self.mode {
            self.emit(at);
            self.mode = mode;
            self.start = at;
        }
    }

    fn emit(&mut self, end: f64) {
        if !(end > self.start) {
            return;
        }
        let (src, scale) = match self.mode {
            Mode::Flat => (self.law_v, 1.0 / self.beta),
            Mode::Track => (self.nu, 1.0),
        };
        for p in src.pieces() {
            if let Some(r) = p.restrict(self.start, end, scale) {
                self.pieces.push(r);
            }
        }
        self.start = end;
    }
}

/// The dominating regeneration measure μ for `(β, ν, Law V)`.
pub fn build_mu(beta: f64, nu: &Prob1D, law_v: &Prob1D) -> Result<Prob1D> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Precondition(format!("beta = {beta} not in (0,1]")));
    }
    if nu.lower_bound() != law_v.lower_bound() {
        return Err(Error::Precondition(
            "nu and Law(V) must share a lower bound".into(),
        ));
    }
    let lb = nu.lower_bound();
    let diff = |t: f64| law_v.survival(t) - beta * nu.survival(t);
    let diff_left = |t: f64| law_v.survival_left(t) - beta * nu.survival_left(t);
    let slope = |t: f64| beta * nu.density(t) - law_v.density(t);
    let check = |value: f64, t: f64| -> Result<()> {
        if value < -NEG_TOL {
            Err(Error::IncompatibleMinorization { t, excess: -value })
        } else {
            Ok(())
        }
    };

    let mut bps = nu.breakpoints();
    bps.extend(law_v.breakpoints());
    let bps = sort_dedup(bps);

    let mut b = MuBuilder {
        beta,
        nu,
        law_v,
        mode: Mode::Flat,
        start: lb,
        atoms: vec![],
        pieces: vec![],
    };
    let mut running_min = 1.0 - beta;

    for (i, &bp) in bps.iter().enumerate() {
        let left = diff_left(bp);
        check(left, bp)?;
        running_min = running_min.min(left);
        let at = diff(bp);
        check(at, bp)?;
        let new_min = running_min.min(at);
        let atom = law_v.atom_mass(bp) - (running_min - new_min);
        if atom < -1e-9 {
            return Err(Error::IncompatibleMinorization {
                t: bp,
                excess: -atom,
            });
        }
        if atom > 0.0 {
            b.atoms.push(Atom {
                loc: bp,
                mass: atom / beta,
            });
        }
        running_min = new_min;

        let end = bps.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let grid = segment_grid(bp, end, 32);
        let mut pts = grid.clone();
        pts.extend(sign_change_roots(slope, &interior_probes(&grid)));
        let mut pts = sort_dedup(pts);
        pts.retain(|&t| t >= bp && t <= end);
        if end.is_infinite() {
            pts.push(f64::INFINITY);
        }
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            let dq = if q.is_infinite() {
                0.0
            } else if q == end {
                diff_left(q)
            } else {
                diff(q)
            };
            check(dq, q)?;
            if dq >= running_min {
                b.switch(Mode::Flat, p);
            } else {
                let dp = diff(p);
                let cross = if dp <= running_min {
                    p
                } else {
                    crossing(&diff, p, q, running_min)
                };
                b.switch(Mode::Flat, p);
                b.switch(Mode::Track, cross);
                running_min = dq;
            }
        }
    }
    b.emit(f64::INFINITY);
    Prob1D::with_tolerance(lb, b.atoms, b.pieces, 1e-10)
}

/// Point in `[p, q]` where a decreasing `f` crosses `level`.
fn crossing<F: Fn(f64) -> f64>(f: &F, p: f64, q: f64, level: f64) -> f64 {
    let mut lo = p;
    let mut hi = if q.is_finite() {
        q
    } else {
        let mut step = p.abs().max(1.0);
        let mut hi = p + step;
        let mut guard = 0;
        while f(hi) > level && guard < 2100 {
            step *= 2.0;
            hi = p + step;
            guard += 1;
        }
        hi
    };
    for _ in 0..200 {
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Posterior probability that a transition regenerated, given that the
/// dominating process landed on `y`.
pub fn regeneration_posterior(beta: f64, mu: &Prob1D, law_v: &Prob1D, y: f64) -> f64 {
    if beta >= 1.0 {
        return 1.0;
    }
    let atom = law_v.atom_mass(y);
    let ratio = if atom > 0.0 {
        beta * mu.atom_mass(y) / atom
    } else {
        let dv = law_v.density(y);
        if dv > 0.0 {
            beta * mu.density(y) / dv
        } else {
            0.0
        }
    };
    ratio.clamp(0.0, 1.0)
}

/// The split of a target jump law and a dominating jump law into a shared
/// regeneration component and monotonically coupled residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct RegenSplit {
    pub beta: f64,
    pub nu: Prob1D,
    pub mu: Prob1D,
    /// `(Law X' - β ν)/(1-β)`; absent when β = 1.
    pub residual_x: Option<Residual>,
    /// `(Law Y' - β μ)/(1-β)`; absent when β = 1.
    pub residual_y: Option<Residual>,
}

impl RegenSplit {
    /// β = 1: every step regenerates and no residual is needed.
    pub fn is_degenerate(&self) -> bool {
        self.residual_x.is_none()
    }
}

/// Checked construction of a [`RegenSplit`].
pub fn regen_split(beta: f64, nu: &Prob1D, law_x: &Prob1D, law_y: &Prob1D) -> Result<RegenSplit> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Precondition(format!("beta = {beta} not in (0,1]")));
    }
    check_minorized(beta, nu, law_x)?;
    if !dominates(law_x, law_y, 1e-3) {
        return Err(Error::Precondition(
            "target jump law is not dominated by the dominating jump law".into(),
        ));
    }
    let mu = build_mu(beta, nu, law_y)?;
    if beta >= 1.0 {
        return Ok(RegenSplit {
            beta,
            nu: nu.clone(),
            mu,
            residual_x: None,
            residual_y: None,
        });
    }
    let residual_x = Residual::new(law_x.clone(), nu.clone(), beta)?;
    if residual_x.survival_left(residual_x.lower_bound()) <= 1e-12 {
        return Err(Error::MinorizationExhausts);
    }
    let residual_y = Residual::new(law_y.clone(), mu.clone(), beta)?;
    Ok(RegenSplit {
        beta,
        nu: nu.clone(),
        mu,
        residual_x: Some(residual_x),
        residual_y: Some(residual_y),
    })
}

/// `law >= β ν` as measures: atom by atom and density-wise.
pub fn check_minorized(beta: f64, nu: &Prob1D, law: &Prob1D) -> Result<()> {
    for a in nu.atoms() {
        if law.atom_mass(a.loc) < beta * a.mass - NEG_TOL {
            return Err(Error::Precondition(format!(
                "law has atom {} at {} below beta*nu = {}",
                law.atom_mass(a.loc),
                a.loc,
                beta * a.mass
            )));
        }
    }
    for t in comparison_points(nu, law, 0.0) {
        for s in [t, t + 1e-9 * t.abs().max(1.0)] {
            let need = beta * nu.density(s);
            if need > 0.0 && law.density(s) < need * (1.0 - 1e-9) - NEG_TOL {
                return Err(Error::Precondition(format!(
                    "law density below beta*nu density at {s}"
                )));
            }
        }
    }
    Ok(())
}

/// Randomness consumed by one transition: the regeneration uniform, the
/// coupling ticket uniform, and the stream for the state-space conditional draw.
#[derive(Clone, Debug)]
pub struct StepRandomness {
    pub regen: f64,
    pub ticket: f64,
    pub conditional: ChaCha8Rng,
}

impl StepRandomness {
    /// Randomness of the transition from `time` to `time + 1`.
    pub fn at(streams: &Streams, time: i64) -> Self {
        Self {
            regen: streams.uniform(time, Role::Regen),
            ticket: streams.uniform(time, Role::Ticket),
            conditional: streams.rng(time, Role::Conditional),
        }
    }
}

#[derive(Clone, Debug)]
struct DominatingSplit {
    beta: f64,
    mu: Prob1D,
    residual_y: Option<Residual>,
}

/// Everything about one transition that depends on the dominating state
/// `z` only: the dominating jump law and, below the threshold, μ and the
/// dominating residual.
#[derive(Clone, Debug)]
pub struct DominatedTransition {
    z: f64,
    law_y: Prob1D,
    split: Option<DominatingSplit>,
}

impl DominatedTransition {
    pub fn new(
        cert: &FLCertificate,
        minor: &MinorizationCertificate,
        h: f64,
        z: f64,
    ) -> Result<Self> {
        let law_y = dominating_jump_law(cert, z)?;
        let split = if z <= h {
            let mu = build_mu(minor.beta, &minor.nu, &law_y)?;
            let residual_y = if minor.beta < 1.0 {
                Some(Residual::new(law_y.clone(), mu.clone(), minor.beta)?)
            } else {
                None
            };
            Some(DominatingSplit {
                beta: minor.beta,
                mu,
                residual_y,
            })
        } else {
            None
        };
        Ok(Self { z, law_y, split })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn law_y(&self) -> &Prob1D {
        &self.law_y
    }

    pub fn mu(&self) -> Option<&Prob1D> {
        self.split.as_ref().map(|s| &s.mu)
    }

    pub fn can_regenerate(&self) -> bool {
        self.split.is_some()
    }

    fn y_law(&self, regenerated: bool) -> &dyn Law1D {
        match &self.split {
            None => &self.law_y,
            Some(s) if regenerated => &s.mu,
            Some(s) => match &s.residual_y {
                Some(r) => r,
                None => &s.mu,
            },
        }
    }

    /// Forward transition: flag, then ticket, then the next dominating value.
    pub fn draw(&self, rand: &StepRandomness) -> (bool, CouplingTicket, f64) {
        let regenerated = self.split.as_ref().is_some_and(|s| rand.regen < s.beta);
        let ticket = CouplingTicket::clamped(rand.ticket);
        let z_next = self.y_law(regenerated).sample(ticket);
        (regenerated, ticket, z_next)
    }

    /// Flag and ticket conditional on the dominating process having moved
    /// to `z_next`, with the same joint law as [`Self::draw`].
    pub fn infer(&self, z_next: f64, rand: &StepRandomness) -> (bool, CouplingTicket) {
        let regenerated = match &self.split {
            Some(s) => rand.regen < regeneration_posterior(s.beta, &s.mu, &self.law_y, z_next),
            None => false,
        };
        let ticket = self.y_law(regenerated).ticket_for(z_next, rand.ticket);
        (regenerated, ticket)
    }

    /// Advance one dominated trajectory with the shared flag and ticket.
    pub fn advance<C: ChainModel>(
        &self,
        chain: &C,
        minor: &MinorizationCertificate,
        x: &C::State,
        regenerated: bool,
        ticket: CouplingTicket,
        rand: &StepRandomness,
    ) -> Result<C::State> {
        let mut rng = rand.conditional.clone();
        if regenerated {
            let lambda = minor.nu.sample(ticket);
            return Ok(chain.regeneration_state(lambda, &mut rng));
        }
        let law_x = chain.lambda_jump_law(x);
        match &self.split {
            Some(s) if s.beta < 1.0 => {
                let residual = Residual::new(law_x, minor.nu.clone(), s.beta)?;
                let lambda = residual.sample(ticket);
                Ok(chain.residual_given_lambda(x, lambda, s.beta, &mut rng))
            }
            _ => {
                let lambda = law_x.sample(ticket);
                Ok(chain.conditional_given_lambda(x, lambda, &mut rng))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledStep<S> {
    pub x: Option<S>,
    pub z: f64,
    pub regenerated: bool,
}

fn check_step_pre<C: ChainModel>(
    chain: &C,
    x: Option<&C::State>,
    z: f64,
    cert: &FLCertificate,
) -> Result<()> {
    let r = cert.reflection_level();
    if !(z >= r) {
        return Err(Error::Precondition(format!(
            "dominating value {z} below reflection level {r}"
        )));
    }
    if let Some(x) = x {
        let l = chain.lambda(x);
        if l > z {
            return Err(Error::Precondition(format!(
                "lambda(x) = {l} exceeds dominating value {z}"
            )));
        }
    }
    Ok(())
}

/// One forward step of the dominating process together with (optionally)
/// one dominated trajectory.
pub fn coupled_step<C: ChainModel>(
    chain: &C,
    x: Option<&C::State>,
    z: f64,
    h: f64,
    cert: &FLCertificate,
    minor: &MinorizationCertificate,
    rand: &StepRandomness,
) -> Result<CoupledStep<C::State>> {
    check_step_pre(chain, x, z, cert)?;
    let tr = DominatedTransition::new(cert, minor, h, z)?;
    let (regenerated, ticket, z_next) = tr.draw(rand);
    let x = x
        .map(|x| tr.advance(chain, minor, x, regenerated, ticket, rand))
        .transpose()?;
    Ok(CoupledStep {
        x,
        z: z_next,
        regenerated,
    })
}

/// Same as [`coupled_step`] but with the dominating endpoint already fixed.
#[allow(clippy::too_many_arguments)]
pub fn coupled_step_given_next<C: ChainModel>(
    chain: &C,
    x: Option<&C::State>,
    z: f64,
    z_next: f64,
    h: f64,
    cert: &FLCertificate,
    minor: &MinorizationCertificate,
    rand: &StepRandomness,
) -> Result<CoupledStep<C::State>> {
    check_step_pre(chain, x, z, cert)?;
    let tr = DominatedTransition::new(cert, minor, h, z)?;
    let (regenerated, ticket) = tr.infer(z_next, rand);
    let x = x
        .map(|x| tr.advance(chain, minor, x, regenerated, ticket, rand))
        .transpose()?;
    Ok(CoupledStep {
        x,
        z: z_next,
        regenerated,
    })
}
