//! One-dimensional laws made of atoms and closed-form density pieces.
//!
//! Every law in the crate is a finite mixture of point masses and three
//! density families (uniform, possibly truncated exponential, possibly
//! truncated Pareto with survival proportional to `1/t`). All of them have
//! exact survival functions, which is what the coupling constructions need.
//!
//! Survival functions are right-continuous: `survival(t) = P(X > t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total-mass tolerance for hand-built laws.
pub const MASS_TOL: f64 = 1e-12;

/// Survival comparisons tolerate this much rounding.
pub const SURVIVAL_TOL: f64 = 1e-12;

/// A density piece carrying `mass` of the law.
///
/// `end` may be `f64::INFINITY` for the exponential and Pareto families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Piece {
    Uniform {
        lo: f64,
        hi: f64,
        mass: f64,
    },
    Exponential {
        start: f64,
        rate: f64,
        end: f64,
        mass: f64,
    },
    Pareto {
        start: f64,
        end: f64,
        mass: f64,
    },
}

impl Piece {
    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Self {
        Piece::Uniform { lo, hi, mass }
    }

    pub fn exponential(start: f64, rate: f64, mass: f64) -> Self {
        Piece::Exponential {
            start,
            rate,
            end: f64::INFINITY,
            mass,
        }
    }

    pub fn pareto(start: f64, mass: f64) -> Self {
        Piece::Pareto {
            start,
            end: f64::INFINITY,
            mass,
        }
    }

    pub fn mass(&self) -> f64 {
        match *self {
            Piece::Uniform { mass, .. }
            | Piece::Exponential { mass, .. }
            | Piece::Pareto { mass, .. } => mass,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Piece::Uniform { lo, hi, .. } => (lo, hi),
            Piece::Exponential { start, end, .. } | Piece::Pareto { start, end, .. } => {
                (start, end)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        let ok = match *self {
            Piece::Uniform { lo, hi, .. } => lo.is_finite() && hi.is_finite() && hi > lo,
            Piece::Exponential {
                start, rate, end, ..
            } => start.is_finite() && rate.is_finite() && rate > 0.0 && end > start,
            Piece::Pareto { start, end, .. } => start.is_finite() && start > 0.0 && end > start,
        };
        if !ok {
            return Err(Error::InvalidLaw(format!("bad piece parameters {self:?}")));
        }
        if !(self.mass() > 0.0 && self.mass().is_finite()) {
            return Err(Error::InvalidLaw(format!(
                "non-positive piece mass on [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Mass of the piece strictly above `t`.
    pub fn survival(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t <= lo {
            return self.mass();
        }
        if t >= hi {
            return 0.0;
        }
        match *self {
            Piece::Uniform { lo, hi, mass } => mass * (hi - t) / (hi - lo),
            Piece::Exponential {
                start,
                rate,
                end,
                mass,
            } => {
                let num = (-rate * (t - start)).exp() * -(-rate * (end - t)).exp_m1();
                let den = -(-rate * (end - start)).exp_m1();
                mass * num / den
            }
            Piece::Pareto { start, end, mass } => {
                mass * (1.0 / t - 1.0 / end) / (1.0 / start - 1.0 / end)
            }
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t < lo || t > hi {
            return 0.0;
        }
        match *self {
            Piece::Uniform { lo, hi, mass } => mass / (hi - lo),
            Piece::Exponential {
                start,
                rate,
                end,
                mass,
            } => mass * rate * (-rate * (t - start)).exp() / -(-rate * (end - start)).exp_m1(),
            Piece::Pareto { start, end, mass } => mass / (t * t * (1.0 / start - 1.0 / end)),
        }
    }

    /// Point `t` in the support at which `survival(t) = level`, for
    /// `0 <= level <= mass`.
    pub fn invert_survival(&self, level: f64) -> f64 {
        let q = (level / self.mass()).clamp(0.0, 1.0);
        match *self {
            Piece::Uniform { lo, hi, .. } => hi - q * (hi - lo),
            Piece::Exponential {
                start, rate, end, ..
            } => {
                if q <= 0.0 {
                    return end;
                }
                let tail = (-rate * (end - start)).exp();
                let t = start - (q * (1.0 - tail) + tail).ln() / rate;
                t.clamp(start, end)
            }
            Piece::Pareto { start, end, .. } => {
                if q <= 0.0 {
                    return end;
                }
                let inv = 1.0 / end + q * (1.0 / start - 1.0 / end);
                (1.0 / inv).clamp(start, end)
            }
        }
    }

    /// The part of this piece on `[a, b]`, rescaled by `scale`.
    pub fn restrict(&self, a: f64, b: f64, scale: f64) -> Option<Piece> {
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if !(b > a) {
            return None;
        }
        let mass = (self.survival(a) - self.survival(b)) * scale;
        if !(mass > 0.0) {
            return None;
        }
        Some(match *self {
            Piece::Uniform { .. } => Piece::Uniform { lo: a, hi: b, mass },
            Piece::Exponential { rate, .. } => Piece::Exponential {
                start: a,
                rate,
                end: b,
                mass,
            },
            Piece::Pareto { .. } => Piece::Pareto {
                start: a,
                end: b,
                mass,
            },
        })
    }

    pub fn scaled(&self, factor: f64) -> Piece {
        let mut p = *self;
        match &mut p {
            Piece::Uniform { mass, .. }
            | Piece::Exponential { mass, .. }
            | Piece::Pareto { mass, .. } => *mass *= factor,
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub loc: f64,
    pub mass: f64,
}

/// Probability law on `[lower_bound, ∞)`.
///
/// Pieces may overlap: the law is the sum of its components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Prob1DJson", into = "Prob1DJson")]
pub struct Prob1D {
    lower_bound: f64,
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
}

impl Prob1D {
    pub fn new(lower_bound: f64, atoms: Vec<Atom>, pieces: Vec<Piece>) -> Result<Self> {
        Self::with_tolerance(lower_bound, atoms, pieces, MASS_TOL)
    }

    /// Validates, checks total mass within `tol` of one, then renormalizes exactly.
    pub fn with_tolerance(
        lower_bound: f64,
        mut atoms: Vec<Atom>,
        mut pieces: Vec<Piece>,
        tol: f64,
    ) -> Result<Self> {
        if !lower_bound.is_finite() {
            return Err(Error::InvalidLaw("lower bound must be finite".into()));
        }
        for a in &atoms {
            if !(a.loc.is_finite() && a.loc >= lower_bound) {
                return Err(Error::InvalidLaw(format!(
                    "atom at {} below lower bound {lower_bound}",
                    a.loc
                )));
            }
            if !(a.mass > 0.0 && a.mass <= 1.0 + tol) {
                return Err(Error::InvalidLaw(format!(
                    "atom mass {} at {} not in (0,1]",
                    a.mass, a.loc
                )));
            }
        }
        for p in &pieces {
            p.validate()?;
            if p.support().0 < lower_bound {
                return Err(Error::InvalidLaw(format!(
                    "piece {p:?} starts below lower bound {lower_bound}"
                )));
            }
        }
        atoms.sort_by(|a, b| a.loc.total_cmp(&b.loc));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.loc == a.loc => last.mass += a.mass,
                _ => merged.push(a),
            }
        }
        pieces.sort_by(|a, b| a.support().0.total_cmp(&b.support().0));
        let total: f64 = merged.iter().map(|a| a.mass).sum::<f64>()
            + pieces.iter().map(Piece::mass).sum::<f64>();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidLaw(format!(
                "total mass {total} differs from 1"
            )));
        }
        let norm = 1.0 / total;
        for a in &mut merged {
            a.mass *= norm;
        }
        let pieces = pieces.into_iter().map(|p| p.scaled(norm)).collect();
        Ok(Self {
            lower_bound,
            atoms: merged,
            pieces,
        })
    }

    pub fn point_mass(loc: f64) -> Self {
        Self {
            lower_bound: loc.min(1.0),
            atoms: vec![Atom { loc, mass: 1.0 }],
            pieces: vec![],
        }
    }

    pub fn point_mass_on(lower_bound: f64, loc: f64) -> Result<Self> {
        Self::new(lower_bound, vec![Atom { loc, mass: 1.0 }], vec![])
    }

    /// Weighted mixture `Σ w_i law_i` of laws sharing a lower bound.
    pub fn mixture(components: &[(f64, &Prob1D)]) -> Result<Self> {
        let lb = components
            .first()
            .map(|(_, l)| l.lower_bound)
            .ok_or_else(|| Error::InvalidLaw("empty mixture".into()))?;
        let mut atoms = Vec::new();
        let mut pieces = Vec::new();
        for (w, law) in components {
            if law.lower_bound != lb {
                return Err(Error::InvalidLaw(
                    "mixture components with different lower bounds".into(),
                ));
            }
            if *w <= 0.0 {
                continue;
            }
            atoms.extend(law.atoms.iter().map(|a| Atom {
                loc: a.loc,
                mass: a.mass * w,
            }));
            pieces.extend(law.pieces.iter().map(|p| p.scaled(*w)));
        }
        Self::with_tolerance(lb, atoms, pieces, 1e-10)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum::<f64>()
            + self.pieces.iter().map(Piece::mass).sum::<f64>()
    }

    /// The same measure with its lower bound moved down to `lb`.
    pub fn with_lower_bound(mut self, lb: f64) -> Result<Self> {
        if lb > self.lower_bound {
            let below = self.atoms.first().map(|a| a.loc < lb).unwrap_or(false)
                || self
                    .pieces
                    .first()
                    .map(|p| p.support().0 < lb)
                    .unwrap_or(false);
            if below {
                return Err(Error::InvalidLaw(format!(
                    "law has mass below new lower bound {lb}"
                )));
            }
        }
        self.lower_bound = lb;
        Ok(self)
    }

    pub fn mean(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.loc * a.mass).sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .map(|p| match *p {
                Piece::Uniform { lo, hi, mass } => mass * 0.5 * (lo + hi),
                Piece::Exponential {
                    start,
                    rate,
                    end,
                    mass,
                } => {
                    if end.is_infinite() {
                        mass * (start + 1.0 / rate)
                    } else {
                        let l = end - start;
                        let tail = (-rate * l).exp();
                        mass * (start + 1.0 / rate - l * tail / (1.0 - tail))
                    }
                }
                Piece::Pareto { start, end, mass } => {
                    if end.is_infinite() {
                        f64::INFINITY
                    } else {
                        mass * (end / start).ln() / (1.0 / start - 1.0 / end)
                    }
                }
            })
            .sum();
        atoms + pieces
    }
}

/// Interface shared by [`Prob1D`] and derived measures such as [`Residual`].
pub trait Law1D {
    fn lower_bound(&self) -> f64;

    /// `P(X > t)`.
    fn survival(&self, t: f64) -> f64;

    /// `P(X >= t)`.
    fn survival_left(&self, t: f64) -> f64;

    /// Density of the continuous part.
    fn density(&self, t: f64) -> f64;

    /// Sorted, de-duplicated atom locations and piece endpoints, starting
    /// with the lower bound. The law is smooth strictly between them.
    fn breakpoints(&self) -> Vec<f64>;

    fn atom_mass(&self, t: f64) -> f64 {
        (self.survival_left(t) - self.survival(t)).max(0.0)
    }

    fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    /// Closed-form solution of `survival(t) = level` inside an open segment
    /// between breakpoints, when one is available.
    fn solve_in_segment(&self, _lo: f64, _hi: f64, _level: f64) -> Option<f64> {
        None
    }

    /// Smallest `t` with `survival(t) <= level`.
    fn upper_quantile(&self, level: f64) -> f64 {
        generic_upper_quantile(self, level)
    }

    /// Generalized inverse CDF: smallest `t` with `cdf(t) >= p`.
    fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        Ok(self.upper_quantile(1.0 - p))
    }

    fn sample(&self, ticket: CouplingTicket) -> f64 {
        self.upper_quantile(1.0 - ticket.u())
    }

    /// Randomized probability-integral transform: given an observed value
    /// `x` of this law and an independent uniform `w`, a uniform ticket
    /// whose quantile is `x`.
    fn ticket_for(&self, x: f64, w: f64) -> CouplingTicket {
        let above = self.survival(x);
        let at_or_above = self.survival_left(x);
        let s = above + (1.0 - w) * (at_or_above - above).max(0.0);
        CouplingTicket::clamped(1.0 - s)
    }
}

fn generic_upper_quantile<L: Law1D + ?Sized>(law: &L, level: f64) -> f64 {
    let bps = law.breakpoints();
    let mut prev = f64::NEG_INFINITY;
    for &b in &bps {
        if law.survival(b) <= level {
            if law.survival_left(b) > level || prev == f64::NEG_INFINITY {
                return b;
            }
            if let Some(t) = law.solve_in_segment(prev, b, level) {
                return t;
            }
            return bisect_survival(law, prev, b, level);
        }
        prev = b;
    }
    let start = prev;
    if let Some(t) = law.solve_in_segment(start, f64::INFINITY, level) {
        return t;
    }
    let mut step = start.abs().max(1.0);
    let mut hi = start + step;
    let mut guard = 0;
    while law.survival(hi) > level && guard < 2100 {
        step *= 2.0;
        hi = start + step;
        guard += 1;
    }
    bisect_survival(law, start, hi, level)
}

fn bisect_survival<L: Law1D + ?Sized>(law: &L, mut lo: f64, mut hi: f64, level: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if law.survival(mid) <= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

impl Law1D for Prob1D {
    fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    fn survival(&self, t: f64) -> f64 {
        if t < self.lower_bound {
            return 1.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.loc > t)
            .map(|a| a.mass)
            .sum();
        let pieces: f64 = self.pieces.iter().map(|p| p.survival(t)).sum();
        (atoms + pieces).clamp(0.0, 1.0)
    }

    fn survival_left(&self, t: f64) -> f64 {
        if t <= self.lower_bound {
            return 1.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.loc >= t)
            .map(|a| a.mass)
            .sum();
        let pieces: f64 = self.pieces.iter().map(|p| p.survival(t)).sum();
        (atoms + pieces).clamp(0.0, 1.0)
    }

    fn density(&self, t: f64) -> f64 {
        self.pieces.iter().map(|p| p.density(t)).sum()
    }

    fn atom_mass(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.loc == t)
            .map(|a| a.mass)
            .sum()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v = vec![self.lower_bound];
        v.extend(self.atoms.iter().map(|a| a.loc));
        for p in &self.pieces {
            let (lo, hi) = p.support();
            v.push(lo);
            if hi.is_finite() {
                v.push(hi);
            }
        }
        sort_dedup(v)
    }

    fn solve_in_segment(&self, lo: f64, hi: f64, level: f64) -> Option<f64> {
        let mid = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo + 1.0
        };
        let mut active = self.pieces.iter().filter(|p| {
            let (a, b) = p.support();
            a <= lo && b >= hi
        });
        let piece = active.next()?;
        if active.next().is_some() {
            return None;
        }
        let rest = self.survival(mid) - piece.survival(mid);
        let t = piece.invert_survival(level - rest);
        if t >= lo && t <= hi {
            Some(t)
        } else {
            None
        }
    }
}

/// The normalized remainder `(whole - weight * part) / (1 - weight)`.
///
/// Valid whenever `whole >= weight * part` as measures and `weight < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    whole: Prob1D,
    part: Prob1D,
    weight: f64,
}

impl Residual {
    pub fn new(whole: Prob1D, part: Prob1D, weight: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&weight) {
            return Err(Error::Precondition(format!(
                "residual weight {weight} not in [0,1)"
            )));
        }
        if whole.lower_bound != part.lower_bound {
            return Err(Error::InvalidLaw(
                "residual of laws with different lower bounds".into(),
            ));
        }
        Ok(Self {
            whole,
            part,
            weight,
        })
    }

    pub fn whole(&self) -> &Prob1D {
        &self.whole
    }

    pub fn part(&self) -> &Prob1D {
        &self.part
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Atom masses of the residual at each atom location of either component.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut locs: Vec<f64> = self
            .whole
            .atoms
            .iter()
            .chain(self.part.atoms.iter())
            .map(|a| a.loc)
            .collect();
        locs = sort_dedup(locs);
        locs.into_iter()
            .map(|loc| Atom {
                loc,
                mass: self.atom_mass(loc),
            })
            .filter(|a| a.mass > 0.0)
            .collect()
    }

    fn combine(&self, w: f64, p: f64) -> f64 {
        (w - self.weight * p) / (1.0 - self.weight)
    }
}

impl Law1D for Residual {
    fn lower_bound(&self) -> f64 {
        self.whole.lower_bound
    }

    fn survival(&self, t: f64) -> f64 {
        self.combine(self.whole.survival(t), self.part.survival(t))
            .clamp(0.0, 1.0)
    }

    fn survival_left(&self, t: f64) -> f64 {
        self.combine(self.whole.survival_left(t), self.part.survival_left(t))
            .clamp(0.0, 1.0)
    }

    fn density(&self, t: f64) -> f64 {
        self.combine(self.whole.density(t), self.part.density(t))
            .max(0.0)
    }

    fn atom_mass(&self, t: f64) -> f64 {
        self.combine(self.whole.atom_mass(t), self.part.atom_mass(t))
            .max(0.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v = self.whole.breakpoints();
        v.extend(self.part.breakpoints());
        sort_dedup(v)
    }
}

pub(crate) fn sort_dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.retain(|x| x.is_finite());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// A shared uniform variate consumed by one monotone coupling step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingTicket(f64);

impl CouplingTicket {
    pub fn new(u: f64) -> Result<Self> {
        if u > 0.0 && u < 1.0 {
            Ok(Self(u))
        } else {
            Err(Error::ProbabilityOutOfRange(u))
        }
    }

    pub(crate) fn clamped(u: f64) -> Self {
        const EDGE: f64 = 1.0 / (1u64 << 54) as f64;
        Self(u.clamp(EDGE, 1.0 - EDGE))
    }

    pub fn u(&self) -> f64 {
        self.0
    }
}

pub fn survival<L: Law1D + ?Sized>(law: &L, t: f64) -> f64 {
    law.survival(t)
}

pub fn quantile<L: Law1D + ?Sized>(law: &L, p: f64) -> Result<f64> {
    law.quantile(p)
}

pub fn sample<L: Law1D + ?Sized>(law: &L, ticket: CouplingTicket) -> f64 {
    law.sample(ticket)
}

/// Both components drawn from one ticket; ordered whenever `a` is
/// stochastically dominated by `b`.
pub fn monotone_coupled_pair<A: Law1D + ?Sized, B: Law1D + ?Sized>(
    a: &A,
    b: &B,
    ticket: CouplingTicket,
) -> (f64, f64) {
    (a.sample(ticket), b.sample(ticket))
}

/// Roots of a function on `[lo, hi]` located by sign changes over `grid`.
pub(crate) fn sign_change_roots<F: Fn(f64) -> f64>(g: F, grid: &[f64]) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev_t = match grid.first() {
        Some(&t) => t,
        None => return roots,
    };
    let mut prev_g = g(prev_t);
    for &t in &grid[1..] {
        let gt = g(t);
        if prev_g == 0.0 {
            roots.push(prev_t);
        } else if prev_g * gt < 0.0 {
            let (mut a, mut b, mut ga) = (prev_t, t, prev_g);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 || b - a <= f64::EPSILON * b.abs().max(1.0) {
                    a = m;
                    b = m;
                    break;
                }
                if gm * ga < 0.0 {
                    b = m;
                } else {
                    a = m;
                    ga = gm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_t = t;
        prev_g = gt;
    }
    roots
}

/// The segment grid with its endpoints nudged inward, so that densities,
/// which may jump at the endpoints, are sampled inside the segment.
pub(crate) fn interior_probes(grid: &[f64]) -> Vec<f64> {
    let mut probe = grid.to_vec();
    let n = probe.len();
    if n < 2 {
        return probe;
    }
    if probe[n - 1].is_finite() {
        let inset = 1e-9 * (probe[n - 1] - probe[0]);
        probe[0] += inset;
        probe[n - 1] -= inset;
    } else {
        probe[0] += 1e-9 * (probe[1] - probe[0]);
    }
    probe
}

/// Scan grid for an open segment `(a, b)`; geometric when `b` is infinite.
pub(crate) fn segment_grid(a: f64, b: f64, cells: usize) -> Vec<f64> {
    if b.is_finite() {
        (0..=cells)
            .map(|i| a + (b - a) * i as f64 / cells as f64)
            .collect()
    } else {
        let base = 1e-3 * a.abs().max(1.0);
        let mut v = vec![a];
        let mut step = base;
        for _ in 0..80 {
            v.push(a + step);
            step *= 2.0;
        }
        v
    }
}

/// Probe points at which two laws' survival functions are compared:
/// breakpoints, interior stationary points of the survival difference,
/// and a safety grid of `resolution` times the span up to the `1 - 1e-9`
/// quantile.
pub fn comparison_points<A: Law1D + ?Sized, B: Law1D + ?Sized>(
    a: &A,
    b: &B,
    resolution: f64,
) -> Vec<f64> {
    let mut bps = a.breakpoints();
    bps.extend(b.breakpoints());
    let bps = sort_dedup(bps);
    let lb = bps[0];
    let far = a
        .upper_quantile(1e-9)
        .max(b.upper_quantile(1e-9))
        .max(*bps.last().unwrap());
    let span = (far - lb).max(f64::MIN_POSITIVE);
    let density_gap = |t: f64| b.density(t) - a.density(t);
    let mut pts = bps.clone();
    for (i, &start) in bps.iter().enumerate() {
        let end = bps.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let grid = segment_grid(start, end, 64);
        pts.extend(sign_change_roots(density_gap, &interior_probes(&grid)));
        pts.extend(grid);
    }
    if resolution > 0.0 {
        let step = resolution * span;
        let n = ((far - lb) / step).ceil().min(1e6) as usize;
        pts.extend((0..=n).map(|i| lb + i as f64 * step));
    }
    sort_dedup(pts)
}

/// `a ⪯ b` in the usual stochastic order: `survival(a, t) <= survival(b, t)`
/// at every probe point (and its left limit).
pub fn dominates<A: Law1D + ?Sized, B: Law1D + ?Sized>(a: &A, b: &B, grid_resolution: f64) -> bool {
    if a.lower_bound() != b.lower_bound() {
        return false;
    }
    comparison_points(a, b, grid_resolution)
        .into_iter()
        .all(|t| {
            a.survival(t) <= b.survival(t) + SURVIVAL_TOL
                && a.survival_left(t) <= b.survival_left(t) + SURVIVAL_TOL
        })
}

/// Root in (0,1) of `σ = exp(-d(1-σ))`, the D/M/1 waiting-time parameter
/// for inter-arrival gap `d` and unit service rate.
pub fn fixed_point_sigma(d: f64) -> Result<f64> {
    if !(d > 1.0) || !d.is_finite() {
        return Err(Error::Supercritical(d));
    }
    let g = |s: f64| s - (-d * (1.0 - s)).exp();
    // g < 0 at 0 and g > 0 just below the trivial root at 1.
    let mut hi = 0.5;
    let mut guard = 0;
    while g(hi) <= 0.0 {
        hi = 0.5 * (1.0 + hi);
        guard += 1;
        if guard > 60 {
            return Err(Error::Supercritical(d));
        }
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-16 * hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let sigma = if sigma > 0.0 { sigma } else { hi };
    if g(sigma).abs() >= 1e-12 {
        return Err(Error::Precondition(format!(
            "fixed point residual {} too large",
            g(sigma)
        )));
    }
    Ok(sigma)
}

#[derive(Serialize, Deserialize)]
struct Prob1DJson {
    lower_bound: f64,
    atoms: Vec<Atom>,
    pieces: Vec<PieceJson>,
}

#[derive(Serialize, Deserialize)]
struct PieceJson {
    kind: String,
    params: Vec<f64>,
    mass: f64,
}

impl From<Prob1D> for Prob1DJson {
    fn from(d: Prob1D) -> Self {
        let pieces = d
            .pieces
            .iter()
            .map(|p| {
                let (kind, mut params) = match *p {
                    Piece::Uniform { lo, hi, .. } => ("uniform", vec![lo, hi]),
                    Piece::Exponential {
                        start, rate, end, ..
                    } => ("exponential", vec![start, rate, end]),
                    Piece::Pareto { start, end, .. } => ("pareto", vec![start, end]),
                };
                if kind != "uniform" && params.last().is_some_and(|e| e.is_infinite()) {
                    params.pop();
                }
                PieceJson {
                    kind: kind.to_string(),
                    params,
                    mass: p.mass(),
                }
            })
            .collect();
        Prob1DJson {
            lower_bound: d.lower_bound,
            atoms: d.atoms,
            pieces,
        }
    }
}

impl TryFrom<Prob1DJson> for Prob1D {
    type Error = Error;

    fn try_from(j: Prob1DJson) -> Result<Self> {
        let pieces = j
            .pieces
            .into_iter()
            .map(|p| {
                let bad = || {
                    Error::InvalidLaw(format!(
                        "bad params {:?} for piece kind {}",
                        p.params, p.kind
                    ))
                };
                match (p.kind.as_str(), p.params.as_slice()) {
                    ("uniform", [lo, hi]) => Ok(Piece::Uniform {
                        lo: *lo,
                        hi: *hi,
                        mass: p.mass,
                    }),
                    ("exponential", [s, r]) => Ok(Piece::Exponential {
                        start: *s,
                        rate: *r,
                        end: f64::INFINITY,
                        mass: p.mass,
                    }),
                    ("exponential", [s, r, e]) => Ok(Piece::Exponential {
                        start: *s,
                        rate: *r,
                        end: *e,
                        mass: p.mass,
                    }),
                    ("pareto", [s]) => Ok(Piece::Pareto {
                        start: *s,
                        end: f64::INFINITY,
                        mass: p.mass,
                    }),
                    ("pareto", [s, e]) => Ok(Piece::Pareto {
                        start: *s,
                        end: *e,
                        mass: p.mass,
                    }),
                    _ => Err(bad()),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Prob1D::new(j.lower_bound, j.atoms, pieces)
    }
}

impl std::fmt::Display for Prob1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let json = serde_json::to_string(self).map_err(|_| std::fmt::Error)?;
        f.write_str(&json)
    }
}
