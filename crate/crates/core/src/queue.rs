//! The universal dominating process on the log scale.
//!
//! With `r = c + b/α` and `U = log(Y/r)`, the dominating chain is the
//! workload of a D/M/1 queue observed at arrivals: `U' = max(0, U + E - d)`
//! with `E ~ Exp(1)` and `d = log(1/α)`. For `d > 1` it is positive
//! recurrent with stationary law
//!
//! ```text
//! P(U > t) = σ e^{-(1-σ) t},   σ = e^{-d(1-σ)}.
//! ```

use std::io::Write;

use rand::RngCore;

use crate::chain::FLCertificate;
use crate::error::{Error, Result};
use crate::measure::{fixed_point_sigma, Atom, Piece, Prob1D};
use crate::rng::{open_unit, std_exp, Role, Streams};

/// Default hard cap on the number of reversed steps in one backward search.
pub const DEFAULT_DEPTH_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueueParams {
    d: f64,
    sigma: f64,
    reflection_level: f64,
}

impl QueueParams {
    pub fn new(d: f64, reflection_level: f64) -> Result<Self> {
        if !(d > 1.0) {
            return Err(Error::Supercritical(d));
        }
        if !(reflection_level >= 1.0 && reflection_level.is_finite()) {
            return Err(Error::Precondition(format!(
                "reflection level {reflection_level} must be finite and >= 1"
            )));
        }
        Ok(Self {
            d,
            sigma: fixed_point_sigma(d)?,
            reflection_level,
        })
    }

    pub fn from_certificate(cert: &FLCertificate) -> Result<Self> {
        Self::new(-cert.alpha().ln(), cert.reflection_level())
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Decay rate `1 - σ` of the stationary tail, which is also its atom at 0.
    pub fn theta(&self) -> f64 {
        1.0 - self.sigma
    }

    pub fn reflection_level(&self) -> f64 {
        self.reflection_level
    }

    pub fn to_y(&self, u: f64) -> f64 {
        self.reflection_level * u.exp()
    }

    pub fn to_u(&self, y: f64) -> f64 {
        (y / self.reflection_level).ln().max(0.0)
    }
}

pub fn forward_step_u_with(u: f64, e: f64, params: &QueueParams) -> f64 {
    (u + e - params.d).max(0.0)
}

pub fn forward_step_u(u: f64, params: &QueueParams, rng: &mut dyn RngCore) -> f64 {
    forward_step_u_with(u, std_exp(rng), params)
}

/// Stationary law of the workload, on `[0, ∞)`.
pub fn equilibrium_u(params: &QueueParams) -> Prob1D {
    let theta = params.theta();
    let atoms = vec![Atom {
        loc: 0.0,
        mass: theta,
    }];
    let pieces = if params.sigma > 0.0 {
        vec![Piece::exponential(0.0, theta, params.sigma)]
    } else {
        vec![]
    };
    Prob1D::with_tolerance(0.0, atoms, pieces, 1e-12)
        .expect("stationary workload law is well formed")
}

pub fn sample_equilibrium(params: &QueueParams, rng: &mut dyn RngCore) -> f64 {
    if open_unit(rng) < params.theta() {
        0.0
    } else {
        std_exp(rng) / params.theta()
    }
}

/// One step of the time-reversed stationary chain, from `U_t = u` to `U_{t-1}`.
///
/// For `u > 0` the predecessor is `max(0, u + d - E')` with `E' ~ Exp(σ)`.
/// For `u = 0` the predecessor is a stationary draw conditioned on the
/// next arrival emptying the queue, sampled by rejection (acceptance
/// probability `1 - σ`).
pub fn reversed_step_u(u: f64, params: &QueueParams, rng: &mut dyn RngCore) -> f64 {
    if u > 0.0 {
        let e = std_exp(rng) / params.sigma;
        return (u + params.d - e).max(0.0);
    }
    loop {
        let v = sample_equilibrium(params, rng);
        if v + std_exp(rng) <= params.d {
            return v;
        }
    }
}

/// A stationary dominating trajectory revealed lazily into the past.
#[derive(Clone, Debug)]
pub struct DominatingPath {
    params: QueueParams,
    streams: Streams,
    /// `u[k]` is `U_{-k}`.
    u: Vec<f64>,
    depth_cap: u64,
}

impl DominatingPath {
    /// Starts the path with a stationary draw at time 0.
    pub fn new(params: QueueParams, streams: Streams) -> Self {
        let u0 = sample_equilibrium(&params, &mut streams.rng(0, Role::Equilibrium));
        Self {
            params,
            streams,
            u: vec![u0],
            depth_cap: DEFAULT_DEPTH_CAP,
        }
    }

    pub fn with_depth_cap(mut self, cap: u64) -> Self {
        self.depth_cap = cap;
        self
    }

    pub fn params(&self) -> &QueueParams {
        &self.params
    }

    /// Most negative generated time.
    pub fn frontier(&self) -> i64 {
        -(self.u.len() as i64 - 1)
    }

    pub fn u(&self, t: i64) -> Option<f64> {
        if t > 0 {
            return None;
        }
        self.u.get((-t) as usize).copied()
    }

    pub fn y(&self, t: i64) -> Option<f64> {
        self.u(t).map(|u| self.params.to_y(u))
    }

    /// Reveal one more value into the past.
    pub fn extend_one(&mut self) -> i64 {
        let t = self.frontier();
        let next = reversed_step_u(
            self.u[self.u.len() - 1],
            &self.params,
            &mut self.streams.rng(t - 1, Role::Reverse),
        );
        self.u.push(next);
        t - 1
    }

    pub fn extend_to(&mut self, t: i64) {
        while self.frontier() > t {
            self.extend_one();
        }
    }

    /// Extend into the past until a newly revealed time has `Y <= h`; returns it.
    pub fn extend_back_to_subthreshold(&mut self, h: f64) -> Result<i64> {
        if h < self.params.reflection_level {
            return Err(Error::Precondition(format!(
                "threshold {h} lies below the reflection level {}",
                self.params.reflection_level
            )));
        }
        for _ in 0..self.depth_cap {
            let t = self.extend_one();
            if self.y(t).expect("just generated") <= h {
                return Ok(t);
            }
        }
        Err(Error::DepthCapExceeded(self.depth_cap))
    }

    /// CSV dump `(time, U, Y)` from time 0 back to the frontier.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# schema: perfectsim.path/1")?;
        writeln!(out, "time,U,Y")?;
        for (k, &u) in self.u.iter().enumerate() {
            writeln!(out, "{},{},{}", -(k as i64), u, self.params.to_y(u))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Law1D;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(d: f64) -> QueueParams {
        QueueParams::new(d, 16.25).unwrap()
    }

    #[test]
    fn rejects_nonrecurrent_gap() {
        assert!(matches!(
            QueueParams::new(1.0, 1.0),
            Err(Error::Supercritical(_))
        ));
        assert!(QueueParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn reflection_at_zero() {
        let p = params(5f64.ln());
        assert_eq!(forward_step_u_with(0.0, 1.0, &p), 0.0);
        assert!((forward_step_u_with(2.0, 1.0, &p) - (3.0 - 5f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_atom_for_log5() {
        let pi = equilibrium_u(&params(5f64.ln()));
        assert!((pi.atom_mass(0.0) - 0.6470156170948448).abs() < 1e-12);
        assert!((pi.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_gap_concentrates_at_zero() {
        let pi = equilibrium_u(&params(40.0));
        assert!(pi.atom_mass(0.0) > 1.0 - 1e-15);
    }

    #[test]
    fn monotone_in_start() {
        let p = params(1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let e = std_exp(&mut rng);
            let a = open_unit(&mut rng) * 5.0;
            let b = a + open_unit(&mut rng);
            assert!(forward_step_u_with(a, e, &p) <= forward_step_u_with(b, e, &p));
        }
    }

    #[test]
    fn path_is_a_pure_function_of_seed() {
        let p = params(5f64.ln());
        let mut a = DominatingPath::new(p, Streams::new(9));
        let mut b = DominatingPath::new(p, Streams::new(9));
        a.extend_to(-50);
        b.extend_to(-20);
        b.extend_to(-50);
        for t in -50..=0 {
            assert_eq!(a.u(t), b.u(t));
            assert!(a.u(t).unwrap() >= 0.0);
        }
    }

    #[test]
    fn subthreshold_search() {
        let p = params(5f64.ln());
        let mut path = DominatingPath::new(p, Streams::new(1));
        assert!(path.extend_back_to_subthreshold(10.0).is_err());
        let t = path.extend_back_to_subthreshold(28.125).unwrap();
        assert!(t < 0);
        assert!(path.y(t).unwrap() <= 28.125);
        for s in (t + 1)..0 {
            assert!(path.y(s).unwrap() > 28.125);
        }
        let mut capped = DominatingPath::new(p, Streams::new(1)).with_depth_cap(0);
        assert!(matches!(
            capped.extend_back_to_subthreshold(28.125),
            Err(Error::DepthCapExceeded(0))
        ));
    }

    #[test]
    fn at_reflection_the_next_subthreshold_time_is_immediate() {
        let p = params(5f64.ln());
        for seed in 0..200 {
            let mut path = DominatingPath::new(p, Streams::new(seed));
            path.extend_one();
            if path.u(-1) == Some(0.0) {
                let mut fresh = DominatingPath::new(p, Streams::new(seed));
                assert_eq!(fresh.extend_back_to_subthreshold(16.25).unwrap(), -1);
                return;
            }
        }
        panic!("no seed put the path at the reflection level at time -1");
    }

    #[test]
    fn csv_dump_has_header() {
        let mut path = DominatingPath::new(params(2.0), Streams::new(5));
        path.extend_to(-3);
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "time,U,Y");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].starts_with("-3,"));
    }
}
