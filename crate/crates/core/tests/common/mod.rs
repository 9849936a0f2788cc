#![allow(dead_code)]

use perfectsim::measure::{Atom, Law1D, Piece, Prob1D};
use perfectsim::rng::open_unit;
use rand::RngCore;

pub struct MuInstance {
    pub beta: f64,
    pub nu: Prob1D,
    pub law_v: Prob1D,
}

fn weights(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + open_unit(rng)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn uniform_in(lo: f64, hi: f64, rng: &mut dyn RngCore) -> f64 {
    lo + (hi - lo) * open_unit(rng)
}

/// Random law on `[1, ∞)` built from atoms, uniforms and exponentials,
/// shifted right by `shift`.
fn random_light(rng: &mut dyn RngCore, shift: f64) -> Prob1D {
    let n = 1 + (rng.next_u32() % 4) as usize;
    let w = weights(n, rng);
    let mut atoms = Vec::new();
    let mut pieces = Vec::new();
    for &m in &w {
        match rng.next_u32() % 3 {
            0 => atoms.push(Atom {
                loc: shift + uniform_in(1.0, 6.0, rng).round_ties_even().max(1.0),
                mass: m,
            }),
            1 => {
                let lo = uniform_in(1.0, 5.0, rng);
                pieces.push(Piece::uniform(
                    shift + lo,
                    shift + lo + uniform_in(0.2, 4.0, rng),
                    m,
                ));
            }
            _ => pieces.push(Piece::exponential(
                shift + uniform_in(1.0, 4.0, rng),
                uniform_in(0.3, 3.0, rng),
                m,
            )),
        }
    }
    Prob1D::new(1.0, atoms, pieces).unwrap()
}

/// Random law that may also carry Pareto tails.
fn random_any(rng: &mut dyn RngCore) -> Prob1D {
    let base = random_light(rng, 0.0);
    if rng.next_u32().is_multiple_of(2) {
        return base;
    }
    let tail = Prob1D::new(
        1.0,
        vec![],
        vec![Piece::pareto(uniform_in(1.0, 8.0, rng), 1.0)],
    )
    .unwrap();
    let t = uniform_in(0.1, 0.6, rng);
    Prob1D::mixture(&[(1.0 - t, &base), (t, &tail)]).unwrap()
}

/// `Law V = γ shift(ν) + (1-γ) W` with `β <= γ`, so `β ν` is compatible with `Law V`.
pub fn random_instance(rng: &mut dyn RngCore) -> MuInstance {
    let nu = random_light(rng, 0.0);
    let shift = if rng.next_u32().is_multiple_of(3) {
        0.0
    } else {
        uniform_in(0.0, 3.0, rng)
    };
    let shifted = shift_law(&nu, shift);
    let w = random_any(rng);
    let gamma = uniform_in(0.2, 1.0, rng);
    let beta = gamma * uniform_in(0.1, 1.0, rng);
    let law_v = Prob1D::mixture(&[(gamma, &shifted), (1.0 - gamma, &w)]).unwrap();
    MuInstance { beta, nu, law_v }
}

pub fn shift_law(law: &Prob1D, s: f64) -> Prob1D {
    let atoms = law
        .atoms()
        .iter()
        .map(|a| Atom {
            loc: a.loc + s,
            mass: a.mass,
        })
        .collect();
    let pieces = law
        .pieces()
        .iter()
        .map(|p| match *p {
            Piece::Uniform { lo, hi, mass } => Piece::Uniform {
                lo: lo + s,
                hi: hi + s,
                mass,
            },
            Piece::Exponential {
                start,
                rate,
                end,
                mass,
            } => Piece::Exponential {
                start: start + s,
                rate,
                end: end + s,
                mass,
            },
            Piece::Pareto { .. } => panic!("shift of a Pareto piece is not a Pareto piece"),
        })
        .collect();
    Prob1D::new(law.lower_bound(), atoms, pieces).unwrap()
}

/// Discretized running-minimum recursion for `β μ((u,∞))`. The grid has
/// `cells` uniform cells over the bulk of both laws, a geometric tail, and
/// every breakpoint; the running minimum also looks at a few interior points
/// of each cell. Returns `(grid, β μ tail at each grid point)`.
pub fn brute_force_beta_mu_tail(
    beta: f64,
    nu: &Prob1D,
    law_v: &Prob1D,
    cells: usize,
) -> (Vec<f64>, Vec<f64>) {
    let lb = nu.lower_bound();
    let bulk = law_v.upper_quantile(1e-2).max(nu.upper_quantile(1e-2)) + 1.0;
    let far = law_v.upper_quantile(1e-10).max(bulk * 2.0);
    let mut grid: Vec<f64> = (0..=cells)
        .map(|i| lb + (bulk - lb) * i as f64 / cells as f64)
        .collect();
    let ratio = (far / bulk).powf(1.0 / 2000.0);
    grid.extend((1..=2000).map(|i| bulk * ratio.powi(i)));
    grid.extend(nu.breakpoints());
    grid.extend(law_v.breakpoints());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let diff = |t: f64| law_v.survival(t) - beta * nu.survival(t);
    let mut running = 1.0 - beta;
    let mut tail = Vec::with_capacity(grid.len());
    let mut prev: Option<f64> = None;
    for &g in &grid {
        if let Some(p) = prev {
            for k in 1..8 {
                running = running.min(diff(p + (g - p) * k as f64 / 8.0));
            }
        }
        let left = law_v.survival_left(g) - beta * nu.survival_left(g);
        running = running.min(left).min(diff(g));
        tail.push(law_v.survival(g) - running);
        prev = Some(g);
    }
    (grid, tail)
}
