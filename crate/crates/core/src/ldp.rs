//! Large-deviations costs of the truncated occupancy chain.
//!
//! The one-step cost of moving from `r` to `t` in `D^K` is the multinomial
//! rate function evaluated at the limit map, `V_1(r,t) = I_K(G(r), t)`.
//! The quasipotential `V(rho^0, 0)` is the cheapest chain of such jumps from
//! the quasispecies fixed point to the extinction of classes `0..=K`; it is
//! approximated by a shortest path over a lattice on `D^K`.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, ClassDistribution, DynamicsError};
use crate::landscape::FitnessLandscape;
use crate::num::{clamp_small_negative, xlogx_over, Real};

/// Largest `K` accepted by the quasipotential solver.
pub const MAX_QUASIPOTENTIAL_K: usize = 4;

/// Default half-width of the band around `alpha psi(a) = ln kappa` reported
/// as near-critical.
pub const DEFAULT_MARGIN: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("distributions have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("point has {got} coordinates, the grid expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("grid resolution must be positive")]
    Resolution,
    #[error("number of steps must be positive")]
    Steps,
    #[error("K = {k} exceeds the quasipotential guard {MAX_QUASIPOTENTIAL_K}")]
    TooManyClasses { k: usize },
    #[error(
        "no fixed point rho^0: a = {a} is at or beyond the error threshold ln A(0) = {threshold}"
    )]
    NoQuasispecies { a: f64, threshold: f64 },
    #[error("no finite-cost path between the requested points")]
    Unreachable,
    #[error("alpha must be positive and kappa at least 2")]
    Classifier,
}

/// Multinomial rate function with cells `t_0..t_K` and the remainder
/// `1 - |t|_1`:
///
/// `I_K(p,t) = sum_k t_k ln(t_k/p_k) + (1-|t|) ln((1-|t|)/(1-|p|))`,
/// with `0 ln 0 = 0 ln(0/0) = 0`; `+inf` when `t` charges a cell where `p`
/// vanishes.
pub fn rate_multinomial<S: Real>(
    p: &ClassDistribution<S>,
    t: &ClassDistribution<S>,
) -> Result<S, LdpError> {
    if p.len() != t.len() {
        return Err(LdpError::LengthMismatch(p.len(), t.len()));
    }
    Ok(rate_raw(p.weights(), t.weights()))
}

pub(crate) fn rate_raw<S: Real>(p: &[S], t: &[S]) -> S {
    let tol = S::tolerance(1e-12);
    let mut total = S::zero();
    for (&pk, &tk) in p.iter().zip(t) {
        total = total + xlogx_over(tk, pk);
    }
    let t_rest = clamp_small_negative(S::one() - t.iter().copied().sum::<S>(), tol).max(S::zero());
    let p_rest = clamp_small_negative(S::one() - p.iter().copied().sum::<S>(), tol).max(S::zero());
    total + xlogx_over(t_rest, p_rest)
}

/// `V_1(r, t) = I_K(G(r), t)`; zero exactly when `t = G(r)`.
pub fn cost_one_step<S: Real>(
    r: &ClassDistribution<S>,
    t: &ClassDistribution<S>,
    a: S,
    land: &FitnessLandscape<S>,
) -> Result<S, LdpError> {
    let g = dynamics::map_g(r, a, land)?;
    rate_multinomial(&g, t)
}

/// Lattice on `D^K` with spacing `1/resolution`, plus exact injected points.
#[derive(Debug, Clone)]
pub struct RateCostGrid<S: Real> {
    resolution: usize,
    dim: usize,
    lattice_len: usize,
    coords: Vec<S>,
}

impl<S: Real> RateCostGrid<S> {
    /// All points of `D^K` with coordinates in `(1/resolution) N`, followed
    /// by `injected` in the given order. The origin is node 0.
    pub fn new(k: usize, resolution: usize, injected: &[Vec<S>]) -> Result<Self, LdpError> {
        if resolution == 0 {
            return Err(LdpError::Resolution);
        }
        let dim = k + 1;
        let step = S::one() / S::from_usize_lossy(resolution);
        let mut coords = Vec::new();
        let mut counts = vec![0usize; dim];
        // Enumerate compositions with sum <= resolution, origin first.
        loop {
            coords.extend(counts.iter().map(|&c| S::from_usize_lossy(c) * step));
            let mut pos = dim;
            let mut used: usize = counts.iter().sum();
            loop {
                if pos == 0 {
                    let lattice_len = coords.len() / dim;
                    let mut grid = Self {
                        resolution,
                        dim,
                        lattice_len,
                        coords,
                    };
                    for point in injected {
                        grid.inject(point)?;
                    }
                    return Ok(grid);
                }
                pos -= 1;
                if used < resolution {
                    counts[pos] += 1;
                    break;
                }
                used -= counts[pos];
                counts[pos] = 0;
            }
        }
    }

    /// Appends an exact node and returns its index.
    pub fn inject(&mut self, point: &[S]) -> Result<usize, LdpError> {
        if point.len() != self.dim {
            return Err(LdpError::Dimension {
                expected: self.dim,
                got: point.len(),
            });
        }
        ClassDistribution::truncated(point.to_vec())?;
        self.coords.extend_from_slice(point);
        Ok(self.len() - 1)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `K + 1`
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Number of lattice nodes, `C(resolution + K + 1, K + 1)`.
    pub fn lattice_len(&self) -> usize {
        self.lattice_len
    }

    pub fn node(&self, i: usize) -> &[S] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[S]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Cheapest chain of jumps between two nodes, by Dijkstra on the complete
    /// directed graph with edge weights `V_1`.
    ///
    /// Every jump is an edge, so the graph is dense and the frontier is kept
    /// as a flat array; edges are evaluated when their tail is settled.
    pub fn shortest_path(
        &self,
        source: usize,
        target: usize,
        a: S,
        land: &FitnessLandscape<S>,
    ) -> Result<(S, Vec<usize>), LdpError> {
        if land.k() + 1 != self.dim {
            return Err(LdpError::Dimension {
                expected: self.dim,
                got: land.k() + 1,
            });
        }
        let table = CostTable::new(self);
        let n = self.len();
        let mut dist = vec![S::infinity(); n];
        let mut pred = vec![usize::MAX; n];
        let mut open: Vec<usize> = (0..n).collect();
        dist[source] = S::zero();
        let mut lnp = vec![S::zero(); self.dim];
        while !open.is_empty() {
            let (slot, &u) = open
                .iter()
                .enumerate()
                .min_by(|x, y| dist[*x.1].partial_cmp(&dist[*y.1]).expect("no NaN costs"))
                .expect("open set nonempty");
            if !dist[u].is_finite() {
                break;
            }
            open.swap_remove(slot);
            if u == target {
                break;
            }
            let ln_rest = table.log_image(self.node(u), a, land, &mut lnp);
            let du = dist[u];
            for &v in &open {
                let c = table.cost(self.node(v), v, &lnp, ln_rest);
                let alt = du + c;
                if alt < dist[v] {
                    dist[v] = alt;
                    pred[v] = u;
                }
            }
        }
        if !dist[target].is_finite() {
            return Err(LdpError::Unreachable);
        }
        let mut path = vec![target];
        while *path.last().unwrap() != source {
            path.push(pred[*path.last().unwrap()]);
        }
        path.reverse();
        Ok((dist[target], path))
    }
}

/// Per-node data that makes `V_1(u, v)` a dot product.
struct CostTable<S: Real> {
    /// `sum_k t_k ln t_k + t_rest ln t_rest`
    entropy: Vec<S>,
    rest: Vec<S>,
}

impl<S: Real> CostTable<S> {
    fn new(grid: &RateCostGrid<S>) -> Self {
        let tol = S::tolerance(1e-12);
        let mut entropy = Vec::with_capacity(grid.len());
        let mut rest = Vec::with_capacity(grid.len());
        for t in grid.nodes() {
            let r =
                clamp_small_negative(S::one() - t.iter().copied().sum::<S>(), tol).max(S::zero());
            let e = t.iter().map(|&x| xlogx_over(x, S::one())).sum::<S>() + xlogx_over(r, S::one());
            entropy.push(e);
            rest.push(r);
        }
        Self { entropy, rest }
    }

    /// Fills `lnp` with `ln G(u)` (`-inf` on zeros) and returns the log of
    /// the remainder mass.
    fn log_image(&self, u: &[S], a: S, land: &FitnessLandscape<S>, lnp: &mut [S]) -> S {
        let g = dynamics::map_g_weights(u, a, land);
        for (l, &p) in lnp.iter_mut().zip(&g) {
            *l = if p > S::zero() {
                p.ln()
            } else {
                S::neg_infinity()
            };
        }
        let rest =
            clamp_small_negative(S::one() - g.iter().copied().sum::<S>(), S::tolerance(1e-12))
                .max(S::zero());
        if rest > S::zero() {
            rest.ln()
        } else {
            S::neg_infinity()
        }
    }

    fn cost(&self, t: &[S], idx: usize, lnp: &[S], ln_rest: S) -> S {
        let mut c = self.entropy[idx];
        for (&tk, &lp) in t.iter().zip(lnp) {
            if tk > S::zero() {
                c = c - tk * lp;
            }
        }
        let r = self.rest[idx];
        if r > S::zero() {
            c = c - r * ln_rest;
        }
        // Round-off can leave tiny negatives next to the orbit of G.
        c.max(S::zero())
    }
}

/// `V_l(r, t)`: cheapest `l`-jump chain from `r` to `t` whose intermediate
/// points are grid nodes (or `r`, `t` themselves).
pub fn cost_l_steps<S: Real>(
    r: &ClassDistribution<S>,
    t: &ClassDistribution<S>,
    steps: usize,
    grid: &RateCostGrid<S>,
    a: S,
    land: &FitnessLandscape<S>,
) -> Result<S, LdpError> {
    if steps == 0 {
        return Err(LdpError::Steps);
    }
    for p in [r, t] {
        if p.len() != grid.dim() {
            return Err(LdpError::Dimension {
                expected: grid.dim(),
                got: p.len(),
            });
        }
    }
    if steps == 1 {
        let c = cost_one_step(r, t, a, land)?;
        return if c.is_finite() {
            Ok(c)
        } else {
            Err(LdpError::Unreachable)
        };
    }
    let mut work = grid.clone();
    work.inject(r.weights())?;
    work.inject(t.weights())?;
    let table = CostTable::new(&work);
    let n = work.len();
    let t_idx = n - 1;
    let mut lnp = vec![S::zero(); work.dim()];

    let ln_rest = table.log_image(r.weights(), a, land, &mut lnp);
    let mut cur: Vec<S> = (0..n)
        .map(|v| table.cost(work.node(v), v, &lnp, ln_rest))
        .collect();
    for _ in 2..steps {
        let mut next = vec![S::infinity(); n];
        for (u, &cu) in cur.iter().enumerate() {
            if !cu.is_finite() {
                continue;
            }
            let ln_rest = table.log_image(work.node(u), a, land, &mut lnp);
            for (v, slot) in next.iter_mut().enumerate() {
                let alt = cu + table.cost(work.node(v), v, &lnp, ln_rest);
                if alt < *slot {
                    *slot = alt;
                }
            }
        }
        cur = next;
    }
    let mut best = S::infinity();
    for (u, &cu) in cur.iter().enumerate() {
        if !cu.is_finite() {
            continue;
        }
        let ln_rest = table.log_image(work.node(u), a, land, &mut lnp);
        best = best.min(cu + table.cost(work.node(t_idx), t_idx, &lnp, ln_rest));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(LdpError::Unreachable)
    }
}

/// Default lattice resolution for a given `K`.
pub fn default_resolution(k: usize) -> usize {
    match k {
        0 => 2000,
        1 => 200,
        2 => 40,
        _ => 16,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasipotentialResult<S: Real> {
    pub value: S,
    /// Nodes from `rho^0` to the origin.
    pub path: Vec<Vec<S>>,
    pub resolution: usize,
    pub a: S,
    pub landscape: FitnessLandscape<S>,
}

impl<S: Real> QuasipotentialResult<S> {
    /// Sum of `V_1` along the path, recomputed with [`cost_one_step`].
    pub fn path_cost(&self) -> Result<S, LdpError> {
        let mut total = S::zero();
        for pair in self.path.windows(2) {
            let r = ClassDistribution::truncated(pair[0].clone())?;
            let t = ClassDistribution::truncated(pair[1].clone())?;
            total = total + cost_one_step(&r, &t, self.a, &self.landscape)?;
        }
        Ok(total)
    }
}

/// Quasipotential `V(rho^0, 0)` on a lattice of the given resolution, with
/// `rho^0` injected exactly.
pub fn quasipotential<S: Real>(
    a: S,
    land: &FitnessLandscape<S>,
    resolution: usize,
) -> Result<QuasipotentialResult<S>, LdpError> {
    let k = land.k();
    if k > MAX_QUASIPOTENTIAL_K {
        return Err(LdpError::TooManyClasses { k });
    }
    if !land.index_set(a).contains(0) {
        return Err(LdpError::NoQuasispecies {
            a: a.as_f64(),
            threshold: land.error_threshold().as_f64(),
        });
    }
    let rho0 = dynamics::fixed_point_closed_form(0, a, land)?;
    let grid = RateCostGrid::new(k, resolution, &[rho0.rho.weights().to_vec()])?;
    let source = grid.len() - 1;
    let (value, path) = grid.shortest_path(source, 0, a, land)?;
    Ok(QuasipotentialResult {
        value,
        path: path.iter().map(|&i| grid.node(i).to_vec()).collect(),
        resolution,
        a,
        landscape: land.clone(),
    })
}

/// Population-threshold function: the quasipotential below the error
/// threshold, exactly 0 at and beyond it.
pub fn psi<S: Real>(a: S, land: &FitnessLandscape<S>, resolution: usize) -> Result<S, LdpError> {
    if a >= land.error_threshold() || !land.index_set(a).contains(0) {
        return Ok(S::zero());
    }
    Ok(quasipotential(a, land, resolution)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// `alpha psi(a) > ln kappa`: the quasispecies persists.
    Supercritical,
    /// `alpha psi(a) < ln kappa`: the master classes are lost.
    Subcritical,
    /// Within the margin of the critical curve; carries
    /// `alpha psi(a) - ln kappa`.
    NearCritical(f64),
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Supercritical => "supercritical",
            Phase::Subcritical => "subcritical",
            Phase::NearCritical(_) => "near-critical",
        }
    }
}

/// Phase from a precomputed `psi(a)`.
pub fn classify_with_psi<S: Real>(
    psi: S,
    alpha: S,
    kappa: usize,
    margin: S,
) -> Result<Phase, LdpError> {
    if !(alpha > S::zero()) || kappa < 2 {
        return Err(LdpError::Classifier);
    }
    let gap = alpha * psi - S::from_usize_lossy(kappa).ln();
    Ok(if gap.abs() < margin {
        Phase::NearCritical(gap.as_f64())
    } else if gap > S::zero() {
        Phase::Supercritical
    } else {
        Phase::Subcritical
    })
}

pub fn classify<S: Real>(
    a: S,
    alpha: S,
    kappa: usize,
    land: &FitnessLandscape<S>,
    resolution: usize,
    margin: S,
) -> Result<Phase, LdpError> {
    classify_with_psi(psi(a, land, resolution)?, alpha, kappa, margin)
}

/// `ln (n! / (i_1! ... i_N!))` with `n = sum i_k`.
pub fn multinomial_log_coeff<S: Real>(counts: &[usize]) -> S {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .fold(S::ln_factorial(n), |acc, &c| acc - S::ln_factorial(c))
}

/// Checks `|ln C + sum i_k ln(i_k/n)| <= N ln n + 2N` for the multinomial
/// coefficient `C` of `counts`.
pub fn stirling_bound_check(counts: &[usize]) -> bool {
    let n: usize = counts.iter().sum();
    if counts.is_empty() || n == 0 {
        return false;
    }
    let nf = n as f64;
    let big_n = counts.len() as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / nf).ln())
        .sum();
    let gap = (multinomial_log_coeff::<f64>(counts) + entropy).abs();
    gap <= big_n * nf.ln() + 2.0 * big_n
}
