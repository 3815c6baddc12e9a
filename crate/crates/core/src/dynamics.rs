//! Deterministic skeleton of the occupancy chain.
//!
//! `map_f` is the exact mean map of one Wright-Fisher generation on the full
//! class simplex. `map_g` is its limit on the first `K + 1` coordinates as
//! `ell -> inf`, `q -> 0`, `ell q -> a`:
//!
//! ```text
//! G_i(r) = phi(r)^{-1} sum_{h <= i} r_h A(h) e^{-a} a^{i-h} / (i-h)!
//! ```
//!
//! Its fixed points are indexed by [`IndexSet`](crate::landscape::IndexSet)
//! and have a closed form, see [`fixed_point_closed_form`].

use serde::Serialize;
use thiserror::Error;

use crate::landscape::{ClassFitness, FitnessLandscape};
use crate::mutation::LumpedMutationMatrix;
use crate::num::Real;

/// Largest `K - b` for which fixed-point chains are enumerated.
pub const MAX_CHAIN_SPAN: usize = 16;

/// Cap on the number of tail terms in the fixed-point normalizer.
const MAX_TAIL_TERMS: usize = 2_000_000;

/// Past this lag `a^d / d!` no longer affects the tail recursion.
const TAIL_WINDOW: usize = 96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, outside the allowed range")]
    InvalidMass { sum: f64 },
    #[error("index {b} is not in the fixed-point index set")]
    NotInIndexSet { b: usize },
    #[error("A({b}) equals A({other}); the closed form divides by their difference")]
    Degenerate { b: usize, other: usize },
    #[error("K - b = {span} exceeds the chain enumeration guard {MAX_CHAIN_SPAN}")]
    TooLarge { span: usize },
    #[error("closed-form fixed point has residual {residual:e}")]
    Residual { residual: f64 },
    #[error("no convergence after {iters} iterations (last step {last_step:e})")]
    NotConverged { iters: usize, last_step: f64 },
    #[error("tolerance must be positive")]
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    /// A point of the unit simplex over classes `0..=ell`.
    Full,
    /// The first coordinates of a population: nonnegative, mass at most 1.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistribution<S: Real> {
    weights: Vec<S>,
    flavor: Flavor,
}

impl<S: Real> ClassDistribution<S> {
    pub fn full(weights: Vec<S>) -> Result<Self, DynamicsError> {
        Self::checked(weights, Flavor::Full)
    }

    pub fn truncated(weights: Vec<S>) -> Result<Self, DynamicsError> {
        Self::checked(weights, Flavor::Truncated)
    }

    /// Zero vector over classes `0..len`.
    pub fn zeros(len: usize) -> Self {
        Self {
            weights: vec![S::zero(); len],
            flavor: Flavor::Truncated,
        }
    }

    /// All mass in class `k` of a full distribution over `0..len`.
    pub fn point_mass(len: usize, k: usize) -> Self {
        let mut weights = vec![S::zero(); len];
        weights[k] = S::one();
        Self {
            weights,
            flavor: Flavor::Full,
        }
    }

    fn checked(weights: Vec<S>, flavor: Flavor) -> Result<Self, DynamicsError> {
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= S::zero()) || !w.is_finite() {
                return Err(DynamicsError::InvalidWeight {
                    index,
                    value: w.as_f64(),
                });
            }
        }
        let sum: S = weights.iter().copied().sum();
        let tol = S::tolerance(1e-12);
        let ok = match flavor {
            Flavor::Full => (sum - S::one()).abs() <= tol,
            Flavor::Truncated => sum <= S::one() + tol,
        };
        if !ok {
            return Err(DynamicsError::InvalidMass { sum: sum.as_f64() });
        }
        Ok(Self { weights, flavor })
    }

    pub(crate) fn unchecked(weights: Vec<S>, flavor: Flavor) -> Self {
        Self { weights, flavor }
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<S> {
        self.weights
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> S {
        self.weights.iter().copied().sum()
    }

    /// Projection onto the first `k + 1` coordinates.
    pub fn project(&self, k: usize) -> Self {
        Self {
            weights: self.weights[..=k.min(self.len() - 1)].to_vec(),
            flavor: Flavor::Truncated,
        }
    }

    pub fn l1_distance(&self, other: &Self) -> S {
        l1(&self.weights, &other.weights)
    }
}

pub(crate) fn l1<S: Real>(x: &[S], y: &[S]) -> S {
    x.iter().zip(y).map(|(&a, &b)| (a - b).abs()).sum()
}

/// Mean fitness `phi(r) = 1 + sum_{h <= K} r_h (A(h) - 1)`.
pub fn mean_fitness<S: Real, L: ClassFitness<S> + ?Sized>(weights: &[S], land: &L) -> S {
    weights
        .iter()
        .take(land.selective_classes())
        .enumerate()
        .fold(S::one(), |acc, (h, &x)| {
            acc + x * (land.fitness(h) - S::one())
        })
}

/// One generation of selection then mutation on the full class simplex:
/// `F_k(x) = sum_h x_h A(h) M(h,k) / phi(x)`.
///
/// Only occupied classes contribute a row of `M`.
pub fn map_f<S: Real, L: ClassFitness<S> + ?Sized>(
    x: &ClassDistribution<S>,
    matrix: &LumpedMutationMatrix<S>,
    land: &L,
) -> Result<ClassDistribution<S>, DynamicsError> {
    let dim = matrix.dim();
    if x.len() != dim {
        return Err(DynamicsError::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    let mut out = vec![S::zero(); dim];
    let mut total = S::zero();
    for (h, &xh) in x.weights().iter().enumerate() {
        if xh == S::zero() {
            continue;
        }
        let w = xh * land.fitness(h);
        total = total + w;
        for (o, &m) in out.iter_mut().zip(matrix.row(h)) {
            *o = *o + w * m;
        }
    }
    // Equal to phi(x) on the simplex; dividing by the realized total keeps the
    // output normalized under round-off.
    for o in out.iter_mut() {
        *o = *o / total;
    }
    Ok(ClassDistribution::unchecked(out, Flavor::Full))
}

/// Limit map `G` on `D^k` for any `k >= K`.
pub fn map_g<S: Real>(
    r: &ClassDistribution<S>,
    a: S,
    land: &FitnessLandscape<S>,
) -> Result<ClassDistribution<S>, DynamicsError> {
    let dim = r.len();
    if dim < land.k() + 1 {
        return Err(DynamicsError::Dimension {
            expected: land.k() + 1,
            got: dim,
        });
    }
    Ok(ClassDistribution::unchecked(
        map_g_weights(r.weights(), a, land),
        Flavor::Truncated,
    ))
}

/// Poisson(a) weights `e^{-a} a^d / d!` for `d = 0..len`.
pub(crate) fn poisson_weights<S: Real>(a: S, len: usize) -> Vec<S> {
    let mut w = Vec::with_capacity(len);
    let mut cur = (-a).exp();
    for d in 0..len {
        w.push(cur);
        cur = cur * a / S::from_usize_lossy(d + 1);
    }
    w
}

pub(crate) fn map_g_weights<S: Real>(r: &[S], a: S, land: &FitnessLandscape<S>) -> Vec<S> {
    let dim = r.len();
    let phi = mean_fitness(r, land);
    let poisson = poisson_weights(a, dim);
    let selected: Vec<S> = r
        .iter()
        .enumerate()
        .map(|(h, &x)| x * land.fitness(h))
        .collect();
    (0..dim)
        .map(|i| {
            let s: S = (0..=i).map(|h| selected[h] * poisson[i - h]).sum();
            s / phi
        })
        .collect()
}

/// Lower sandwich map: the classes above `K` are dropped from the mutation
/// flow into `0..=K`.
pub fn map_f_lower<S: Real>(
    r: &ClassDistribution<S>,
    matrix: &LumpedMutationMatrix<S>,
    land: &FitnessLandscape<S>,
) -> Result<ClassDistribution<S>, DynamicsError> {
    sandwich(r, matrix, land, false)
}

/// Upper sandwich map: the mass outside `0..=K` is sent into class `k` at
/// the one-step back-mutation rate `M(k+1, k)`, which dominates `M(j, k)`
/// for every `j > k` in the long-genome regime.
pub fn map_f_upper<S: Real>(
    r: &ClassDistribution<S>,
    matrix: &LumpedMutationMatrix<S>,
    land: &FitnessLandscape<S>,
) -> Result<ClassDistribution<S>, DynamicsError> {
    sandwich(r, matrix, land, true)
}

fn sandwich<S: Real>(
    r: &ClassDistribution<S>,
    matrix: &LumpedMutationMatrix<S>,
    land: &FitnessLandscape<S>,
    upper: bool,
) -> Result<ClassDistribution<S>, DynamicsError> {
    let k_cut = land.k();
    if r.len() != k_cut + 1 {
        return Err(DynamicsError::Dimension {
            expected: k_cut + 1,
            got: r.len(),
        });
    }
    if matrix.dim() < k_cut + 2 {
        return Err(DynamicsError::Dimension {
            expected: k_cut + 2,
            got: matrix.dim(),
        });
    }
    let phi = mean_fitness(r.weights(), land);
    let outside = (S::one() - r.mass()).max(S::zero());
    let out = (0..=k_cut)
        .map(|k| {
            let mut s: S = r
                .weights()
                .iter()
                .enumerate()
                .map(|(i, &ri)| ri * land.fitness(i) * matrix.get(i, k))
                .sum();
            if upper {
                s = s + outside * matrix.get(k + 1, k);
            }
            s / phi
        })
        .collect();
    Ok(ClassDistribution::unchecked(out, Flavor::Truncated))
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPoint<S: Real> {
    pub b: usize,
    pub rho: ClassDistribution<S>,
    /// `|G(rho) - rho|_1`
    pub residual: S,
}

/// Closed-form fixed point `rho^b` of `G` for `b` in the index set.
///
/// Coordinates below `b` vanish. For `k >= 0`, with chains
/// `0 = i_0 < ... < i_h = k`,
///
/// ```text
/// rho(b+k) = Z^{-1} a^k / A(b+k) * sum_chains prod_t A(b+i_t) / ((i_t - i_{t-1})! (A(b) - A(b+i_t)))
/// ```
///
/// where the empty chain contributes 1 at `k = 0`. The normalizer `Z` is the
/// same expression summed over every `k >= 0`, classes beyond `K` having
/// fitness 1; the series converges because `A(b) e^{-a} > 1`. Summed that
/// way, `rho^b` is the restriction of a probability vector on all classes.
pub fn fixed_point_closed_form<S: Real>(
    b: usize,
    a: S,
    land: &FitnessLandscape<S>,
) -> Result<FixedPoint<S>, DynamicsError> {
    let k_cut = land.k();
    if !land.index_set(a).contains(b) {
        return Err(DynamicsError::NotInIndexSet { b });
    }
    let dim = k_cut + 1;
    if b == k_cut + 1 {
        let rho = ClassDistribution::zeros(dim);
        let residual = residual(&rho, a, land);
        return Ok(FixedPoint { b, rho, residual });
    }
    let span = k_cut - b;
    if span > MAX_CHAIN_SPAN {
        return Err(DynamicsError::TooLarge { span });
    }
    let ab = land.fitness(b);
    for i in 1..=span {
        if land.fitness(b + i) == ab {
            return Err(DynamicsError::Degenerate { b, other: b + i });
        }
    }

    // Chain sums scaled by a^k, inside the selective window.
    let chains: Vec<S> = (0..=span).map(|k| chain_sum(b, k, a, land)).collect();
    let inside: Vec<S> = chains
        .iter()
        .enumerate()
        .map(|(k, &c)| c / land.fitness(b + k))
        .collect();
    let norm = inside.iter().copied().sum::<S>() + tail_mass(b, a, land, &chains);

    let mut weights = vec![S::zero(); dim];
    for (k, &v) in inside.iter().enumerate() {
        weights[b + k] = v / norm;
    }
    let rho = ClassDistribution::unchecked(weights, Flavor::Truncated);
    let residual = residual(&rho, a, land);
    let tol = S::tolerance(1e-10).max(S::epsilon() * S::lit(2048.0));
    if !(residual <= tol) {
        return Err(DynamicsError::Residual {
            residual: residual.as_f64(),
        });
    }
    Ok(FixedPoint { b, rho, residual })
}

/// `a^k * sum over chains 0 = i_0 < ... < i_h = k` of the product of
/// `A(b+i_t) / ((i_t - i_{t-1})! (A(b) - A(b+i_t)))`, by subset enumeration
/// of the interior points.
fn chain_sum<S: Real>(b: usize, k: usize, a: S, land: &FitnessLandscape<S>) -> S {
    let ab = land.fitness(b);
    let factor = |from: usize, to: usize| {
        let d = to - from;
        let at = land.fitness(b + to);
        a.powi(d as i32) / S::ln_factorial(d).exp() * at / (ab - at)
    };
    if k == 0 {
        return S::one();
    }
    let interior = k - 1;
    let mut total = S::zero();
    for mask in 0u32..(1u32 << interior) {
        let mut prev = 0;
        let mut prod = S::one();
        for bit in 0..interior {
            if mask & (1 << bit) != 0 {
                let i = bit + 1;
                prod = prod * factor(prev, i);
                prev = i;
            }
        }
        total = total + prod * factor(prev, k);
    }
    total
}

/// Normalizer contribution of the classes beyond `K`, where fitness is 1.
///
/// Uses the last-step decomposition of the chain sum,
/// `c_k = A(b+k)/(A(b)-A(b+k)) sum_{j<k} c_j a^{k-j}/(k-j)!`, which is the
/// same sum the enumeration computes.
fn tail_mass<S: Real>(b: usize, a: S, land: &FitnessLandscape<S>, chains: &[S]) -> S {
    let ab = land.fitness(b);
    let ratio = S::one() / (ab - S::one());
    let lag: Vec<S> = {
        let mut w = Vec::with_capacity(TAIL_WINDOW + 1);
        let mut cur = S::one();
        for d in 0..=TAIL_WINDOW {
            w.push(cur);
            cur = cur * a / S::from_usize_lossy(d + 1);
        }
        w
    };
    let mut c: Vec<S> = chains.to_vec();
    let mut tail = S::zero();
    let eps = S::epsilon() * S::lit(1e-3);
    for _ in 0..MAX_TAIL_TERMS {
        let k = c.len();
        let lo = k.saturating_sub(TAIL_WINDOW);
        let s: S = (lo..k).map(|j| c[j] * lag[k - j]).sum();
        let ck = ratio * s;
        c.push(ck);
        tail = tail + ck;
        if ck <= eps * tail && k > chains.len() + TAIL_WINDOW {
            break;
        }
    }
    tail
}

fn residual<S: Real>(rho: &ClassDistribution<S>, a: S, land: &FitnessLandscape<S>) -> S {
    l1(&map_g_weights(rho.weights(), a, land), rho.weights())
}

/// Iterates `G` from `r0` until successive iterates differ by less than
/// `tol` in l1.
pub fn iterate_to_fixed_point<S: Real>(
    r0: &ClassDistribution<S>,
    a: S,
    land: &FitnessLandscape<S>,
    tol: S,
    max_iter: usize,
) -> Result<(ClassDistribution<S>, usize), DynamicsError> {
    if !(tol > S::zero()) {
        return Err(DynamicsError::Tolerance);
    }
    let mut cur = map_g(r0, a, land)?;
    let mut prev = r0.weights().to_vec();
    let mut last_step = S::infinity();
    for iter in 1..=max_iter {
        last_step = l1(cur.weights(), &prev);
        if last_step < tol {
            return Ok((cur, iter));
        }
        let next = map_g_weights(cur.weights(), a, land);
        prev = std::mem::replace(&mut cur.weights, next);
    }
    Err(DynamicsError::NotConverged {
        iters: max_iter,
        last_step: last_step.as_f64(),
    })
}

/// All fixed points `rho^b`, `b` in the index set, in ascending `b`.
pub fn fixed_points<S: Real>(
    a: S,
    land: &FitnessLandscape<S>,
) -> Result<Vec<FixedPoint<S>>, DynamicsError> {
    land.index_set(a)
        .iter()
        .map(|b| fixed_point_closed_form(b, a, land))
        .collect()
}
