//! Small statistical utilities used by the experiments.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::num::{xlogx_over, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("Bernoulli parameter must lie in (0,1), got {0}")]
    Parameter(f64),
    #[error("argument must lie in [0,1], got {0}")]
    Argument(f64),
    #[error("need at least 3 points with distinct x, got {0}")]
    TooFewPoints(usize),
    #[error("all x values coincide")]
    DegenerateX,
    #[error("y values must be positive and finite")]
    NonPositiveY,
    #[error("no samples")]
    Empty,
    #[error("hitting-count check needs h >= 2 and p < lambda <= 1")]
    HittingParams,
}

/// Cramér transform of the Bernoulli(p) law,
/// `t ln(t/p) + (1-t) ln((1-t)/(1-p))`.
pub fn cramer_bernoulli<S: Real>(t: S, p: S) -> Result<S, StatsError> {
    if !(p > S::zero() && p < S::one()) {
        return Err(StatsError::Parameter(p.as_f64()));
    }
    if !(t >= S::zero() && t <= S::one()) {
        return Err(StatsError::Argument(t.as_f64()));
    }
    Ok(xlogx_over(t, p) + xlogx_over(S::one() - t, S::one() - p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(x, ln y)`
    pub points: Vec<(f64, f64)>,
}

/// Least-squares fit of `ln y = slope * x + intercept`.
pub fn fit_log_scaling(points: &[(f64, f64)]) -> Result<ScalingFit, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::TooFewPoints(points.len()));
    }
    if points.iter().any(|&(_, y)| !(y > 0.0) || !y.is_finite()) {
        return Err(StatsError::NonPositiveY);
    }
    let logged: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, y.ln())).collect();
    let n = logged.len() as f64;
    let mx = logged.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logged.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logged.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(StatsError::DegenerateX);
    }
    let sxy: f64 = logged.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logged.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        points: logged,
    })
}

/// Sample mean with its normal-approximation standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::Empty);
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std_err, n })
    }

    /// Two-sided normal interval at `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_err, self.mean + z * self.std_err)
    }
}

/// Synthetic chain with nested sets `A ⊂ B ⊂ E` and a known escape law.
///
/// State 0 is `A`. From it, with probability `p` the chain leaves `B` at the
/// next step; otherwise it walks through a path of states in `B \ A` and
/// exits after `slow_exit > window` steps. Outside `B` it returns to `A` in
/// one step. Hence `P(tau_{E\B} <= window | X_0 in A) = p` exactly.
///
/// The exponential bound of [`hitting_count_bound_check`] is only guaranteed
/// when slow excursions are long compared with the horizon `h lambda N`;
/// with `slow_exit = window + 1` it fails for `lambda > (h-1)/h`.
#[derive(Debug, Clone, Copy)]
pub struct TwoSetChain {
    pub p: f64,
    pub window: u64,
    pub slow_exit: u64,
}

impl TwoSetChain {
    /// Slow excursions last just one step more than the window.
    pub fn tight(p: f64, window: u64) -> Self {
        Self {
            p,
            window,
            slow_exit: window + 1,
        }
    }

    /// Time of the `(h-1)`-th exit from `B`, i.e. `T_{h-1}`, starting in `A`.
    pub fn exit_time<R: Rng + ?Sized>(&self, h: u64, rng: &mut R) -> u64 {
        let mut t = 0u64;
        for i in 0..h.saturating_sub(1) {
            if i > 0 {
                // Return to A.
                t += 1;
            }
            t += if rng.random::<f64>() < self.p {
                1
            } else {
                self.slow_exit
            };
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingBoundCheck {
    /// Empirical frequency of `iota(h lambda N) >= h`.
    pub frequency: f64,
    pub std_err: f64,
    /// `exp(-(h-1) Lambda*(lambda))`
    pub bound: f64,
    pub holds: bool,
}

/// Monte Carlo check of `P(iota(h lambda N) >= h) <= exp(-(h-1) Lambda*(lambda))`,
/// where `iota(n)` counts the visits to `A` started before time `n` and
/// `Lambda*` is the Bernoulli(p) Cramér transform.
pub fn hitting_count_bound_check<R: Rng + ?Sized>(
    h: u64,
    lambda: f64,
    chain: &TwoSetChain,
    trials: usize,
    rng: &mut R,
) -> Result<HittingBoundCheck, StatsError> {
    if h < 2 || !(lambda > chain.p && lambda <= 1.0) {
        return Err(StatsError::HittingParams);
    }
    if trials == 0 {
        return Err(StatsError::Empty);
    }
    let horizon = (h as f64 * lambda * chain.window as f64).floor() as u64;
    let hits = (0..trials)
        .filter(|_| chain.exit_time(h, rng) < horizon)
        .count();
    let frequency = hits as f64 / trials as f64;
    let std_err = (frequency * (1.0 - frequency) / trials as f64).sqrt();
    let bound = (-(h as f64 - 1.0) * cramer_bernoulli(lambda, chain.p)?).exp();
    Ok(HittingBoundCheck {
        frequency,
        std_err,
        bound,
        holds: frequency <= bound + 3.0 * std_err,
    })
}
