//! Exact Monte Carlo of the occupancy chain.
//!
//! Given the counts `o` per Hamming class, the next generation is a
//! multinomial draw of size `m` with cell probabilities `F(o/m)`. Draws use
//! the conditional-binomial decomposition, one binomial per class until the
//! population is exhausted.
//!
//! Replica `r` of a run seeded with `seed` draws from ChaCha8 stream `r` of
//! that seed, so results do not depend on how replicas are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError};
use crate::landscape::{ClassFitness, FitnessLandscape, Neutral};
use crate::mutation::{LumpedMutationMatrix, MutationError, MutationParams};
use crate::stats::MeanEstimate;

/// Largest tolerated deviation of `sum_k F_k(o/m)` from 1 before
/// renormalizing.
const DRIFT_TOLERANCE: f64 = 1e-9;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("occupancy vector has {got} classes, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("occupancy counts sum to {got}, population size is {expected}")]
    Population { expected: u64, got: u64 },
    #[error("transition probabilities sum to {sum}, beyond the renormalization tolerance")]
    Drift { sum: f64 },
    #[error("start state is not in the required set: {0}")]
    Start(String),
}

/// Individuals per Hamming class `0..=ell`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyVector {
    counts: Vec<u64>,
}

impl OccupancyVector {
    pub fn new(counts: Vec<u64>) -> Result<Self, SimError> {
        if counts.is_empty() {
            return Err(SimError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(SimError::Config("population size must be positive".into()));
        }
        Ok(Self { counts })
    }

    /// All `m` individuals in one class.
    pub fn concentrated(classes: usize, class: usize, m: u64) -> Self {
        let mut counts = vec![0; classes];
        counts[class] = m;
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn m(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Individuals in classes `0..=k`, i.e. `|pi_k(o)|_1`.
    pub fn head(&self, k: usize) -> u64 {
        self.counts.iter().take(k + 1).sum()
    }

    /// `pi_k(o) / m`
    pub fn truncated_frequencies(&self, k: usize) -> Vec<f64> {
        let m = self.m() as f64;
        self.counts
            .iter()
            .take(k + 1)
            .map(|&c| c as f64 / m)
            .collect()
    }
}

/// Initial population presets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartState {
    /// Everyone in class 0.
    #[default]
    Master,
    /// Everyone in class `ell`.
    Neutral,
    /// Multinomial rounding of `m rho^b` over classes `0..=K`; the remaining
    /// individuals start in class `K + 1`.
    FixedPoint(usize),
    Counts(Vec<u64>),
}

impl std::str::FromStr for StartState {
    type Err = String;

    /// `master`, `neutral`, `fixed-point:<b>` or `fixed-point <b>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "master" => return Ok(Self::Master),
            "neutral" => return Ok(Self::Neutral),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("fixed-point") {
            let b = rest
                .trim_start_matches([':', ' ', '='])
                .parse()
                .map_err(|_| format!("bad fixed-point index in {s:?}"))?;
            return Ok(Self::FixedPoint(b));
        }
        Err(format!(
            "unknown start {s:?}; expected master, neutral or fixed-point:<b>"
        ))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationConfig {
    pub params: MutationParams<f64>,
    pub m: u64,
    pub land: FitnessLandscape<f64>,
    pub seed: u64,
    pub horizon: u64,
    pub burn_in: u64,
    pub replicas: usize,
    pub start: StartState,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.m == 0 {
            return Err(SimError::Config(
                "population size m must be positive".into(),
            ));
        }
        if self.horizon <= self.burn_in {
            return Err(SimError::Config(format!(
                "horizon ({}) must exceed burn_in ({}); the averaging window is empty",
                self.horizon, self.burn_in
            )));
        }
        if self.replicas == 0 {
            return Err(SimError::Config("replicas must be at least 1".into()));
        }
        if self.land.k() + 1 > self.params.ell {
            return Err(SimError::Config(format!(
                "K = {} needs ell >= K + 1, got ell = {}",
                self.land.k(),
                self.params.ell
            )));
        }
        Ok(())
    }

    /// Mutation intensity `a = ell q`.
    pub fn a(&self) -> f64 {
        self.params.intensity()
    }

    pub fn rng(&self, replica: u64) -> SimRng {
        replica_rng(self.seed, replica)
    }

    /// Builds the configured start state; fixed-point rounding draws from
    /// `rng`.
    pub fn start_state(&self, rng: &mut SimRng) -> Result<OccupancyVector, SimError> {
        let classes = self.params.ell + 1;
        match &self.start {
            StartState::Master => Ok(OccupancyVector::concentrated(classes, 0, self.m)),
            StartState::Neutral => Ok(OccupancyVector::concentrated(
                classes,
                self.params.ell,
                self.m,
            )),
            StartState::FixedPoint(b) => {
                let fp = dynamics::fixed_point_closed_form(*b, self.a(), &self.land)?;
                let k = self.land.k();
                let mut probs = vec![0.0; classes];
                probs[..=k].copy_from_slice(fp.rho.weights());
                probs[k + 1] = (1.0 - fp.rho.mass()).max(0.0);
                let mut counts = vec![0; classes];
                sample_multinomial(self.m, &probs, &mut counts, rng);
                Ok(OccupancyVector { counts })
            }
            StartState::Counts(c) => {
                if c.len() != classes {
                    return Err(SimError::Dimension {
                        expected: classes,
                        got: c.len(),
                    });
                }
                let got = c.iter().sum();
                if got != self.m {
                    return Err(SimError::Population {
                        expected: self.m,
                        got,
                    });
                }
                Ok(OccupancyVector { counts: c.clone() })
            }
        }
    }
}

/// Stream `replica` of the ChaCha8 generator seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Conditional-binomial multinomial draw of `n` items into `out`.
///
/// `probs` must be normalized. Class `k` receives
/// `Bin(remaining, p_k / sum_{j >= k} p_j)`.
pub fn sample_multinomial<R: rand::Rng + ?Sized>(
    n: u64,
    probs: &[f64],
    out: &mut [u64],
    rng: &mut R,
) {
    out.iter_mut().for_each(|c| *c = 0);
    let mut remaining = n;
    // Suffix sums avoid the cancellation of 1 - prefix.
    let mut suffix = probs.iter().sum::<f64>();
    let last = probs.len() - 1;
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == last {
            out[k] = remaining;
            break;
        }
        if p > 0.0 {
            let cond = if suffix > 0.0 {
                (p / suffix).min(1.0)
            } else {
                1.0
            };
            let draw = Binomial::new(remaining, cond)
                .expect("conditional probability in [0,1]")
                .sample(rng);
            out[k] = draw;
            remaining -= draw;
        }
        suffix = (suffix - p).max(0.0);
    }
}

/// Precomputed mutation rows and class fitness for repeated stepping.
#[derive(Debug, Clone)]
pub struct Simulator {
    matrix: LumpedMutationMatrix<f64>,
    fitness: Vec<f64>,
}

impl Simulator {
    pub fn new<L: ClassFitness<f64>>(
        params: MutationParams<f64>,
        land: &L,
    ) -> Result<Self, SimError> {
        let matrix = LumpedMutationMatrix::new(params)?;
        let fitness = (0..matrix.dim()).map(|k| land.fitness(k)).collect();
        Ok(Self { matrix, fitness })
    }

    pub fn matrix(&self) -> &LumpedMutationMatrix<f64> {
        &self.matrix
    }

    pub fn classes(&self) -> usize {
        self.matrix.dim()
    }

    /// Multinomial cell probabilities `F(o/m)`; only occupied classes
    /// contribute a row of the mutation matrix.
    pub fn transition_probabilities(
        &self,
        counts: &[u64],
        probs: &mut [f64],
    ) -> Result<(), SimError> {
        mean_map_into(counts, &self.matrix, |h| self.fitness[h], probs)
    }

    /// One Wright-Fisher generation.
    pub fn step(&self, o: &OccupancyVector, rng: &mut SimRng) -> Result<OccupancyVector, SimError> {
        let mut buf = StepBuffers::new(self.classes());
        let mut next = vec![0; self.classes()];
        self.step_into(o.counts(), &mut next, &mut buf, rng)?;
        Ok(OccupancyVector { counts: next })
    }

    fn step_into(
        &self,
        counts: &[u64],
        next: &mut [u64],
        buf: &mut StepBuffers,
        rng: &mut SimRng,
    ) -> Result<(), SimError> {
        if counts.len() != self.classes() {
            return Err(SimError::Dimension {
                expected: self.classes(),
                got: counts.len(),
            });
        }
        self.transition_probabilities(counts, &mut buf.probs)?;
        let m: u64 = counts.iter().sum();
        sample_multinomial(m, &buf.probs, next, rng);
        debug_assert_eq!(next.iter().sum::<u64>(), m, "population not conserved");
        Ok(())
    }

    /// Runs from `start` until `stop` holds for the current state or `cap`
    /// steps have elapsed. Returns the hitting step if any.
    fn run_until<F>(
        &self,
        start: &OccupancyVector,
        cap: u64,
        rng: &mut SimRng,
        mut stop: F,
    ) -> Result<Option<u64>, SimError>
    where
        F: FnMut(&[u64]) -> bool,
    {
        let mut cur = start.counts.clone();
        let mut next = vec![0; cur.len()];
        let mut buf = StepBuffers::new(cur.len());
        for n in 0..=cap {
            if stop(&cur) {
                return Ok(Some(n));
            }
            if n == cap {
                break;
            }
            self.step_into(&cur, &mut next, &mut buf, rng)?;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(None)
    }
}

struct StepBuffers {
    probs: Vec<f64>,
}

impl StepBuffers {
    fn new(classes: usize) -> Self {
        Self {
            probs: vec![0.0; classes],
        }
    }
}

fn mean_map_into<F: Fn(usize) -> f64>(
    counts: &[u64],
    matrix: &LumpedMutationMatrix<f64>,
    fitness: F,
    probs: &mut [f64],
) -> Result<(), SimError> {
    probs.iter_mut().for_each(|p| *p = 0.0);
    let mut total = 0.0;
    for (h, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let w = c as f64 * fitness(h);
        total += w;
        for (p, &mk) in probs.iter_mut().zip(matrix.row(h)) {
            *p += w * mk;
        }
    }
    let mut sum = 0.0;
    for p in probs.iter_mut() {
        *p /= total;
        sum += *p;
    }
    if (sum - 1.0).abs() > DRIFT_TOLERANCE || !sum.is_finite() {
        return Err(SimError::Drift { sum });
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(())
}

/// One multinomial step of the occupancy chain.
pub fn step_occupancy<L: ClassFitness<f64>>(
    o: &OccupancyVector,
    matrix: &LumpedMutationMatrix<f64>,
    land: &L,
    rng: &mut SimRng,
) -> Result<OccupancyVector, SimError> {
    if o.counts.len() != matrix.dim() {
        return Err(SimError::Dimension {
            expected: matrix.dim(),
            got: o.counts.len(),
        });
    }
    let mut probs = vec![0.0; matrix.dim()];
    mean_map_into(&o.counts, matrix, |h| land.fitness(h), &mut probs)?;
    let mut next = vec![0; matrix.dim()];
    sample_multinomial(o.m(), &probs, &mut next, rng);
    Ok(OccupancyVector { counts: next })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    /// Time-averaged `O_n(k)/m` for `k = 0..=K`.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Number of averaged states, `horizon - burn_in`.
    pub steps: u64,
    pub final_state: OccupancyVector,
}

/// Single trajectory on replica stream 0.
pub fn run_trajectory(config: &SimulationConfig) -> Result<TrajectoryStats, SimError> {
    config.validate()?;
    let sim = Simulator::new(config.params, &config.land)?;
    trajectory(&sim, config, 0)
}

/// One trajectory per replica, in replica order.
pub fn run_replicas(config: &SimulationConfig) -> Result<Vec<TrajectoryStats>, SimError> {
    config.validate()?;
    let sim = Simulator::new(config.params, &config.land)?;
    (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| trajectory(&sim, config, r))
        .collect()
}

fn trajectory(
    sim: &Simulator,
    config: &SimulationConfig,
    replica: u64,
) -> Result<TrajectoryStats, SimError> {
    let mut rng = config.rng(replica);
    let k = config.land.k();
    let mut cur = config.start_state(&mut rng)?.counts;
    let mut next = vec![0; cur.len()];
    let mut buf = StepBuffers::new(cur.len());
    let m = config.m as f64;
    // Welford accumulators per class.
    let mut mean = vec![0.0; k + 1];
    let mut m2 = vec![0.0; k + 1];
    let mut seen = 0u64;
    for n in 1..=config.horizon {
        sim.step_into(&cur, &mut next, &mut buf, &mut rng)?;
        std::mem::swap(&mut cur, &mut next);
        if n > config.burn_in {
            seen += 1;
            for j in 0..=k {
                let x = cur[j] as f64 / m;
                let delta = x - mean[j];
                mean[j] += delta / seen as f64;
                m2[j] += delta * (x - mean[j]);
            }
        }
    }
    let variance = m2.iter().map(|v| v / seen as f64).collect();
    Ok(TrajectoryStats {
        mean,
        variance,
        steps: seen,
        final_state: OccupancyVector { counts: cur },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HittingKind {
    /// First time classes `0..=K` are all empty.
    PersistenceTau0,
    /// First time some individual is in classes `0..=k`, under neutral
    /// fitness.
    NeutralTauStar(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HittingOutcome {
    Hit(u64),
    Censored(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HittingTimeRecord {
    pub kind: HittingKind,
    pub outcome: HittingOutcome,
    pub seed: u64,
    pub replica: u64,
}

impl HittingTimeRecord {
    /// Hitting step, or the cap for censored records.
    pub fn value(&self) -> u64 {
        match self.outcome {
            HittingOutcome::Hit(n) | HittingOutcome::Censored(n) => n,
        }
    }

    pub fn censored(&self) -> bool {
        matches!(self.outcome, HittingOutcome::Censored(_))
    }
}

/// First `n` with classes `0..=K` empty, starting from `start` on replica
/// stream 0.
pub fn persistence_time(
    config: &SimulationConfig,
    start: &OccupancyVector,
    cap: u64,
) -> Result<HittingTimeRecord, SimError> {
    let sim = Simulator::new(config.params, &config.land)?;
    persistence_on(&sim, config, start, cap, 0)
}

fn persistence_on(
    sim: &Simulator,
    config: &SimulationConfig,
    start: &OccupancyVector,
    cap: u64,
    replica: u64,
) -> Result<HittingTimeRecord, SimError> {
    check_start(sim, config, start)?;
    let k = config.land.k();
    let mut rng = config.rng(replica);
    let hit = sim.run_until(start, cap, &mut rng, |c| c[..=k].iter().all(|&x| x == 0))?;
    Ok(record(
        HittingKind::PersistenceTau0,
        hit,
        cap,
        config.seed,
        replica,
    ))
}

/// First `n` at which some individual lies in classes `0..=k`, with neutral
/// fitness and the configured start (which must have classes `0..=k` empty),
/// on replica stream 0.
pub fn neutral_hitting_time(
    config: &SimulationConfig,
    k: usize,
    cap: u64,
) -> Result<HittingTimeRecord, SimError> {
    let sim = Simulator::new(config.params, &Neutral)?;
    neutral_on(&sim, config, k, cap, 0)
}

fn neutral_on(
    sim: &Simulator,
    config: &SimulationConfig,
    k: usize,
    cap: u64,
    replica: u64,
) -> Result<HittingTimeRecord, SimError> {
    let mut rng = config.rng(replica);
    let start = config.start_state(&mut rng)?;
    check_start(sim, config, &start)?;
    if k >= sim.classes() {
        return Err(SimError::Config(format!("class {k} beyond ell")));
    }
    if start.head(k) != 0 {
        return Err(SimError::Start(format!(
            "neutral-phase start must have classes 0..={k} empty"
        )));
    }
    let hit = sim.run_until(&start, cap, &mut rng, |c| c[..=k].iter().any(|&x| x > 0))?;
    Ok(record(
        HittingKind::NeutralTauStar(k),
        hit,
        cap,
        config.seed,
        replica,
    ))
}

fn check_start(
    sim: &Simulator,
    config: &SimulationConfig,
    start: &OccupancyVector,
) -> Result<(), SimError> {
    if start.counts.len() != sim.classes() {
        return Err(SimError::Dimension {
            expected: sim.classes(),
            got: start.counts.len(),
        });
    }
    if start.m() != config.m {
        return Err(SimError::Population {
            expected: config.m,
            got: start.m(),
        });
    }
    Ok(())
}

fn record(
    kind: HittingKind,
    hit: Option<u64>,
    cap: u64,
    seed: u64,
    replica: u64,
) -> HittingTimeRecord {
    HittingTimeRecord {
        kind,
        outcome: match hit {
            Some(n) => HittingOutcome::Hit(n),
            None => HittingOutcome::Censored(cap),
        },
        seed,
        replica,
    }
}

/// One hitting-time record per replica, in replica order. Persistence runs
/// start from the configured start state, redrawing fixed-point starts that
/// leave classes `0..=K` empty.
pub fn hitting_times(
    config: &SimulationConfig,
    kind: HittingKind,
    cap: u64,
) -> Result<Vec<HittingTimeRecord>, SimError> {
    config.params.validate()?;
    if config.replicas == 0 {
        return Err(SimError::Config("replicas must be at least 1".into()));
    }
    let replicas = 0..config.replicas as u64;
    match kind {
        HittingKind::PersistenceTau0 => {
            let sim = Simulator::new(config.params, &config.land)?;
            replicas
                .into_par_iter()
                .map(|r| {
                    let mut rng = config.rng(r);
                    let start = occupied_start(config, &mut rng)?;
                    persistence_on(&sim, config, &start, cap, r)
                })
                .collect()
        }
        HittingKind::NeutralTauStar(k) => {
            let sim = Simulator::new(config.params, &Neutral)?;
            replicas
                .into_par_iter()
                .map(|r| neutral_on(&sim, config, k, cap, r))
                .collect()
        }
    }
}

/// Start state with at least one individual in classes `0..=K`. Random
/// presets are redrawn; a deterministic empty start is an error.
fn occupied_start(
    config: &SimulationConfig,
    rng: &mut SimRng,
) -> Result<OccupancyVector, SimError> {
    const MAX_REDRAWS: usize = 10_000;
    let k = config.land.k();
    for _ in 0..MAX_REDRAWS {
        let start = config.start_state(rng)?;
        if start.head(k) > 0 {
            return Ok(start);
        }
        if !matches!(config.start, StartState::FixedPoint(_)) {
            break;
        }
    }
    Err(SimError::Start(
        "persistence start has classes 0..=K empty".into(),
    ))
}

/// Mean of hitting times with censored values counted at their cap (a lower
/// bound on the true mean), reported with the censored fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingSummary {
    pub mean: f64,
    pub std_err: f64,
    pub censored_fraction: f64,
    pub n: usize,
}

pub fn summarize(records: &[HittingTimeRecord]) -> Option<HittingSummary> {
    let values: Vec<f64> = records.iter().map(|r| r.value() as f64).collect();
    let est = MeanEstimate::from_samples(&values).ok()?;
    let censored = records.iter().filter(|r| r.censored()).count();
    Some(HittingSummary {
        mean: est.mean,
        std_err: est.std_err,
        censored_fraction: censored as f64 / records.len() as f64,
        n: records.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeEstimate {
    pub probability: f64,
    pub std_err: f64,
    pub replicas: usize,
    pub steps: u64,
}

/// Fraction of replicas that, started from a single master sequence (the
/// rest in class `K + 1`), hold at least `gamma m` master sequences after
/// `floor(c ln m)` generations.
pub fn master_creation_probe(
    config: &SimulationConfig,
    gamma: f64,
    c: f64,
) -> Result<ProbeEstimate, SimError> {
    config.params.validate()?;
    if config.replicas == 0 || config.m == 0 {
        return Err(SimError::Config("need m >= 1 and replicas >= 1".into()));
    }
    let k = config.land.k();
    if k + 1 > config.params.ell {
        return Err(SimError::Config("ell must exceed K".into()));
    }
    let classes = config.params.ell + 1;
    let mut counts = vec![0; classes];
    counts[0] = 1;
    counts[k + 1] = config.m - 1;
    let start = OccupancyVector { counts };
    let steps = (c * (config.m as f64).ln()).floor().max(0.0) as u64;
    let threshold = gamma * config.m as f64;
    let sim = Simulator::new(config.params, &config.land)?;
    let successes: Vec<bool> = (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<bool, SimError> {
            let mut rng = config.rng(r);
            let mut cur = start.counts.clone();
            let mut next = vec![0; classes];
            let mut buf = StepBuffers::new(classes);
            for _ in 0..steps {
                sim.step_into(&cur, &mut next, &mut buf, &mut rng)?;
                std::mem::swap(&mut cur, &mut next);
            }
            Ok(cur[0] as f64 >= threshold)
        })
        .collect::<Result<_, _>>()?;
    let p = successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64;
    Ok(ProbeEstimate {
        probability: p,
        std_err: (p * (1.0 - p) / successes.len() as f64).sqrt(),
        replicas: successes.len(),
        steps,
    })
}
