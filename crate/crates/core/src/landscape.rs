//! Fitness landscapes indexed by Hamming class, constant beyond class K.
//!
//! A landscape is given by the fitness of the Hamming classes `0..=K`;
//! every class beyond `K` has fitness 1. Class 0 (the master sequence) is
//! strictly the fittest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("fitness list is empty")]
    Empty,
    #[error("fitness of class {class} is not strictly positive ({value})")]
    NonPositive { class: usize, value: f64 },
    #[error("master fitness A(0)={master} must exceed A({class})={value} and the tail fitness 1")]
    MasterNotMaximal {
        class: usize,
        master: f64,
        value: f64,
    },
    #[error("last listed fitness A({class}) equals 1, so K is ambiguous; drop trailing ones")]
    TrailingOne { class: usize },
}

/// Fitness of a Hamming class. Implemented by [`FitnessLandscape`] and by
/// [`Neutral`], the flat landscape used in neutral-phase experiments.
pub trait ClassFitness<S: Real>: Sync {
    fn fitness(&self, class: usize) -> S;

    /// Number of leading classes whose fitness may differ from 1 (`K + 1`
    /// for a landscape, 0 for the neutral one).
    fn selective_classes(&self) -> usize;
}

/// The flat landscape `A = 1` everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neutral;

impl<S: Real> ClassFitness<S> for Neutral {
    fn fitness(&self, _class: usize) -> S {
        S::one()
    }

    fn selective_classes(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FitnessLandscape<S: Real> {
    values: Vec<S>,
}

impl<S: Real> FitnessLandscape<S> {
    /// Validates `A(0..=K)`; `K` is inferred as `values.len() - 1`.
    ///
    /// Intermediate classes may have fitness below 1. Only the maximality
    /// of the master class and the unambiguous cutoff are enforced.
    pub fn new(values: Vec<S>) -> Result<Self, LandscapeError> {
        let Some(&master) = values.first() else {
            return Err(LandscapeError::Empty);
        };
        for (class, &value) in values.iter().enumerate() {
            if !(value > S::zero()) || !value.is_finite() {
                return Err(LandscapeError::NonPositive {
                    class,
                    value: value.as_f64(),
                });
            }
        }
        if !(master > S::one()) {
            return Err(LandscapeError::MasterNotMaximal {
                class: values.len(),
                master: master.as_f64(),
                value: 1.0,
            });
        }
        for (class, &value) in values.iter().enumerate().skip(1) {
            if value >= master {
                return Err(LandscapeError::MasterNotMaximal {
                    class,
                    master: master.as_f64(),
                    value: value.as_f64(),
                });
            }
        }
        let last = values.len() - 1;
        if last >= 1 && values[last] == S::one() {
            return Err(LandscapeError::TrailingOne { class: last });
        }
        Ok(Self { values })
    }

    /// Sharp-peak landscape: only the master class is selected.
    pub fn sharp_peak(master: S) -> Result<Self, LandscapeError> {
        Self::new(vec![master])
    }

    /// The cutoff `K`: last class whose fitness differs from 1.
    pub fn k(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn master(&self) -> S {
        self.values[0]
    }

    pub fn fitness(&self, class: usize) -> S {
        self.values.get(class).copied().unwrap_or_else(S::one)
    }

    /// Error threshold `ln A(0)`: the limit map has the nonzero fixed
    /// point `rho^0` exactly when `a < ln A(0)`.
    pub fn error_threshold(&self) -> S {
        self.master().ln()
    }

    /// Classes `b <= K` with `A(b) e^{-a} > 1` that dominate every class in
    /// `(b, K]`, together with `K + 1`.
    pub fn index_set(&self, a: S) -> IndexSet {
        let decay = (-a).exp();
        let k = self.k();
        let mut indices = Vec::new();
        let mut degenerate = Vec::new();
        // Running max of A over (b, K], scanned from the top.
        let mut best_above = S::neg_infinity();
        for b in (0..=k).rev() {
            let value = self.values[b];
            if value > best_above {
                let growth = value * decay;
                if growth > S::one() {
                    indices.push(b);
                } else if growth == S::one() {
                    degenerate.push(b);
                }
            }
            best_above = best_above.max(value);
        }
        indices.reverse();
        indices.push(k + 1);
        degenerate.reverse();
        IndexSet {
            indices,
            degenerate,
        }
    }
}

impl<S: Real> ClassFitness<S> for FitnessLandscape<S> {
    fn fitness(&self, class: usize) -> S {
        FitnessLandscape::fitness(self, class)
    }

    fn selective_classes(&self) -> usize {
        self.values.len()
    }
}

impl<S: Real> TryFrom<Vec<f64>> for FitnessLandscape<S> {
    type Error = LandscapeError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values.into_iter().map(S::lit).collect())
    }
}

impl<S: Real> From<FitnessLandscape<S>> for Vec<f64> {
    fn from(land: FitnessLandscape<S>) -> Self {
        land.values.into_iter().map(Real::as_f64).collect()
    }
}

/// Indices of the fixed points of the limit map, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexSet {
    indices: Vec<usize>,
    /// Dominant classes sitting exactly on `A(b) e^{-a} = 1`; excluded, but
    /// the phase classification is degenerate there.
    degenerate: Vec<usize>,
}

impl IndexSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, b: usize) -> bool {
        self.indices.binary_search(&b).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }
}
