//! Lumped mutation matrix over Hamming classes.
//!
//! Each site of a genome of length `ell` mutates independently with
//! probability `q` to one of the `kappa - 1` other letters. For a genotype in
//! class `k`, the class after mutation is `k - X + Y` with
//! `X ~ Bin(k, q/(kappa-1))` (back mutations) and `Y ~ Bin(ell-k, q)`
//! (forward mutations), independent.
//!
//! The genotype-level kernel is `M(u,v) = (q/(kappa-1))^{d(u,v)} (1-q)^{ell-d(u,v)}`
//! with `d` the Hamming distance.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

/// Probabilities below this are stored as exact zeros.
const UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MutationError {
    #[error("genome length must be at least 1")]
    ZeroLength,
    #[error("alphabet size must be at least 2, got {0}")]
    Alphabet(usize),
    #[error("mutation probability must lie in (0,1), got {0}")]
    Probability(f64),
    #[error("class {class} out of range 0..={ell}")]
    ClassOutOfRange { class: usize, ell: usize },
    #[error(
        "genotype enumeration limited to ell <= 10 and kappa <= 4 (got ell={ell}, kappa={kappa})"
    )]
    OracleTooLarge { ell: usize, kappa: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationParams<S: Real> {
    pub ell: usize,
    pub kappa: usize,
    pub q: S,
}

impl<S: Real> MutationParams<S> {
    pub fn new(ell: usize, kappa: usize, q: S) -> Result<Self, MutationError> {
        let params = Self { ell, kappa, q };
        params.validate()?;
        Ok(params)
    }

    /// Parameters with `q = a / ell`, the scaling under which the matrix
    /// approaches its Poisson limit.
    pub fn from_intensity(ell: usize, kappa: usize, a: S) -> Result<Self, MutationError> {
        Self::new(ell, kappa, a / S::from_usize_lossy(ell.max(1)))
    }

    pub fn validate(&self) -> Result<(), MutationError> {
        if self.ell == 0 {
            return Err(MutationError::ZeroLength);
        }
        if self.kappa < 2 {
            return Err(MutationError::Alphabet(self.kappa));
        }
        if !(self.q > S::zero() && self.q < S::one()) {
            return Err(MutationError::Probability(self.q.as_f64()));
        }
        Ok(())
    }

    /// Mutation intensity `ell * q`.
    pub fn intensity(&self) -> S {
        S::from_usize_lossy(self.ell) * self.q
    }

    /// Row `k` of the lumped matrix, computed on demand (`O(k * ell)`).
    pub fn row(&self, k: usize) -> Result<Vec<S>, MutationError> {
        if k > self.ell {
            return Err(MutationError::ClassOutOfRange {
                class: k,
                ell: self.ell,
            });
        }
        let back = binomial_pmf(k, self.q / S::from_usize_lossy(self.kappa - 1));
        let forward = binomial_pmf(self.ell - k, self.q);
        let mut row = vec![S::zero(); self.ell + 1];
        for (x, &px) in back.iter().enumerate() {
            if px == S::zero() {
                continue;
            }
            // l = k - x + y
            let base = k - x;
            for (y, &py) in forward.iter().enumerate() {
                if py != S::zero() {
                    row[base + y] = row[base + y] + px * py;
                }
            }
        }
        let floor = S::lit(UNDERFLOW);
        for p in row.iter_mut() {
            if *p < floor {
                *p = S::zero();
            }
        }
        Ok(row)
    }
}

/// `Bin(n, p)` probability mass function, evaluated in log space.
pub fn binomial_pmf<S: Real>(n: usize, p: S) -> Vec<S> {
    if p <= S::zero() {
        let mut pmf = vec![S::zero(); n + 1];
        pmf[0] = S::one();
        return pmf;
    }
    if p >= S::one() {
        let mut pmf = vec![S::zero(); n + 1];
        pmf[n] = S::one();
        return pmf;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_n = S::ln_factorial(n);
    let floor = S::lit(UNDERFLOW);
    (0..=n)
        .map(|j| {
            let lp = ln_n - S::ln_factorial(j) - S::ln_factorial(n - j)
                + S::from_usize_lossy(j) * ln_p
                + S::from_usize_lossy(n - j) * ln_q;
            let v = lp.exp();
            if v < floor {
                S::zero()
            } else {
                v
            }
        })
        .collect()
}

/// Row-stochastic `(ell+1) x (ell+1)` matrix `M_H(k, l)`.
#[derive(Debug, Clone)]
pub struct LumpedMutationMatrix<S: Real> {
    params: MutationParams<S>,
    entries: Vec<S>,
}

impl<S: Real> LumpedMutationMatrix<S> {
    pub fn new(params: MutationParams<S>) -> Result<Self, MutationError> {
        params.validate()?;
        let dim = params.ell + 1;
        let mut entries = Vec::with_capacity(dim * dim);
        for k in 0..dim {
            entries.extend(params.row(k)?);
        }
        Ok(Self { params, entries })
    }

    pub fn params(&self) -> &MutationParams<S> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.ell + 1
    }

    pub fn get(&self, k: usize, l: usize) -> S {
        self.entries[k * self.dim() + l]
    }

    pub fn row(&self, k: usize) -> &[S] {
        let d = self.dim();
        &self.entries[k * d..(k + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.entries.chunks_exact(self.dim())
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_sum_error(&self) -> S {
        self.rows()
            .map(|r| (r.iter().copied().sum::<S>() - S::one()).abs())
            .fold(S::zero(), S::max)
    }

    /// Row-major CSV with header `k,l,prob`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "l", "prob"])?;
        for (k, row) in self.rows().enumerate() {
            for (l, p) in row.iter().enumerate() {
                w.serialize((k, l, p.as_f64()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Convenience constructor mirroring [`LumpedMutationMatrix::new`].
pub fn lumped_matrix<S: Real>(
    params: MutationParams<S>,
) -> Result<LumpedMutationMatrix<S>, MutationError> {
    LumpedMutationMatrix::new(params)
}

/// Entry of the limit matrix as `ell -> inf`, `q -> 0`, `ell q -> a`: a
/// Poisson(a) forward jump with no back mutation.
pub fn limit_matrix_entry<S: Real>(a: S, i: usize, j: usize) -> S {
    if j < i {
        return S::zero();
    }
    let d = j - i;
    if d == 0 {
        return (-a).exp();
    }
    (-a + S::from_usize_lossy(d) * a.ln() - S::ln_factorial(d)).exp()
}

/// Brute-force class-to-class mutation probability obtained by enumerating
/// every genotype of `A^ell`.
///
/// The reference (master) word is all zeros and the source genotype has its
/// first `k` sites set to letter 1.
pub fn genotype_lumping_oracle<S: Real>(
    params: &MutationParams<S>,
    k: usize,
    l: usize,
) -> Result<S, MutationError> {
    if l > params.ell {
        return Err(MutationError::ClassOutOfRange {
            class: l,
            ell: params.ell,
        });
    }
    Ok(genotype_lumping_oracle_row(params, k)?[l])
}

/// All entries of row `k` from a single enumeration of `A^ell`.
pub fn genotype_lumping_oracle_row<S: Real>(
    params: &MutationParams<S>,
    k: usize,
) -> Result<Vec<S>, MutationError> {
    params.validate()?;
    let (ell, kappa) = (params.ell, params.kappa);
    if ell > 10 || kappa > 4 {
        return Err(MutationError::OracleTooLarge { ell, kappa });
    }
    if k > ell {
        return Err(MutationError::ClassOutOfRange { class: k, ell });
    }
    let per_letter = params.q / S::from_usize_lossy(kappa - 1);
    let stay = S::one() - params.q;
    // Powers indexed by Hamming distance.
    let weight: Vec<S> = (0..=ell)
        .map(|d| per_letter.powi(d as i32) * stay.powi((ell - d) as i32))
        .collect();
    let source: Vec<usize> = (0..ell).map(|i| usize::from(i < k)).collect();
    let mut row = vec![S::zero(); ell + 1];
    let mut word = vec![0usize; ell];
    loop {
        let class = word.iter().filter(|&&c| c != 0).count();
        let dist = word.iter().zip(&source).filter(|(a, b)| a != b).count();
        row[class] = row[class] + weight[dist];
        // Odometer increment over A^ell.
        let mut pos = 0;
        loop {
            if pos == ell {
                return Ok(row);
            }
            word[pos] += 1;
            if word[pos] < kappa {
                break;
            }
            word[pos] = 0;
            pos += 1;
        }
    }
}
