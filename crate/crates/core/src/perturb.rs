//! Data distortion of confidential attributes: additive (`y = x + e`) and
//! multiplicative (`y = x * e`) perturbation with uniform noise.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::etl::Dataset;
use crate::par::maybe_par_iter;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbError {
    #[error("noise variance must be non-negative and finite (got {0})")]
    NegativeVariance(f64),
    #[error("perturbation plan has no entry for attribute `{0}`")]
    PlanIncomplete(String),
    #[error("perturbation plan names unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("perturbation plan lists `{0}` twice")]
    DuplicateEntry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbOp {
    Mult,
    Add,
}

impl PerturbOp {
    /// Mean of the noise for this operation: 1 for multiplicative, 0 for additive.
    pub fn neutral(self) -> f64 {
        match self {
            PerturbOp::Mult => 1.0,
            PerturbOp::Add => 0.0,
        }
    }

    pub fn apply(self, x: f64, e: f64) -> f64 {
        match self {
            PerturbOp::Mult => perturb_multiplicative(x, e),
            PerturbOp::Add => perturb_additive(x, e),
        }
    }
}

pub fn perturb_additive(x: f64, e: f64) -> f64 {
    x + e
}

pub fn perturb_multiplicative(x: f64, e: f64) -> f64 {
    x * e
}

/// Uniform noise with the given mean and variance. The support is
/// `[mean - sqrt(3 var), mean + sqrt(3 var)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    mean: f64,
    variance: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(mean: f64, variance: f64, seed: u64) -> Result<Self, PerturbError> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(PerturbError::NegativeVariance(variance));
        }
        Ok(NoiseSpec { mean, variance, seed })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn support(&self) -> (f64, f64) {
        let half = (3.0 * self.variance).sqrt();
        (self.mean - half, self.mean + half)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.variance == 0.0 {
            return self.mean;
        }
        let (lo, hi) = self.support();
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// `n` i.i.d. draws from `spec`, reproducible from its seed.
pub fn draw_noise(spec: &NoiseSpec, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..n).map(|_| spec.sample(&mut rng)).collect()
}

/// Seed of the noise stream for one attribute, derived from the global seed
/// and the attribute name so that streams do not depend on plan order.
pub fn attribute_seed(seed: u64, attr: &str) -> u64 {
    crate::derive_seed("perturb", seed, attr)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PlanEntry {
    pub attr: String,
    pub op: PerturbOp,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbPlan {
    entries: Vec<PlanEntry>,
    seed: u64,
}

impl PerturbPlan {
    pub fn new(entries: Vec<PlanEntry>, seed: u64) -> Result<Self, PerturbError> {
        let mut names = HashSet::new();
        for e in &entries {
            NoiseSpec::new(e.op.neutral(), e.variance, 0)?;
            if !names.insert(e.attr.as_str()) {
                return Err(PerturbError::DuplicateEntry(e.attr.clone()));
            }
        }
        Ok(PerturbPlan { entries, seed })
    }

    /// The same operation and variance for every listed attribute.
    pub fn uniform<S: AsRef<str>>(attrs: &[S], op: PerturbOp, variance: f64, seed: u64) -> Result<Self, PerturbError> {
        let entries = attrs
            .iter()
            .map(|a| PlanEntry { attr: a.as_ref().to_owned(), op, variance })
            .collect();
        Self::new(entries, seed)
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn entry(&self, attr: &str) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.attr == attr)
    }
}

/// Replaces every confidential cell `a` of attribute `k` by
/// `op_k(a, e)` with a fresh noise draw `e` per cell. Missing cells stay
/// missing but still consume a draw, so row `i` always sees draw `i`.
pub fn transform_dataset(data: &Dataset, plan: &PerturbPlan) -> Result<Dataset, PerturbError> {
    let schema = data.schema();
    for entry in plan.entries() {
        if schema.confidential_index(&entry.attr).is_none() {
            return Err(PerturbError::UnknownAttribute(entry.attr.clone()));
        }
    }
    let jobs = schema
        .confidential()
        .iter()
        .enumerate()
        .map(|(k, attr)| {
            let entry = plan
                .entry(&attr.name)
                .ok_or_else(|| PerturbError::PlanIncomplete(attr.name.clone()))?;
            let spec = NoiseSpec::new(entry.op.neutral(), entry.variance, attribute_seed(plan.seed, &attr.name))?;
            Ok((k, entry.op, spec))
        })
        .collect::<Result<Vec<_>, PerturbError>>()?;

    let columns: Vec<Vec<Option<f64>>> = maybe_par_iter!(jobs)
        .map(|&(k, op, spec)| {
            let noise = draw_noise(&spec, data.len());
            data.column(k)
                .zip(noise)
                .map(|(cell, e)| cell.map(|x| op.apply(x, e)))
                .collect()
        })
        .collect();
    Ok(data.with_confidential_columns(columns))
}
