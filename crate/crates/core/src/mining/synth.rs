//! Synthetic patient records with planted association rules.
//!
//! Each record is drawn from one of a few latent profiles. A profile fixes
//! the diagnosis (subject to label noise), a smoking rate and a Gaussian per
//! numeric reading. Readings are clamped to a plausible range and rounded to
//! the attribute's quantization step. The planted rules link each
//! diagnosis to the bins its profile's characteristic readings fall in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::itemize::Itemizer;
use crate::etl::{ConfidentialAttr, Dataset, Record, Schema};

#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub diagnosis: &'static str,
    pub weight: f64,
    pub smoker_rate: f64,
    /// `(mean, std dev)` per reading.
    pub readings: Vec<(f64, f64)>,
    /// Readings whose bin is implied by the diagnosis.
    pub signature: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    pub readings: Vec<Reading>,
    pub profiles: Vec<Profile>,
    /// Probability that a record's diagnosis is replaced by a uniformly
    /// random one.
    pub label_noise: f64,
}

/// A planted rule before binning: diagnosis => reading near `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRule {
    pub diagnosis: &'static str,
    pub reading: &'static str,
    pub center: f64,
}

impl SyntheticModel {
    pub const DIAGNOSIS: &'static str = "diagnosis";
    pub const SMOKER: &'static str = "smoker";

    pub fn medical(label_noise: f64) -> Self {
        let readings = vec![
            Reading { name: "age", lo: 20.0, hi: 80.0 },
            Reading { name: "systolic_bp", lo: 90.0, hi: 190.0 },
            Reading { name: "glucose", lo: 60.0, hi: 260.0 },
            Reading { name: "cholesterol", lo: 120.0, hi: 320.0 },
        ];
        let profiles = vec![
            Profile {
                diagnosis: "healthy",
                weight: 0.29,
                smoker_rate: 0.15,
                readings: vec![(40.0, 12.0), (103.0, 9.0), (86.0, 15.0), (190.0, 35.0)],
                signature: vec![1, 2],
            },
            Profile {
                diagnosis: "diabetes",
                weight: 0.28,
                smoker_rate: 0.30,
                readings: vec![(57.0, 11.0), (138.0, 16.0), (240.0, 15.0), (235.0, 40.0)],
                signature: vec![2],
            },
            Profile {
                diagnosis: "hypertension",
                weight: 0.31,
                smoker_rate: 0.45,
                readings: vec![(64.0, 10.0), (183.0, 6.0), (130.0, 18.0), (265.0, 35.0)],
                signature: vec![1],
            },
            // no characteristic reading; dilutes the planted rules
            Profile {
                diagnosis: "other",
                weight: 0.12,
                smoker_rate: 0.30,
                readings: vec![(50.0, 15.0), (130.0, 15.0), (140.0, 25.0), (220.0, 40.0)],
                signature: vec![],
            },
        ];
        SyntheticModel { readings, profiles, label_noise }
    }

    pub fn schema(&self) -> Schema {
        Schema::new(
            self.readings.iter().map(|r| ConfidentialAttr::new(r.name)).collect(),
            vec![Self::DIAGNOSIS.into(), Self::SMOKER.into()],
        )
        .expect("model attribute names are distinct")
    }

    pub fn planted(&self) -> Vec<PlantedRule> {
        self.profiles
            .iter()
            .flat_map(|p| {
                p.signature.iter().map(move |&k| PlantedRule {
                    diagnosis: p.diagnosis,
                    reading: self.readings[k].name,
                    center: p.readings[k].0,
                })
            })
            .collect()
    }

    /// Planted rules as item-level `(antecedent, consequent)` pairs under a
    /// fitted itemizer, in both directions.
    pub fn planted_rules(&self, itemizer: &Itemizer) -> Vec<(Vec<String>, Vec<String>)> {
        let mut out = Vec::new();
        for rule in self.planted() {
            let diag = format!("{}={}", Self::DIAGNOSIS, rule.diagnosis);
            if let Ok(Some(bin)) = itemizer.numeric_item(rule.reading, rule.center) {
                out.push((vec![diag.clone()], vec![bin.clone()]));
                out.push((vec![bin], vec![diag]));
            }
        }
        out
    }

    pub fn generate(&self, records: usize, seed: u64) -> Dataset {
        let schema = self.schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: f64 = self.profiles.iter().map(|p| p.weight).sum();
        let rows = (0..records)
            .map(|_| {
                let mut pick = rng.random::<f64>() * total;
                let profile = self
                    .profiles
                    .iter()
                    .find(|p| {
                        pick -= p.weight;
                        pick < 0.0
                    })
                    .unwrap_or(self.profiles.last().expect("model has profiles"));
                let confidential = profile
                    .readings
                    .iter()
                    .zip(&self.readings)
                    .zip(schema.confidential())
                    .map(|((&(mean, sd), reading), attr)| {
                        let v = Normal::new(mean, sd).expect("finite sd").sample(&mut rng);
                        let v = v.clamp(reading.lo, reading.hi);
                        Some(attr.dequantize(((v - attr.offset) * attr.scale).round() as u64))
                    })
                    .collect();
                let diagnosis = if rng.random::<f64>() < self.label_noise {
                    self.profiles[rng.random_range(0..self.profiles.len())].diagnosis
                } else {
                    profile.diagnosis
                };
                let smoker = if rng.random::<f64>() < profile.smoker_rate { "yes" } else { "no" };
                Record { confidential, categorical: vec![diagnosis.into(), smoker.into()] }
            })
            .collect();
        Dataset::new(schema, rows, Vec::new()).expect("rows match the model schema")
    }
}

impl Default for SyntheticModel {
    fn default() -> Self {
        Self::medical(0.10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let m = SyntheticModel::default();
        let a = m.generate(300, 4);
        assert_eq!(a, m.generate(300, 4));
        assert_ne!(a, m.generate(300, 5));
        assert_eq!(a.len(), 300);
        for row in a.rows() {
            for (v, r) in row.confidential.iter().zip(&m.readings) {
                let v = v.unwrap();
                assert!(v >= r.lo && v <= r.hi);
                assert_eq!((v * 100.0).round() / 100.0, v);
            }
        }
    }

    #[test]
    fn planted_rules_resolve_to_bins() {
        let m = SyntheticModel::default();
        let data = m.generate(800, 1);
        let it = Itemizer::fitted(4, &data).unwrap();
        let rules = m.planted_rules(&it);
        assert_eq!(rules.len(), 2 * m.planted().len());
        assert!(rules.contains(&(vec!["diagnosis=diabetes".into()], vec!["glucose=bin3".into()])));
        assert!(rules.contains(&(vec!["systolic_bp=bin0".into()], vec!["diagnosis=healthy".into()])));
    }
}
