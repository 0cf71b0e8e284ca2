use std::collections::HashSet;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::apriori::{accuracy, apriori, AssociationRule};
use super::itemize::Itemizer;
use super::synth::SyntheticModel;
use super::MiningError;
use crate::etl::Dataset;
use crate::par::{join, maybe_par_iter};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Record counts evaluated by default, one report row each.
pub const DEFAULT_SCHEDULE: [usize; 4] = [200, 400, 600, 800];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningParams {
    pub minsup: f64,
    pub minconf: f64,
    pub bins: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams { minsup: 0.2, minconf: 0.6, bins: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub params: MiningParams,
    pub schedule: Vec<usize>,
    /// Seeds the row shuffle; row `n` of the report uses the first `n`
    /// shuffled records, so smaller samples are nested in larger ones.
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(params: MiningParams, seed: u64) -> Self {
        ExperimentSpec { params, schedule: DEFAULT_SCHEDULE.to_vec(), seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub records: usize,
    pub original_rules: usize,
    pub perturbed_rules: usize,
    /// Share of original rules that were also mined from the perturbed data.
    pub recovery_percent: f64,
    /// Share of planted rules mined from the original data, when known.
    pub original_accuracy: Option<f64>,
    /// Share of planted rules mined from the perturbed data, when known.
    pub perturbed_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub rows: Vec<ReportRow>,
    pub params: MiningParams,
    pub noise: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedSample {
    pub records: usize,
    pub original: Vec<AssociationRule<String>>,
    pub perturbed: Vec<AssociationRule<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub report: AccuracyReport,
    pub samples: Vec<MinedSample>,
}

fn planted_share(planted: &[(Vec<String>, Vec<String>)], rules: &[AssociationRule<String>]) -> f64 {
    if planted.is_empty() {
        return 0.0;
    }
    let mined: HashSet<(Vec<String>, Vec<String>)> = rules.iter().map(AssociationRule::key).collect();
    let hits = planted.iter().filter(|r| mined.contains(*r)).count();
    100.0 * hits as f64 / planted.len() as f64
}

/// Mines `original` and `perturbed` (row-aligned) at every record count of
/// the schedule and compares the rule sets.
///
/// `noise` is a free-form description of the perturbation, echoed in the
/// report.
pub fn run_experiment(
    original: &Dataset,
    perturbed: &Dataset,
    model: Option<&SyntheticModel>,
    spec: &ExperimentSpec,
    noise: &str,
) -> Result<ExperimentResult, MiningError> {
    if original.len() != perturbed.len() {
        return Err(MiningError::MisalignedDatasets { original: original.len(), perturbed: perturbed.len() });
    }
    if let Some(&n) = spec.schedule.iter().find(|&&n| n > original.len() || n == 0) {
        return Err(MiningError::InsufficientRecords { wanted: n, available: original.len() });
    }
    let mut order: Vec<usize> = (0..original.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let params = spec.params;

    let outcomes = maybe_par_iter!(spec.schedule)
        .map(|&n| -> Result<(ReportRow, MinedSample), MiningError> {
            let orig = original.select(&order[..n]);
            let pert = perturbed.select(&order[..n]);
            let itemizer = Itemizer::fitted(params.bins, &orig)?;
            let (orig_tx, pert_tx) = (itemizer.itemize(&orig)?, itemizer.itemize(&pert)?);
            let (orig_rules, pert_rules) = join(
                || apriori(&orig_tx, params.minsup, params.minconf),
                || apriori(&pert_tx, params.minsup, params.minconf),
            );
            let (orig_rules, pert_rules) = (orig_rules?, pert_rules?);
            let recovery_percent = accuracy(&orig_rules, &pert_rules)?;
            let planted = model.map(|m| m.planted_rules(&itemizer));
            let row = ReportRow {
                records: n,
                original_rules: orig_rules.len(),
                perturbed_rules: pert_rules.len(),
                recovery_percent,
                original_accuracy: planted.as_ref().map(|p| planted_share(p, &orig_rules)),
                perturbed_accuracy: planted.as_ref().map(|p| planted_share(p, &pert_rules)),
            };
            Ok((row, MinedSample { records: n, original: orig_rules, perturbed: pert_rules }))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (rows, samples) = outcomes.into_iter().unzip();
    Ok(ExperimentResult {
        report: AccuracyReport { rows, params, noise: noise.to_owned(), seed: spec.seed },
        samples,
    })
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
}

impl AccuracyReport {
    pub const CSV_HEADER: &'static str =
        "records,original_rules,perturbed_rules,recovery_percent,original_accuracy,perturbed_accuracy";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.2},{},{}",
                r.records,
                r.original_rules,
                r.perturbed_rules,
                r.recovery_percent,
                fmt_pct(r.original_accuracy),
                fmt_pct(r.perturbed_accuracy)
            )
            .expect("writing to a String");
        }
        out
    }

    /// Parses the output of [`AccuracyReport::to_csv`]. Parameters are not
    /// part of the CSV and must be supplied.
    pub fn from_csv(text: &str, params: MiningParams, noise: &str, seed: u64) -> Result<Self, MiningError> {
        let bad = |line: &str| MiningError::MalformedReport(line.to_owned());
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(bad(text.lines().next().unwrap_or("")));
        }
        let pct = |s: &str| -> Option<Option<f64>> {
            if s == "n/a" {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        };
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(bad(line));
                }
                Ok(ReportRow {
                    records: f[0].parse().map_err(|_| bad(line))?,
                    original_rules: f[1].parse().map_err(|_| bad(line))?,
                    perturbed_rules: f[2].parse().map_err(|_| bad(line))?,
                    recovery_percent: f[3].parse().map_err(|_| bad(line))?,
                    original_accuracy: pct(f[4]).ok_or_else(|| bad(line))?,
                    perturbed_accuracy: pct(f[5]).ok_or_else(|| bad(line))?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AccuracyReport { rows, params, noise: noise.to_owned(), seed })
    }
}

impl fmt::Display for AccuracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "minsup={} minconf={} bins={} seed={} noise={}",
            self.params.minsup, self.params.minconf, self.params.bins, self.seed, self.noise
        )?;
        writeln!(
            f,
            "{:>10}  {:>16}  {:>17}  {:>10}  {:>10}  {:>12}",
            "records", "accuracy (orig)", "accuracy (pert)", "rules orig", "rules pert", "recovery %"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>10}  {:>16}  {:>17}  {:>10}  {:>10}  {:>12.2}",
                r.records,
                fmt_pct(r.original_accuracy),
                fmt_pct(r.perturbed_accuracy),
                r.original_rules,
                r.perturbed_rules,
                r.recovery_percent
            )?;
        }
        Ok(())
    }
}

/// One rule per line: `a, b => c  (support=0.2500, confidence=0.7000)`.
pub fn format_rules(rules: &[AssociationRule<String>]) -> String {
    let mut out = String::new();
    for r in rules {
        writeln!(
            out,
            "{} => {}  (support={:.4}, confidence={:.4})",
            r.antecedent.join(", "),
            r.consequent.join(", "),
            r.support,
            r.confidence
        )
        .expect("writing to a String");
    }
    out
}
