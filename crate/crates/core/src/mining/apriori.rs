//! Level-wise Apriori over arbitrary ordered items.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::Hash;

use super::MiningError;
use crate::par::maybe_par_iter;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRule<I> {
    /// Sorted, nonempty.
    pub antecedent: Vec<I>,
    /// Sorted, nonempty, disjoint from the antecedent.
    pub consequent: Vec<I>,
    pub support: f64,
    pub confidence: f64,
}

impl<I: Clone> AssociationRule<I> {
    pub fn key(&self) -> (Vec<I>, Vec<I>) {
        (self.antecedent.clone(), self.consequent.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequentItemset<I> {
    pub items: Vec<I>,
    pub count: usize,
}

/// `count / total >= threshold`, tolerant of the rounding in
/// `threshold * total`.
pub fn meets(count: usize, total: usize, threshold: f64) -> bool {
    count as f64 >= threshold * total as f64 - 1e-9
}

fn check_threshold(name: &'static str, value: f64) -> Result<(), MiningError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(MiningError::InvalidThreshold { name, value })
    }
}

/// Transactions as bitsets over a dense item index, with the index.
struct Encoded<I> {
    items: Vec<I>,
    words: usize,
    rows: Vec<Vec<u64>>,
}

impl<I: Ord + Clone + Hash> Encoded<I> {
    fn new(transactions: &[Vec<I>]) -> Self {
        let items: Vec<I> = transactions.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let index: HashMap<&I, usize> = items.iter().enumerate().map(|(i, it)| (it, i)).collect();
        let words = items.len().div_ceil(64).max(1);
        let rows = transactions
            .iter()
            .map(|t| {
                let mut bits = vec![0u64; words];
                for it in t {
                    let i = index[it];
                    bits[i / 64] |= 1 << (i % 64);
                }
                bits
            })
            .collect();
        Encoded { items, words, rows }
    }

    fn count(&self, itemset: &[usize]) -> usize {
        let mut mask = vec![0u64; self.words];
        for &i in itemset {
            mask[i / 64] |= 1 << (i % 64);
        }
        self.rows
            .iter()
            .filter(|row| row.iter().zip(&mask).all(|(r, m)| r & m == *m))
            .count()
    }
}

/// Frequent itemsets by id, with support counts.
fn frequent_ids<I: Ord + Clone + Hash + Send + Sync>(enc: &Encoded<I>, minsup: f64) -> Vec<(Vec<usize>, usize)> {
    let n = enc.rows.len();
    let mut all = Vec::new();
    let mut level: Vec<(Vec<usize>, usize)> = (0..enc.items.len())
        .map(|i| (vec![i], enc.count(&[i])))
        .filter(|(_, c)| meets(*c, n, minsup))
        .collect();
    while !level.is_empty() {
        let known: HashSet<&[usize]> = level.iter().map(|(s, _)| s.as_slice()).collect();
        let mut candidates = Vec::new();
        // level is sorted lexicographically, so sets sharing a prefix are adjacent
        for (i, (a, _)) in level.iter().enumerate() {
            for (b, _) in &level[i + 1..] {
                let k = a.len();
                if a[..k - 1] != b[..k - 1] {
                    break;
                }
                let mut cand = a.clone();
                cand.push(b[k - 1]);
                let all_subsets_frequent = (0..cand.len()).all(|skip| {
                    let sub: Vec<usize> = cand.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &x)| x).collect();
                    known.contains(sub.as_slice())
                });
                if all_subsets_frequent {
                    candidates.push(cand);
                }
            }
        }
        let counted: Vec<(Vec<usize>, usize)> = maybe_par_iter!(candidates)
            .map(|c| (c.clone(), enc.count(c)))
            .collect();
        all.append(&mut level);
        level = counted.into_iter().filter(|(_, c)| meets(*c, n, minsup)).collect();
    }
    all
}

pub fn frequent_itemsets<I: Ord + Clone + Hash + Send + Sync>(
    transactions: &[Vec<I>],
    minsup: f64,
) -> Result<Vec<FrequentItemset<I>>, MiningError> {
    check_threshold("minsup", minsup)?;
    if transactions.is_empty() {
        return Err(MiningError::EmptyTransactions);
    }
    let enc = Encoded::new(transactions);
    Ok(frequent_ids(&enc, minsup)
        .into_iter()
        .map(|(ids, count)| FrequentItemset { items: ids.iter().map(|&i| enc.items[i].clone()).collect(), count })
        .collect())
}

/// All rules `A -> C` with `support(A u C) >= minsup` and
/// `support(A u C) / support(A) >= minconf`, sorted by (antecedent, consequent).
pub fn apriori<I: Ord + Clone + Hash + Send + Sync>(
    transactions: &[Vec<I>],
    minsup: f64,
    minconf: f64,
) -> Result<Vec<AssociationRule<I>>, MiningError> {
    check_threshold("minsup", minsup)?;
    check_threshold("minconf", minconf)?;
    if transactions.is_empty() {
        return Err(MiningError::EmptyTransactions);
    }
    let enc = Encoded::new(transactions);
    let n = enc.rows.len();
    let frequent = frequent_ids(&enc, minsup);
    let counts: HashMap<&[usize], usize> = frequent.iter().map(|(s, c)| (s.as_slice(), *c)).collect();

    let mut rules = Vec::new();
    for (set, count) in frequent.iter().filter(|(s, _)| s.len() >= 2) {
        let k = set.len();
        for mask in 1..(1u32 << k) - 1 {
            let (ante, cons): (Vec<usize>, Vec<usize>) = {
                let mut a = Vec::new();
                let mut c = Vec::new();
                for (j, &item) in set.iter().enumerate() {
                    if mask & (1 << j) != 0 {
                        a.push(item);
                    } else {
                        c.push(item);
                    }
                }
                (a, c)
            };
            let ante_count = counts[ante.as_slice()];
            if meets(*count, ante_count, minconf) {
                rules.push(AssociationRule {
                    antecedent: ante.iter().map(|&i| enc.items[i].clone()).collect(),
                    consequent: cons.iter().map(|&i| enc.items[i].clone()).collect(),
                    support: *count as f64 / n as f64,
                    confidence: *count as f64 / ante_count as f64,
                });
            }
        }
    }
    rules.sort_by(|a, b| (&a.antecedent, &a.consequent).cmp(&(&b.antecedent, &b.consequent)));
    Ok(rules)
}

/// Percentage of `original` rules (by antecedent and consequent) that also
/// appear in `perturbed`.
pub fn accuracy<I: Ord + Clone + Hash>(
    original: &[AssociationRule<I>],
    perturbed: &[AssociationRule<I>],
) -> Result<f64, MiningError> {
    if original.is_empty() {
        return Err(MiningError::NoBaselineRules);
    }
    let found: HashSet<(Vec<I>, Vec<I>)> = perturbed.iter().map(AssociationRule::key).collect();
    let hits = original.iter().filter(|r| found.contains(&r.key())).count();
    Ok(100.0 * hits as f64 / original.len() as f64)
}
