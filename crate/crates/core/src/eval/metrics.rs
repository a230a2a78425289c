use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::retrieval::MatchResult;
use crate::data::{DescriptorSet, GroundTruth};
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
pub const DEFAULT_THRESHOLD_COUNT: usize = 256;

fn check_known<'a>(gt: &GroundTruth, queries: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let missing = gt.missing(queries);
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "queries without ground truth: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

fn has_truth(gt: &GroundTruth, query: &str) -> bool {
    gt.valid(query).is_some_and(|s| !s.is_empty())
}

/// Fraction of queries with at least one valid reference among their top
/// `k` matches. Queries whose valid set is empty are left out of the
/// denominator.
pub fn recall_at_k(
    matches: &[MatchResult],
    gt: &GroundTruth,
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    check_known(gt, matches.iter().map(|m| m.query_id.as_str()))?;
    if let Some(k) = ks.iter().find(|&&k| k == 0) {
        return Err(Error::Config(format!("recall K must be ≥ 1, got {k}")));
    }
    // rank (0-based) of the first correct match per query with ground truth
    let first_hits: Vec<Option<usize>> = matches
        .iter()
        .filter(|m| has_truth(gt, &m.query_id))
        .map(|m| {
            m.ranked
                .iter()
                .position(|r| gt.is_match(&m.query_id, &r.reference_id))
        })
        .collect();
    if first_hits.is_empty() {
        return Err(Error::Data(
            "no query has a non-empty ground-truth set".into(),
        ));
    }
    let total = first_hits.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = first_hits.iter().filter(|h| h.is_some_and(|r| r < k)).count();
            (k, hits as f64 / total)
        })
        .collect())
}

/// One operating point of the precision–recall curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// `count` evenly spaced thresholds over the observed top-1 similarity range,
/// bracketed by −∞ and +∞.
pub fn default_thresholds(matches: &[MatchResult], count: usize) -> Vec<f64> {
    let sims: Vec<f64> = matches
        .iter()
        .filter_map(|m| m.ranked.first())
        .map(|r| r.similarity as f64)
        .collect();
    let mut out = vec![f64::NEG_INFINITY];
    if let (Some(lo), Some(hi)) = (
        sims.iter().copied().reduce(f64::min),
        sims.iter().copied().reduce(f64::max),
    ) {
        if count <= 1 || lo == hi {
            out.push(lo);
        } else {
            let step = (hi - lo) / (count - 1) as f64;
            out.extend((0..count - 1).map(|i| lo + step * i as f64));
            out.push(hi);
        }
    }
    out.push(f64::INFINITY);
    out
}

/// Precision and recall of the top-1 match per query at each threshold.
///
/// A query is accepted when its best similarity is ≥ the threshold. An
/// accepted correct match is a TP, an accepted wrong match a FP, and a
/// rejected query that has ground truth a FN. Precision is reported as 1
/// when nothing is accepted.
pub fn pr_curve(
    matches: &[MatchResult],
    gt: &GroundTruth,
    thresholds: &[f64],
) -> Result<Vec<PrPoint>> {
    if matches.is_empty() {
        return Err(Error::Data("no matches to evaluate".into()));
    }
    if thresholds.iter().any(|t| t.is_nan()) || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("thresholds must be sorted ascending".into()));
    }
    check_known(gt, matches.iter().map(|m| m.query_id.as_str()))?;
    let top1: Vec<(f64, bool, bool)> = matches
        .iter()
        .map(|m| {
            let best = m.ranked.first().ok_or_else(|| {
                Error::Data(format!("query {} has no ranked matches", m.query_id))
            })?;
            Ok((
                best.similarity as f64,
                gt.is_match(&m.query_id, &best.reference_id),
                has_truth(gt, &m.query_id),
            ))
        })
        .collect::<Result<_>>()?;

    Ok(thresholds
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for &(sim, correct, truth) in &top1 {
                if sim >= t {
                    if correct {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                } else if truth {
                    fn_ += 1;
                }
            }
            PrPoint {
                threshold: t,
                precision: if tp + fp > 0 {
                    tp as f64 / (tp + fp) as f64
                } else {
                    1.0
                },
                recall: if tp + fn_ > 0 {
                    tp as f64 / (tp + fn_) as f64
                } else {
                    0.0
                },
                tp,
                fp,
                fn_,
            }
        })
        .collect())
}

/// `Σ (R_n − R_{n−1})·P_n` over the points sorted by recall, with `R_0 = 0`.
/// Among points of equal recall the highest precision is the one weighted.
pub fn average_precision(pr: &[PrPoint]) -> Result<f64> {
    for p in pr {
        if !(0.0..=1.0).contains(&p.recall) || !(0.0..=1.0).contains(&p.precision) {
            return Err(Error::Data(format!(
                "PR point out of range: precision {}, recall {}",
                p.precision, p.recall
            )));
        }
    }
    let mut pts: Vec<(f64, f64)> = pr.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (r, p) in pts {
        if r < prev {
            return Err(Error::Data("recall is not non-decreasing".into()));
        }
        ap += (r - prev) * p;
        prev = r;
    }
    Ok(ap)
}

/// Equal-width histogram over [0, 2].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: Option<f64>,
}

impl Histogram {
    fn build(values: &[f64], bins: usize) -> Self {
        let width = 2.0 / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let i = ((v / width).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self {
            edges: (0..=bins).map(|i| i as f64 * width).collect(),
            counts,
            mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L2Distributions {
    pub true_matches: Histogram,
    pub false_matches: Histogram,
    /// Mean false-match distance minus mean true-match distance.
    pub mean_gap: Option<f64>,
}

fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Per query, the L2 distance to its nearest valid reference (true match)
/// and to its nearest non-valid reference (false match).
pub fn l2_distributions(
    queries: &DescriptorSet,
    references: &DescriptorSet,
    gt: &GroundTruth,
    bins: usize,
) -> Result<L2Distributions> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if queries.dim != references.dim {
        return Err(Error::Shape(format!(
            "query descriptors have dim {}, references {}",
            queries.dim, references.dim
        )));
    }
    check_known(gt, queries.records().iter().map(|r| r.id.as_str()))?;
    if !queries.records().iter().any(|q| has_truth(gt, &q.id)) {
        return Err(Error::Data(
            "no query has a non-empty ground-truth set".into(),
        ));
    }
    let per_query: Vec<(Option<f64>, Option<f64>)> = queries
        .records()
        .par_iter()
        .map(|q| {
            let mut best_true: Option<f64> = None;
            let mut best_false: Option<f64> = None;
            for r in references.records() {
                let d = l2(&q.vector, &r.vector);
                let slot = if gt.is_match(&q.id, &r.id) {
                    &mut best_true
                } else {
                    &mut best_false
                };
                *slot = Some(slot.map_or(d, |b| b.min(d)));
            }
            (best_true, best_false)
        })
        .collect();
    let trues: Vec<f64> = per_query.iter().filter_map(|p| p.0).collect();
    let falses: Vec<f64> = per_query.iter().filter_map(|p| p.1).collect();
    let true_matches = Histogram::build(&trues, bins);
    let false_matches = Histogram::build(&falses, bins);
    let mean_gap = match (false_matches.mean, true_matches.mean) {
        (Some(f), Some(t)) => Some(f - t),
        _ => None,
    };
    Ok(L2Distributions {
        true_matches,
        false_matches,
        mean_gap,
    })
}
