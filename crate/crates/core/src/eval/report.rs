use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::metrics::{
    average_precision, default_thresholds, l2_distributions, pr_curve, recall_at_k,
    L2Distributions, PrPoint, DEFAULT_KS, DEFAULT_THRESHOLD_COUNT,
};
use super::retrieval::{Match, MatchResult};
use crate::data::{DescriptorSet, GroundTruth};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub threshold_count: usize,
    pub bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            threshold_count: DEFAULT_THRESHOLD_COUNT,
            bins: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: usize,
    pub queries_with_ground_truth: usize,
    pub recall_at: BTreeMap<usize, f64>,
    pub ap: f64,
    pub precision_convention: &'static str,
    pub pr_curve: Vec<PrPoint>,
    /// Present when descriptors were supplied.
    pub l2: Option<L2Distributions>,
    pub mean_gap: Option<f64>,
}

/// Computes every metric for `matches`. L2 histograms need the descriptor
/// sets, passed as `(queries, references)`.
pub fn evaluate(
    matches: &[MatchResult],
    gt: &GroundTruth,
    descriptors: Option<(&DescriptorSet, &DescriptorSet)>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let missing = gt.missing(matches.iter().map(|m| m.query_id.as_str()));
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "queries without ground truth: {}",
            missing.join(", ")
        )));
    }
    let recall_at = recall_at_k(matches, gt, &opts.ks)?;
    let thresholds = default_thresholds(matches, opts.threshold_count);
    let pr = pr_curve(matches, gt, &thresholds)?;
    let ap = average_precision(&pr)?;
    let l2 = descriptors
        .map(|(q, r)| l2_distributions(q, r, gt, opts.bins))
        .transpose()?;
    Ok(EvalReport {
        queries: matches.len(),
        queries_with_ground_truth: matches
            .iter()
            .filter(|m| gt.valid(&m.query_id).is_some_and(|s| !s.is_empty()))
            .count(),
        recall_at,
        ap,
        precision_convention: "precision = 1 when no match is accepted (tp + fp = 0)",
        mean_gap: l2.as_ref().and_then(|d| d.mean_gap),
        pr_curve: pr,
        l2,
    })
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn flush<W: std::io::Write>(w: &mut csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `threshold,precision,recall,tp,fp,fn`
pub fn write_pr_csv(points: &[PrPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "precision", "recall", "tp", "fp", "fn"])?;
    for p in points {
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.tp.to_string(),
            p.fp.to_string(),
            p.fn_.to_string(),
        ])?;
    }
    flush(&mut w, path)
}

/// `bin_lo,bin_hi,true_count,false_count`
pub fn write_l2_hist_csv(dist: &L2Distributions, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "true_count", "false_count"])?;
    let edges = &dist.true_matches.edges;
    for i in 0..dist.true_matches.counts.len() {
        w.write_record([
            edges[i].to_string(),
            edges[i + 1].to_string(),
            dist.true_matches.counts[i].to_string(),
            dist.false_matches.counts[i].to_string(),
        ])?;
    }
    flush(&mut w, path)
}

/// `query_id,rank,reference_id,similarity`, ranks starting at 1.
pub fn write_matches_csv(matches: &[MatchResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["query_id", "rank", "reference_id", "similarity"])?;
    for m in matches {
        for (i, r) in m.ranked.iter().enumerate() {
            w.write_record([
                m.query_id.as_str(),
                &(i + 1).to_string(),
                &r.reference_id,
                &r.similarity.to_string(),
            ])?;
        }
    }
    flush(&mut w, path)
}

pub fn read_matches_csv(path: impl AsRef<Path>) -> Result<Vec<MatchResult>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out: Vec<MatchResult> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| {
            Error::Data(format!("{}: line {line}: {what}", path.display()))
        };
        if rec.len() != 4 {
            return Err(bad("expected query_id,rank,reference_id,similarity"));
        }
        let rank: usize = rec[1].parse().map_err(|_| bad("rank is not an integer"))?;
        let similarity: f32 = rec[3].parse().map_err(|_| bad("similarity is not a number"))?;
        let m = Match {
            reference_id: rec[2].to_owned(),
            similarity,
        };
        match out.last_mut() {
            Some(last) if last.query_id == rec[0] => {
                if rank != last.ranked.len() + 1 {
                    return Err(bad("ranks must be consecutive"));
                }
                last.ranked.push(m);
            }
            _ => {
                if rank != 1 {
                    return Err(bad("first rank of a query must be 1"));
                }
                if out.iter().any(|r| r.query_id == rec[0]) {
                    return Err(bad("query rows must be contiguous"));
                }
                out.push(MatchResult {
                    query_id: rec[0].to_owned(),
                    ranked: vec![m],
                });
            }
        }
    }
    Ok(out)
}
