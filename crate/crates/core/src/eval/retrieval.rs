use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::DescriptorSet;
use crate::error::{Error, Result};
use crate::ops::dot;

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub reference_id: String,
    pub similarity: f32,
}

/// Best references for one query, by non-increasing cosine similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub query_id: String,
    pub ranked: Vec<Match>,
}

/// Higher similarity first; equal similarities keep reference order.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Exact top-`k` references for every query by cosine similarity, which for
/// unit vectors is the dot product. Query order is preserved.
pub fn topk(queries: &DescriptorSet, references: &DescriptorSet, k: usize) -> Result<Vec<MatchResult>> {
    if references.is_empty() {
        return Err(Error::Data("reference set is empty".into()));
    }
    if queries.dim != references.dim {
        return Err(Error::Shape(format!(
            "query descriptors have dim {}, references {}",
            queries.dim, references.dim
        )));
    }
    if k == 0 || k > references.len() {
        return Err(Error::Config(format!(
            "k must be in 1..={}, got {k}",
            references.len()
        )));
    }
    let refs = references.records();
    Ok(queries
        .records()
        .par_iter()
        .map(|q| {
            let mut scored: Vec<(f64, usize)> = refs
                .iter()
                .enumerate()
                .map(|(i, r)| (dot(&q.vector, &r.vector), i))
                .collect();
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, rank_order);
                scored.truncate(k);
            }
            scored.sort_unstable_by(rank_order);
            MatchResult {
                query_id: q.id.clone(),
                ranked: scored
                    .into_iter()
                    .map(|(s, i)| Match {
                        reference_id: refs[i].id.clone(),
                        similarity: s as f32,
                    })
                    .collect(),
            }
        })
        .collect())
}
