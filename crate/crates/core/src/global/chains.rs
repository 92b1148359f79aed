use std::collections::BTreeMap;

use super::{kmeans::sq_dist, tfidf, KMeans, ReasoningChain};
use crate::error::{Error, Result};
use crate::segment::CompactSegment;
use crate::vector::Vector;

/// Groups accepted segments into at most `k` candidate chains.
///
/// Segments are clustered on the TF-IDF vectors of their token texts. Each
/// cluster becomes one chain with its members in origin order. Chains are
/// ranked tightest first: by mean member distance to the cluster centroid,
/// then by earliest member. `k` is clamped to the number of distinct vectors,
/// so duplicate texts collapse into a single chain.
pub fn assemble_chains(segments: &[CompactSegment], k: usize, seed: u64) -> Result<Vec<ReasoningChain>> {
    if segments.is_empty() {
        return Err(Error::NoAcceptedSegments);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("n_clusters must be >= 1".into()));
    }
    let docs: Vec<Vec<String>> = segments
        .iter()
        .map(|s| s.texts.iter().map(|t| t.to_lowercase()).collect())
        .collect();
    let rows = match tfidf(&docs) {
        Ok(rows) => rows,
        // nothing but empty texts: all segments are indistinguishable
        Err(Error::AllEmptyDocuments) => vec![vec![0.0]; segments.len()],
        Err(e) => return Err(e),
    };
    let k = k.min(distinct(&rows));
    let clustering = KMeans::new(k, seed).fit(&rows)?;

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in clustering.assignments.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let mut ranked: Vec<(f64, usize, Vec<usize>)> = members
        .into_iter()
        .map(|(c, mut idx)| {
            idx.sort_by_key(|&i| segments[i].origin_index);
            let spread = idx
                .iter()
                .map(|&i| sq_dist(&rows[i], &clustering.centroids[c]).sqrt())
                .sum::<f64>()
                / idx.len() as f64;
            let first = segments[idx[0]].origin_index;
            (spread, first, idx)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (_, _, idx))| {
            ReasoningChain::new(idx.into_iter().map(|i| segments[i].clone()).collect(), rank)
        })
        .collect())
}

fn distinct(rows: &[Vector]) -> usize {
    let mut seen: Vec<&Vector> = Vec::new();
    for r in rows {
        if !seen.iter().any(|s| sq_dist(s, r) == 0.0) {
            seen.push(r);
        }
    }
    seen.len()
}
