use serde::Serialize;

use super::report::{aggregate, query_gallery_distances, score_row, EvalOptions};
use crate::dataset::synth::distractor_order;
use crate::dataset::{EmbeddingMatrix, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub distractors: usize,
    pub gallery_size: usize,
    pub rank1: f64,
    pub map: f64,
}

/// Re-evaluates with the first `s` pool entries (seeded order) appended to
/// the base gallery, for each `s` in `sizes`. Galleries are nested, and the
/// distance matrix is computed once for the largest size.
pub fn distractor_scaling(
    embeddings: &EmbeddingMatrix,
    queries: &[Sample],
    base_gallery: &[Sample],
    pool: &[Sample],
    sizes: &[usize],
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<ScalingRow>> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    if max > pool.len() {
        return Err(Error::Config(format!(
            "requested {max} distractors but the pool holds {}",
            pool.len()
        )));
    }
    let order = distractor_order(pool.len(), seed);
    let mut gallery = base_gallery.to_vec();
    gallery.extend(order[..max].iter().map(|&i| pool[i]));
    let dist = query_gallery_distances(embeddings, queries, &gallery, opts)?;

    sizes
        .iter()
        .map(|&s| {
            let cols: Vec<u32> = (0..(base_gallery.len() + s) as u32).collect();
            let scores = opts.exec.map(queries.len(), |i| {
                score_row(&queries[i], &gallery, dist.row(i), &cols)
            });
            let (cmc, map, _, _) = aggregate(queries, scores, 1);
            Ok(ScalingRow {
                distractors: s,
                gallery_size: cols.len(),
                rank1: cmc.at(1),
                map,
            })
        })
        .collect()
}
