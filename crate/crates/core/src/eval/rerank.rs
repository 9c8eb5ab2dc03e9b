use std::collections::HashMap;

use super::ranking::RankList;

/// Re-scores a ranking with `distance + weight · mean attribute disagreement`.
///
/// Disagreement for attribute `i` is `1 − p_query[i][g_i]` where `g_i` is the
/// gallery image's predicted class. Gallery ids missing from `gallery_predictions`
/// keep their distance. Ties break on sample id as in [`RankList::new`].
pub fn attribute_rerank(
    ranklist: &RankList,
    query_probs: &[Vec<f64>],
    gallery_predictions: &HashMap<u64, Vec<usize>>,
    weight: f64,
) -> RankList {
    if weight == 0.0 || query_probs.is_empty() {
        return ranklist.clone();
    }
    let scores: Vec<f32> = ranklist
        .gallery
        .iter()
        .zip(&ranklist.distances)
        .map(|(id, &d)| match gallery_predictions.get(id) {
            Some(pred) => {
                let dis: f64 = query_probs
                    .iter()
                    .zip(pred)
                    .map(|(p, &c)| 1.0 - p.get(c).copied().unwrap_or(0.0))
                    .sum::<f64>()
                    / query_probs.len() as f64;
                (f64::from(d) + weight * dis) as f32
            }
            None => d,
        })
        .collect();
    RankList::new(ranklist.query, &ranklist.gallery, &scores)
}
