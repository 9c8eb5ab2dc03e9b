use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use crate::dataset::{Identity, Sample};

/// Gallery sample ids ordered by ascending distance, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankList {
    pub query: u64,
    pub gallery: Vec<u64>,
    pub distances: Vec<f32>,
}

fn order(a: (f32, u64), b: (f32, u64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl RankList {
    pub fn new(query: u64, gallery_ids: &[u64], distances: &[f32]) -> Self {
        let mut idx: Vec<usize> = (0..gallery_ids.len()).collect();
        idx.sort_unstable_by(|&a, &b| {
            order(
                (distances[a], gallery_ids[a]),
                (distances[b], gallery_ids[b]),
            )
        });
        Self {
            query,
            gallery: idx.iter().map(|&i| gallery_ids[i]).collect(),
            distances: idx.iter().map(|&i| distances[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gallery.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gallery.is_empty()
    }
}

/// Scoring roles of gallery items for one query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub good: HashSet<u64>,
    pub junk: HashSet<u64>,
}

/// Good: same identity, other camera. Junk: same identity and camera, or JUNK-labelled.
/// Everything else, distractors included, is a negative.
pub fn good_junk_partition(query: &Sample, gallery: &[Sample]) -> Partition {
    let mut p = Partition::default();
    for g in gallery {
        match g.identity {
            Identity::Junk => {
                p.junk.insert(g.id);
            }
            Identity::Person(id) if query.identity == Identity::Person(id) => {
                if g.camera == query.camera {
                    p.junk.insert(g.id);
                } else {
                    p.good.insert(g.id);
                }
            }
            _ => {}
        }
    }
    p
}

/// Result for one scored query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryScore {
    pub ap: f64,
    /// 1-based rank of the first good match after junk removal.
    pub first_good_rank: usize,
}

/// Non-interpolated AP over the junk-free ranking. `None` if `good` is empty.
pub fn evaluate_query(
    ranklist: &RankList,
    good: &HashSet<u64>,
    junk: &HashSet<u64>,
) -> Option<QueryScore> {
    score_ranking(ranklist.gallery.iter().copied(), good.len(), |id| {
        if junk.contains(&id) {
            Role::Junk
        } else if good.contains(&id) {
            Role::Good
        } else {
            Role::Negative
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Good,
    Junk,
    Negative,
}

/// Shared scoring loop over an already ordered ranking.
pub(crate) fn score_ranking<T>(
    ranked: impl Iterator<Item = T>,
    num_good: usize,
    role: impl Fn(T) -> Role,
) -> Option<QueryScore> {
    if num_good == 0 {
        return None;
    }
    let mut rank = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    let mut first = 0usize;
    for item in ranked {
        match role(item) {
            Role::Junk => continue,
            Role::Good => {
                rank += 1;
                hits += 1;
                if first == 0 {
                    first = rank;
                }
                sum += hits as f64 / rank as f64;
                if hits == num_good {
                    break;
                }
            }
            Role::Negative => rank += 1,
        }
    }
    Some(QueryScore {
        ap: sum / num_good as f64,
        first_good_rank: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    fn s(id: u64, ident: Identity, cam: u16) -> Sample {
        Sample {
            id,
            identity: ident,
            camera: cam,
            split: Split::Gallery,
            feature: None,
        }
    }

    #[test]
    fn partition_roles() {
        let q = Sample {
            split: Split::Query,
            ..s(100, Identity::Person(1), 1)
        };
        let g = [
            s(0, Identity::Person(1), 1),
            s(1, Identity::Person(1), 2),
            s(2, Identity::Distractor, 2),
            s(3, Identity::Junk, 1),
            s(4, Identity::Person(2), 2),
        ];
        let p = good_junk_partition(&q, &g);
        assert_eq!(p.good, HashSet::from([1]));
        assert_eq!(p.junk, HashSet::from([0, 3]));
    }

    #[test]
    fn ap_cases() {
        let ids: Vec<u64> = (0..10).collect();
        let dist: Vec<f32> = (0..10).map(|i| i as f32).collect();
        let rl = RankList::new(99, &ids, &dist);
        let all = evaluate_query(&rl, &HashSet::from([0, 1, 2]), &HashSet::new()).unwrap();
        assert_eq!(all.ap, 1.0);
        assert_eq!(all.first_good_rank, 1);
        let one = evaluate_query(&rl, &HashSet::from([1]), &HashSet::new()).unwrap();
        assert_eq!(one.ap, 0.5);
        assert_eq!(one.first_good_rank, 2);
        // junk ahead of the match is removed
        let j = evaluate_query(&rl, &HashSet::from([2]), &HashSet::from([0])).unwrap();
        assert_eq!(j.ap, 0.5);
        assert!(evaluate_query(&rl, &HashSet::new(), &HashSet::new()).is_none());
    }

    #[test]
    fn ties_break_on_sample_id() {
        let rl = RankList::new(0, &[9, 3, 5], &[1.0, 1.0, 0.5]);
        assert_eq!(rl.gallery, vec![5, 3, 9]);
    }
}
