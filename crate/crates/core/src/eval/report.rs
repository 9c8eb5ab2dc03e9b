use std::collections::BTreeSet;
use std::fmt::Write;

use serde::Serialize;

use super::distance::{pairwise_distances_with, DistanceMatrix, DEFAULT_TILE};
use super::ranking::{score_ranking, QueryScore, Role};
use crate::dataset::{instance_labels, Dataset, EmbeddingMatrix, Identity, Sample, Split};
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams};
use crate::par::Exec;

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Length of the reported CMC curve.
    pub max_rank: usize,
    pub tile: usize,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_rank: 50,
            tile: DEFAULT_TILE,
            exec: Exec::default(),
        }
    }
}

/// Match rate at ranks 1..=R.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CmcCurve(pub Vec<f64>);

impl CmcCurve {
    /// Value at 1-based `rank`, clamped to the curve length.
    pub fn at(&self, rank: usize) -> f64 {
        match self.0.len() {
            0 => 0.0,
            n => self.0[rank.clamp(1, n) - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub query: u64,
    pub ap: f64,
    pub first_good_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeAccuracy {
    pub names: Vec<String>,
    pub per_attribute: Vec<f64>,
    pub mean: f64,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CameraPairReport {
    pub cameras: Vec<u16>,
    /// `map[i][j]`: queries from camera i against gallery camera j. Diagonal is `None`.
    pub map: Vec<Vec<Option<f64>>>,
    pub rank1: Vec<Vec<Option<f64>>>,
    pub mean_map: f64,
    pub mean_rank1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: Option<String>,
    pub cmc: CmcCurve,
    pub map: f64,
    pub per_query: Vec<QueryResult>,
    /// Queries without any cross-camera true match; excluded from CMC and mAP.
    pub skipped_queries: Vec<u64>,
    pub num_queries: usize,
    pub num_gallery: usize,
    pub num_junk: usize,
    pub attributes: Option<AttributeAccuracy>,
    pub camera_pairs: Option<CameraPairReport>,
}

impl EvalReport {
    pub fn rank(&self, r: usize) -> f64 {
        self.cmc.at(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank,accuracy\n");
        for (i, v) in self.cmc.0.iter().enumerate() {
            let _ = writeln!(out, "{},{v}", i + 1);
        }
        out
    }

    /// `metric,value` rows with the CMC at each of `ranks`.
    pub fn summary_csv(&self, ranks: &[usize]) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "mode,{}", self.mode.as_deref().unwrap_or("features"));
        for &r in ranks {
            let _ = writeln!(out, "rank-{r},{}", self.rank(r));
        }
        let _ = writeln!(out, "mAP,{}", self.map);
        let _ = writeln!(out, "queries,{}", self.per_query.len());
        let _ = writeln!(out, "skipped_queries,{}", self.skipped_queries.len());
        let _ = writeln!(out, "gallery,{}", self.num_gallery);
        let _ = writeln!(out, "junk,{}", self.num_junk);
        if let Some(a) = &self.attributes {
            for (n, v) in a.names.iter().zip(&a.per_attribute) {
                let _ = writeln!(out, "attr:{n},{v}");
            }
            let _ = writeln!(out, "attr:mean,{}", a.mean);
        }
        if let Some(c) = &self.camera_pairs {
            let _ = writeln!(out, "camera_pair_mean_mAP,{}", c.mean_map);
            let _ = writeln!(out, "camera_pair_mean_rank-1,{}", c.mean_rank1);
        }
        out
    }
}

fn role_of(query: &Sample, g: &Sample) -> Role {
    match g.identity {
        Identity::Junk => Role::Junk,
        Identity::Person(id) if query.identity == Identity::Person(id) => {
            if g.camera == query.camera {
                Role::Junk
            } else {
                Role::Good
            }
        }
        _ => Role::Negative,
    }
}

/// Ranks `cols` of one distance row and scores it for `query`.
pub(crate) fn score_row(
    query: &Sample,
    gallery: &[Sample],
    dist: &[f32],
    cols: &[u32],
) -> Option<QueryScore> {
    let num_good = cols
        .iter()
        .filter(|&&c| role_of(query, &gallery[c as usize]) == Role::Good)
        .count();
    if num_good == 0 {
        return None;
    }
    let mut order = cols.to_vec();
    order.sort_unstable_by(|&a, &b| {
        dist[a as usize]
            .total_cmp(&dist[b as usize])
            .then(gallery[a as usize].id.cmp(&gallery[b as usize].id))
    });
    score_ranking(order.into_iter(), num_good, |c| {
        role_of(query, &gallery[c as usize])
    })
}

/// Assembles CMC and mAP from per-query scores.
pub(crate) fn aggregate(
    queries: &[Sample],
    scores: Vec<Option<QueryScore>>,
    max_rank: usize,
) -> (CmcCurve, f64, Vec<QueryResult>, Vec<u64>) {
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for (q, s) in queries.iter().zip(scores) {
        match s {
            Some(s) => per_query.push(QueryResult {
                query: q.id,
                ap: s.ap,
                first_good_rank: s.first_good_rank,
            }),
            None => skipped.push(q.id),
        }
    }
    let n = per_query.len();
    let mut hist = vec![0usize; max_rank + 1];
    for r in &per_query {
        if r.first_good_rank <= max_rank {
            hist[r.first_good_rank] += 1;
        }
    }
    let mut cum = 0usize;
    let cmc = (1..=max_rank)
        .map(|r| {
            cum += hist[r];
            if n == 0 {
                0.0
            } else {
                cum as f64 / n as f64
            }
        })
        .collect();
    let map = if n == 0 {
        0.0
    } else {
        per_query.iter().map(|r| r.ap).sum::<f64>() / n as f64
    };
    (CmcCurve(cmc), map, per_query, skipped)
}

fn split_samples(samples: &[Sample], split: Split) -> Vec<Sample> {
    samples
        .iter()
        .filter(|s| s.split == split)
        .copied()
        .collect()
}

fn features_of(embeddings: &EmbeddingMatrix, samples: &[Sample]) -> Result<EmbeddingMatrix> {
    let rows = samples
        .iter()
        .map(|s| {
            s.feature
                .filter(|&r| r < embeddings.rows())
                .ok_or_else(|| Error::Manifest(format!("sample {} has no embedding row", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(embeddings.select(&rows))
}

pub(crate) fn query_gallery_distances(
    embeddings: &EmbeddingMatrix,
    queries: &[Sample],
    gallery: &[Sample],
    opts: &EvalOptions,
) -> Result<DistanceMatrix> {
    pairwise_distances_with(
        &features_of(embeddings, queries)?,
        &features_of(embeddings, gallery)?,
        opts.tile,
        opts.exec,
    )
}

/// Evaluates explicit query and gallery sample lists.
pub fn evaluate_lists(
    embeddings: &EmbeddingMatrix,
    queries: &[Sample],
    gallery: &[Sample],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let dist = query_gallery_distances(embeddings, queries, gallery, opts)?;
    let cols: Vec<u32> = (0..gallery.len() as u32).collect();
    let scores = opts.exec.map(queries.len(), |i| {
        score_row(&queries[i], gallery, dist.row(i), &cols)
    });
    let (cmc, map, per_query, skipped) = aggregate(queries, scores, opts.max_rank);
    Ok(EvalReport {
        mode: None,
        cmc,
        map,
        per_query,
        skipped_queries: skipped,
        num_queries: queries.len(),
        num_gallery: gallery.len(),
        num_junk: gallery
            .iter()
            .filter(|s| s.identity == Identity::Junk)
            .count(),
        attributes: None,
        camera_pairs: None,
    })
}

/// Cross-camera retrieval of `query` split against `gallery` split.
pub fn evaluate_reid(
    embeddings: &EmbeddingMatrix,
    samples: &[Sample],
    query: Split,
    gallery: Split,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    evaluate_lists(
        embeddings,
        &split_samples(samples, query),
        &split_samples(samples, gallery),
        opts,
    )
}

/// Per camera pair (i, j), i ≠ j: queries from camera i against the gallery of camera j.
pub fn camera_pair_eval(
    embeddings: &EmbeddingMatrix,
    samples: &[Sample],
    query: Split,
    gallery: Split,
    opts: &EvalOptions,
) -> Result<CameraPairReport> {
    let queries = split_samples(samples, query);
    let gal = split_samples(samples, gallery);
    let cameras: Vec<u16> = queries
        .iter()
        .chain(&gal)
        .map(|s| s.camera)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dist = query_gallery_distances(embeddings, &queries, &gal, opts)?;
    let c = cameras.len();
    let mut map = vec![vec![None; c]; c];
    let mut rank1 = vec![vec![None; c]; c];
    for (i, &ci) in cameras.iter().enumerate() {
        let q_idx: Vec<usize> = (0..queries.len())
            .filter(|&k| queries[k].camera == ci)
            .collect();
        let q_samples: Vec<Sample> = q_idx.iter().map(|&k| queries[k]).collect();
        for (j, &cj) in cameras.iter().enumerate() {
            if i == j {
                continue;
            }
            let cols: Vec<u32> = (0..gal.len() as u32)
                .filter(|&g| gal[g as usize].camera == cj)
                .collect();
            let scores = opts.exec.map(q_idx.len(), |k| {
                score_row(&queries[q_idx[k]], &gal, dist.row(q_idx[k]), &cols)
            });
            let (cmc, m, per_query, _) = aggregate(&q_samples, scores, 1);
            if !per_query.is_empty() {
                map[i][j] = Some(m);
                rank1[i][j] = Some(cmc.at(1));
            }
        }
    }
    let mean = |m: &Vec<Vec<Option<f64>>>| {
        let v: Vec<f64> = m.iter().flatten().flatten().copied().collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(CameraPairReport {
        mean_map: mean(&map),
        mean_rank1: mean(&rank1),
        cameras,
        map,
        rank1,
    })
}

/// Arithmetic mean of per-attribute accuracies.
pub fn mean_accuracy(per_attribute: &[f64]) -> f64 {
    if per_attribute.is_empty() {
        return 0.0;
    }
    per_attribute.iter().sum::<f64>() / per_attribute.len() as f64
}

/// Fraction of rows whose predicted class equals the label, per attribute column.
pub fn accuracy_from_predictions(predictions: &[Vec<usize>], labels: &[Vec<usize>]) -> Vec<f64> {
    let m = labels.first().map_or(0, Vec::len);
    let n = labels.len();
    (0..m)
        .map(|a| {
            let hit = predictions
                .iter()
                .zip(labels)
                .filter(|(p, l)| p[a] == l[a])
                .count();
            if n == 0 {
                0.0
            } else {
                hit as f64 / n as f64
            }
        })
        .collect()
}

/// Attribute recognition on the labelled images of `split`.
///
/// `heads[i]` is the schema attribute predicted by attribute head `i`.
/// Distractor and junk images carry no labels and are skipped.
pub fn attribute_accuracy(
    params: &ModelParams,
    dataset: &Dataset,
    heads: &[usize],
    split: Split,
    exec: Exec,
) -> Result<AttributeAccuracy> {
    if heads.len() != params.config.num_attributes() {
        return Err(Error::Config(format!(
            "{} head mappings for {} attribute heads",
            heads.len(),
            params.config.num_attributes()
        )));
    }
    let idx: Vec<usize> = dataset
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == split && s.identity.is_person())
        .map(|(i, _)| i)
        .collect();
    let labels = idx
        .iter()
        .map(|&i| {
            let row = instance_labels(&dataset.samples[i], &dataset.annotations)?;
            Ok(heads.iter().map(|&a| row[a]).collect())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let preds = exec
        .map(idx.len(), |k| {
            let x: Vec<f64> = dataset
                .feature(idx[k])
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            predict(params, &x).map(|p| p.attributes)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let per_attribute = accuracy_from_predictions(&preds, &labels);
    Ok(AttributeAccuracy {
        names: heads
            .iter()
            .map(|&a| dataset.schema.attributes()[a].name.clone())
            .collect(),
        mean: mean_accuracy(&per_attribute),
        per_attribute,
        evaluated: idx.len(),
    })
}
