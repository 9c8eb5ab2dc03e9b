//! Retrieval and attribute-recognition evaluation.

mod distance;
mod ranking;
mod report;
mod rerank;
mod scaling;

use serde::Serialize;

pub use distance::{pairwise_distances, pairwise_distances_with, DistanceMatrix, DEFAULT_TILE};
pub use ranking::{evaluate_query, good_junk_partition, Partition, QueryScore, RankList};
pub use report::{
    accuracy_from_predictions, attribute_accuracy, camera_pair_eval, evaluate_lists, evaluate_reid,
    mean_accuracy, AttributeAccuracy, CameraPairReport, CmcCurve, EvalOptions, EvalReport,
    QueryResult,
};
pub use rerank::attribute_rerank;
pub use scaling::{distractor_scaling, ScalingRow};

use crate::dataset::{Dataset, EmbeddingMatrix, Split};
use crate::error::{Error, Result};
use crate::model::{extract_embeddings, ModelConfig, ModelParams};
use crate::trainer::{train, TrainConfig, TrainingSet};

/// Retrieval embeddings of every dataset row under `params`.
pub fn model_embeddings(
    params: &ModelParams,
    dataset: &Dataset,
    opts: &EvalOptions,
) -> Result<EmbeddingMatrix> {
    extract_embeddings(params, &dataset.embeddings, opts.exec)
}

/// Embeds with the model, then evaluates cross-camera retrieval.
pub fn evaluate_model(
    params: &ModelParams,
    dataset: &Dataset,
    query: Split,
    gallery: Split,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let emb = model_embeddings(params, dataset, opts)?;
    let mut report = evaluate_reid(&emb, &dataset.samples, query, gallery, opts)?;
    report.mode = Some(params.config.mode().label().to_string());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub removed: String,
    pub rank1: f64,
    pub map: f64,
    pub delta_rank1: f64,
    pub delta_map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub full_rank1: f64,
    pub full_map: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("removed,rank1,mAP,delta_rank1,delta_mAP\n");
        let _ = writeln!(out, "none,{},{},0,0", self.full_rank1, self.full_map);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.removed, r.rank1, r.map, r.delta_rank1, r.delta_map
            );
        }
        out
    }
}

/// Retrains with each attribute head removed in turn and reports the change
/// in test retrieval against the all-attributes model (identical seeds).
pub fn ablate_attributes(
    model: &ModelConfig,
    cfg: &TrainConfig,
    dataset: &Dataset,
    opts: &EvalOptions,
) -> Result<AblationTable> {
    let m = dataset.schema.len();
    if m < 2 {
        return Err(Error::Config("ablation needs at least 2 attributes".into()));
    }
    let run = |heads: Vec<usize>| -> Result<(f64, f64)> {
        let data = TrainingSet::from_dataset(dataset, &heads)?;
        let cfg_m = ModelConfig {
            attribute_class_counts: data.class_counts.clone(),
            num_identities: data.num_identities(),
            ..model.clone()
        };
        let (params, _) = train(&cfg_m, cfg, &data, opts.exec)?;
        let r = evaluate_model(&params, dataset, Split::Query, Split::Gallery, opts)?;
        Ok((r.rank(1), r.map))
    };
    let results = opts
        .exec
        .map(m + 1, |k| {
            let heads = (0..m).filter(|&a| a + 1 != k).collect();
            run(heads)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (full_rank1, full_map) = results[0];
    let rows = results[1..]
        .iter()
        .enumerate()
        .map(|(a, &(r1, map))| AblationRow {
            removed: dataset.schema.attributes()[a].name.clone(),
            rank1: r1,
            map,
            delta_rank1: r1 - full_rank1,
            delta_map: map - full_map,
        })
        .collect();
    Ok(AblationTable {
        full_rank1,
        full_map,
        rows,
    })
}
