use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use apr_reid::dataset::synth::distractor_pool;
use apr_reid::dataset::{
    attribute_correlation, attribute_distribution, load_embeddings, synth_dataset, Dataset,
    EmbeddingMatrix, Sample, Split,
};
use apr_reid::eval::{
    ablate_attributes, attribute_accuracy, camera_pair_eval, distractor_scaling, evaluate_reid,
    model_embeddings, ScalingRow,
};
use apr_reid::model::{load_checkpoint, save_checkpoint, ModelParams};
use apr_reid::par::Exec;
use apr_reid::trainer::{sweep_lambda, train_with, TrainLog, TrainingSet};
use serde::Serialize;

use crate::config::{DataPaths, RunConfig};

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Run {
    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    /// Creates the output directory and echoes the resolved config.
    pub fn begin(&self) -> Result<()> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        self.write("run.json", self.cfg.to_json())
    }

    fn dataset(&self) -> Result<Dataset> {
        match self.cfg.data_paths()? {
            Some(p) => Dataset::load(&p.schema, &p.annotations, &p.manifest, &p.embeddings)
                .context("loading dataset"),
            None => Ok(synth_dataset(&self.cfg.synth()?, self.cfg.seed()?)?),
        }
    }

    fn checkpoint(&self) -> Option<PathBuf> {
        match self.cfg.raw("checkpoint") {
            "" => None,
            p => Some(PathBuf::from(p)),
        }
    }

    fn load_model(&self, path: &Path, dataset: &Dataset) -> Result<ModelParams> {
        let params = load_checkpoint(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?;
        if params.config.input_dim != dataset.dim() {
            bail!(
                "checkpoint expects {}-dim features, dataset has {}",
                params.config.input_dim,
                dataset.dim()
            );
        }
        Ok(params)
    }

    fn fit(
        &self,
        dataset: &Dataset,
        on_epoch: impl FnMut(usize, &ModelParams) -> apr_reid::Result<()>,
    ) -> Result<(ModelParams, TrainLog)> {
        let heads = self.cfg.heads(&dataset.schema)?;
        let data = TrainingSet::from_dataset(dataset, &heads)?;
        let model = self.cfg.model(
            dataset.dim(),
            data.num_identities(),
            data.class_counts.clone(),
        )?;
        let train = self.cfg.train()?;
        Ok(train_with(
            &model,
            &train,
            &data,
            Exec::default(),
            on_epoch,
        )?)
    }
}

pub fn stats(run: &Run) -> Result<()> {
    let ds = run.dataset()?;
    let dist = attribute_distribution(&ds.annotations, &ds.schema);
    let corr = attribute_correlation(&ds.annotations, &ds.schema)?;

    let mut csv = String::from("attribute,class,identities\n");
    for (a, name) in dist.attributes.iter().enumerate() {
        for (c, class) in dist.classes[a].iter().enumerate() {
            let _ = writeln!(csv, "{name},{class},{}", dist.counts[a][c]);
        }
    }
    run.write("distribution.csv", csv)?;

    let mut csv = format!("indicator,{}\n", corr.labels.join(","));
    for (label, row) in corr.labels.iter().zip(&corr.matrix) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(csv, "{label},{}", cells.join(","));
    }
    run.write("correlation.csv", csv)?;

    #[derive(Serialize)]
    struct Stats<'a> {
        distribution: &'a apr_reid::dataset::AttributeDistribution,
        correlation: &'a apr_reid::dataset::AttributeCorrelation,
    }
    run.write_json(
        "stats.json",
        &Stats {
            distribution: &dist,
            correlation: &corr,
        },
    )
}

pub fn synth(run: &Run) -> Result<()> {
    let ds = synth_dataset(&run.cfg.synth()?, run.cfg.seed()?)?;
    let p = DataPaths::in_dir(&run.out);
    ds.save(&p.schema, &p.annotations, &p.manifest, &p.embeddings)?;
    Ok(())
}

pub fn train(run: &Run) -> Result<()> {
    let ds = run.dataset()?;
    let every = run.cfg.checkpoint_every()?;
    let epochs = run.cfg.train()?.epochs;
    let (params, log) = run.fit(&ds, |epoch, params| {
        let done = epoch + 1;
        if every > 0 && done % every == 0 && done < epochs {
            return save_checkpoint(params, &run.out.join(format!("checkpoint_epoch{done}.apr")));
        }
        Ok(())
    })?;
    save_checkpoint(&params, &run.out.join("checkpoint.apr"))?;
    run.write("trainlog.csv", log.to_csv(run.cfg.log_timing()?))
}

pub fn eval(run: &Run) -> Result<()> {
    let ds = run.dataset()?;
    let opts = run.cfg.eval()?;
    let (q, g) = (run.cfg.query_split()?, run.cfg.gallery_split()?);
    let params = match run.checkpoint() {
        Some(path) => Some(run.load_model(&path, &ds)?),
        None => None,
    };
    let emb = match &params {
        Some(p) => model_embeddings(p, &ds, &opts)?,
        None => ds.embeddings.clone(),
    };
    let mut report = evaluate_reid(&emb, &ds.samples, q, g, &opts)?;
    if let Some(p) = &params {
        report.mode = Some(p.config.mode().label().to_string());
        if run.cfg.attributes()? && p.config.num_attributes() > 0 {
            let heads = run.cfg.heads(&ds.schema)?;
            report.attributes =
                Some(attribute_accuracy(p, &ds, &heads, g, opts.exec).context(
                    "attribute accuracy (model.heads must match the checkpoint's heads)",
                )?);
        }
    }
    if run.cfg.camera_pairs()? {
        report.camera_pairs = Some(camera_pair_eval(&emb, &ds.samples, q, g, &opts)?);
    }
    run.write("report.json", report.to_json())?;
    run.write("cmc.csv", report.cmc_csv())?;
    run.write("summary.csv", report.summary_csv(&run.cfg.ranks()?))
}

pub fn sweep(run: &Run) -> Result<()> {
    let ds = run.dataset()?;
    let heads = run.cfg.heads(&ds.schema)?;
    let data = TrainingSet::from_dataset(&ds, &heads)?;
    let model = run
        .cfg
        .model(ds.dim(), data.num_identities(), data.class_counts.clone())?;
    let grid = run.cfg.lambdas()?;
    let result = sweep_lambda(
        &model,
        &run.cfg.train()?,
        &ds,
        &heads,
        &grid,
        &run.cfg.eval()?,
    )?;
    run.write("sweep.csv", result.to_csv())?;
    run.write_json("sweep.json", &result)
}

pub fn ablate(run: &Run) -> Result<()> {
    let ds = run.dataset()?;
    let all: Vec<usize> = (0..ds.schema.len()).collect();
    let data = TrainingSet::from_dataset(&ds, &all)?;
    let model = run
        .cfg
        .model(ds.dim(), data.num_identities(), data.class_counts.clone())?;
    let table = ablate_attributes(&model, &run.cfg.train()?, &ds, &run.cfg.eval()?)?;
    run.write("ablation.csv", table.to_csv())?;
    run.write_json("ablation.json", &table)
}

pub fn scale(run: &Run) -> Result<()> {
    let mut ds = run.dataset()?;
    let sizes = run.cfg.scale_sizes()?;
    let max = sizes.last().copied().unwrap_or(0);
    let seed = run.cfg.seed()?;
    let (pool, cameras) = match run.cfg.scale_pool() {
        Some(path) => {
            let m = load_embeddings(&path, None, Some(ds.dim()))
                .with_context(|| format!("loading distractor pool {}", path.display()))?;
            let n = m.rows();
            (m, vec![1u16; n])
        }
        None => distractor_pool(&run.cfg.synth()?, max, seed)?,
    };
    if pool.dim() != ds.dim() {
        bail!(
            "distractor pool has dim {}, dataset {}",
            pool.dim(),
            ds.dim()
        );
    }
    let pool_samples = ds.attach_pool(&pool, &cameras)?;
    let opts = run.cfg.eval()?;
    let emb: EmbeddingMatrix = match run.checkpoint() {
        Some(path) => model_embeddings(&run.load_model(&path, &ds)?, &ds, &opts)?,
        None => ds.embeddings.clone(),
    };
    let (q, g) = (run.cfg.query_split()?, run.cfg.gallery_split()?);
    let of = |split: Split| -> Vec<Sample> {
        ds.samples
            .iter()
            .filter(|s| s.split == split)
            .copied()
            .collect()
    };
    let rows = distractor_scaling(&emb, &of(q), &of(g), &pool_samples, &sizes, seed, &opts)?;
    run.write("scaling.csv", scaling_csv(&rows))?;
    run.write_json("scaling.json", &rows)
}

fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("distractors,gallery_size,rank1,mAP\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.distractors, r.gallery_size, r.rank1, r.map
        );
    }
    out
}
