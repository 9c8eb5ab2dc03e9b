//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use apr_reid::dataset::{AttributeSchema, Split, SynthConfig};
use apr_reid::eval::{EvalOptions, DEFAULT_TILE};
use apr_reid::model::{Activation, ModelConfig};
use apr_reid::par::Exec;
use apr_reid::trainer::TrainConfig;

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("checkpoint", ""),
    ("data.dir", ""),
    ("data.schema", ""),
    ("data.annotations", ""),
    ("data.manifest", ""),
    ("data.embeddings", ""),
    ("synth.train_ids", "100"),
    ("synth.val_ids", "40"),
    ("synth.test_ids", "100"),
    ("synth.cameras", "4"),
    ("synth.samples_per_camera", "2"),
    ("synth.dim", "64"),
    ("synth.attribute_classes", "2,2,2,2,2,2,3,4"),
    ("synth.free_latent", "8"),
    ("synth.noise", "0.5"),
    ("synth.coupling", "1"),
    ("synth.view_noise", "0.8"),
    ("synth.camera_shift", "1"),
    ("synth.train_cameras", "0"),
    ("synth.distractors", "0"),
    ("synth.junk", "0"),
    ("model.hidden", "32"),
    ("model.activation", "relu"),
    ("model.dropout", "0.5"),
    ("model.lambda", "8"),
    ("model.heads", "all"),
    ("train.epochs", "55"),
    ("train.batch_size", "64"),
    ("train.lr_initial", "0.001"),
    ("train.lr_final", "0.0001"),
    ("train.lr_switch_epoch", "50"),
    ("train.momentum", "0.9"),
    ("train.weight_decay", "0"),
    ("train.checkpoint_every", "0"),
    ("train.log_timing", "false"),
    ("eval.query", "query"),
    ("eval.gallery", "gallery"),
    ("eval.ranks", "1,5,10,20"),
    ("eval.max_rank", "50"),
    ("eval.tile", ""),
    ("eval.camera_pairs", "true"),
    ("eval.attributes", "true"),
    ("sweep.lambdas", "0,0.5,1,2,4,8,16,32"),
    ("scale.sizes", "0,1000,5000,20000"),
    ("scale.pool", ""),
];

/// Resolved configuration: every known key with its value.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

pub struct DataPaths {
    pub schema: PathBuf,
    pub annotations: PathBuf,
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            schema: dir.join("schema.txt"),
            annotations: dir.join("annotations.txt"),
            manifest: dir.join("manifest.txt"),
            embeddings: dir.join("embeddings.bin"),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => bail!("unknown config key '{key}'"),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, got '{pair}'"))?;
        self.set(k, v)
    }

    /// Applies every `key = value` line of a config file. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.merge_text(&text)
            .with_context(|| format!("in {}", path.display()))
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| anyhow!("config key '{key}': {e}"))
    }

    fn list<T>(&self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| anyhow!("config key '{key}': {e}")))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.values).expect("string map serializes") + "\n"
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    /// Dataset files, or `None` when the run uses synthetic data.
    pub fn data_paths(&self) -> Result<Option<DataPaths>> {
        let mut paths = match self.raw("data.dir") {
            "" => None,
            dir => Some(DataPaths::in_dir(Path::new(dir))),
        };
        let explicit = [
            "data.schema",
            "data.annotations",
            "data.manifest",
            "data.embeddings",
        ];
        let given = explicit.iter().filter(|k| !self.raw(k).is_empty()).count();
        if given > 0 {
            let p = paths.get_or_insert_with(|| DataPaths::in_dir(Path::new("")));
            if given < explicit.len() && self.raw("data.dir").is_empty() {
                bail!("data.schema, data.annotations, data.manifest and data.embeddings must be set together (or use data.dir)");
            }
            let pick = |key: &str, slot: &mut PathBuf| {
                if !self.raw(key).is_empty() {
                    *slot = PathBuf::from(self.raw(key));
                }
            };
            pick("data.schema", &mut p.schema);
            pick("data.annotations", &mut p.annotations);
            pick("data.manifest", &mut p.manifest);
            pick("data.embeddings", &mut p.embeddings);
        }
        if let Some(p) = &paths {
            for f in [&p.schema, &p.annotations, &p.manifest, &p.embeddings] {
                if !f.exists() {
                    bail!("data file {} does not exist", f.display());
                }
            }
        }
        Ok(paths)
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            train_ids: self.get("synth.train_ids")?,
            val_ids: self.get("synth.val_ids")?,
            test_ids: self.get("synth.test_ids")?,
            cameras: self.get("synth.cameras")?,
            samples_per_camera: self.get("synth.samples_per_camera")?,
            dim: self.get("synth.dim")?,
            attribute_classes: self.list("synth.attribute_classes")?,
            free_latent: self.get("synth.free_latent")?,
            noise: self.get("synth.noise")?,
            coupling: self.get("synth.coupling")?,
            view_noise: self.get("synth.view_noise")?,
            camera_shift: self.get("synth.camera_shift")?,
            train_cameras: self.get("synth.train_cameras")?,
            distractors: self.get("synth.distractors")?,
            junk: self.get("synth.junk")?,
        })
    }

    /// Schema positions of the attributes that get a head.
    pub fn heads(&self, schema: &AttributeSchema) -> Result<Vec<usize>> {
        match self.raw("model.heads") {
            "all" => Ok((0..schema.len()).collect()),
            "none" | "" => Ok(Vec::new()),
            names => names
                .split(',')
                .map(|n| {
                    schema
                        .position(n.trim())
                        .ok_or_else(|| anyhow!("model.heads: unknown attribute '{}'", n.trim()))
                })
                .collect(),
        }
    }

    /// Model configuration; identity and head counts come from the training data.
    pub fn model(
        &self,
        input_dim: usize,
        num_identities: usize,
        class_counts: Vec<usize>,
    ) -> Result<ModelConfig> {
        let activation: Activation = self.get("model.activation")?;
        let cfg = ModelConfig {
            input_dim,
            hidden_dims: self.list("model.hidden")?,
            activation,
            num_identities,
            attribute_class_counts: class_counts,
            dropout_rate: self.get("model.dropout")?,
            lambda: self.get("model.lambda")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.get("train.epochs")?,
            batch_size: self.get("train.batch_size")?,
            lr_initial: self.get("train.lr_initial")?,
            lr_final: self.get("train.lr_final")?,
            lr_switch_epoch: self.get("train.lr_switch_epoch")?,
            momentum: self.get("train.momentum")?,
            weight_decay: self.get("train.weight_decay")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn checkpoint_every(&self) -> Result<usize> {
        self.get("train.checkpoint_every")
    }

    pub fn log_timing(&self) -> Result<bool> {
        self.get("train.log_timing")
    }

    pub fn eval(&self) -> Result<EvalOptions> {
        let max_rank: usize = self.get("eval.max_rank")?;
        if max_rank == 0 {
            bail!("eval.max_rank must be positive");
        }
        let tile = match self.raw("eval.tile") {
            "" => DEFAULT_TILE,
            _ => self.get("eval.tile")?,
        };
        if tile == 0 {
            bail!("eval.tile must be positive");
        }
        Ok(EvalOptions {
            max_rank,
            tile,
            exec: Exec::default(),
        })
    }

    pub fn query_split(&self) -> Result<Split> {
        self.get("eval.query")
    }

    pub fn gallery_split(&self) -> Result<Split> {
        self.get("eval.gallery")
    }

    pub fn ranks(&self) -> Result<Vec<usize>> {
        self.list("eval.ranks")
    }

    pub fn camera_pairs(&self) -> Result<bool> {
        self.get("eval.camera_pairs")
    }

    pub fn attributes(&self) -> Result<bool> {
        self.get("eval.attributes")
    }

    pub fn lambdas(&self) -> Result<Vec<f64>> {
        self.list("sweep.lambdas")
    }

    pub fn scale_sizes(&self) -> Result<Vec<usize>> {
        let sizes: Vec<usize> = self.list("scale.sizes")?;
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            bail!("scale.sizes must be strictly increasing");
        }
        Ok(sizes)
    }

    pub fn scale_pool(&self) -> Option<PathBuf> {
        match self.raw("scale.pool") {
            "" => None,
            p => Some(PathBuf::from(p)),
        }
    }
}
