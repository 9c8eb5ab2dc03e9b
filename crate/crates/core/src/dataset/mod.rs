//! Attribute schemas, identity-level annotations, sample manifests and feature matrices.

mod annotations;
mod embeddings;
mod manifest;
mod schema;
mod stats;
pub mod synth;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

pub use annotations::{
    parse_annotations, parse_annotations_with, AnnotationTable, IdentityDictionary, NAMED_ID_BASE,
};
pub use embeddings::{load_embeddings, EmbeddingMatrix, MAGIC as EMBEDDING_MAGIC};
pub use manifest::{
    instance_labels, manifest_to_text, parse_manifest, parse_manifest_with, Identity, Sample, Split,
};
pub use schema::{parse_schema, AttributeDef, AttributeSchema};
pub use stats::{
    attribute_correlation, attribute_distribution, indicator_columns, AttributeCorrelation,
    AttributeDistribution,
};
pub use synth::{synth_dataset, SynthConfig};

use crate::error::{Error, Result};

/// A fully attached dataset: every sample points at one embedding row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub annotations: AnnotationTable,
    pub samples: Vec<Sample>,
    pub embeddings: EmbeddingMatrix,
}

impl Dataset {
    /// Samples without a feature index are attached to the row matching their position.
    pub fn new(
        schema: AttributeSchema,
        annotations: AnnotationTable,
        mut samples: Vec<Sample>,
        embeddings: EmbeddingMatrix,
    ) -> Result<Self> {
        if annotations.num_attributes() != schema.len() {
            return Err(Error::Annotation(format!(
                "table has {} attributes, schema {}",
                annotations.num_attributes(),
                schema.len()
            )));
        }
        for (i, s) in samples.iter_mut().enumerate() {
            s.validate().map_err(Error::Manifest)?;
            let row = *s.feature.get_or_insert(i);
            if row >= embeddings.rows() {
                return Err(Error::Shape {
                    expected: format!("embedding row for sample {}", s.id),
                    found: format!("{} rows", embeddings.rows()),
                });
            }
        }
        Ok(Self {
            schema,
            annotations,
            samples,
            embeddings,
        })
    }

    /// Reads schema, annotations, manifest and embeddings from disk.
    pub fn load(
        schema: &Path,
        annotations: &Path,
        manifest: &Path,
        embeddings: &Path,
    ) -> Result<Self> {
        let schema = parse_schema(&fs::read_to_string(schema)?)?;
        let mut dict = IdentityDictionary::default();
        let annotations =
            parse_annotations_with(&fs::read_to_string(annotations)?, &schema, &mut dict)?;
        let samples = parse_manifest_with(&fs::read_to_string(manifest)?, &mut dict)?;
        let embeddings = load_embeddings(embeddings, Some(samples.len()), None)?;
        Self::new(schema, annotations, samples, embeddings)
    }

    pub fn save(
        &self,
        schema: &Path,
        annotations: &Path,
        manifest: &Path,
        embeddings: &Path,
    ) -> Result<()> {
        fs::write(schema, self.schema.to_text())?;
        fs::write(annotations, self.annotations.to_text(&self.schema))?;
        fs::write(manifest, manifest_to_text(&self.samples))?;
        let order: Vec<usize> = self
            .samples
            .iter()
            .map(|s| s.feature.unwrap_or(0))
            .collect();
        self.embeddings.select(&order).save(embeddings)
    }

    pub fn feature(&self, sample: usize) -> &[f32] {
        self.embeddings.row(
            self.samples[sample]
                .feature
                .expect("attached at construction"),
        )
    }

    /// Sample positions in `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct person identities in `split`, ascending.
    pub fn identities(&self, split: Split) -> Vec<u32> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .filter_map(|s| s.identity.person())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Appends `pool` rows to the embedding matrix and returns one gallery
    /// distractor per row, with ids continuing after the largest sample id.
    /// The returned samples are not added to `self.samples`.
    pub fn attach_pool(&mut self, pool: &EmbeddingMatrix, cameras: &[u16]) -> Result<Vec<Sample>> {
        if cameras.len() != pool.rows() {
            return Err(Error::Shape {
                expected: format!("{} cameras", pool.rows()),
                found: cameras.len().to_string(),
            });
        }
        let first_row = self.embeddings.rows();
        let first_id = self.samples.iter().map(|s| s.id + 1).max().unwrap_or(0);
        self.embeddings.append(pool)?;
        let out: Vec<Sample> = cameras
            .iter()
            .enumerate()
            .map(|(i, &camera)| Sample {
                id: first_id + i as u64,
                identity: Identity::Distractor,
                camera,
                split: Split::Gallery,
                feature: Some(first_row + i),
            })
            .collect();
        for s in &out {
            s.validate().map_err(Error::Manifest)?;
        }
        Ok(out)
    }
}
