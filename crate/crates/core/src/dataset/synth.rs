//! Seeded synthetic re-identification datasets.
//!
//! Every identity gets a latent prototype. Attribute `a` owns `m_a` latent
//! coordinates and its class is their argmax, so attributes are functions of
//! identity. The remaining `free_latent` coordinates carry identity-only
//! signal. A sample's feature is
//!
//! ```text
//! x = P · [coupling · u_attr, u_free] + camera_offset[c] + view[id, c] + noise · ε
//! ```
//!
//! with `P` a fixed random `dim × L` projection and `view` a per
//! (identity, camera) appearance offset shared by that identity's images in
//! that camera.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::annotations::AnnotationTable;
use super::embeddings::EmbeddingMatrix;
use super::manifest::{Identity, Sample, Split};
use super::schema::{AttributeDef, AttributeSchema};
use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// K: identities in the train split.
    pub train_ids: usize,
    /// Identities held out for λ validation (vquery / vgallery).
    pub val_ids: usize,
    /// Identities in the test query / gallery.
    pub test_ids: usize,
    pub cameras: usize,
    pub samples_per_camera: usize,
    pub dim: usize,
    pub attribute_classes: Vec<usize>,
    /// Latent coordinates not tied to any attribute.
    pub free_latent: usize,
    /// σ of the per-image Gaussian noise.
    pub noise: f64,
    /// Scale of the attribute-owned latent coordinates in feature space.
    pub coupling: f64,
    pub view_noise: f64,
    pub camera_shift: f64,
    /// Cameras each training identity is observed in (0 = all of them).
    /// Validation and test identities always appear in every camera.
    pub train_cameras: usize,
    pub distractors: usize,
    pub junk: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_ids: 100,
            val_ids: 40,
            test_ids: 100,
            cameras: 4,
            samples_per_camera: 2,
            dim: 64,
            attribute_classes: vec![2, 2, 2, 2, 2, 2, 3, 4],
            free_latent: 8,
            noise: 0.5,
            coupling: 1.0,
            view_noise: 0.8,
            camera_shift: 1.0,
            train_cameras: 0,
            distractors: 0,
            junk: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_ids < 2 {
            return Err(Error::Config(
                "synth: need at least 2 train identities".into(),
            ));
        }
        if self.cameras < 2 {
            return Err(Error::Config(
                "synth: need at least 2 cameras for cross-camera retrieval".into(),
            ));
        }
        if self.train_cameras > self.cameras {
            return Err(Error::Config("synth: train_cameras exceeds cameras".into()));
        }
        if self.cameras > usize::from(u16::MAX) {
            return Err(Error::Config("synth: too many cameras".into()));
        }
        if self.samples_per_camera == 0 || self.dim == 0 {
            return Err(Error::Config(
                "synth: samples_per_camera and dim must be positive".into(),
            ));
        }
        if self.attribute_classes.is_empty() || self.attribute_classes.iter().any(|&m| m < 2) {
            return Err(Error::Config(
                "synth: every attribute needs at least 2 classes".into(),
            ));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("coupling", self.coupling),
            ("view_noise", self.view_noise),
            ("camera_shift", self.camera_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "synth: {name} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.attribute_classes.iter().sum::<usize>() + self.free_latent
    }

    pub fn schema(&self) -> AttributeSchema {
        let attrs = self
            .attribute_classes
            .iter()
            .enumerate()
            .map(|(a, &m)| AttributeDef {
                name: format!("attr{a}"),
                classes: (0..m).map(|c| format!("c{c}")).collect(),
            })
            .collect();
        AttributeSchema::new(attrs).expect("validated class counts")
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    projection: Vec<f64>,
    camera_offsets: Vec<Vec<f64>>,
    latent: usize,
    att_latent: usize,
}

impl Generator<'_> {
    fn project(&self, proto: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cfg.dim];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.projection[r * self.latent..(r + 1) * self.latent];
            *o = row
                .iter()
                .zip(proto)
                .enumerate()
                .map(|(j, (p, u))| {
                    let s = if j < self.att_latent {
                        self.cfg.coupling
                    } else {
                        1.0
                    };
                    p * s * u
                })
                .sum();
        }
        out
    }

    fn attributes(&self, proto: &[f64]) -> Vec<usize> {
        let mut at = 0;
        self.cfg
            .attribute_classes
            .iter()
            .map(|&m| {
                let c = argmax(&proto[at..at + m]);
                at += m;
                c
            })
            .collect()
    }

    /// Features for every image of one identity in each of `cameras`.
    fn images(&self, rng: &mut ChaCha8Rng, base: &[f64], cameras: &[usize]) -> Vec<Vec<Vec<f32>>> {
        let cfg = self.cfg;
        cameras
            .iter()
            .map(|&c| {
                let view = gaussian_vec(rng, cfg.dim, cfg.view_noise);
                (0..cfg.samples_per_camera)
                    .map(|_| {
                        let eps = gaussian_vec(rng, cfg.dim, cfg.noise);
                        (0..cfg.dim)
                            .map(|d| {
                                (base[d] + self.camera_offsets[c][d] + view[d] + eps[d]) as f32
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// One image of a fresh, unannotated identity in a random camera.
    fn distractor(&self, rng: &mut ChaCha8Rng) -> (usize, Vec<f32>) {
        let cfg = self.cfg;
        let proto = gaussian_vec(rng, self.latent, 1.0);
        let base = self.project(&proto);
        let c = rng.random_range(0..cfg.cameras);
        let view = gaussian_vec(rng, cfg.dim, cfg.view_noise);
        let eps = gaussian_vec(rng, cfg.dim, cfg.noise);
        let x = (0..cfg.dim)
            .map(|d| (base[d] + self.camera_offsets[c][d] + view[d] + eps[d]) as f32)
            .collect();
        (c, x)
    }
}

/// Projection and camera offsets, drawn first from the synth stream.
fn generator<'a>(cfg: &'a SynthConfig, rng: &mut ChaCha8Rng) -> Generator<'a> {
    let latent = cfg.latent_dim();
    Generator {
        cfg,
        projection: gaussian_vec(rng, cfg.dim * latent, 1.0 / (latent as f64).sqrt()),
        camera_offsets: (0..cfg.cameras)
            .map(|_| gaussian_vec(rng, cfg.dim, cfg.camera_shift))
            .collect(),
        latent,
        att_latent: cfg.attribute_classes.iter().sum(),
    }
}

/// Generates schema, annotations, manifest and features. Deterministic in `seed`.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(seed, seed::SYNTH));
    let latent = cfg.latent_dim();
    let gen = generator(cfg, &mut rng);

    let schema = cfg.schema();
    let mut annotations = AnnotationTable::new(&schema);
    let mut samples = Vec::new();
    let mut rows: Vec<Vec<f32>> = Vec::new();

    let groups = [
        (cfg.train_ids, Split::Train),
        (cfg.val_ids, Split::ValidationGallery),
        (cfg.test_ids, Split::Gallery),
    ];
    let mut identity = 0u32;
    for (count, gallery_split) in groups {
        for _ in 0..count {
            let proto = gaussian_vec(&mut rng, latent, 1.0);
            annotations.insert(&schema, identity, gen.attributes(&proto))?;
            let base = gen.project(&proto);
            let mut cameras: Vec<usize> = (0..cfg.cameras).collect();
            if gallery_split == Split::Train && cfg.train_cameras > 0 {
                cameras.shuffle(&mut rng);
                cameras.truncate(cfg.train_cameras);
                cameras.sort_unstable();
            }
            let shots = gen.images(&mut rng, &base, &cameras);
            for (&c, images) in cameras.iter().zip(shots) {
                // One random image per (identity, camera) becomes the query.
                let q = rng.random_range(0..images.len());
                for (i, x) in images.into_iter().enumerate() {
                    let split = match gallery_split {
                        Split::Train => Split::Train,
                        Split::ValidationGallery if i == q => Split::ValidationQuery,
                        Split::Gallery if i == q => Split::Query,
                        s => s,
                    };
                    samples.push(Sample {
                        id: samples.len() as u64,
                        identity: Identity::Person(identity),
                        camera: (c + 1) as u16,
                        split,
                        feature: Some(rows.len()),
                    });
                    rows.push(x);
                }
            }
            identity += 1;
        }
    }

    for _ in 0..cfg.distractors {
        let (c, x) = gen.distractor(&mut rng);
        samples.push(Sample {
            id: samples.len() as u64,
            identity: Identity::Distractor,
            camera: (c + 1) as u16,
            split: Split::Gallery,
            feature: Some(rows.len()),
        });
        rows.push(x);
    }

    for _ in 0..cfg.junk {
        let c = rng.random_range(0..cfg.cameras);
        let x = gaussian_vec(&mut rng, cfg.dim, 1.0 + cfg.noise)
            .into_iter()
            .map(|v| v as f32)
            .collect();
        samples.push(Sample {
            id: samples.len() as u64,
            identity: Identity::Junk,
            camera: (c + 1) as u16,
            split: Split::Gallery,
            feature: Some(rows.len()),
        });
        rows.push(x);
    }

    let embeddings = EmbeddingMatrix::from_rows(cfg.dim, &rows)?;
    Dataset::new(schema, annotations, samples, embeddings)
}

/// `count` extra distractor images sharing the projection and camera
/// offsets of `synth_dataset(cfg, seed)`, with the 1-based camera of each.
///
/// Prototypes come from a separate stream, so the pool never replays the
/// dataset's identities and can grow without regenerating the base dataset.
pub fn distractor_pool(
    cfg: &SynthConfig,
    count: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, Vec<u16>)> {
    cfg.validate()?;
    let synth_seed = seed::derive(seed, seed::SYNTH);
    let gen = generator(cfg, &mut seed::rng(synth_seed));
    let mut rng = seed::rng(seed::derive(synth_seed, "distractor-pool"));
    let mut rows = Vec::with_capacity(count);
    let mut cameras = Vec::with_capacity(count);
    for _ in 0..count {
        let (c, x) = gen.distractor(&mut rng);
        cameras.push((c + 1) as u16);
        rows.push(x);
    }
    Ok((EmbeddingMatrix::from_rows(cfg.dim, &rows)?, cameras))
}

/// Shuffled order over `n` pool entries, fixed per seed so prefixes nest.
pub fn distractor_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, seed::DISTRACTOR_ORDER)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            train_ids: 6,
            val_ids: 2,
            test_ids: 4,
            cameras: 3,
            samples_per_camera: 3,
            dim: 8,
            attribute_classes: vec![2, 3],
            free_latent: 2,
            distractors: 5,
            junk: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(&small(), 3).unwrap();
        let b = synth_dataset(&small(), 3).unwrap();
        let c = synth_dataset(&small(), 4).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.embeddings, c.embeddings);
    }

    #[test]
    fn noise_free_images_coincide_within_camera() {
        let cfg = SynthConfig {
            noise: 0.0,
            ..small()
        };
        let ds = synth_dataset(&cfg, 1).unwrap();
        let of = |id, cam| -> Vec<&[f32]> {
            ds.samples
                .iter()
                .filter(|s| s.identity == Identity::Person(id) && s.camera == cam)
                .map(|s| ds.embeddings.row(s.feature.unwrap()))
                .collect()
        };
        let imgs = of(0, 1);
        assert_eq!(imgs.len(), 3);
        assert!(imgs.iter().all(|r| *r == imgs[0]));
        assert_ne!(of(0, 2)[0], imgs[0]);
    }

    #[test]
    fn layout_and_splits() {
        let ds = synth_dataset(&small(), 9).unwrap();
        let count = |sp| ds.samples.iter().filter(|s| s.split == sp).count();
        assert_eq!(count(Split::Train), 6 * 3 * 3);
        assert_eq!(count(Split::ValidationQuery), 2 * 3);
        assert_eq!(count(Split::Query), 4 * 3);
        assert_eq!(count(Split::Gallery), 4 * 3 * 2 + 5 + 2);
        assert_eq!(ds.annotations.len(), 12);
    }

    #[test]
    fn train_camera_subsets() {
        let ds = synth_dataset(
            &SynthConfig {
                train_cameras: 2,
                ..small()
            },
            5,
        )
        .unwrap();
        for id in 0..6 {
            let mut cams: Vec<u16> = ds
                .samples
                .iter()
                .filter(|s| s.identity == Identity::Person(id))
                .map(|s| s.camera)
                .collect();
            cams.dedup();
            assert_eq!(cams.len(), 2, "identity {id}");
        }
        assert_eq!(ds.indices(Split::Query).len(), 4 * 3);
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(synth_dataset(
            &SynthConfig {
                train_ids: 1,
                ..small()
            },
            0
        )
        .is_err());
        assert!(synth_dataset(
            &SynthConfig {
                cameras: 1,
                ..small()
            },
            0
        )
        .is_err());
        assert!(synth_dataset(
            &SynthConfig {
                train_cameras: 4,
                ..small()
            },
            0
        )
        .is_err());
    }

    #[test]
    fn pool_and_order() {
        let (pool, cams) = distractor_pool(&small(), 7, 2).unwrap();
        assert_eq!(pool.rows(), 7);
        assert!(cams.iter().all(|&c| (1..=3).contains(&c)));
        let (longer, _) = distractor_pool(&small(), 9, 2).unwrap();
        assert_eq!(longer.row(6), pool.row(6));
        let o = distractor_order(10, 5);
        let mut sorted = o.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(o, distractor_order(10, 5));
    }
}
