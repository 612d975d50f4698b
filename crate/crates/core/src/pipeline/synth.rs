//! Synthetic bimodal dataset generator for desk-scale runs. Images are
//! cluster-centered feature vectors written as one-row `.vec` containers;
//! tags are drawn from per-cluster word pools. Test triples get their
//! incorrect candidate from a derangement of the correct descriptions, so
//! every incorrect description is exactly one other triple's correct one and
//! the link graph is all cycles.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::save_matrix;
use crate::numeric::{Matrix, Rng, Vector};
use crate::pipeline::config::{
    FeaturesConfig, LambdaSetting, PipelineConfig, RbmSection, RbmStageConfig,
    SiameseStageConfig, Strategy, VocabConfig,
};
use crate::siamese::derange_pairs;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub train_pairs: usize,
    pub test_triples: usize,
    pub clusters: usize,
    pub noise: f64,
    pub seed: u64,
    /// Dimension of the image-like vectors.
    pub image_dim: usize,
    /// Distinct words in each cluster's pool.
    pub words_per_cluster: usize,
    /// Words drawn from the pool per tag list / description.
    pub tags_per_item: usize,
}

impl SynthParams {
    pub fn new(
        train_pairs: usize,
        test_triples: usize,
        clusters: usize,
        noise: f64,
        seed: u64,
    ) -> SynthParams {
        SynthParams {
            train_pairs,
            test_triples,
            clusters,
            noise,
            seed,
            image_dim: 32,
            words_per_cluster: 8,
            tags_per_item: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_pairs < 4 {
            return Err(Error::Validation("need at least 4 training pairs".into()));
        }
        if self.clusters < 2 {
            return Err(Error::Validation("need at least 2 clusters".into()));
        }
        if self.test_triples < 2 {
            return Err(Error::Validation(
                "need at least 2 test triples (cycles need a derangement)".into(),
            ));
        }
        if self.noise < 0.0 {
            return Err(Error::Validation("noise must be >= 0".into()));
        }
        if self.tags_per_item == 0 || self.tags_per_item > self.words_per_cluster {
            return Err(Error::Validation(
                "tags_per_item must lie in 1..=words_per_cluster".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub config: PathBuf,
}

fn cluster_word(cluster: usize, k: usize) -> String {
    format!("c{cluster}w{k}")
}

/// Draws `count` distinct words from the cluster pool, sorted.
fn draw_description(
    cluster: usize,
    params: &SynthParams,
    rng: &mut Rng,
) -> Vec<String> {
    let mut pool: Vec<usize> = (0..params.words_per_cluster).collect();
    rng.shuffle(&mut pool);
    let mut words: Vec<String> = pool[..params.tags_per_item]
        .iter()
        .map(|&k| cluster_word(cluster, k))
        .collect();
    words.sort();
    words
}

fn cluster_centers(params: &SynthParams, rng: &mut Rng) -> Vec<Vector> {
    (0..params.clusters)
        .map(|_| Vector::from_shape_fn(params.image_dim, |_| rng.normal(0.0, 2.0)))
        .collect()
}

fn noisy_vector(center: &Vector, noise: f64, rng: &mut Rng) -> Vector {
    Vector::from_shape_fn(center.len(), |i| center[i] + noise * rng.normal(0.0, 1.0))
}

fn write_vec(path: &Path, v: &Vector) -> Result<()> {
    let m = Matrix::from_shape_fn((1, v.len()), |(_, c)| v[c]);
    save_matrix(path, &m)
}

/// Desk-scale pipeline configuration matched to the generator's dimensions.
fn desk_config(params: &SynthParams) -> PipelineConfig {
    let rbm_image = RbmStageConfig {
        variant: "gaussian".into(),
        hidden1: 16,
        hidden2: 16,
        epsilon: 0.02,
        epsilon2: None,
        gibbs_steps: 1,
        epochs: 100,
        batch_size: 16,
        momentum: 0.5,
        momentum_final: 0.9,
        momentum_switch_epoch: 5,
        weight_decay: 2e-4,
        sparsity: None,
    };
    let rbm_text = RbmStageConfig {
        variant: "replicated_softmax".into(),
        hidden1: 16,
        hidden2: 16,
        epsilon: 0.1,
        epsilon2: None,
        gibbs_steps: 1,
        epochs: 300,
        batch_size: 16,
        momentum: 0.5,
        momentum_final: 0.9,
        momentum_switch_epoch: 5,
        weight_decay: 2e-4,
        sparsity: None,
    };
    PipelineConfig {
        seed: params.seed,
        strategy: Strategy::Link,
        train_manifest: "train.tsv".into(),
        test_manifest: "test.tsv".into(),
        features: FeaturesConfig::default(),
        vocab: VocabConfig {
            size: params.clusters * params.words_per_cluster,
        },
        rbm: RbmSection {
            image: rbm_image,
            text: rbm_text,
        },
        siamese: SiameseStageConfig {
            code_dim: 8,
            alpha: 0.5,
            lambda: LambdaSetting::Mode("auto".into()),
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 32,
            epochs: 100,
            sparsity: None,
        },
    }
}

/// Generates manifests, vectors, and a ready-to-run config under `out_dir`.
pub fn generate_synthetic(params: &SynthParams, out_dir: &Path) -> Result<SynthOutput> {
    params.validate()?;
    let vec_dir = out_dir.join("vecs");
    fs::create_dir_all(&vec_dir)?;
    let mut rng = Rng::from_seed(params.seed);
    let centers = cluster_centers(params, &mut rng);

    // Training pairs: balanced cluster assignment, noisy image vector plus a
    // pool-drawn tag list.
    let mut train_lines = String::new();
    for i in 0..params.train_pairs {
        let cluster = i % params.clusters;
        let v = noisy_vector(&centers[cluster], params.noise, &mut rng);
        let rel = format!("vecs/train_{i}.vec");
        write_vec(&out_dir.join(&rel), &v)?;
        let tags = draw_description(cluster, params, &mut rng);
        writeln!(train_lines, "train{i}\t{rel}\t{}", tags.join(" ")).unwrap();
    }
    let train_manifest = out_dir.join("train.tsv");
    fs::write(&train_manifest, train_lines)?;

    // Test triples: globally distinct correct descriptions, then incorrect
    // candidates from a derangement of them.
    let mut used: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut correct = Vec::with_capacity(params.test_triples);
    let mut image_paths = Vec::with_capacity(params.test_triples);
    for j in 0..params.test_triples {
        let cluster = j % params.clusters;
        let mut attempts = 0;
        let desc = loop {
            let candidate = draw_description(cluster, params, &mut rng);
            if used.insert(candidate.clone()) {
                break candidate;
            }
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Validation(
                    "could not draw distinct test descriptions; enlarge the word pools".into(),
                ));
            }
        };
        correct.push(desc);
        let v = noisy_vector(&centers[cluster], params.noise, &mut rng);
        let rel = format!("vecs/test_{j}.vec");
        write_vec(&out_dir.join(&rel), &v)?;
        image_paths.push(rel);
    }
    let derangement = derange_pairs(params.test_triples, &mut rng)?;
    let mut test_lines = String::new();
    for j in 0..params.test_triples {
        let incorrect = correct[derangement[j]].join(" ");
        let right = correct[j].join(" ");
        // Randomize which slot carries the correct description.
        let (a, b, gold) = if rng.coin(0.5) {
            (right.clone(), incorrect.clone(), "A")
        } else {
            (incorrect.clone(), right.clone(), "B")
        };
        writeln!(
            test_lines,
            "test{j}\t{}\t{a}\t{b}\t{gold}",
            image_paths[j]
        )
        .unwrap();
    }
    let test_manifest = out_dir.join("test.tsv");
    fs::write(&test_manifest, test_lines)?;

    let config = out_dir.join("config.toml");
    desk_config(params).save(&config)?;
    Ok(SynthOutput {
        train_manifest,
        test_manifest,
        config,
    })
}
