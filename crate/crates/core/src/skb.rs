//! Semantic knowledge bases, endpoint feature extractors and the synthetic
//! world that produces test samples.
//!
//! The synthetic world replaces a real image dataset. Semantic vectors are
//! drawn on the unit sphere, a fixed linear map with orthonormal columns lifts
//! them into the visual space, and a ground-truth extractor pair inverts that
//! map through a `k`-dimensional bottleneck spanning the class vectors. Each
//! endpoint gets the ground truth plus its own Gaussian perturbation, so the
//! transmitter and receiver disagree the way two independently trained
//! extractors would.
//!
//! Class ids are zero-based.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::{self, Matrix};
use crate::rng::{self, streams, SimRng};
use crate::{Error, Result};

pub type ClassId = usize;

/// Class semantic vectors plus which classes each endpoint stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticKb {
    /// One row per class, `C × D_s`.
    pub semantic_vectors: Matrix,
    /// Sorted ascending.
    pub tx_members: Vec<ClassId>,
    /// Sorted ascending.
    pub rx_members: Vec<ClassId>,
}

impl SemanticKb {
    pub fn new(semantic_vectors: Matrix, mut tx_members: Vec<ClassId>, mut rx_members: Vec<ClassId>) -> Result<Self> {
        let c = semantic_vectors.rows;
        if c == 0 || semantic_vectors.cols == 0 {
            return Err(Error::config("knowledge base needs at least one class and one dimension"));
        }
        if !semantic_vectors.is_finite() {
            return Err(Error::config("semantic vectors must be finite"));
        }
        for a in 0..c {
            for b in (a + 1)..c {
                if semantic_vectors.row(a) == semantic_vectors.row(b) {
                    return Err(Error::config(format!("semantic vectors of classes {a} and {b} coincide")));
                }
            }
        }
        for (name, set) in [("transmitter", &mut tx_members), ("receiver", &mut rx_members)] {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::config(format!("{name} knowledge base is empty")));
            }
            if let Some(&bad) = set.iter().find(|&&id| id >= c) {
                return Err(Error::config(format!("{name} member {bad} is not a class id (C = {c})")));
            }
        }
        Ok(SemanticKb { semantic_vectors, tx_members, rx_members })
    }

    pub fn class_count(&self) -> usize {
        self.semantic_vectors.rows
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_vectors.cols
    }

    pub fn vector(&self, class: ClassId) -> &[f64] {
        self.semantic_vectors.row(class)
    }

    /// Closest stored class to `s` among `members` by squared Euclidean
    /// distance. Ties go to the smaller class id.
    pub fn nearest(&self, members: &[ClassId], s: &[f64]) -> (ClassId, f64) {
        let mut best = (members[0], f64::INFINITY);
        for &c in members {
            let d = math::sq_dist(self.vector(c), s);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    /// Same vectors, different transmitter membership.
    pub fn with_tx_members(&self, tx_members: Vec<ClassId>) -> Result<Self> {
        SemanticKb::new(self.semantic_vectors.clone(), tx_members, self.rx_members.clone())
    }

    pub fn with_rx_members(&self, rx_members: Vec<ClassId>) -> Result<Self> {
        SemanticKb::new(self.semantic_vectors.clone(), self.tx_members.clone(), rx_members)
    }
}

/// Visual and semantic encoders of one endpoint. The decoders are their
/// transposes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    /// `k × D_v`
    pub visual_encoder: Matrix,
    /// `k × D_s`
    pub semantic_encoder: Matrix,
}

impl FeatureExtractor {
    pub fn new(visual_encoder: Matrix, semantic_encoder: Matrix) -> Result<Self> {
        if visual_encoder.rows != semantic_encoder.rows || visual_encoder.rows == 0 {
            return Err(Error::config(format!(
                "encoder latent dims disagree: visual {} vs semantic {}",
                visual_encoder.rows, semantic_encoder.rows
            )));
        }
        if !visual_encoder.is_finite() || !semantic_encoder.is_finite() {
            return Err(Error::config("extractor entries must be finite"));
        }
        Ok(FeatureExtractor { visual_encoder, semantic_encoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.visual_encoder.rows
    }

    pub fn visual_dim(&self) -> usize {
        self.visual_encoder.cols
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantic_encoder.cols
    }

    /// Intermediate feature `P_v v`.
    pub fn encode_visual(&self, visual: &[f64]) -> Vec<f64> {
        self.visual_encoder.mul_vec(visual)
    }

    /// Semantic feature `P_sᵀ f`.
    pub fn decode_semantic(&self, latent: &[f64]) -> Vec<f64> {
        self.semantic_encoder.t_mul_vec(latent)
    }
}

/// Test samples of one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<ClassId>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub classes: usize,
    pub visual_dim: usize,
    pub semantic_dim: usize,
    pub latent_dim: usize,
    pub tx_kb_size: usize,
    pub rx_kb_size: usize,
    /// Draw the transmitter classes from the receiver's.
    #[serde(default = "default_true")]
    pub tx_subset_of_rx: bool,
    /// Entrywise perturbation of the transmitter extractor.
    pub extractor_noise: f64,
    /// Entrywise perturbation of the receiver extractor; `extractor_noise`
    /// when absent.
    #[serde(default)]
    pub rx_extractor_noise: Option<f64>,
    /// Per-entry standard deviation of visual feature noise.
    pub feature_noise: f64,
}

fn default_true() -> bool {
    true
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            classes: 10,
            visual_dim: 256,
            semantic_dim: 32,
            latent_dim: 16,
            tx_kb_size: 5,
            rx_kb_size: 10,
            tx_subset_of_rx: true,
            extractor_noise: 0.05,
            rx_extractor_noise: Some(0.02),
            feature_noise: 0.1,
        }
    }
}

impl WorldConfig {
    pub fn rx_noise(&self) -> f64 {
        self.rx_extractor_noise.unwrap_or(self.extractor_noise)
    }

    pub fn validate(&self) -> Result<()> {
        let (dv, ds, k) = (self.visual_dim, self.semantic_dim, self.latent_dim);
        if self.classes == 0 || dv == 0 || ds == 0 || k == 0 {
            return Err(Error::config("classes and all feature dimensions must be positive"));
        }
        if k > ds.min(dv) {
            return Err(Error::config(format!(
                "latent_dim {k} exceeds min(visual_dim, semantic_dim) = {}",
                ds.min(dv)
            )));
        }
        if ds > dv {
            return Err(Error::config(format!("semantic_dim {ds} exceeds visual_dim {dv}")));
        }
        for (name, n) in [("tx_kb_size", self.tx_kb_size), ("rx_kb_size", self.rx_kb_size)] {
            if n == 0 || n > self.classes {
                return Err(Error::config(format!("{name} = {n} must lie in 1..={}", self.classes)));
            }
        }
        if self.tx_subset_of_rx && self.tx_kb_size > self.rx_kb_size {
            return Err(Error::config("tx_kb_size exceeds rx_kb_size while tx_subset_of_rx is set"));
        }
        for (name, v) in [
            ("extractor_noise", self.extractor_noise),
            ("rx_extractor_noise", self.rx_noise()),
            ("feature_noise", self.feature_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything fixed for the lifetime of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub config: WorldConfig,
    pub kb: SemanticKb,
    pub tx: FeatureExtractor,
    pub rx: FeatureExtractor,
    /// `D_v × D_s` map from class semantics to noiseless visual features.
    pub visual_map: Matrix,
}

impl World {
    pub fn generate(seed: u64, config: &WorldConfig) -> Result<World> {
        config.validate()?;
        let (c, dv, ds, k) = (config.classes, config.visual_dim, config.semantic_dim, config.latent_dim);
        let mut rng = rng::stream_rng(seed, streams::WORLD);

        let mut semantic = Matrix::zeros(c, ds);
        for class in 0..c {
            loop {
                let row: Vec<f64> = (0..ds).map(|_| gaussian(&mut rng)).collect();
                let n = math::norm(&row);
                if n > 1e-9 {
                    for (j, x) in row.iter().enumerate() {
                        semantic.set(class, j, x / n);
                    }
                    break;
                }
            }
        }

        let visual_map = loop {
            let mut a = Matrix::from_fn(dv, ds, |_, _| gaussian(&mut rng));
            if math::orthonormalize_columns(&mut a) {
                break a;
            }
        };

        // Bottleneck basis: leading eigenvectors of Σ s_c s_cᵀ. When C ≤ k it
        // spans every class vector and the ground-truth chain is lossless.
        let gram = semantic.transpose().mul(&semantic);
        let (_, eigvecs) = math::symmetric_eigen(&gram);
        let basis_t = Matrix::from_fn(k, ds, |r, col| eigvecs.get(col, r));
        let ideal_semantic = basis_t.clone();
        let ideal_visual = basis_t.mul(&visual_map.transpose());

        let tx = perturbed(&ideal_visual, &ideal_semantic, config.extractor_noise, &mut rng)?;
        let rx = perturbed(&ideal_visual, &ideal_semantic, config.rx_noise(), &mut rng)?;

        let (rx_members, tx_order) = membership_orders(seed, config);
        let tx_members = tx_order[..config.tx_kb_size].to_vec();

        let kb = SemanticKb::new(semantic, tx_members, rx_members)?;
        Ok(World { seed, config: config.clone(), kb, tx, rx, visual_map })
    }

    /// Noiseless visual feature of a class.
    pub fn clean_visual(&self, class: ClassId) -> Vec<f64> {
        self.visual_map.mul_vec(self.kb.vector(class))
    }
}

fn perturbed(visual: &Matrix, semantic: &Matrix, sigma: f64, rng: &mut SimRng) -> Result<FeatureExtractor> {
    let mut v = visual.clone();
    let mut s = semantic.clone();
    for x in v.data.iter_mut().chain(s.data.iter_mut()) {
        let n = gaussian(rng);
        *x += sigma * n;
    }
    FeatureExtractor::new(v, s)
}

fn gaussian(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws test samples from a [`World`]. Holds the only mutable state.
#[derive(Debug, Clone)]
pub struct SampleGenerator {
    rng: SimRng,
}

impl SampleGenerator {
    pub fn new(seed: u64) -> Self {
        SampleGenerator { rng: rng::stream_rng(seed, streams::SAMPLES) }
    }

    pub fn from_rng(rng: SimRng) -> Self {
        SampleGenerator { rng }
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// `m` samples with labels uniform over `classes` (all classes if `None`).
    pub fn sample_batch(&mut self, world: &World, m: usize, classes: Option<&[ClassId]>) -> Result<SampleBatch> {
        if m == 0 {
            return Err(Error::contract("a sample batch needs at least one sample"));
        }
        let all: Vec<ClassId>;
        let allowed = match classes {
            Some(set) => set,
            None => {
                all = (0..world.kb.class_count()).collect();
                &all
            }
        };
        if allowed.is_empty() {
            return Err(Error::contract("class subset is empty"));
        }
        if let Some(&bad) = allowed.iter().find(|&&c| c >= world.kb.class_count()) {
            return Err(Error::contract(format!("class {bad} out of range")));
        }
        let sigma = world.config.feature_noise;
        let mut features = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let class = allowed[self.rng.random_range(0..allowed.len())];
            let mut v = world.clean_visual(class);
            for x in v.iter_mut() {
                *x += sigma * gaussian(&mut self.rng);
            }
            features.push(v);
            labels.push(class);
        }
        Ok(SampleBatch { features, labels })
    }
}

/// World plus a sample generator seeded from the same experiment seed.
pub fn generate_synthetic_world(seed: u64, config: &WorldConfig) -> Result<(World, SampleGenerator)> {
    let world = World::generate(seed, config)?;
    Ok((world, SampleGenerator::new(seed)))
}

/// Receiver members and the ordering whose prefixes form the transmitter
/// knowledge base. Prefixes of the ordering give a nested chain of
/// transmitter bases for a fixed seed.
fn membership_orders(seed: u64, config: &WorldConfig) -> (Vec<ClassId>, Vec<ClassId>) {
    let mut mrng = rng::stream_rng(seed, streams::MEMBERSHIP);
    let mut order: Vec<ClassId> = (0..config.classes).collect();
    order.shuffle(&mut mrng);
    let rx_members = order[..config.rx_kb_size].to_vec();
    let tx_order = if config.tx_subset_of_rx {
        let mut within = rx_members.clone();
        within.shuffle(&mut mrng);
        within
    } else {
        let mut all: Vec<ClassId> = (0..config.classes).collect();
        all.shuffle(&mut mrng);
        all
    };
    (rx_members, tx_order)
}

/// The class ordering whose first `n` entries are the transmitter knowledge
/// base this world would have with `tx_kb_size = n`.
pub fn nested_tx_order(world: &World) -> Vec<ClassId> {
    membership_orders(world.seed, &world.config).1
}
