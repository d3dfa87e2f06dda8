//! Identity populations and the worlds built from them.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderShape, SyntheticEncoder};
use crate::coverage::{EmbeddingGallery, Metric, PairScores, VerificationProblem};
use crate::error::invalid;
use crate::seed::{derive_seed, rng_from_seed, Rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_identities: usize,
    pub cluster_count: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// Dimension of the latent subspace that carries identity.
    pub identity_dim: usize,
    /// Standard deviation of cluster centres in identity coordinates.
    pub separation: f64,
    /// Standard deviation of identities around their centre; defaults to
    /// `sqrt(1 - separation²)` so identity coordinates have unit variance.
    pub cluster_spread: Option<f64>,
    /// Genuine-probe perturbation inside the identity subspace.
    pub noise: f64,
    /// Genuine-probe perturbation of the remaining latent coordinates.
    pub nuisance_noise: f64,
    /// Log-normal spread of the per-identity noise scale.
    pub noise_jitter: f64,
    pub leak: f64,
    pub bias_scale: f64,
    pub probes_per_identity: usize,
    pub impostor_pairs: usize,
    pub metric: Metric,
    /// Project embeddings onto the unit sphere.
    pub normalize: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_identities: 500,
            cluster_count: 10,
            latent_dim: 512,
            hidden_dim: 256,
            embedding_dim: 128,
            identity_dim: 24,
            separation: 0.7,
            cluster_spread: None,
            noise: 0.35,
            nuisance_noise: 1.0,
            noise_jitter: 0.3,
            leak: 0.2,
            bias_scale: 0.0,
            probes_per_identity: 1,
            impostor_pairs: 20_000,
            metric: Metric::Euclidean,
            normalize: false,
        }
    }
}

impl WorldConfig {
    pub fn spread(&self) -> f64 {
        self.cluster_spread
            .unwrap_or_else(|| (1.0 - self.separation * self.separation).max(0.0).sqrt())
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        EncoderShape {
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
            embedding_dim: self.embedding_dim,
            leak: self.leak,
            bias_scale: self.bias_scale,
            normalize: self.normalize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_identities < 2 {
            return Err(invalid("a world needs at least 2 identities"));
        }
        if self.cluster_count == 0 {
            return Err(invalid("cluster_count must be positive"));
        }
        if self.latent_dim < 2 || self.hidden_dim == 0 || self.embedding_dim == 0 {
            return Err(invalid(
                "latent_dim >= 2 and positive hidden/embedding dims required",
            ));
        }
        if self.identity_dim == 0 || self.identity_dim > self.latent_dim {
            return Err(invalid("identity_dim must lie in 1..=latent_dim"));
        }
        let scales = [
            self.separation,
            self.spread(),
            self.noise,
            self.nuisance_noise,
            self.noise_jitter,
            self.leak,
            self.bias_scale,
        ];
        if scales.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("scale parameters must be finite and non-negative"));
        }
        if self.probes_per_identity == 0 || self.impostor_pairs == 0 {
            return Err(invalid(
                "probes_per_identity and impostor_pairs must be positive",
            ));
        }
        Ok(())
    }

    /// Whether every genuine distance is zero, making the EER trivially 0.
    pub fn noiseless(&self) -> bool {
        self.noise == 0.0 && self.nuisance_noise == 0.0
    }
}

/// Orthonormal columns from modified Gram-Schmidt on a Gaussian matrix.
fn orthonormal(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
    for j in 0..cols {
        for i in 0..j {
            let proj = m.column(i).dot(&m.column(j));
            let qi = m.column(i).to_owned();
            m.column_mut(j).scaled_add(-proj, &qi);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        m.column_mut(j).mapv_inplace(|x| x / norm);
    }
    m
}

/// Latent anchors and genuine probes of a clustered identity population.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPopulation {
    /// `latent_dim × identity_dim`, orthonormal columns.
    pub subspace: Array2<f64>,
    /// Cluster centres in identity coordinates, `cluster_count × identity_dim`.
    pub centres: Array2<f64>,
    pub labels: Vec<usize>,
    /// `n_identities × latent_dim`.
    pub anchors: Array2<f64>,
    /// `n_identities * probes_per_identity × latent_dim`; probe `j` of identity
    /// `i` is row `i * probes_per_identity + j`.
    pub probes: Array2<f64>,
    pub probes_per_identity: usize,
}

impl IdentityPopulation {
    fn sample(config: &WorldConfig, subspace: Array2<f64>) -> Self {
        let (n, q) = (config.latent_dim, config.identity_dim);
        let mut rng = rng_from_seed(derive_seed(config.seed, "population"));
        let normal = |rng: &mut Rng| rng.sample::<f64, _>(StandardNormal);
        let centres = Array2::from_shape_fn((config.cluster_count, q), |_| {
            config.separation * normal(&mut rng)
        });
        let labels: Vec<usize> = (0..config.n_identities)
            .map(|_| rng.random_range(0..config.cluster_count))
            .collect();
        let spread = config.spread();
        let coords = Array2::from_shape_fn((config.n_identities, q), |(i, k)| {
            centres[[labels[i], k]] + spread * normal(&mut rng)
        });
        // Nuisance: an isotropic draw with the identity subspace projected out.
        let mut nuisance = Array2::from_shape_fn((config.n_identities, n), |_| normal(&mut rng));
        nuisance = &nuisance - &nuisance.dot(&subspace).dot(&subspace.t());
        let anchors = coords.dot(&subspace.t()) + &nuisance;

        let mut rng = rng_from_seed(derive_seed(config.seed, "probes"));
        let p = config.probes_per_identity;
        let mut probes = Array2::zeros((config.n_identities * p, n));
        for i in 0..config.n_identities {
            for j in 0..p {
                let scale = config.noise_jitter * normal(&mut rng);
                let sigma = scale.exp();
                let id = Array1::from_shape_fn(q, |_| config.noise * normal(&mut rng));
                let mut off =
                    Array1::from_shape_fn(n, |_| config.nuisance_noise * normal(&mut rng));
                off = &off - &subspace.dot(&subspace.t().dot(&off));
                let delta = (subspace.dot(&id) + off) * sigma;
                probes
                    .row_mut(i * p + j)
                    .assign(&(&anchors.row(i) + &delta));
            }
        }
        Self {
            subspace,
            centres,
            labels,
            anchors,
            probes,
            probes_per_identity: p,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Latent of a cluster centre with zero nuisance.
    pub fn cluster_anchor(&self, cluster: usize) -> Vec<f64> {
        self.subspace.dot(&self.centres.row(cluster)).to_vec()
    }

    pub fn cluster_anchors(&self) -> Vec<Vec<f64>> {
        (0..self.centres.nrows())
            .map(|k| self.cluster_anchor(k))
            .collect()
    }
}

/// Encoded gallery and probes of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelView {
    pub encoder: Arc<SyntheticEncoder>,
    pub gallery: EmbeddingGallery,
    /// Encoded genuine probes, rows as in [`IdentityPopulation::probes`].
    pub probe_embeddings: Array2<f64>,
}

impl ModelView {
    fn new(
        encoder: Arc<SyntheticEncoder>,
        population: &IdentityPopulation,
        metric: Metric,
    ) -> Result<Self> {
        let gallery = EmbeddingGallery::with_sequential_ids(
            encoder.encode_rows(&population.anchors),
            metric,
        )?;
        let probe_embeddings = encoder.encode_rows(&population.probes);
        Ok(Self {
            encoder,
            gallery,
            probe_embeddings,
        })
    }

    pub fn problem(&self, threshold: f64) -> Result<VerificationProblem> {
        VerificationProblem::new(self.gallery.clone(), threshold, self.encoder.clone())
    }

    fn distance(&self, gallery_row: usize, probe_row: usize) -> f64 {
        let g = self.gallery.embedding(gallery_row);
        let p = self.probe_embeddings.row(probe_row);
        self.gallery.metric().distance(
            g.as_slice().expect("standard layout"),
            p.as_slice().expect("standard layout"),
        )
    }
}

/// Pairs behind a [`PairScores`]: `(gallery row, probe row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairIndex {
    pub genuine: Vec<(usize, usize)>,
    pub impostor: Vec<(usize, usize)>,
}

impl PairIndex {
    /// Every genuine pair of `identities` plus `impostor_pairs` sampled
    /// cross-identity pairs, each against the impostor's first probe.
    pub fn sample(
        identities: &[usize],
        probes_per_identity: usize,
        impostor_pairs: usize,
        seed: u64,
    ) -> Result<Self> {
        if identities.len() < 2 {
            return Err(invalid("pair sampling needs at least 2 identities"));
        }
        let genuine = identities
            .iter()
            .flat_map(|&i| (0..probes_per_identity).map(move |j| (i, i * probes_per_identity + j)))
            .collect();
        let mut rng = rng_from_seed(seed);
        let m = identities.len();
        let impostor = (0..impostor_pairs)
            .map(|_| {
                let a = rng.random_range(0..m);
                let b = (a + rng.random_range(1..m)) % m;
                (identities[a], identities[b] * probes_per_identity)
            })
            .collect();
        Ok(Self { genuine, impostor })
    }

    pub fn scores(&self, view: &ModelView) -> PairScores {
        let d =
            |pairs: &[(usize, usize)]| pairs.iter().map(|&(g, p)| view.distance(g, p)).collect();
        PairScores {
            genuine: d(&self.genuine),
            impostor: d(&self.impostor),
            metric: view.gallery.metric(),
        }
    }
}

/// A seeded identity population seen through one synthetic model.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub population: IdentityPopulation,
    pub model: ModelView,
    /// Pair scores over all identities.
    pub scores: PairScores,
    pub warnings: Vec<String>,
}

fn subspace_for(config: &WorldConfig) -> Array2<f64> {
    orthonormal(
        config.latent_dim,
        config.identity_dim,
        &mut rng_from_seed(derive_seed(config.seed, "subspace")),
    )
}

fn encoder_for(
    config: &WorldConfig,
    subspace: &Array2<f64>,
    index: usize,
) -> Arc<SyntheticEncoder> {
    let seed = derive_seed(config.seed, &format!("encoder/{index}"));
    Arc::new(SyntheticEncoder::new(
        config.encoder_shape(),
        subspace,
        seed,
    ))
}

fn warnings_for(config: &WorldConfig) -> Vec<String> {
    let mut w = Vec::new();
    if config.noiseless() {
        w.push("noise scales are zero: every genuine distance is 0 and the EER is 0".to_string());
    }
    w
}

impl World {
    pub fn identities(&self) -> Vec<usize> {
        (0..self.population.len()).collect()
    }

    /// Pair scores restricted to `identities`; impostors are resampled among
    /// them from a seed tied to the world.
    pub fn pair_scores(&self, identities: &[usize]) -> Result<PairScores> {
        Ok(pair_index(&self.config, identities)?.scores(&self.model))
    }

    pub fn problem(&self, threshold: f64) -> Result<VerificationProblem> {
        self.model.problem(threshold)
    }
}

fn pair_index(config: &WorldConfig, identities: &[usize]) -> Result<PairIndex> {
    let mut key = identities.to_vec();
    key.sort_unstable();
    let digest = crate::seed::checksum(&key.iter().map(|&i| i as f64).collect::<Vec<_>>());
    PairIndex::sample(
        identities,
        config.probes_per_identity,
        config.impostor_pairs,
        derive_seed(config.seed, &format!("impostors/{digest}")),
    )
}

/// Samples a population and encodes it with one model.
pub fn build_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let subspace = subspace_for(config);
    let encoder = encoder_for(config, &subspace, 0);
    let population = IdentityPopulation::sample(config, subspace);
    let model = ModelView::new(encoder, &population, config.metric)?;
    let all: Vec<usize> = (0..population.len()).collect();
    let scores = pair_index(config, &all)?.scores(&model);
    Ok(World {
        config: config.clone(),
        population,
        model,
        scores,
        warnings: warnings_for(config),
    })
}

/// One population seen through two models that share the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedWorld {
    pub config: WorldConfig,
    pub population: IdentityPopulation,
    pub models: [ModelView; 2],
    /// Scores of both models over the same pairs, over all identities.
    pub scores: [PairScores; 2],
    pub warnings: Vec<String>,
}

impl PairedWorld {
    /// Pairs both models on explicit encoders, e.g. the same one twice.
    pub fn from_encoders(
        config: &WorldConfig,
        population: IdentityPopulation,
        a: Arc<SyntheticEncoder>,
        b: Arc<SyntheticEncoder>,
    ) -> Result<Self> {
        let models = [
            ModelView::new(a, &population, config.metric)?,
            ModelView::new(b, &population, config.metric)?,
        ];
        let all: Vec<usize> = (0..population.len()).collect();
        let index = pair_index(config, &all)?;
        let scores = [index.scores(&models[0]), index.scores(&models[1])];
        Ok(Self {
            config: config.clone(),
            population,
            models,
            scores,
            warnings: warnings_for(config),
        })
    }

    /// Aligned pair scores of both models restricted to `identities`.
    pub fn pair_scores(&self, identities: &[usize]) -> Result<[PairScores; 2]> {
        let index = pair_index(&self.config, identities)?;
        Ok([index.scores(&self.models[0]), index.scores(&self.models[1])])
    }

    /// Either model alone, as a [`World`].
    pub fn single(&self, model: usize) -> World {
        World {
            config: self.config.clone(),
            population: self.population.clone(),
            model: self.models[model].clone(),
            scores: self.scores[model].clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Samples a population and encodes it with two independently seeded models.
pub fn paired_world(config: &WorldConfig) -> Result<PairedWorld> {
    config.validate()?;
    let subspace = subspace_for(config);
    let a = encoder_for(config, &subspace, 0);
    let b = encoder_for(config, &subspace, 1);
    let population = IdentityPopulation::sample(config, subspace);
    PairedWorld::from_encoders(config, population, a, b)
}
