//! Multi-view ensemble: one encoder and one network per view, combined by
//! plurality vote.

use serde::{Deserialize, Serialize};

use crate::encoder::{
    expanded_len, make_projection, poly_expand, EncodingPipeline, ProjectionStrategy, ScalerStats,
    DEFAULT_LDA_RATIO,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};
use crate::network::{Network, NetworkConfig, TrainLog};
use crate::perm::{argsort_desc, footrule, Permutation};
use crate::rng::SeededRng;

/// How a raw feature vector becomes a permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Encoder {
    Projected(EncodingPipeline),
    /// Argsort of the raw features, no expansion or projection.
    NativeRank { input_dim: usize },
}

impl Encoder {
    pub fn encode(&self, x: &[f64]) -> Result<Permutation> {
        match self {
            Encoder::Projected(p) => p.encode(x),
            Encoder::NativeRank { input_dim } => {
                if x.len() != *input_dim {
                    return Err(Error::VocabMismatch {
                        left: x.len(),
                        right: *input_dim,
                    });
                }
                native_rank_encode(x)
            }
        }
    }

    pub fn output_vocab(&self) -> usize {
        match self {
            Encoder::Projected(p) => p.embed_dim(),
            Encoder::NativeRank { input_dim } => *input_dim,
        }
    }

    pub fn strategy(&self) -> Option<ProjectionStrategy> {
        match self {
            Encoder::Projected(p) => Some(p.projection.strategy),
            Encoder::NativeRank { .. } => None,
        }
    }
}

/// Descending argsort of the raw features.
pub fn native_rank_encode(x: &[f64]) -> Result<Permutation> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "native rank encoding needs at least 2 features".into(),
        ));
    }
    argsort_desc(x)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingKind {
    #[default]
    Projected,
    NativeRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub views: usize,
    pub strategy_cycle: Vec<ProjectionStrategy>,
    pub embed_dim: usize,
    pub poly_degree: usize,
    pub lda_ratio: f64,
    pub encoding: EncodingKind,
    pub network: NetworkConfig,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            views: 7,
            strategy_cycle: default_cycle(),
            embed_dim: 32,
            poly_degree: 2,
            lda_ratio: DEFAULT_LDA_RATIO,
            encoding: EncodingKind::Projected,
            network: NetworkConfig::default(),
            seed: 42,
        }
    }
}

pub fn default_cycle() -> Vec<ProjectionStrategy> {
    vec![
        ProjectionStrategy::TargetAware,
        ProjectionStrategy::Random,
        ProjectionStrategy::Calibrated,
    ]
}

impl EnsembleConfig {
    pub fn strategy_for(&self, view: usize) -> ProjectionStrategy {
        self.strategy_cycle[view % self.strategy_cycle.len()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::InvalidArgument("need at least one view".into()));
        }
        if self.strategy_cycle.is_empty() {
            return Err(Error::InvalidArgument("strategy cycle is empty".into()));
        }
        if self.encoding == EncodingKind::Projected && self.embed_dim < 2 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 2".into()));
        }
        if self.poly_degree == 0 {
            return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
        }
        self.network.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub encoder: Encoder,
    pub network: Network,
}

impl View {
    pub fn encode(&self, x: &[f64]) -> Result<Permutation> {
        self.encoder.encode(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    pub views: Vec<View>,
}

/// The preprocessing every projected view shares: expansion and scaler.
fn shared_features(
    config: &EnsembleConfig,
    train_x: &[Vec<f64>],
) -> Result<(ScalerStats, Vec<Vec<f64>>)> {
    let expanded = train_x
        .iter()
        .map(|x| poly_expand(x, config.poly_degree))
        .collect::<Result<Vec<_>>>()?;
    let scaler = ScalerStats::fit(&expanded)?;
    let scaled = expanded.iter().map(|r| scaler.apply(r)).collect();
    Ok((scaler, scaled))
}

/// Builds view `k`'s encoder. Views share expansion and scaler; the
/// projection is drawn from the view's own stream.
fn view_encoder(
    config: &EnsembleConfig,
    k: usize,
    input_dim: usize,
    shared: Option<&(ScalerStats, Vec<Vec<f64>>)>,
    train_y: &[usize],
    rng: &mut SeededRng,
) -> Result<Encoder> {
    match config.encoding {
        EncodingKind::NativeRank => Ok(Encoder::NativeRank { input_dim }),
        EncodingKind::Projected => {
            let (scaler, scaled) = shared.expect("projected views need shared features");
            let expanded = expanded_len(input_dim, config.poly_degree);
            let projection = make_projection(
                config.strategy_for(k),
                expanded,
                config.embed_dim,
                Some(scaled),
                Some(train_y),
                config.lda_ratio,
                rng,
            )?;
            Ok(Encoder::Projected(EncodingPipeline::new(
                input_dim,
                config.poly_degree,
                scaler.clone(),
                projection,
            )?))
        }
    }
}

fn check_training_set(train_x: &[Vec<f64>], train_y: &[usize], classes: usize) -> Result<usize> {
    if train_x.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if train_x.len() != train_y.len() {
        return Err(Error::Data("feature/label count mismatch".into()));
    }
    let d = train_x[0].len();
    if train_x.iter().any(|r| r.len() != d) {
        return Err(Error::Data("ragged feature rows".into()));
    }
    if let Some(y) = train_y.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("label {y} >= class count {classes}")));
    }
    Ok(d)
}

/// Fits every view's encoder and trains its network. View `k` draws from
/// `SeededRng::new(seed ^ k)`, so the result does not depend on `mode`.
pub fn build_ensemble(
    config: &EnsembleConfig,
    train_x: &[Vec<f64>],
    train_y: &[usize],
    mode: Parallelism,
) -> Result<(EnsembleModel, Vec<TrainLog>)> {
    config.validate()?;
    let d = check_training_set(train_x, train_y, config.network.classes)?;
    let shared = match config.encoding {
        EncodingKind::Projected => Some(shared_features(config, train_x)?),
        EncodingKind::NativeRank => None,
    };
    let built = map_indexed(config.views, mode, |k| -> Result<(View, TrainLog)> {
        let mut rng = SeededRng::new(config.seed ^ k as u64);
        let encoder = view_encoder(config, k, d, shared.as_ref(), train_y, &mut rng)?;
        let data = train_x
            .iter()
            .zip(train_y)
            .map(|(x, &y)| Ok((encoder.encode(x)?, y)))
            .collect::<Result<Vec<_>>>()?;
        let mut network = Network::new(encoder.output_vocab(), config.network.clone(), &mut rng)?;
        let log = network.train(&data, &mut rng, None)?;
        Ok((View { encoder, network }, log))
    });
    let mut views = Vec::with_capacity(config.views);
    let mut logs = Vec::with_capacity(config.views);
    for item in built {
        let (view, log) = item?;
        views.push(view);
        logs.push(log);
    }
    Ok((
        EnsembleModel {
            config: config.clone(),
            views,
        },
        logs,
    ))
}

/// The encoders `build_ensemble` would fit, without training any network.
pub fn fit_encoders(config: &EnsembleConfig, train_x: &[Vec<f64>], train_y: &[usize]) -> Result<Vec<Encoder>> {
    config.validate()?;
    let d = check_training_set(train_x, train_y, config.network.classes)?;
    let shared = match config.encoding {
        EncodingKind::Projected => Some(shared_features(config, train_x)?),
        EncodingKind::NativeRank => None,
    };
    (0..config.views)
        .map(|k| {
            let mut rng = SeededRng::new(config.seed ^ k as u64);
            view_encoder(config, k, d, shared.as_ref(), train_y, &mut rng)
        })
        .collect()
}

/// Per-view vote plus the view's class distances normalized by the output
/// vocabulary's footrule diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewVote {
    pub class: usize,
    pub normalized_distances: Vec<f64>,
}

/// Plurality vote. Ties go to the tied class with the smallest summed
/// normalized distance, then to the smaller class-id.
pub fn combine_votes(votes: &[ViewVote], classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    let mut sums = vec![0.0f64; classes];
    for v in votes {
        counts[v.class] += 1;
        for (s, d) in sums.iter_mut().zip(&v.normalized_distances) {
            *s += d;
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    (0..classes)
        .filter(|&c| counts[c] == best)
        .min_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(a.cmp(&b)))
        .unwrap_or(0)
}

impl EnsembleModel {
    pub fn classes(&self) -> usize {
        self.config.network.classes
    }

    pub fn view_vote(&self, k: usize, x: &[f64]) -> Result<ViewVote> {
        let view = &self.views[k];
        let trace = view.network.forward(&view.encode(x)?)?;
        let vocab = view.network.output_layer().vocab();
        let diameter = ((vocab * vocab) / 2).max(1) as f64;
        Ok(ViewVote {
            class: trace.predicted(),
            normalized_distances: trace.class_distances().iter().map(|d| d / diameter).collect(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let votes = (0..self.views.len())
            .map(|k| self.view_vote(k, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine_votes(&votes, self.classes()))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>], mode: Parallelism) -> Result<Vec<usize>> {
        map_indexed(xs.len(), mode, |i| self.predict(&xs[i]))
            .into_iter()
            .collect()
    }

    pub fn error_rate(&self, xs: &[Vec<f64>], ys: &[usize], mode: Parallelism) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::Empty("evaluation data"));
        }
        let pred = self.predict_batch(xs, mode)?;
        Ok(error_fraction(&pred, ys))
    }
}

pub fn error_fraction(predicted: &[usize], truth: &[usize]) -> f64 {
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    wrong as f64 / truth.len().max(1) as f64
}

/// k-nearest-neighbour classification by footrule over one view's encoded
/// training set. Majority over neighbours; ties go to the smaller summed
/// neighbour distance, then the smaller class-id.
pub fn knn_permutation_baseline(
    train: &[Permutation],
    labels: &[usize],
    query: &Permutation,
    k_neighbors: usize,
) -> Result<usize> {
    Ok(knn_vote(train, labels, query, k_neighbors)?.0)
}

fn knn_vote(
    train: &[Permutation],
    labels: &[usize],
    query: &Permutation,
    k_neighbors: usize,
) -> Result<(usize, f64)> {
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be >= 1".into()));
    }
    if k_neighbors > train.len() {
        return Err(Error::InvalidArgument(format!(
            "k_neighbors {k_neighbors} exceeds {} training samples",
            train.len()
        )));
    }
    if train.len() != labels.len() {
        return Err(Error::Data("sample/label count mismatch".into()));
    }
    let mut dist = train
        .iter()
        .enumerate()
        .map(|(i, t)| Ok((footrule(query, t)?, i)))
        .collect::<Result<Vec<_>>>()?;
    dist.sort_unstable();
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; classes];
    let mut sums = vec![0u64; classes];
    for &(d, i) in &dist[..k_neighbors] {
        counts[labels[i]] += 1;
        sums[labels[i]] += d;
    }
    let best = *counts.iter().max().expect("non-empty");
    let class = (0..classes)
        .filter(|&c| counts[c] == best)
        .min_by_key(|&c| (sums[c], c))
        .expect("some class has the max count");
    Ok((class, sums[class] as f64 / counts[class] as f64))
}

/// kNN over the same encoders as a trained ensemble: each view votes with its
/// own nearest neighbours and the views are combined like the ensemble.
#[derive(Debug, Clone)]
pub struct KnnEnsemble {
    encoders: Vec<Encoder>,
    train: Vec<Vec<Permutation>>,
    labels: Vec<usize>,
    classes: usize,
    pub k_neighbors: usize,
}

impl KnnEnsemble {
    pub fn from_model(
        model: &EnsembleModel,
        train_x: &[Vec<f64>],
        train_y: &[usize],
        k_neighbors: usize,
    ) -> Result<Self> {
        let encoders: Vec<Encoder> = model.views.iter().map(|v| v.encoder.clone()).collect();
        let train = encoders
            .iter()
            .map(|e| train_x.iter().map(|x| e.encode(x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            encoders,
            train,
            labels: train_y.to_vec(),
            classes: model.classes(),
            k_neighbors,
        })
    }

    pub fn views(&self) -> usize {
        self.encoders.len()
    }

    /// Prediction from the first `views` views only.
    pub fn predict_with(&self, x: &[f64], views: usize) -> Result<usize> {
        let votes = (0..views.min(self.views()))
            .map(|k| {
                let q = self.encoders[k].encode(x)?;
                let (class, mean) = knn_vote(&self.train[k], &self.labels, &q, self.k_neighbors)?;
                let vocab = q.len();
                let diameter = ((vocab * vocab) / 2).max(1) as f64;
                let mut normalized = vec![f64::INFINITY; self.classes];
                normalized[class] = mean / diameter;
                Ok(ViewVote {
                    class,
                    normalized_distances: normalized,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(combine_votes(&votes, self.classes))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.predict_with(x, self.views())
    }

    pub fn error_rate(&self, xs: &[Vec<f64>], ys: &[usize], views: usize, mode: Parallelism) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::Empty("evaluation data"));
        }
        let pred = map_indexed(xs.len(), mode, |i| self.predict_with(&xs[i], views))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(error_fraction(&pred, ys))
    }
}

/// kNN ensemble error divided by the trained ensemble's error.
pub fn learning_gain(knn_error: f64, model_error: f64) -> f64 {
    if model_error == 0.0 {
        if knn_error == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        knn_error / model_error
    }
}
