//! Link prediction with the spectral-filter model as encoder and a
//! dot-product decoder: score(u, v) = sigmoid(<z_u, z_v>).

use super::{modes_from_pipeline, DmdSummary, EpochRecord, ModelConfig};
use crate::dmd::{ModeKind, Truncation};
use crate::dynamics::DynamicSpec;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels::Matrix;
use crate::model::{
    loss_and_grad, model_backward, model_forward, AdamState, DmdGnnModel, LossKind, Targets,
};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct LinkPredDataset {
    /// The original graph; encoders only ever see the train-edge subgraph.
    pub graph: Graph,
    pub features: Matrix,
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    /// Frozen negatives, count-matched per split.
    pub train_neg: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Uniform rejection sampling of non-edges. Retries are capped at
/// 100 x count; graphs dense enough to exhaust that are an error.
pub fn sample_negatives(
    n: usize,
    forbidden: &HashSet<(usize, usize)>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    let mut attempts = 0usize;
    let cap = 100 * count.max(1);
    while out.len() < count {
        attempts += 1;
        if attempts > cap {
            return Err(Error::SamplingExhausted(format!(
                "found {} of {count} negatives after {cap} attempts",
                out.len()
            )));
        }
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let e = canonical(u, v);
        if forbidden.contains(&e) || seen.contains(&e) {
            continue;
        }
        seen.insert(e);
        out.push(e);
    }
    Ok(out)
}

impl LinkPredDataset {
    /// Split edges 85/5/10 into train/val/test and sample count-matched
    /// frozen negatives for each split. Negatives never collide with any
    /// true edge of the full graph.
    pub fn build(graph: Graph, features: Matrix, seed: u64) -> Result<Self> {
        if graph.directed() {
            return Err(Error::Contract("link prediction expects an undirected graph".into()));
        }
        let n = graph.n();
        if features.rows() != n {
            return Err(Error::Contract("feature rows must match node count".into()));
        }
        let mut edges: Vec<(usize, usize)> =
            graph.edges().iter().map(|&(u, v, _)| canonical(u, v)).collect();
        if edges.len() < 10 {
            return Err(Error::Contract("need at least 10 edges to split".into()));
        }
        let mut split_rng = rng::stream(seed, "edgesplit");
        edges.shuffle(&mut split_rng);
        let n_val = (edges.len() as f64 * 0.05).round() as usize;
        let n_test = (edges.len() as f64 * 0.10).round() as usize;
        let val_pos = edges[..n_val].to_vec();
        let test_pos = edges[n_val..n_val + n_test].to_vec();
        let train_pos = edges[n_val + n_test..].to_vec();

        let all_edges: HashSet<(usize, usize)> = edges.iter().copied().collect();
        let mut neg_rng = rng::stream(seed, "negsample");
        let train_neg = sample_negatives(n, &all_edges, train_pos.len(), &mut neg_rng)?;
        let val_neg = sample_negatives(n, &all_edges, val_pos.len(), &mut neg_rng)?;
        let test_neg = sample_negatives(n, &all_edges, test_pos.len(), &mut neg_rng)?;
        Ok(LinkPredDataset { graph, features, train_pos, val_pos, test_pos, train_neg, val_neg, test_neg })
    }

    /// Graph containing only training edges; what the encoder may see.
    pub fn train_graph(&self) -> Result<Graph> {
        Graph::new(
            self.graph.n(),
            self.train_pos.iter().map(|&(u, v)| (u, v, 1.0)).collect(),
            false,
        )
    }
}

#[derive(Debug)]
pub struct LinkPredOutcome {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub dmd: DmdSummary,
    pub model: DmdGnnModel,
}

/// Dot-product scores for the given pairs.
fn pair_logits(z: &Matrix, pairs: &[(usize, usize)]) -> Matrix {
    Matrix::from_fn(pairs.len(), 1, |i, _| {
        let (u, v) = pairs[i];
        crate::kernels::dot(z.row(u), z.row(v))
    })
}

fn pair_accuracy(z: &Matrix, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> f64 {
    // sigmoid(s) > 0.5 iff s > 0
    let hits = pos.iter().filter(|&&(u, v)| crate::kernels::dot(z.row(u), z.row(v)) > 0.0).count()
        + neg.iter().filter(|&&(u, v)| crate::kernels::dot(z.row(u), z.row(v)) <= 0.0).count();
    hits as f64 / (pos.len() + neg.len()) as f64
}

/// Train the encoder with BCE over balanced positive/negative edges.
/// Training negatives are resampled every epoch; validation and test
/// negatives stay frozen in the dataset.
pub fn run_link_prediction(
    dataset: &LinkPredDataset,
    dynamic: &DynamicSpec,
    trunc: Truncation,
    model_cfg: &ModelConfig,
    seed: u64,
) -> Result<LinkPredOutcome> {
    model_cfg.train.validate()?;
    let train_graph = dataset.train_graph()?;
    let (modes, dmd_summary) = modes_from_pipeline(
        &train_graph,
        &dataset.features,
        dynamic,
        trunc,
        ModeKind::Projected,
        None,
    )?;
    let emb_dim = model_cfg.train.hidden_dim;
    let mut init_rng = rng::stream(seed, "init");
    let mut model = DmdGnnModel::new(
        model_cfg.arch,
        modes,
        dataset.features.cols(),
        model_cfg.train.hidden_dim,
        emb_dim,
        model_cfg.train.dropout,
        &mut init_rng,
    )?;

    let all_edges: HashSet<(usize, usize)> = dataset
        .graph
        .edges()
        .iter()
        .map(|&(u, v, _)| canonical(u, v))
        .collect();
    let sizes: Vec<usize> = model.params().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(&sizes, model_cfg.train.lr, model_cfg.train.weight_decay);
    let mut dropout_rng = rng::stream(seed, "dropout");
    let mut neg_rng = rng::stream(seed, "negsample-train");

    let mut history = Vec::with_capacity(model_cfg.train.epochs);
    let mut best: Option<(f64, usize, DmdGnnModel)> = None;
    for epoch in 0..model_cfg.train.epochs {
        let epoch_neg =
            sample_negatives(dataset.graph.n(), &all_edges, dataset.train_pos.len(), &mut neg_rng)?;
        let cache = model_forward(&model, &dataset.features, true, &mut dropout_rng)?;
        let z = &cache.logits;
        let pairs: Vec<(usize, usize)> =
            dataset.train_pos.iter().chain(&epoch_neg).copied().collect();
        let logits = pair_logits(z, &pairs);
        let targets = Matrix::from_fn(pairs.len(), 1, |i, _| {
            if i < dataset.train_pos.len() {
                1.0
            } else {
                0.0
            }
        });
        let (loss, grad_scores) =
            loss_and_grad(LossKind::Bce, &logits, &Targets::Values(&targets), None)?;
        // d score(u,v) / d z_u = z_v and vice versa
        let mut grad_z = Matrix::zeros(z.rows(), z.cols());
        for (i, &(u, v)) in pairs.iter().enumerate() {
            let g = grad_scores[(i, 0)];
            for j in 0..z.cols() {
                grad_z[(u, j)] += g * z[(v, j)];
                grad_z[(v, j)] += g * z[(u, j)];
            }
        }
        let grads = model_backward(&model, &cache, &grad_z);
        let mask = model.decay_mask();
        let gt: Vec<&[f64]> = grads.tensors();
        let mut pt = model.params_mut();
        adam.step(&mut pt, &gt, &mask);

        let mut eval_rng = rng::stream(seed, "unused");
        let z_eval = model_forward(&model, &dataset.features, false, &mut eval_rng)?.logits;
        let val_acc = pair_accuracy(&z_eval, &dataset.val_pos, &dataset.val_neg);
        let test_acc = pair_accuracy(&z_eval, &dataset.test_pos, &dataset.test_neg);
        history.push(EpochRecord { epoch, train_loss: loss, val_metric: val_acc, test_metric: test_acc });
        let improved = best.as_ref().map_or(true, |(b, _, _)| val_acc > *b);
        if improved {
            best = Some((val_acc, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    let mut eval_rng = rng::stream(seed, "unused");
    let z = model_forward(&best_model, &dataset.features, false, &mut eval_rng)?.logits;
    Ok(LinkPredOutcome {
        train_accuracy: pair_accuracy(&z, &dataset.train_pos, &dataset.train_neg),
        val_accuracy: pair_accuracy(&z, &dataset.val_pos, &dataset.val_neg),
        test_accuracy: pair_accuracy(&z, &dataset.test_pos, &dataset.test_neg),
        best_epoch,
        history,
        dmd: dmd_summary,
        model: best_model,
    })
}

/// Perfectly clustered graph: k dense clusters, features indicating the
/// cluster. Inner products separate intra- from inter-cluster pairs by
/// construction, so a trained encoder should saturate.
pub fn clustered_dataset(clusters: usize, size: usize, seed: u64) -> Result<LinkPredDataset> {
    let n = clusters * size;
    let mut edges = Vec::new();
    for c in 0..clusters {
        for a in 0..size {
            for b in (a + 1)..size {
                edges.push((c * size + a, c * size + b));
            }
        }
    }
    // one bridging edge per consecutive cluster pair keeps it connected
    for c in 0..clusters.saturating_sub(1) {
        edges.push((c * size, (c + 1) * size));
    }
    let graph = Graph::undirected(n, &edges)?;
    let mut feat_rng = rng::stream(seed, "features");
    let features = Matrix::from_fn(n, clusters + 2, |i, j| {
        if j < clusters {
            if i / size == j {
                1.0
            } else {
                0.0
            }
        } else {
            0.05 * feat_rng.random_range(-1.0..1.0)
        }
    });
    LinkPredDataset::build(graph, features, seed)
}
