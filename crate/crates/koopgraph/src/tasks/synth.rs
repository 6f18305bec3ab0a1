//! Synthetic desk-scale datasets: SBM node classification and diffusion
//! signals for forecasting. All generation flows through named rng streams
//! of the run seed.

use super::nodeclass::NodeClassDataset;
use super::stg::StgDataset;
use crate::dynamics::{rollout, DynamicKind, DynamicSpec};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, sbm_generate};
use crate::kernels::Matrix;
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Gaussian class-mean features: each class gets a random unit direction
/// scaled to 1, plus isotropic noise of the given scale. Rows are then
/// L2-normalized, matching the loader's feature normalization.
pub fn class_mean_features(
    labels: &[usize],
    dim: usize,
    noise: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Matrix {
    let n_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    let mut means = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let nrm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        means.push(raw.into_iter().map(|v| v / nrm).collect::<Vec<f64>>());
    }
    let mut features = Matrix::zeros(labels.len(), dim);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..dim {
            features[(i, j)] = means[c][j] + noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    normalize_rows(&mut features);
    features
}

/// L2 row normalization; zero rows stay zero.
pub fn normalize_rows(features: &mut Matrix) {
    for i in 0..features.rows() {
        let nrm = features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for v in features.row_mut(i) {
                *v /= nrm;
            }
        }
    }
}

/// Planetoid-style split: `per_class_train` training nodes per class, then
/// 30% of the remainder as validation and the rest as test.
pub fn planetoid_split(
    labels: &[usize],
    per_class_train: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);
    let mut train = Vec::new();
    let mut rest = Vec::new();
    let mut taken = vec![0usize; n_classes];
    for &i in &order {
        if taken[labels[i]] < per_class_train {
            taken[labels[i]] += 1;
            train.push(i);
        } else {
            rest.push(i);
        }
    }
    let n_val = (rest.len() * 3) / 10;
    let val = rest[..n_val].to_vec();
    let test = rest[n_val..].to_vec();
    (train, val, test)
}

/// SBM node-classification dataset with Gaussian class-mean features.
pub fn synth_nodeclass(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
    seed: u64,
) -> Result<NodeClassDataset> {
    let mut sbm_rng = rng::stream(seed, "sbm");
    let (graph, labels) = sbm_generate(n, blocks, p_in, p_out, &mut sbm_rng)?;
    // isolated nodes would make the normalized operators degenerate
    let mut degree = vec![0usize; n];
    for &(u, v, _) in graph.edges() {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut edges: Vec<(usize, usize, f64)> = graph.edges().to_vec();
    for i in 0..n {
        if degree[i] == 0 {
            let target = loop {
                let t = sbm_rng.random_range(0..n);
                if t != i {
                    break t;
                }
            };
            edges.push((i.min(target), i.max(target), 1.0));
            degree[i] += 1;
            degree[target] += 1;
        }
    }
    let graph = crate::graph::Graph::new(n, edges, false)?;
    let mut feat_rng = rng::stream(seed, "features");
    let features = class_mean_features(&labels, feature_dim, feature_noise, &mut feat_rng);
    let mut split_rng = rng::stream(seed, "split");
    let per_class = (n / (blocks * 5)).clamp(5, 20);
    let (train_mask, val_mask, test_mask) = planetoid_split(&labels, per_class, &mut split_rng);
    let ds = NodeClassDataset { graph, features, labels, train_mask, val_mask, test_mask };
    ds.validate()?;
    Ok(ds)
}

/// Diffusion signal on a random connected-ish graph: s_{t+1} = A s_t plus
/// optional Gaussian noise, recorded as a T x N matrix.
pub fn synth_stg(
    n: usize,
    t_len: usize,
    lags: usize,
    horizon: usize,
    noise: f64,
    seed: u64,
) -> Result<StgDataset> {
    if t_len <= lags + horizon {
        return Err(Error::Contract(format!(
            "signal length {t_len} must exceed lags {lags} + horizon {horizon}"
        )));
    }
    let mut sbm_rng = rng::stream(seed, "sbm");
    let p = (2.0 * (n as f64).ln() / n as f64).min(0.9);
    let (graph, _) = sbm_generate(n, 1, p, p, &mut sbm_rng)?;
    // connect any isolated node to its neighbor in index order
    let mut degree = vec![0usize; n];
    for &(u, v, _) in graph.edges() {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut edges: Vec<(usize, usize, f64)> = graph.edges().to_vec();
    for i in 0..n {
        if degree[i] == 0 {
            let j = (i + 1) % n;
            edges.push((i.min(j), i.max(j), 1.0));
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    let graph = crate::graph::Graph::new(n, edges, false)?;
    let adj = normalized_adjacency(&graph, false)?;
    let mut sig_rng = rng::stream(seed, "features");
    let s0 = Matrix::from_fn(n, 1, |_, _| sig_rng.random_range(0.5..1.5));
    let spec = DynamicSpec::new(DynamicKind::Gcn, t_len - 1)?;
    let traj = rollout(&spec, &adj, &s0)?;
    let mut signal = Matrix::zeros(t_len, n);
    for (t, state) in traj.states.iter().enumerate() {
        for i in 0..n {
            let eps: f64 = if noise > 0.0 { sig_rng.sample(StandardNormal) } else { 0.0 };
            signal[(t, i)] = state[(i, 0)] + noise * eps;
        }
    }
    StgDataset::new(graph, signal, lags, horizon)
}

/// The frozen quickstart instance: 2-block homophilic SBM on 200 nodes
/// with p_in = 0.1, p_out = 0.01 and weakly informative Gaussian features.
/// Graph filtering denoises these features well past what a logistic model
/// on the raw features can reach.
pub fn sbm_quickstart_dataset(seed: u64) -> Result<NodeClassDataset> {
    synth_nodeclass(200, 2, 0.1, 0.01, 6, 0.6, seed)
}

/// Heterophilic counterpart: edge probabilities reversed.
pub fn sbm_heterophilic_dataset(seed: u64) -> Result<NodeClassDataset> {
    synth_nodeclass(200, 2, 0.01, 0.1, 6, 0.6, seed)
}

/// Rollout depth paired with the quickstart datasets: enough steps for the
/// powers of the adjacency to damp rough feature noise out of the snapshot
/// spectrum.
pub const QUICKSTART_STEPS: usize = 4;
