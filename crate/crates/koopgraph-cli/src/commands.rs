//! Subcommand implementations and run orchestration.

use crate::{Cli, Command};
use koopgraph::config::{load_dataset, DatasetKind, DatasetManifest, RunConfig, TaskDataset};
use koopgraph::dmd::{dmd_fit, PidmdConstraint};
use koopgraph::dynamics::{rollout, snapshots_from_trajectory};
use koopgraph::error::Error;
use koopgraph::graph::normalized_adjacency;
use koopgraph::io;
use koopgraph::kernels::Matrix;
use koopgraph::model::{grad_check, Arch, DmdGnnModel, LossKind, Targets};
use koopgraph::tasks::synth::{synth_nodeclass, synth_stg, QUICKSTART_STEPS};
use koopgraph::tasks::{
    run_link_prediction, run_node_classification, run_stg_forecast, schrodinger_demo,
    SchrodingerSetup,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub(crate) enum CliError {
    Lock(PathBuf),
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CmdResult = Result<(), CliError>;

/// Holds the lock file for an output directory; removed on drop.
struct OutDirLock {
    path: PathBuf,
}

impl OutDirLock {
    fn acquire(out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::Lib(Error::io(out.display().to_string(), e)))?;
        let path = out.join(".koopgraph.lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutDirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Lock(path))
            }
            Err(e) => Err(CliError::Lib(Error::io(path.display().to_string(), e))),
        }
    }
}

impl Drop for OutDirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn require<'a, T>(opt: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    opt.as_ref().ok_or_else(|| CliError::Usage(format!("--{what} is required for this command")))
}

pub(crate) fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::DmdFit => cmd_dmd_fit(cli),
        Command::Train { task } => cmd_train(cli, task),
        Command::DemoSchrodinger {
            n,
            x0,
            dt,
            steps,
            k,
            sigma,
            constraint,
            rollout_steps,
        } => cmd_demo_schrodinger(cli, *n, *x0, *dt, *steps, *k, *sigma, constraint, *rollout_steps),
        Command::GenSynth {
            task,
            n,
            blocks,
            p_in,
            p_out,
            feature_dim,
            noise,
            t_len,
            lags,
            horizon,
        } => cmd_gen_synth(
            cli,
            task,
            *n,
            *blocks,
            *p_in,
            *p_out,
            *feature_dim,
            *noise,
            *t_len,
            *lags,
            *horizon,
        ),
        Command::GradCheck { arch, tolerance } => cmd_grad_check(cli, arch, *tolerance),
    }
}

fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf, u64), CliError> {
    let config_path = require(&cli.config, "config")?;
    let cfg = RunConfig::load(config_path)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    Ok((cfg, config_path.clone(), seed))
}

/// Snapshot pair for the configured dataset: a dynamics rollout from node
/// features for the graph tasks, consecutive signal transitions for STG.
fn snapshot_pair_for(
    cfg: &RunConfig,
    dataset: &TaskDataset,
) -> Result<koopgraph::dynamics::SnapshotPair, Error> {
    match dataset {
        TaskDataset::NodeClass(ds) => {
            let adj = normalized_adjacency(&ds.graph, false)?;
            let traj = rollout(&cfg.dynamic, &adj, &ds.features)?;
            snapshots_from_trajectory(&traj)
        }
        TaskDataset::LinkPred(ds) => {
            let train_graph = ds.train_graph()?;
            let adj = normalized_adjacency(&train_graph, false)?;
            let traj = rollout(&cfg.dynamic, &adj, &ds.features)?;
            snapshots_from_trajectory(&traj)
        }
        TaskDataset::Stg(ds) => {
            let n = ds.graph.n();
            let t = ds.signal.rows();
            let x = Matrix::from_fn(n, t - 1, |i, s| ds.signal[(s, i)]);
            let y = Matrix::from_fn(n, t - 1, |i, s| ds.signal[(s + 1, i)]);
            koopgraph::dynamics::SnapshotPair::new(x, y)
        }
    }
}

fn cmd_dmd_fit(cli: &Cli) -> CmdResult {
    let (cfg, config_path, seed) = load_config(cli)?;
    let out = require(&cli.out, "out")?.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let manifest_path = cfg.manifest_path(&config_path);
    let manifest = DatasetManifest::load(&manifest_path)?;
    let dataset = load_dataset(&manifest_path, &manifest, seed)?;
    let pair = snapshot_pair_for(&cfg, &dataset)?;
    let fit = dmd_fit(&pair, cfg.dmd.truncation()?, cfg.dmd.mode_kind)?;
    io::write_dmd_bundle(&out, &fit)?;
    if !cli.quiet {
        println!("rank: {}", fit.rank);
        println!("energy: {:.6}", fit.energy_captured);
        println!("top eigenvalues:");
        for l in fit.eigenvalues.iter().take(10) {
            println!("  {:+.6} {:+.6}i  (|.| = {:.6})", l.re, l.im, l.norm());
        }
        for w in &fit.warnings {
            println!("warning: {w}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    task: String,
    seed: u64,
    best_epoch: usize,
    dmd_rank: usize,
    dmd_energy: f64,
    train_metric: f64,
    val_metric: f64,
    test_metric: f64,
    /// What the metric measures: accuracy for the classification tasks,
    /// standardized mse for forecasting.
    metric: String,
}

fn cmd_train(cli: &Cli, task: &str) -> CmdResult {
    let (cfg, config_path, seed) = load_config(cli)?;
    let out = require(&cli.out, "out")?.clone();
    let _lock = OutDirLock::acquire(&out)?;
    let manifest_path = cfg.manifest_path(&config_path);
    let manifest = DatasetManifest::load(&manifest_path)?;
    let dataset = load_dataset(&manifest_path, &manifest, seed)?;
    let model_cfg = cfg.model_config();
    let trunc = cfg.dmd.truncation()?;

    let expected_kind = match task {
        "nodeclass" => DatasetKind::Nodeclass,
        "linkpred" => DatasetKind::Linkpred,
        "stg" => DatasetKind::Stg,
        other => return Err(CliError::Usage(format!("unknown task {other:?}"))),
    };
    if manifest.kind != expected_kind {
        return Err(CliError::Usage(format!(
            "task {task:?} does not match the manifest's dataset kind"
        )));
    }

    let mut jsonl = io::JsonlWriter::create(&out.join("metrics.jsonl"))?;
    let (summary, history, model) = match (&dataset, task) {
        (TaskDataset::NodeClass(ds), _) => {
            let outcome = run_node_classification(
                ds,
                &cfg.dynamic,
                trunc,
                &model_cfg,
                cfg.dmd.constraint.filter(|c| *c != PidmdConstraint::None),
                seed,
            )?;
            (
                TrainSummary {
                    task: task.into(),
                    seed,
                    best_epoch: outcome.best_epoch,
                    dmd_rank: outcome.dmd.rank,
                    dmd_energy: outcome.dmd.energy_captured,
                    train_metric: outcome.train.accuracy,
                    val_metric: outcome.val.accuracy,
                    test_metric: outcome.test.accuracy,
                    metric: "accuracy".into(),
                },
                outcome.history,
                outcome.model,
            )
        }
        (TaskDataset::LinkPred(ds), _) => {
            let outcome = run_link_prediction(ds, &cfg.dynamic, trunc, &model_cfg, seed)?;
            (
                TrainSummary {
                    task: task.into(),
                    seed,
                    best_epoch: outcome.best_epoch,
                    dmd_rank: outcome.dmd.rank,
                    dmd_energy: outcome.dmd.energy_captured,
                    train_metric: outcome.train_accuracy,
                    val_metric: outcome.val_accuracy,
                    test_metric: outcome.test_accuracy,
                    metric: "accuracy".into(),
                },
                outcome.history,
                outcome.model,
            )
        }
        (TaskDataset::Stg(ds), _) => {
            let outcome = run_stg_forecast(ds, trunc, &model_cfg, seed)?;
            (
                TrainSummary {
                    task: task.into(),
                    seed,
                    best_epoch: model_cfg.train.epochs - 1,
                    dmd_rank: outcome.dmd.rank,
                    dmd_energy: outcome.dmd.energy_captured,
                    train_metric: outcome.train_mse,
                    val_metric: f64::NAN,
                    test_metric: outcome.test_mse,
                    metric: "standardized_mse".into(),
                },
                outcome.history,
                outcome.model,
            )
        }
    };
    for record in &history {
        jsonl.write(record)?;
    }
    jsonl.write(&summary)?;
    io::write_checkpoint(&out.join("checkpoint"), &model)?;
    io::write_json(&out.join("summary.json"), &summary)?;
    if !cli.quiet {
        println!(
            "task={} seed={} best_epoch={} rank={} test_{}={:.6}",
            summary.task, summary.seed, summary.best_epoch, summary.dmd_rank, summary.metric,
            summary.test_metric
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_demo_schrodinger(
    cli: &Cli,
    n: usize,
    x0: f64,
    dt: f64,
    steps: usize,
    k: f64,
    sigma: f64,
    constraint: &str,
    rollout_steps: usize,
) -> CmdResult {
    let constraint = match constraint {
        "orthogonal" => PidmdConstraint::Orthogonal,
        "symmetric" => PidmdConstraint::Symmetric,
        other => return Err(CliError::Usage(format!("unknown constraint {other:?}"))),
    };
    if steps == 0 {
        return Err(CliError::Usage("--steps must be >= 1".into()));
    }
    let setup = SchrodingerSetup {
        n_nodes: n,
        x0,
        dt,
        steps,
        hbar: 1.0,
        mass: 1.0,
        wavenumber: k,
        sigma,
        constraint,
        rollout_steps,
    };
    let outcome = schrodinger_demo(&setup)?;
    let report = &outcome.report;
    println!("constraint: {:?}", report.constraint);
    println!("truth_norm_drift: {:.3e}", report.truth_norm_drift);
    println!("dmd_onestep_err: {:.3e}", report.dmd_onestep_err);
    println!("pidmd_rollout_err: {:.3e}", report.pidmd_rollout_err);
    println!("pidmd_norm_drift: {:.3e}", report.pidmd_norm_drift);
    if let Some(out) = &cli.out {
        let _lock = OutDirLock::acquire(out)?;
        io::write_kgrf(&out.join("truth.kgrf"), &outcome.truth)?;
        io::write_kgrf(&out.join("pidmd_recon.kgrf"), &outcome.pidmd_recon)?;
        io::write_json(&out.join("report.json"), report)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_synth(
    cli: &Cli,
    task: &str,
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    noise: f64,
    t_len: usize,
    lags: usize,
    horizon: usize,
) -> CmdResult {
    let out = require(&cli.out, "out")?.clone();
    let seed = cli.seed.unwrap_or(0);
    let _lock = OutDirLock::acquire(&out)?;
    match task {
        "nodeclass" => {
            let ds = synth_nodeclass(n, blocks, p_in, p_out, feature_dim, noise, seed)?;
            let mut edges = String::from("# src\tdst\tweight\n");
            for &(u, v, w) in ds.graph.edges() {
                edges.push_str(&format!("{u}\t{v}\t{w}\n"));
            }
            std::fs::write(out.join("edges.tsv"), edges)
                .map_err(|e| Error::io("edges.tsv", e))?;
            io::write_csv_matrix(&out.join("features.csv"), &ds.features)?;
            let labels: String =
                ds.labels.iter().map(|l| format!("{l}\n")).collect::<Vec<_>>().join("");
            std::fs::write(out.join("labels.txt"), labels)
                .map_err(|e| Error::io("labels.txt", e))?;
            io::write_json(
                &out.join("splits.json"),
                &io::SplitFile {
                    train: ds.train_mask.clone(),
                    val: ds.val_mask.clone(),
                    test: ds.test_mask.clone(),
                },
            )?;
            let manifest = serde_json::json!({
                "kind": "nodeclass",
                "edges": "edges.tsv",
                "features": "features.csv",
                "labels": "labels.txt",
                "splits": "splits.json",
                "directed": false,
                "normalize_features": false,
                "normalize_adjacency": true,
                "n_nodes": n,
            });
            io::write_json(&out.join("manifest.json"), &manifest)?;
            let config = serde_json::json!({
                "dataset": "manifest.json",
                "dynamic": {"kind": "gcn", "steps": QUICKSTART_STEPS},
                "dmd": {"xi": 0.85},
                "model": {"arch": "standard", "hidden_dim": 16},
                "train": {"lr": 0.02, "weight_decay": 0.0005, "dropout": 0.3, "epochs": 200, "loss": "ce"},
                "seed": seed,
            });
            io::write_json(&out.join("config.json"), &config)?;
        }
        "stg" => {
            let ds = synth_stg(n, t_len, lags, horizon, noise * 0.05, seed)?;
            let mut edges = String::from("# src\tdst\tweight\n");
            for &(u, v, w) in ds.graph.edges() {
                edges.push_str(&format!("{u}\t{v}\t{w}\n"));
            }
            std::fs::write(out.join("edges.tsv"), edges)
                .map_err(|e| Error::io("edges.tsv", e))?;
            io::write_csv_matrix(&out.join("signal.csv"), &ds.signal)?;
            let manifest = serde_json::json!({
                "kind": "stg",
                "edges": "edges.tsv",
                "signal": "signal.csv",
                "directed": false,
                "normalize_features": false,
                "normalize_adjacency": true,
                "stg": {"lags": lags, "horizon": horizon},
                "n_nodes": n,
            });
            io::write_json(&out.join("manifest.json"), &manifest)?;
            let config = serde_json::json!({
                "dataset": "manifest.json",
                "dynamic": {"kind": "gcn", "steps": 1},
                "dmd": {"xi": null},
                "model": {"arch": "conv_first", "hidden_dim": 32},
                "train": {"lr": 0.005, "weight_decay": 0.0, "dropout": 0.0, "epochs": 60, "loss": "mse"},
                "seed": seed,
            });
            io::write_json(&out.join("config.json"), &config)?;
        }
        other => return Err(CliError::Usage(format!("unknown synthetic task {other:?}"))),
    }
    if !cli.quiet {
        println!("wrote {task} dataset to {}", out.display());
    }
    Ok(())
}

fn cmd_grad_check(cli: &Cli, arch: &str, tolerance: f64) -> CmdResult {
    let archs: Vec<Arch> = match arch {
        "standard" => vec![Arch::Standard],
        "conv_first" => vec![Arch::ConvFirst],
        "both" => vec![Arch::Standard, Arch::ConvFirst],
        other => return Err(CliError::Usage(format!("unknown arch {other:?}"))),
    };
    let seed = cli.seed.unwrap_or(0);
    let mut rng = koopgraph::rng::stream(seed, "init");
    let mut all_pass = true;
    for arch in archs {
        use rand::Rng;
        let n = 12;
        let modes = koopgraph::kernels::orthonormal_basis(&Matrix::from_fn(n, 4, |_, _| {
            rng.random_range(-1.0..1.0)
        }))?;
        let model = DmdGnnModel::new(arch, modes, 5, 6, 3, 0.0, &mut rng)?;
        let features = Matrix::from_fn(n, 5, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let report = grad_check(
            &model,
            &features,
            LossKind::Ce,
            &Targets::Classes(&labels),
            None,
            tolerance,
        )?;
        if !cli.quiet {
            for (name, err) in &report.per_tensor {
                println!("{arch:?} {name}: max rel error {err:.3e}");
            }
        }
        println!(
            "{arch:?}: {} (max {:.3e} vs tolerance {:.1e})",
            if report.pass { "PASS" } else { "FAIL" },
            report.max_rel_error,
            tolerance
        );
        all_pass &= report.pass;
    }
    if !all_pass {
        return Err(CliError::Lib(Error::Numerical(
            "gradient check exceeded tolerance".into(),
        )));
    }
    Ok(())
}
