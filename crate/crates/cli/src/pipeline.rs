//! Stage orchestration: dataset generation, model training, agent training,
//! evaluation, and diagnostics, all rooted in a per-run directory named by
//! the config hash and seed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use midl_core::agent::{load_agent, save_agent, train_iteration, AgentBundle, AgentSnapshot};
use midl_core::dataset::OfflineDataset;
use midl_core::ensemble::{train_ensemble, GaussianEnsemble};
use midl_core::toy::{generate_toy_dataset, toy_step};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::RunConfig;

pub const RUN_DIR_ENV: &str = "MIDL_RL_RUN_DIR";

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &'static str, err: impl std::fmt::Display) -> Self {
        StageError {
            stage,
            message: err.to_string(),
        }
    }
}

/// Output root: --out flag beats MIDL_RL_RUN_DIR beats ./runs.
pub fn output_root(out_flag: Option<&Path>) -> PathBuf {
    if let Some(p) = out_flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var(RUN_DIR_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("runs")
}

/// `<root>/<config-hash>-s<seed>`; distinct seeds never share a directory.
pub fn run_dir(root: &Path, config: &RunConfig) -> PathBuf {
    root.join(format!("{:016x}-s{}", config.content_hash(), config.seed))
}

pub struct RunPaths {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub agent: PathBuf,
    pub metrics: PathBuf,
    pub eval: PathBuf,
    pub diagnostics: PathBuf,
}

impl RunPaths {
    pub fn new(dir: PathBuf) -> Self {
        RunPaths {
            config: dir.join("config.toml"),
            dataset: dir.join("dataset.txt"),
            model: dir.join("model.ckpt"),
            agent: dir.join("agent.ckpt"),
            metrics: dir.join("metrics.jsonl"),
            eval: dir.join("eval.json"),
            diagnostics: dir.join("diagnostics"),
            dir,
        }
    }

    pub fn prepare(&self, config: &RunConfig) -> Result<(), StageError> {
        fs::create_dir_all(&self.dir).map_err(|e| StageError::new("setup", e))?;
        fs::write(&self.config, config.to_toml()).map_err(|e| StageError::new("setup", e))
    }
}

pub fn gen_data(config: &RunConfig, paths: &RunPaths) -> Result<OfflineDataset, StageError> {
    let dataset = generate_toy_dataset(&config.toy_spec(), config.seed);
    dataset
        .save(&paths.dataset)
        .map_err(|e| StageError::new("gen-data", e))?;
    Ok(dataset)
}

pub fn train_model(config: &RunConfig, paths: &RunPaths) -> Result<GaussianEnsemble, StageError> {
    let dataset =
        OfflineDataset::load(&paths.dataset).map_err(|e| StageError::new("train-model", e))?;
    let ensemble = train_ensemble(&dataset, &config.model_config(), config.seed ^ MODEL_SEED_SALT)
        .map_err(|e| StageError::new("train-model", e))?;
    ensemble
        .save(&paths.model)
        .map_err(|e| StageError::new("train-model", e))?;
    Ok(ensemble)
}

const MODEL_SEED_SALT: u64 = 0x00d1_5eed_0000_0001;
const AGENT_SEED_SALT: u64 = 0x00d1_5eed_0000_0002;
const EVAL_SEED_SALT: u64 = 0x00d1_5eed_0000_0003;

pub fn train_agent(config: &RunConfig, paths: &RunPaths) -> Result<(), StageError> {
    let stage = "train-agent";
    let dataset = OfflineDataset::load(&paths.dataset).map_err(|e| StageError::new(stage, e))?;
    let ensemble = GaussianEnsemble::load(&paths.model).map_err(|e| StageError::new(stage, e))?;
    let agent_config = config.agent_config();
    let ratio_config = config.ratio_config();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ AGENT_SEED_SALT);
    let mut bundle = AgentBundle::new(
        dataset.state_dim(),
        vec![-1.0; dataset.action_dim()],
        vec![1.0; dataset.action_dim()],
        &agent_config,
        &ratio_config,
        &mut rng,
    );
    let metrics_file = fs::File::create(&paths.metrics).map_err(|e| StageError::new(stage, e))?;
    let mut metrics = std::io::BufWriter::new(metrics_file);
    for i in 0..config.iterations {
        let record = train_iteration(&mut bundle, &dataset, &ensemble, &agent_config, &mut rng)
            .map_err(|e| {
                // preserve the metrics written so far and the current nets
                let _ = save_agent(&bundle, &paths.agent);
                StageError::new(stage, format!("iteration {i}: {e}"))
            })?;
        let line = serde_json::to_string(&record).map_err(|e| StageError::new(stage, e))?;
        metrics
            .write_all(line.as_bytes())
            .and_then(|_| metrics.write_all(b"\n"))
            .map_err(|e| StageError::new(stage, e))?;
        if config.checkpoint_period > 0 && (i + 1) % config.checkpoint_period == 0 {
            save_agent(&bundle, &paths.agent).map_err(|e| StageError::new(stage, e))?;
        }
    }
    metrics.flush().map_err(|e| StageError::new(stage, e))?;
    save_agent(&bundle, &paths.agent).map_err(|e| StageError::new(stage, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Mean-action evaluation on the benchmark task: `episodes` single-step
/// episodes with s0 ~ U[0, 1].
pub fn evaluate_snapshot(
    snapshot: &AgentSnapshot,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, StageError> {
    let stage = "evaluate";
    if episodes == 0 {
        return Err(StageError::new(stage, "episode count must be positive"));
    }
    if snapshot.actor.state_dim() != 1 || snapshot.actor.action_dim() != 1 {
        return Err(StageError::new(
            stage,
            format!(
                "checkpoint dimensions (s={}, a={}) do not match the 1-D benchmark task",
                snapshot.actor.state_dim(),
                snapshot.actor.action_dim()
            ),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ EVAL_SEED_SALT);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let s0: f64 = rng.random_range(0.0..1.0);
        let states = Array2::from_elem((1, 1), s0);
        let action = snapshot.actor.mean_actions(states.view())[[0, 0]];
        let transition = toy_step(s0, action, &mut rng).map_err(|e| StageError::new(stage, e))?;
        returns.push(transition.reward);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / episodes as f64;
    Ok(EvalReport {
        episodes,
        mean_return: mean,
        std_return: var.sqrt(),
    })
}

pub fn evaluate(config: &RunConfig, paths: &RunPaths) -> Result<EvalReport, StageError> {
    let snapshot = load_agent(&paths.agent).map_err(|e| StageError::new("evaluate", e))?;
    let report = evaluate_snapshot(&snapshot, config.evaluate.episodes, config.seed)?;
    let blob = serde_json::to_vec_pretty(&report).map_err(|e| StageError::new("evaluate", e))?;
    fs::write(&paths.eval, blob).map_err(|e| StageError::new("evaluate", e))?;
    Ok(report)
}

/// gen-data -> train-model -> train-agent -> evaluate -> plot.
pub fn full_run(config: &RunConfig, paths: &RunPaths) -> Result<EvalReport, StageError> {
    paths.prepare(config)?;
    gen_data(config, paths)?;
    train_model(config, paths)?;
    train_agent(config, paths)?;
    let report = evaluate(config, paths)?;
    crate::diagnostics::emit_diagnostics(config, paths)?;
    Ok(report)
}
