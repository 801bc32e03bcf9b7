//! Experiment configuration files and the end-to-end train driver shared by
//! the CLI and the acceptance tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::{load_mnist, pianoroll_load, pianoroll_vectorize, split_paths};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pcm::{PcmBackend, PcmParams};
use crate::training::checkpoint::checkpoint_save;
use crate::training::record::config_hash;
use crate::training::{
    bptt_train_with, derive_seed, BackendKind, ClassifyTask, EpochRow, IdealBackend, RunRecord, SequenceTask, Task, TrainConfig,
    WeightBackend,
};
use crate::units::{Network, NetworkSpec};

pub const SEED_TAG_PCM: u64 = 4;

fn d_n_s() -> usize {
    20
}
fn d_n_p() -> usize {
    20
}
fn d_lanes() -> usize {
    100
}
fn d_eval_batch() -> usize {
    32
}
fn d_output() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistData {
    /// Directory holding the four IDX files.
    pub dir: PathBuf,
    #[serde(default = "d_n_s")]
    pub n_s: usize,
    #[serde(default = "d_n_p")]
    pub n_p: usize,
    /// Use only the first `train_limit` training images.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    /// Parallel evaluation streams; each runs without state resets.
    #[serde(default = "d_lanes")]
    pub eval_lanes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PianoRollData {
    pub path: PathBuf,
    #[serde(default = "d_eval_batch")]
    pub eval_batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    Mnist(MnistData),
    PianoRoll(PianoRollData),
}

/// Device parameters used when `train.backend` is `pcm`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub pcm: PcmParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSpec,
    pub data: DataConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "d_output")]
    pub output: PathBuf,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.data {
            DataConfig::Mnist(m) => resolve(base, &mut m.dir),
            DataConfig::PianoRoll(p) => resolve(base, &mut p.path),
        }
        resolve(base, &mut self.output);
    }

    pub fn validate(&self) -> Result<()> {
        self.network.shapes()?;
        self.train.validate()?;
        self.backend.pcm.validate()?;
        match &self.data {
            DataConfig::Mnist(m) => {
                if m.n_s == 0 || m.eval_lanes == 0 {
                    return Err(Error::Config("n_s and eval_lanes must be positive".into()));
                }
            }
            DataConfig::PianoRoll(p) => {
                if p.eval_batch == 0 {
                    return Err(Error::Config("eval_batch must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Effective config with every default materialized.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        config_hash(&self.to_json())
    }
}

/// Loaded dataset bound to its task.
pub enum LoadedTask {
    Classify(ClassifyTask),
    Sequence(SequenceTask),
}

impl LoadedTask {
    pub fn as_task(&self) -> &dyn Task {
        match self {
            LoadedTask::Classify(t) => t,
            LoadedTask::Sequence(t) => t,
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "data file {} not found (run scripts/fetch_data.sh)",
            path.display()
        )))
    }
}

pub fn load_task(cfg: &RunConfig) -> Result<LoadedTask> {
    let features = cfg.network.input.iter().product::<usize>();
    match &cfg.data {
        DataConfig::Mnist(m) => {
            let mut splits = Vec::new();
            for (name, limit) in [("train", m.train_limit), ("test", m.test_limit)] {
                let (img, lbl) = split_paths(&m.dir, name);
                require(&img)?;
                require(&lbl)?;
                let s = load_mnist(&img, &lbl)?;
                splits.push(match limit {
                    Some(n) => s.take(n),
                    None => s,
                });
            }
            let test = splits.pop().expect("two splits");
            let train = splits.pop().expect("two splits");
            let (tr, te) = (train.flat(), test.flat());
            if tr.cols() != features {
                return Err(Error::Config(format!(
                    "network input has {features} features, MNIST images have {}",
                    tr.cols()
                )));
            }
            Ok(LoadedTask::Classify(ClassifyTask {
                train_images: tr,
                train_labels: train.labels,
                test_images: te,
                test_labels: test.labels,
                n_s: m.n_s,
                n_p: m.n_p,
                seed: cfg.train.seed,
                eval_lanes: m.eval_lanes,
            }))
        }
        DataConfig::PianoRoll(p) => {
            require(&p.path)?;
            let ds = pianoroll_load(&p.path)?;
            if ds.features() != features {
                return Err(Error::Config(format!(
                    "network input has {features} features, the piano roll has {}",
                    ds.features()
                )));
            }
            let mut task = SequenceTask::new(
                pianoroll_vectorize(&ds, "train")?,
                pianoroll_vectorize(&ds, "valid")?,
                pianoroll_vectorize(&ds, "test")?,
                cfg.train.bptt_window,
            );
            task.eval_batch = p.eval_batch;
            Ok(LoadedTask::Sequence(task))
        }
    }
}

pub struct RunOutcome {
    pub network: Network,
    pub record: RunRecord,
    pub pcm: Option<PcmBackend>,
    pub task: LoadedTask,
}

impl RunOutcome {
    pub fn final_metric(&self) -> f64 {
        self.record.last().map_or(f64::NAN, |r| r.metric)
    }
}

/// Trains the configured network. With `out`, per-epoch PCM histograms are
/// written there while training runs.
pub fn run_experiment(cfg: &RunConfig, out: Option<&Path>, exec: Exec) -> Result<RunOutcome> {
    run_experiment_with(cfg, out, exec, &mut |_| {})
}

/// [`run_experiment`] reporting each epoch row to `on_epoch`.
pub fn run_experiment_with(
    cfg: &RunConfig,
    out: Option<&Path>,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<RunOutcome> {
    cfg.validate()?;
    let task = load_task(cfg)?;
    let seed = cfg.train.seed;
    let mut net = Network::new(cfg.network.clone(), seed)?;
    let mut record = RunRecord::new(seed, cfg.hash(), task.as_task().metric_name());
    let mut pcm = None;
    match cfg.train.backend {
        BackendKind::Ideal => {
            bptt_train_with(&mut net, task.as_task(), &cfg.train, &mut IdealBackend, &mut record, exec, on_epoch)?;
        }
        BackendKind::Pcm => {
            let mut b = PcmBackend::new(&net, cfg.backend.pcm.clone(), derive_seed(seed, SEED_TAG_PCM, 0))?;
            if let Some(dir) = out {
                b = b.with_dump_dir(dir);
            }
            bptt_train_with(&mut net, task.as_task(), &cfg.train, &mut b, &mut record, exec, on_epoch)?;
            b.prepare(&mut net)?;
            pcm = Some(b);
        }
    }
    Ok(RunOutcome {
        network: net,
        record,
        pcm,
        task,
    })
}

/// Writes `run.json`, `curve.csv`, `model.ckpt` and, for PCM runs,
/// `crossbar_{layer}.pcm`.
pub fn write_outputs(cfg: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let run = dir.join("run.json");
    std::fs::write(&run, cfg.to_json() + "\n").map_err(|e| Error::io(&run, e))?;
    outcome.record.write_csv(&dir.join("curve.csv"))?;
    checkpoint_save(&outcome.network, cfg.train.seed, &dir.join("model.ckpt"))?;
    if let Some(b) = &outcome.pcm {
        b.save_crossbars(dir)?;
    }
    Ok(())
}
