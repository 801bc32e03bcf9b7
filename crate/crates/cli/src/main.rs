use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snu::encoding::cache::save_stream;
use snu::encoding::rate_encode_lanes;
use snu::run::{load_task, run_experiment_with, write_outputs, DataConfig, LoadedTask, RunConfig};
use snu::training::checkpoint::checkpoint_load;
use snu::training::gradcheck::DEFAULT_STEP;
use snu::training::{derive_seed, evaluate_sequence, gradcheck, BackendKind, ToyProblem};
use snu::units::{enumerate_params, lif_equivalence_check, param_count, snu_params, LayerKind, Network};
use snu::{Error, Exec};

const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "snu", version, about = "Train and check spiking neural unit networks")]
struct Cli {
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write run.json, curve.csv and model.ckpt.
    Train(TrainArgs),
    /// Run a correctness check.
    Check {
        #[command(subcommand)]
        kind: CheckKind,
    },
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Rate-encode an MNIST split into a spike-stream cache file.
    Encode(EncodeArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Overrides the number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Ideal,
    Pcm,
}

#[derive(Subcommand)]
enum CheckKind {
    /// BPTT gradients against central finite differences on a random toy
    /// problem.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// SNU spike trains against the LIF oracle on random neurons.
    Lifcheck {
        #[arg(long, default_value_t = 100)]
        neurons: usize,
        #[arg(long, default_value_t = 10)]
        inputs: usize,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-layer parameter counts against enumeration.
    Paramcount {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Classify,
    ClassifyStream,
    Sequence,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: EvalMode,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Check(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        Error::Config(_)
        | Error::Io { .. }
        | Error::Json(_)
        | Error::Format { .. }
        | Error::Length { .. }
        | Error::Data(_)
        | Error::Container(_)
        | Error::LayerShape { .. }
        | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match cli.command {
        Command::Train(a) => train(a, exec),
        Command::Check { kind } => check(kind, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Encode(a) => encode(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn train(a: TrainArgs, exec: Exec) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(out) = a.out {
        cfg.output = std::path::absolute(&out).unwrap_or(out);
    }
    if let Some(b) = a.backend {
        cfg.train.backend = match b {
            Backend::Ideal => BackendKind::Ideal,
            Backend::Pcm => BackendKind::Pcm,
        };
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let out = cfg.output.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let outcome = run_experiment_with(&cfg, Some(&out), exec, &mut |r| {
        eprintln!(
            "epoch {:>3}  train {:.4}  valid {:.4}  metric {:.4}",
            r.epoch, r.train_loss, r.valid_loss, r.metric
        );
    })?;
    write_outputs(&cfg, &outcome, &out)?;
    println!(
        "{} = {} after {} epochs; outputs in {}",
        outcome.record.metric_name,
        outcome.final_metric(),
        outcome.record.rows.len(),
        out.display()
    );
    Ok(())
}

fn check(kind: CheckKind, exec: Exec) -> Result<(), Failure> {
    match kind {
        CheckKind::Gradcheck {
            config,
            batch,
            steps,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let net = Network::new(cfg.network.clone(), cfg.train.seed)?;
            let spiking = net.spec.layers.iter().any(|l| matches!(l.kind, LayerKind::Snu | LayerKind::ConvSnu));
            if spiking {
                eprintln!("note: step units use the tanh surrogate, finite differences see the true step");
            }
            let toy = ToyProblem::random(&net, batch, steps, seed);
            let r = gradcheck(&net, |g, n, b| toy.loss(g, n, b), DEFAULT_STEP, exec)?;
            let worst = r.worst.map(|(id, i)| format!("{id}[{i}]")).unwrap_or_default();
            println!(
                "checked {} parameters, max relative error {:.3e} at {worst}",
                r.checked, r.max_rel_error
            );
            if r.max_rel_error > GRADCHECK_TOLERANCE {
                return Err(Failure::Check(format!(
                    "max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
                    r.max_rel_error
                )));
            }
            Ok(())
        }
        CheckKind::Lifcheck {
            neurons,
            inputs,
            steps,
            seed,
        } => {
            let r = lif_equivalence_check(neurons, inputs, steps, seed, exec)?;
            println!(
                "{} neurons x {} steps, {} oracle spikes, {} mismatches",
                r.neurons, r.steps, r.spikes, r.mismatches
            );
            match r.first_divergence {
                Some((n, t)) => Err(Failure::Check(format!("neuron {n} first diverges at step {t}"))),
                None => Ok(()),
            }
        }
        CheckKind::Paramcount { config } => {
            let cfg = RunConfig::load(&config)?;
            let counts = param_count(&cfg.network)?;
            let net = Network::new(cfg.network.clone(), 0)?;
            let enumerated = enumerate_params(&net);
            println!("layer kind           inputs  units   params  enumerated  synaptic");
            let mut ok = true;
            for (c, &e) in counts.iter().zip(&enumerated) {
                let kind = serde_json::to_value(c.kind).ok().and_then(|v| v.as_str().map(String::from));
                println!(
                    "{:>5} {:<14} {:>6} {:>6} {:>8} {:>11} {:>9}",
                    c.layer,
                    kind.unwrap_or_default(),
                    c.inputs,
                    c.units,
                    c.params,
                    e,
                    c.synaptic
                );
                if c.kind == LayerKind::Snu && c.params != snu_params(c.inputs, c.units) {
                    println!("      note: per-unit decay adds {} parameters to (m+1)n", c.units);
                }
                ok &= c.params == e;
            }
            let synaptic: usize = counts.iter().map(|c| c.synaptic).sum();
            let total: usize = counts.iter().map(|c| c.params).sum();
            println!("total {total} parameters, {synaptic} synaptic weights, {} PCM devices", 2 * synaptic);
            if ok {
                Ok(())
            } else {
                Err(Failure::Check("formula and enumeration disagree".into()))
            }
        }
    }
}

fn eval(a: EvalArgs, exec: Exec) -> Result<(), Failure> {
    let cfg = RunConfig::load(&a.config)?;
    let (net, _) = checkpoint_load(&a.checkpoint, Some(&cfg.network))?;
    match (a.mode, load_task(&cfg)?) {
        (EvalMode::Sequence, LoadedTask::Sequence(t)) => {
            let (nll, frames) = evaluate_sequence(&net, &t.test, t.eval_batch, exec)?;
            println!("test mean frame NLL {nll:.6} over {frames} frames");
        }
        (EvalMode::Classify, LoadedTask::Classify(t)) => {
            let r = t.evaluate_with_pause(&net, t.n_p, exec)?;
            println!("accuracy {:.4} (n_s = {}, n_p = {}, {} samples)", r.accuracy, t.n_s, t.n_p, r.samples);
        }
        (EvalMode::ClassifyStream, LoadedTask::Classify(t)) => {
            let r = t.evaluate_with_pause(&net, 0, exec)?;
            println!("accuracy {:.4} (n_s = {}, n_p = 0, continuous stream, {} samples)", r.accuracy, t.n_s, r.samples);
        }
        _ => {
            return Err(Error::Config("eval mode does not match the data kind in the config".into()).into());
        }
    }
    Ok(())
}

fn encode(a: EncodeArgs, exec: Exec) -> Result<(), Failure> {
    let cfg = RunConfig::load(&a.config)?;
    let DataConfig::Mnist(m) = &cfg.data else {
        return Err(Error::Config("encode needs an mnist data section".into()).into());
    };
    let LoadedTask::Classify(t) = load_task(&cfg)? else {
        unreachable!("mnist data loads a classification task")
    };
    let (images, index) = match a.split.as_str() {
        "train" => (&t.train_images, 0),
        "test" => (&t.test_images, 1),
        other => return Err(Error::Config(format!("unknown split {other}")).into()),
    };
    let stream = rate_encode_lanes(exec, images, m.eval_lanes, m.n_s, m.n_p, derive_seed(cfg.train.seed, 5, index))?;
    save_stream(&a.out, &stream, cfg.train.seed)?;
    let [time, lanes, f] = stream.shape();
    println!("wrote {time} x {lanes} x {f} spikes to {}", a.out.display());
    Ok(())
}
