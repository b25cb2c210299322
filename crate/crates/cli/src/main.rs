mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypertype::corpus::synth::{synth_dataset, SynthSpec};
use hypertype::corpus::{Dataset, DatasetPaths, Split};
use hypertype::graphbuild::GraphVariant;
use hypertype::manifold::Model;
use hypertype::trainer::{prepare_graph, Checkpoint, Config, Trainer};
use hypertype::typer::{write_predictions, ScoreSpace};

#[derive(Parser)]
#[command(name = "hypertype", version, about = "Hierarchical entity typing in hyperbolic space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a CSV log.
    Train {
        #[command(flatten)]
        setup: Setup,
        /// Output directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a split with a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Write JSON-lines predictions here.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Build the mention graph and save it.
    BuildGraph {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        branching: Option<usize>,
        #[arg(long)]
        mentions: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dataset and graph statistics.
    Stats {
        #[command(flatten)]
        setup: Setup,
    },
    /// Label norms, per-label scores and the effect of graph smoothing.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
}

/// Config file plus command-line overrides.
#[derive(Args)]
struct Setup {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory laid out as written by `synth`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    manifold: Option<Model>,
    #[arg(long)]
    graph_variant: Option<GraphVariant>,
    #[arg(long)]
    score_space: Option<ScoreSpace>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(r: hypertype::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn runtime<T>(r: hypertype::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::Runtime(e.to_string()))
}

fn dataset_dir(dir: &Path) -> DatasetPaths {
    let mut p = DatasetPaths::in_dir(dir);
    for v in [&mut p.dev, &mut p.test, &mut p.train_vectors, &mut p.dev_vectors, &mut p.test_vectors] {
        if v.as_ref().is_some_and(|f| !f.exists()) {
            *v = None;
        }
    }
    p
}

impl Setup {
    fn config(&self) -> Outcome<Config> {
        let mut c = match &self.config {
            Some(p) => usage(Config::load(p))?,
            None => Config::default(),
        };
        if let Some(d) = &self.corpus {
            c.corpus = dataset_dir(d);
        }
        if let Some(s) = self.seed {
            c.trainer.seed = s;
        }
        if let Some(m) = self.manifold {
            c.manifold.model = m;
        }
        if let Some(v) = self.graph_variant {
            c.graph.variant = v;
        }
        if let Some(s) = self.score_space {
            c.score.space = s;
        }
        if let Some(l) = self.layers {
            c.stage2.layers = l;
        }
        if let Some(d) = self.delta {
            c.graph.delta = d;
        }
        if let Some(e) = self.epochs {
            c.trainer.epochs = e;
        }
        usage(c.validate())?;
        Ok(c)
    }
}

fn load_dataset(paths: &DatasetPaths) -> Outcome<Dataset> {
    usage(Dataset::load(paths))
}

fn write_text(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_train(setup: &Setup, out: &Path, resume: Option<&Path>) -> Outcome<()> {
    let config = setup.config()?;
    let dataset = load_dataset(&config.corpus)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let graph = runtime(prepare_graph(&config, &dataset))?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = usage(Checkpoint::load(p))?;
            let mut t = usage(Trainer::resume(ck, &dataset, &graph))?;
            t.set_epochs(config.trainer.epochs);
            t
        }
        None => usage(Trainer::new(config, &dataset, &graph))?,
    };
    let resolved = trainer.config().to_toml();
    println!("{resolved}");
    write_text(&out.join("config.toml"), &resolved)?;
    let log = out.join("log.csv");
    let ck = out.join("checkpoint.json");
    runtime(trainer.train(Some(&log), Some(&ck)))?;
    if trainer.progress().history.is_empty() {
        runtime(trainer.checkpoint().save(&ck))?;
        runtime(hypertype::trainer::write_log(&log, &[]))?;
    }
    for h in &trainer.progress().history {
        match h.dev {
            Some(d) => println!(
                "epoch {:>3}  loss {:.4}  dev strict {:.4}  macro {:.4}  micro {:.4}",
                h.epoch, h.loss, d.strict, d.macro_f1, d.micro_f1
            ),
            None => println!("epoch {:>3}  loss {:.4}", h.epoch, h.loss),
        }
    }
    println!("checkpoint: {}", ck.display());
    println!("log: {}", log.display());
    Ok(())
}

/// Reloads a checkpoint with its dataset and graph.
fn restore(checkpoint: &Path, corpus: Option<&Path>) -> Outcome<(Checkpoint, Dataset)> {
    let mut ck = usage(Checkpoint::load(checkpoint))?;
    if let Some(d) = corpus {
        ck.config.corpus = dataset_dir(d);
    }
    let dataset = load_dataset(&ck.config.corpus)?;
    Ok((ck, dataset))
}

fn cmd_eval(checkpoint: &Path, corpus: Option<&Path>, split: Split, predictions: Option<&Path>) -> Outcome<()> {
    let (ck, dataset) = restore(checkpoint, corpus)?;
    let graph = runtime(prepare_graph(&ck.config, &dataset))?;
    let trainer = usage(Trainer::resume(ck, &dataset, &graph))?;
    let ev = runtime(trainer.evaluate(split))?;
    let m = ev.metrics;
    println!("split {}  mentions {}", split.name(), ev.items.len());
    println!("strict {}  macro_f1 {}  micro_f1 {}", m.strict, m.macro_f1, m.micro_f1);
    if let Some(p) = predictions {
        runtime(write_predictions(p, &ev.predictions(&dataset.hierarchy)))?;
        println!("predictions: {}", p.display());
    }
    Ok(())
}

fn cmd_build_graph(setup: &Setup, out: &Path) -> Outcome<()> {
    let mut config = setup.config()?;
    config.graph.path = None;
    let dataset = load_dataset(&config.corpus)?;
    let graph = runtime(prepare_graph(&config, &dataset))?;
    runtime(graph.save(out))?;
    println!(
        "{} graph: {} nodes, {} edges (delta {})",
        graph.variant,
        graph.n,
        graph.edge_count(),
        graph.delta
    );
    Ok(())
}

fn cmd_synth(spec: SynthSpec, out: &Path) -> Outcome<()> {
    let dataset = usage(synth_dataset(&spec))?;
    runtime(dataset.save_dir(out))?;
    println!(
        "{} types, {} train / {} dev / {} test mentions in {}",
        dataset.hierarchy.len(),
        dataset.train.mention_count(),
        dataset.dev.mention_count(),
        dataset.test.mention_count(),
        out.display()
    );
    Ok(())
}

fn cmd_stats(setup: &Setup) -> Outcome<()> {
    let config = setup.config()?;
    let dataset = load_dataset(&config.corpus)?;
    print!("{}", report::dataset_stats(&dataset));
    let graph = runtime(prepare_graph(&config, &dataset))?;
    print!("{}", report::graph_stats(&graph));
    Ok(())
}

fn cmd_report(checkpoint: &Path, corpus: Option<&Path>, split: Split) -> Outcome<()> {
    let (ck, dataset) = restore(checkpoint, corpus)?;
    let graph = runtime(prepare_graph(&ck.config, &dataset))?;
    let trainer = usage(Trainer::resume(ck, &dataset, &graph))?;
    let text = runtime(report::render(&trainer, &dataset, split))?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Train { setup, out, resume } => cmd_train(&setup, &out, resume.as_deref()),
        Command::Eval { checkpoint, corpus, split, predictions } => {
            cmd_eval(&checkpoint, corpus.as_deref(), split, predictions.as_deref())
        }
        Command::BuildGraph { setup, out } => cmd_build_graph(&setup, &out),
        Command::Synth { out, depth, branching, mentions, noise, seed } => {
            let d = SynthSpec::default();
            let spec = SynthSpec {
                depth: depth.unwrap_or(d.depth),
                branching: branching.unwrap_or(d.branching),
                mentions: mentions.unwrap_or(d.mentions),
                noise: noise.unwrap_or(d.noise),
                seed: seed.unwrap_or(d.seed),
                ..d
            };
            cmd_synth(spec, &out)
        }
        Command::Stats { setup } => cmd_stats(&setup),
        Command::Report { checkpoint, corpus, split } => cmd_report(&checkpoint, corpus.as_deref(), split),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
