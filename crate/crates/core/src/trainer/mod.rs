//! Joint training of the encoder, the refinement layers and the label table.

mod adam;
mod checkpoint;
mod config;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{Config, ManifoldConfig, Stage2Config, TrainerConfig};

use crate::autodiff::{gradient_check, GradCheck, ParamStore, Tape, Var};
use crate::corpus::{Dataset, MentionRef, Split, TypeHierarchy};
use crate::encoder::{build_vocabs, Embeddings, Encoder, Vocab};
use crate::error::{Error, Result};
use crate::graphbuild::{graph_for_dataset, source_vectors, split_offset, MentionGraph, NormalizedGraph};
use crate::hyperlayer::{Chart, StageTwo};
use crate::typer::{self, mention_loss, LabelTable, Metrics, Prediction, ScoreConfig};

type Rows = [Vec<(usize, f64)>];

/// The model: encoder, refinement stack and label table bound to one store.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub encoder: Encoder,
    pub stage2: StageTwo,
    pub labels: LabelTable,
    pub chart: Chart,
    pub score: ScoreConfig,
}

impl Pipeline {
    fn dims(config: &Config, d0: usize) -> Vec<usize> {
        let d = config.stage2.dim.unwrap_or(d0);
        std::iter::once(d0).chain(std::iter::repeat_n(d, config.stage2.layers)).collect()
    }

    /// Registers fresh parameters in `store`.
    pub fn init<R: Rng>(
        config: &Config,
        chars: Vocab,
        words: Vocab,
        extra: usize,
        n_types: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let chart = Chart::new(config.manifold.model, config.curvature()?);
        let encoder = Encoder::new(config.encoder.clone(), chars, words, extra, store, rng)?;
        let dims = Self::dims(config, encoder.output_dim());
        let stage2 = StageTwo::new(chart, config.stage2.base, &dims, config.stage2.init_scale, store, rng)?;
        let label_dim = config.score.label_dim(chart.model, *dims.last().expect("nonempty"));
        let labels = LabelTable::new(n_types, label_dim, config.trainer.label_init_scale, store, rng)?;
        Ok(Pipeline { encoder, stage2, labels, chart, score: config.score.clone() })
    }

    /// Binds to parameters already in `store`.
    pub fn bind(
        config: &Config,
        chars: Vocab,
        words: Vocab,
        extra: usize,
        n_types: usize,
        store: &ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let chart = Chart::new(config.manifold.model, config.curvature()?);
        let encoder = Encoder::from_store(config.encoder.clone(), chars, words, extra, store)?;
        let dims = Self::dims(config, encoder.output_dim());
        let stage2 = StageTwo::from_store(chart, config.stage2.base, &dims, store)?;
        let label_dim = config.score.label_dim(chart.model, *dims.last().expect("nonempty"));
        let labels = LabelTable::from_store(n_types, label_dim, store)?;
        Ok(Pipeline { encoder, stage2, labels, chart, score: config.score.clone() })
    }

    /// Score vectors of `targets` on the tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        nodes: &[MentionRef<'_>],
        rows: &Rows,
        targets: &[usize],
    ) -> Result<Vec<Var>> {
        check_rows(nodes, rows)?;
        let sets = self.stage2.receptive_sets(rows, targets);
        let mut points = vec![None; nodes.len()];
        for &j in &sets[0] {
            let x = self.encoder.encode(tape, nodes[j])?;
            points[j] = Some(self.chart.exp0(tape, x)?);
        }
        let out = self.stage2.forward(tape, points, rows, &sets)?;
        Ok(targets
            .iter()
            .map(|&i| {
                let rep = self.score.rep(tape, &self.chart, out[i].expect("target computed"));
                self.labels.scores(tape, rep)
            })
            .collect())
    }

    /// Summed hinge loss of `targets`.
    pub fn loss(&self, tape: &mut Tape, nodes: &[MentionRef<'_>], rows: &Rows, targets: &[usize]) -> Result<Var> {
        let scores = self.forward(tape, nodes, rows, targets)?;
        let losses: Vec<Var> = targets
            .iter()
            .zip(scores)
            .map(|(&i, s)| mention_loss(tape, s, &nodes[i].record.labels, nodes[i].record.is_clean))
            .collect();
        Ok(tape.sum(&losses))
    }

    /// Score vectors of `targets` without keeping a graph of the whole
    /// computation; each node is evaluated on its own short tape.
    pub fn infer(
        &self,
        store: &ParamStore,
        nodes: &[MentionRef<'_>],
        rows: &Rows,
        targets: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        check_rows(nodes, rows)?;
        let c = self.chart;
        let sets = self.stage2.receptive_sets(rows, targets);
        let mut points: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        for &j in &sets[0] {
            let mut tape = Tape::new(store);
            let x = self.encoder.encode(&mut tape, nodes[j])?;
            let p = c.exp0(&mut tape, x)?;
            points[j] = Some(tape.value(p).to_vec());
        }
        for (l, layer) in self.stage2.layers.iter().enumerate() {
            let mut moved: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; nodes.len()];
            for &j in &sets[l] {
                let mut tape = Tape::new(store);
                let p = tape.input(points[j].take().expect("input point"));
                let h = c.linear(&mut tape, p, layer.w)?;
                let b = tape.param(layer.b);
                let t = c.bias_add(&mut tape, h, b)?;
                let v = c.log0(&mut tape, t);
                moved[j] = Some((tape.value(t).to_vec(), tape.value(v).to_vec()));
            }
            let mut next = vec![None; nodes.len()];
            for &i in &sets[l + 1] {
                let mut tape = Tape::new(store);
                let terms: Vec<(Var, f64)> = rows[i]
                    .iter()
                    .map(|&(j, w)| (tape.input(moved[j].as_ref().expect("moved").1.clone()), w))
                    .collect();
                let base = match self.stage2.base {
                    crate::hyperlayer::AggregationBase::Origin => None,
                    crate::hyperlayer::AggregationBase::SelfPoint => {
                        let t = moved[i]
                            .as_ref()
                            .ok_or_else(|| Error::InvalidArgument(format!("node {i} lacks a self-loop")))?;
                        Some(tape.input(t.0.clone()))
                    }
                };
                let y = c.aggregate(&mut tape, &terms, base)?;
                let z = c.activate(&mut tape, y)?;
                next[i] = Some(tape.value(z).to_vec());
            }
            points = next;
        }
        targets
            .iter()
            .map(|&i| {
                let mut tape = Tape::new(store);
                let z = tape.input(points[i].clone().expect("target computed"));
                let rep = self.score.rep(&mut tape, &c, z);
                let s = self.labels.scores(&mut tape, rep);
                Ok(tape.value(s).to_vec())
            })
            .collect()
    }
}

fn check_rows(nodes: &[MentionRef<'_>], rows: &Rows) -> Result<()> {
    if rows.len() != nodes.len() {
        return Err(Error::InvalidArgument(format!(
            "graph has {} nodes but the dataset has {} mentions",
            rows.len(),
            nodes.len()
        )));
    }
    Ok(())
}

/// Keeps the self-loop plus at most `k` random neighbours per row for every
/// node within `depth` hops of `targets`; kept weights are renormalized.
/// Rows outside the receptive field are left empty.
pub fn sample_rows<R: Rng>(full: &Rows, targets: &[usize], depth: usize, k: usize, rng: &mut R) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); full.len()];
    let mut done = vec![false; full.len()];
    let mut frontier: Vec<usize> = targets.to_vec();
    for _ in 0..depth {
        let mut next = Vec::new();
        for &i in &frontier {
            if done[i] {
                continue;
            }
            done[i] = true;
            let others: Vec<(usize, f64)> = full[i].iter().copied().filter(|&(j, _)| j != i).collect();
            let mut row: Vec<(usize, f64)> = full[i].iter().copied().filter(|&(j, _)| j == i).collect();
            if others.len() <= k {
                row.extend(others);
            } else {
                row.extend(rand::seq::index::sample(rng, others.len(), k).into_iter().map(|t| others[t]));
            }
            row.sort_by_key(|&(j, _)| j);
            let total: f64 = row.iter().map(|&(_, w)| w).sum();
            if total > 0.0 {
                row.iter_mut().for_each(|(_, w)| *w /= total);
            }
            next.extend(row.iter().map(|&(j, _)| j));
            rows[i] = row;
        }
        frontier = next;
    }
    rows
}

/// RNG for epoch `epoch` (0-based); initialization uses stream 0.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Dev metrics, absent without a dev split.
    pub dev: Option<Metrics>,
}

pub const LOG_HEADER: &str = "epoch,loss,strict,macro_f1,micro_f1";

pub fn write_log(path: &Path, history: &[EpochLog]) -> Result<()> {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for h in history {
        let m = |f: fn(&Metrics) -> f64| h.dev.as_ref().map_or(String::new(), |d| format!("{:.6}", f(d)));
        out.push_str(&format!(
            "{},{:.6},{},{},{}\n",
            h.epoch,
            h.loss,
            m(|d| d.strict),
            m(|d| d.macro_f1),
            m(|d| d.micro_f1)
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Evaluation of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub split: Split,
    pub metrics: Metrics,
    /// `(node, gold, predicted, scores)` in node order.
    pub items: Vec<EvalItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub node: usize,
    pub sentence: usize,
    pub mention: usize,
    pub gold: Vec<usize>,
    pub predicted: Vec<usize>,
    pub scores: Vec<f64>,
}

impl Evaluation {
    pub fn predictions(&self, hierarchy: &TypeHierarchy) -> Vec<Prediction> {
        let names = |ts: &[usize]| ts.iter().map(|&t| hierarchy.path(t).to_string()).collect();
        self.items
            .iter()
            .map(|it| Prediction {
                sentence: it.sentence,
                mention: it.mention,
                gold: names(&it.gold),
                predicted: names(&it.predicted),
                scores: it.scores.clone(),
            })
            .collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[usize], &[usize])> {
        self.items.iter().map(|it| (&it.gold[..], &it.predicted[..]))
    }
}

/// Training progress that survives a checkpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Progress {
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub best_dev: Option<f64>,
    pub stale: usize,
    pub stopped: bool,
    pub history: Vec<EpochLog>,
}

/// A model, its parameters and a dataset with its graph.
pub struct Trainer<'d> {
    config: Config,
    dataset: &'d Dataset,
    nodes: Vec<MentionRef<'d>>,
    graph: NormalizedGraph,
    extra: usize,
    store: ParamStore,
    pipeline: Pipeline,
    progress: Progress,
}

fn vector_dim(dataset: &Dataset) -> usize {
    dataset
        .all_mentions()
        .find_map(|(_, m)| m.record.vector.as_ref().map(Vec::len))
        .unwrap_or(0)
}

impl<'d> Trainer<'d> {
    /// Fresh parameters drawn from the configured seed.
    pub fn new(config: Config, dataset: &'d Dataset, graph: &MentionGraph) -> Result<Self> {
        config.validate()?;
        let (chars, words) = build_vocabs(&dataset.train);
        let extra = vector_dim(dataset);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.trainer.seed);
        let pipeline = Pipeline::init(&config, chars, words, extra, dataset.hierarchy.len(), &mut store, &mut rng)?;
        if let Some(path) = &config.encoder.pretrained {
            let table = Embeddings::load(path)?;
            pipeline.encoder.load_pretrained(&mut store, &table)?;
        }
        Self::assemble(config, dataset, graph, extra, store, pipeline, Progress::default())
    }

    /// Continues from a checkpoint; the dataset must use the same hierarchy.
    pub fn resume(checkpoint: Checkpoint, dataset: &'d Dataset, graph: &MentionGraph) -> Result<Self> {
        if checkpoint.types != dataset.hierarchy.paths() {
            return Err(Error::Checkpoint("type inventory differs from the dataset".into()));
        }
        let (store, pipeline) = checkpoint.bind()?;
        let Checkpoint { config, extra, progress, .. } = checkpoint;
        Self::assemble(config, dataset, graph, extra, store, pipeline, progress)
    }

    fn assemble(
        config: Config,
        dataset: &'d Dataset,
        graph: &MentionGraph,
        extra: usize,
        store: ParamStore,
        pipeline: Pipeline,
        progress: Progress,
    ) -> Result<Self> {
        let nodes: Vec<MentionRef<'d>> = dataset.all_mentions().map(|(_, m)| m).collect();
        if graph.n != nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "graph has {} nodes but the dataset has {} mentions",
                graph.n,
                nodes.len()
            )));
        }
        if dataset.train.is_empty() {
            return Err(Error::InvalidArgument("training split has no mentions".into()));
        }
        Ok(Trainer { config, dataset, nodes, graph: graph.normalized(), extra, store, pipeline, progress })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    pub fn graph(&self) -> &NormalizedGraph {
        &self.graph
    }

    /// Overrides the epoch budget, e.g. to extend a resumed run.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.config.trainer.epochs = epochs;
    }

    pub fn is_finished(&self) -> bool {
        self.progress.stopped || self.progress.epoch >= self.config.trainer.epochs
    }

    fn adam(&self) -> Adam {
        let t = &self.config.trainer;
        Adam { learning_rate: t.learning_rate, beta1: t.beta1, beta2: t.beta2, epsilon: t.epsilon }
    }

    /// One pass over the training mentions in a seeded random order.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.progress.epoch;
        let mut rng = epoch_rng(self.config.trainer.seed, epoch);
        let n_train = self.dataset.train.mention_count();
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng);
        let adam = self.adam();
        let mut total = 0.0;
        for batch in order.chunks(self.config.trainer.batch_size) {
            let sampled;
            let rows: &Rows = match self.config.trainer.neighbor_sample {
                Some(k) => {
                    sampled = sample_rows(&self.graph.rows, batch, self.pipeline.stage2.depth(), k, &mut rng);
                    &sampled
                }
                None => &self.graph.rows,
            };
            let grads = {
                let mut tape = Tape::new(&self.store);
                let loss = self.pipeline.loss(&mut tape, &self.nodes, rows, batch)?;
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("loss at epoch {} step {}", epoch + 1, self.progress.step + 1)));
                }
                total += value;
                tape.backward(loss)
            };
            self.progress.step += 1;
            adam.step(&mut self.store, &grads, self.progress.step)?;
        }
        let dev = if self.dataset.dev.is_empty() { None } else { Some(self.evaluate(Split::Dev)?.metrics) };
        let log = EpochLog { epoch: epoch + 1, loss: total / n_train as f64, dev };
        self.progress.epoch += 1;
        self.progress.history.push(log);
        if let (Some(d), Some(patience)) = (dev, self.config.trainer.patience) {
            if self.progress.best_dev.is_none_or(|b| d.strict > b) {
                self.progress.best_dev = Some(d.strict);
                self.progress.stale = 0;
            } else {
                self.progress.stale += 1;
                if self.progress.stale >= patience {
                    self.progress.stopped = true;
                }
            }
        }
        Ok(log)
    }

    /// Runs the remaining epochs, rewriting the log and checkpoint after each.
    pub fn train(&mut self, log: Option<&Path>, checkpoint: Option<&Path>) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch()?;
            if let Some(p) = log {
                write_log(p, &self.progress.history)?;
            }
            if let Some(p) = checkpoint {
                self.checkpoint().save(p)?;
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, split: Split) -> Result<Evaluation> {
        self.evaluate_with(split, &self.graph.rows)
    }

    /// Evaluates `split` with the trained parameters over the given rows.
    pub fn evaluate_with(&self, split: Split, rows: &Rows) -> Result<Evaluation> {
        evaluate(&self.pipeline, &self.store, self.dataset, &self.nodes, rows, split, &self.config)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            &self.config,
            &self.dataset.hierarchy,
            self.pipeline.encoder.chars().clone(),
            self.pipeline.encoder.words().clone(),
            self.extra,
            &self.store,
            self.progress.clone(),
        )
    }

    /// Finite-difference check of the summed training loss over `targets`
    /// against every parameter.
    pub fn gradient_check(&mut self, targets: &[usize], h: f64, floor: f64) -> Result<GradCheck> {
        {
            let mut tape = Tape::new(&self.store);
            self.pipeline.loss(&mut tape, &self.nodes, &self.graph.rows, targets)?;
        }
        let Trainer { store, pipeline, nodes, graph, .. } = self;
        Ok(gradient_check(store, h, floor, |tape| {
            pipeline.loss(tape, nodes, &graph.rows, targets).expect("loss is defined near the checked point")
        }))
    }
}

/// The configured graph: read from `graph.path` when that file exists,
/// otherwise built from the dataset's source vectors.
pub fn prepare_graph(config: &Config, dataset: &Dataset) -> Result<MentionGraph> {
    if let Some(path) = config.graph.path.as_deref().filter(|p| p.exists()) {
        let g = MentionGraph::load(path)?;
        if g.n != dataset.total_mentions() {
            return Err(Error::InvalidArgument(format!(
                "{}: graph has {} nodes but the dataset has {} mentions",
                path.display(),
                g.n,
                dataset.total_mentions()
            )));
        }
        return Ok(g);
    }
    let table = config.encoder.pretrained.as_deref().map(Embeddings::load).transpose()?;
    let vectors = source_vectors(dataset, table.as_ref())?;
    graph_for_dataset(dataset, &vectors, &config.graph, config.trainer.seed)
}

/// Metrics and predictions of `split`.
pub fn evaluate(
    pipeline: &Pipeline,
    store: &ParamStore,
    dataset: &Dataset,
    nodes: &[MentionRef<'_>],
    rows: &Rows,
    split: Split,
    config: &Config,
) -> Result<Evaluation> {
    let offset = split_offset(dataset, split);
    let targets: Vec<usize> = (offset..offset + dataset.corpus(split).mention_count()).collect();
    let scores = pipeline.infer(store, nodes, rows, &targets)?;
    let hierarchy = config.score.consistent_paths.then_some(&dataset.hierarchy);
    let items: Vec<EvalItem> = targets
        .iter()
        .zip(scores)
        .map(|(&i, s)| EvalItem {
            node: i,
            sentence: nodes[i].sentence,
            mention: nodes[i].mention,
            gold: nodes[i].record.labels.clone(),
            predicted: typer::predict(&s, hierarchy),
            scores: s,
        })
        .collect();
    let metrics = typer::metrics(items.iter().map(|it| (&it.gold[..], &it.predicted[..])))?;
    Ok(Evaluation { split, metrics, items })
}
