//! Type scoring, margin losses, prediction and evaluation metrics.
//!
//! A mention point `z` is scored against every type `t` as
//! `f(z, t) = phi_t . rep(z) + bias_t`, where `rep(z)` is `log_o(z)` in the
//! tangent space or the ambient coordinates of `z`.
//!
//! Clean mentions pay `sum_{t in T_y} relu(1 - f_t) + sum_{t' not in T_y} relu(1 + f_t')`.
//! Noisy mentions keep only the best-scoring true type `t*` in the first sum.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::corpus::TypeHierarchy;
use crate::encoder::lookup;
use crate::error::{Error, Result};
use crate::hyperlayer::Chart;
use crate::manifold::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSpace {
    #[default]
    Tangent,
    Ambient,
}

impl FromStr for ScoreSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tangent" => Ok(ScoreSpace::Tangent),
            "ambient" => Ok(ScoreSpace::Ambient),
            other => Err(Error::InvalidArgument(format!(
                "unknown score space `{other}` (expected tangent or ambient)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbientProduct {
    #[default]
    Euclidean,
    Minkowski,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub space: ScoreSpace,
    pub product: AmbientProduct,
    /// Restrict predictions to a single root-to-node path.
    pub consistent_paths: bool,
}

impl ScoreConfig {
    pub fn validate(&self, model: Model) -> Result<()> {
        if model == Model::Poincare
            && self.space == ScoreSpace::Ambient
            && self.product == AmbientProduct::Minkowski
        {
            return Err(Error::Config(
                "the Minkowski product needs hyperboloid coordinates; use score.product = \"euclidean\" \
                 or manifold.model = \"hyperboloid\""
                    .into(),
            ));
        }
        Ok(())
    }

    /// Label vector dimension for points of intrinsic dimension `d`.
    pub fn label_dim(&self, model: Model, d: usize) -> usize {
        match (self.space, model) {
            (ScoreSpace::Ambient, Model::Hyperboloid) => d + 1,
            _ => d,
        }
    }

    /// `rep(z)` on the tape.
    pub fn rep(&self, tape: &mut Tape, chart: &Chart, z: Var) -> Var {
        match self.space {
            ScoreSpace::Tangent => chart.log0(tape, z),
            ScoreSpace::Ambient => chart.ambient(tape, z, self.product == AmbientProduct::Minkowski),
        }
    }
}

/// Label vectors `phi` (`T x d`) and biases (`T`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelTable {
    pub phi: ParamId,
    pub bias: ParamId,
    pub types: usize,
    pub dim: usize,
}

impl LabelTable {
    pub fn new<R: Rng>(types: usize, dim: usize, scale: f64, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        let phi = store.uniform("labels.phi", vec![types, dim], scale, rng)?;
        let bias = store.zeros("labels.bias", vec![types])?;
        Ok(LabelTable { phi, bias, types, dim })
    }

    pub fn from_store(types: usize, dim: usize, store: &ParamStore) -> Result<Self> {
        Ok(LabelTable {
            phi: lookup(store, "labels.phi", &[types, dim])?,
            bias: lookup(store, "labels.bias", &[types])?,
            types,
            dim,
        })
    }

    /// All type scores for a representation `rep`.
    pub fn scores(&self, tape: &mut Tape, rep: Var) -> Var {
        let s = tape.matvec(self.phi, rep);
        let b = tape.param(self.bias);
        tape.add(s, b)
    }

    pub fn norms(&self, store: &ParamStore) -> Vec<f64> {
        let t = store.get(self.phi);
        (0..self.types).map(|i| t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }
}

/// `phi . rep + bias`.
pub fn score(rep: &[f64], phi: &[f64], bias: f64) -> Result<f64> {
    if rep.len() != phi.len() {
        return Err(Error::DimensionMismatch { expected: phi.len(), got: rep.len() });
    }
    Ok(rep.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() + bias)
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Highest-scoring type of `candidates`; ties go to the lowest type id.
pub fn best_of(scores: &[f64], candidates: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &t in candidates {
        best = match best {
            Some(b) if scores[b] > scores[t] || (scores[b] == scores[t] && b < t) => Some(b),
            _ => Some(t),
        };
    }
    best
}

fn false_types(n: usize, gold: &[usize]) -> impl Iterator<Item = usize> + '_ {
    (0..n).filter(move |t| !gold.contains(t))
}

/// Margin loss of a clean mention over all `scores.len()` types.
pub fn loss_clean(scores: &[f64], gold: &[usize]) -> f64 {
    let pos: f64 = gold.iter().map(|&t| relu(1.0 - scores[t])).sum();
    let neg: f64 = false_types(scores.len(), gold).map(|t| relu(1.0 + scores[t])).sum();
    pos + neg
}

/// Margin loss of a noisy mention: only the best true type must clear the
/// margin.
pub fn loss_noisy(scores: &[f64], gold: &[usize]) -> f64 {
    let pos = best_of(scores, gold).map_or(0.0, |t| relu(1.0 - scores[t]));
    let neg: f64 = false_types(scores.len(), gold).map(|t| relu(1.0 + scores[t])).sum();
    pos + neg
}

/// Sum of per-mention losses over `(scores, gold, is_clean)`.
pub fn total_loss<'a>(batch: impl IntoIterator<Item = (&'a [f64], &'a [usize], bool)>) -> f64 {
    batch
        .into_iter()
        .map(|(s, g, clean)| if clean { loss_clean(s, g) } else { loss_noisy(s, g) })
        .sum()
}

/// Differentiable loss of one mention. `t*` of a noisy mention is chosen from
/// the current score values and held fixed.
pub fn mention_loss(tape: &mut Tape, scores: Var, gold: &[usize], is_clean: bool) -> Var {
    let n = tape.dim(scores);
    let mut terms: Vec<(usize, f64)> = Vec::with_capacity(n);
    if is_clean {
        terms.extend(gold.iter().map(|&t| (t, -1.0)));
    } else if let Some(t) = best_of(tape.value(scores), gold) {
        terms.push((t, -1.0));
    }
    terms.extend(false_types(n, gold).map(|t| (t, 1.0)));
    tape.hinge(scores, &terms)
}

/// Types scoring above zero, or the argmax alone when none does. With a
/// hierarchy, the result is replaced by the chain of the predicted type whose
/// ancestors-and-self have the largest total score.
pub fn predict(scores: &[f64], hierarchy: Option<&TypeHierarchy>) -> Vec<usize> {
    let mut pred: Vec<usize> = (0..scores.len()).filter(|&t| scores[t] > 0.0).collect();
    if pred.is_empty() {
        let all: Vec<usize> = (0..scores.len()).collect();
        pred.extend(best_of(scores, &all));
    }
    let Some(h) = hierarchy else { return pred };
    let path_score = |t: usize| h.chain(t).iter().map(|&a| scores[a]).sum::<f64>();
    let mut best = pred[0];
    for &t in &pred[1..] {
        if path_score(t) > path_score(best) {
            best = t;
        }
    }
    let mut chain = h.chain(best);
    chain.sort_unstable();
    chain
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub strict: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Strict accuracy, mention-averaged F1 and pooled F1 over `(gold, predicted)`.
pub fn metrics<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>) -> Result<Metrics> {
    let (mut n, mut exact, mut f1_sum) = (0usize, 0usize, 0.0);
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (gold, pred) in pairs {
        let g: BTreeSet<usize> = gold.iter().copied().collect();
        let p: BTreeSet<usize> = pred.iter().copied().collect();
        let hit = g.intersection(&p).count();
        n += 1;
        exact += usize::from(g == p);
        if !p.is_empty() && !g.is_empty() {
            f1_sum += f1(hit as f64 / p.len() as f64, hit as f64 / g.len() as f64);
        }
        tp += hit;
        n_pred += p.len();
        n_gold += g.len();
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let micro_p = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let micro_r = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
    Ok(Metrics {
        strict: exact as f64 / n as f64,
        macro_f1: f1_sum / n as f64,
        micro_f1: f1(micro_p, micro_r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-type precision, recall, F1 and gold support.
pub fn per_label<'a>(
    n_types: usize,
    pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>,
) -> Vec<LabelStats> {
    let mut tp = vec![0usize; n_types];
    let mut pred = vec![0usize; n_types];
    let mut gold = vec![0usize; n_types];
    for (g, p) in pairs {
        for &t in g {
            gold[t] += 1;
            if p.contains(&t) {
                tp[t] += 1;
            }
        }
        for &t in p {
            pred[t] += 1;
        }
    }
    (0..n_types)
        .map(|t| {
            let precision = if pred[t] == 0 { 0.0 } else { tp[t] as f64 / pred[t] as f64 };
            let recall = if gold[t] == 0 { 0.0 } else { tp[t] as f64 / gold[t] as f64 };
            LabelStats { precision, recall, f1: f1(precision, recall), support: gold[t] }
        })
        .collect()
}

/// One exported prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence: usize,
    pub mention: usize,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub scores: Vec<f64>,
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in predictions {
        let line = serde_json::to_string(p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
