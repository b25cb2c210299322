//! Mention graph construction.
//!
//! Each type gets a prototype: the mean source vector of the training
//! mentions labeled with it. Mentions whose cosine with a prototype reaches
//! `delta` become that type's candidates, and every pair of candidates of the
//! same type is joined by an edge. The attentive graph weights an edge by the
//! cosine of its endpoints, the plain graph uses weight 1, and the random
//! graph is a uniform graph with the same number of edges.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Split};
use crate::encoder::Embeddings;
use crate::error::{Error, Result};

pub const GRAPH_HEADER: &str = "# hypertype-graph v1";

/// Prototype norms at or below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphVariant {
    Random,
    Plain,
    Attentive,
}

impl FromStr for GraphVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(GraphVariant::Random),
            "plain" | "unweighted" => Ok(GraphVariant::Plain),
            "attentive" => Ok(GraphVariant::Attentive),
            other => Err(Error::InvalidArgument(format!(
                "unknown graph variant `{other}` (expected random, plain or attentive)"
            ))),
        }
    }
}

impl fmt::Display for GraphVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphVariant::Random => "random",
            GraphVariant::Plain => "plain",
            GraphVariant::Attentive => "attentive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Universe {
    TrainOnly,
    Transductive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub delta: f64,
    pub variant: GraphVariant,
    pub universe: Universe,
    /// Prebuilt graph file; built from the corpus when absent.
    pub path: Option<std::path::PathBuf>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            delta: 0.5,
            variant: GraphVariant::Attentive,
            universe: Universe::Transductive,
            path: None,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("graph.delta must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub type_id: usize,
    pub count: usize,
    /// `None` when no training mention carries the type or the mean vanishes.
    pub vector: Option<Vec<f64>>,
}

impl Prototype {
    pub fn is_degenerate(&self) -> bool {
        self.count > 0 && self.vector.is_none()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (na * nb)).clamp(-1.0, 1.0)
}

/// Per-type mean of the vectors of mentions labeled with that type.
pub fn build_prototypes(n_types: usize, labeled: &[(&[usize], &[f64])]) -> Result<Vec<Prototype>> {
    let dim = labeled.first().map_or(0, |(_, v)| v.len());
    let mut sums = vec![vec![0.0; dim]; n_types];
    let mut counts = vec![0usize; n_types];
    for (labels, v) in labeled {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        for &t in *labels {
            if t >= n_types {
                return Err(Error::InvalidArgument(format!("type id {t} out of range")));
            }
            counts[t] += 1;
            for (s, x) in sums[t].iter_mut().zip(*v) {
                *s += x;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(type_id, (mut s, count))| {
            if count == 0 {
                return Prototype { type_id, count, vector: None };
            }
            s.iter_mut().for_each(|x| *x /= count as f64);
            let vector = (norm(&s) > DEGENERATE_NORM).then_some(s);
            Prototype { type_id, count, vector }
        })
        .collect())
}

/// `cand[t]` = indices of `universe` members with `cos(v, prototype_t) >= delta`,
/// ascending. `universe` selects which vectors may be candidates.
pub fn select_candidates(
    prototypes: &[Prototype],
    vectors: &[Vec<f64>],
    universe: &[usize],
    delta: f64,
) -> Result<Vec<Vec<usize>>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(prototypes
        .iter()
        .map(|p| match &p.vector {
            None => Vec::new(),
            Some(proto) => universe
                .iter()
                .copied()
                .filter(|&i| cosine(&vectors[i], proto) >= delta)
                .collect(),
        })
        .collect())
}

/// Undirected weighted graph over mention indices. Edges are stored once with
/// `i < j` in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionGraph {
    pub n: usize,
    pub variant: GraphVariant,
    pub delta: f64,
    pub seed: u64,
    pub edges: Vec<(usize, usize, f64)>,
}

impl MentionGraph {
    /// A graph with no edges; every node only sees itself.
    pub fn empty(n: usize) -> Self {
        MentionGraph { n, variant: GraphVariant::Plain, delta: 1.0, seed: 0, edges: Vec::new() }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .ok()
            .map(|k| self.edges[k].2)
    }

    /// Row-stochastic weights with a unit self-loop on every node and negative
    /// weights clipped to zero.
    pub fn normalized(&self) -> NormalizedGraph {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..self.n).map(|i| vec![(i, 1.0)]).collect();
        for &(i, j, w) in &self.edges {
            let w = w.max(0.0);
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let total: f64 = row.iter().map(|&(_, w)| w).sum();
            row.iter_mut().for_each(|(_, w)| *w /= total);
        }
        NormalizedGraph { rows }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(
            w,
            "{GRAPH_HEADER} n={} variant={} delta={} seed={} edges={}",
            self.n,
            self.variant,
            self.delta,
            self.seed,
            self.edges.len()
        )
        .map_err(io)?;
        for &(i, j, x) in &self.edges {
            writeln!(w, "{i} {j} {x}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty graph file"))?;
        let rest = header
            .strip_prefix(GRAPH_HEADER)
            .ok_or_else(|| Error::parse(path, 1, format!("expected `{GRAPH_HEADER}` header")))?;
        let mut g = MentionGraph::empty(0);
        let mut declared = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("bad header field `{kv}`")))?;
            let bad = |e: String| Error::parse(path, 1, format!("bad `{k}`: {e}"));
            match k {
                "n" => g.n = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "variant" => g.variant = v.parse().map_err(|e: Error| bad(e.to_string()))?,
                "delta" => g.delta = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "seed" => g.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "edges" => {
                    declared = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?);
                }
                _ => {}
            }
        }
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let err = |m: String| Error::parse(path, n + 1, m);
            if parts.len() != 3 {
                return Err(err(format!("expected `i j weight`, got `{line}`")));
            }
            let i: usize = parts[0].parse().map_err(|e| err(format!("bad node: {e}")))?;
            let j: usize = parts[1].parse().map_err(|e| err(format!("bad node: {e}")))?;
            let x: f64 = parts[2].parse().map_err(|e| err(format!("bad weight: {e}")))?;
            if i == j || i >= g.n || j >= g.n || !x.is_finite() {
                return Err(err(format!("invalid edge ({i}, {j}, {x}) for n = {}", g.n)));
            }
            g.edges.push((i.min(j), i.max(j), x));
        }
        g.edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let before = g.edges.len();
        g.edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        if g.edges.len() != before {
            return Err(Error::parse(path, 0, "duplicate edges"));
        }
        if let Some(d) = declared {
            if d != g.edges.len() {
                return Err(Error::parse(path, 1, format!("header declares {d} edges, found {}", g.edges.len())));
            }
        }
        Ok(g)
    }
}

/// Per-node weighted neighbor lists (self included), each summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedGraph {
    pub fn identity(n: usize) -> Self {
        NormalizedGraph { rows: (0..n).map(|i| vec![(i, 1.0)]).collect() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Union of all candidate pairs with the variant's weights.
pub fn build_graph(
    candidates: &[Vec<usize>],
    vectors: &[Vec<f64>],
    variant: GraphVariant,
    delta: f64,
    seed: u64,
) -> MentionGraph {
    let n = vectors.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for cand in candidates {
        for (a, &i) in cand.iter().enumerate() {
            for &j in &cand[a + 1..] {
                if i != j {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edges = match variant {
        GraphVariant::Attentive => {
            pairs.into_iter().map(|(i, j)| (i, j, cosine(&vectors[i], &vectors[j]))).collect()
        }
        GraphVariant::Plain => pairs.into_iter().map(|(i, j)| (i, j, 1.0)).collect(),
        GraphVariant::Random => random_edges(n, pairs.len(), seed),
    };
    MentionGraph { n, variant, delta, seed, edges }
}

/// `m` distinct uniformly random pairs over `n` nodes, weight 1.
pub fn random_edges(n: usize, m: usize, seed: u64) -> Vec<(usize, usize, f64)> {
    let total = n * n.saturating_sub(1) / 2;
    let m = m.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng, k: usize| {
        let mut set = HashSet::with_capacity(k);
        while set.len() < k {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                set.insert((i.min(j), i.max(j)));
            }
        }
        set
    };
    let mut pairs: Vec<(usize, usize)> = if 2 * m <= total {
        sample(&mut rng, m).into_iter().collect()
    } else {
        let excluded = sample(&mut rng, total - m);
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|p| !excluded.contains(p))
            .collect()
    };
    pairs.sort_unstable();
    pairs.into_iter().map(|(i, j)| (i, j, 1.0)).collect()
}

/// Source vectors for every mention of the dataset in node order (train, dev,
/// test). Mentions without a precomputed vector fall back to the mean
/// pretrained vector of their sentence's tokens.
pub fn source_vectors(dataset: &Dataset, embeddings: Option<&Embeddings>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(dataset.total_mentions());
    let mut dim = None;
    for (split, m) in dataset.all_mentions() {
        let v = match (&m.record.vector, embeddings) {
            (Some(v), _) => v.clone(),
            (None, Some(table)) => {
                let mut acc = vec![0.0; table.dim];
                let mut k = 0usize;
                for t in m.tokens {
                    if let Some(e) = table.vectors.get(t) {
                        acc.iter_mut().zip(e).for_each(|(a, x)| *a += x);
                        k += 1;
                    }
                }
                if k > 0 {
                    acc.iter_mut().for_each(|a| *a /= k as f64);
                }
                acc
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "{} mention ({}, {}) has no vector and no pretrained embeddings are configured",
                    split.name(),
                    m.sentence,
                    m.mention
                )))
            }
        };
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => return Err(Error::DimensionMismatch { expected: d, got: v.len() }),
            _ => {}
        }
        out.push(v);
    }
    Ok(out)
}

/// Builds the mention graph of a dataset.
pub fn graph_for_dataset(
    dataset: &Dataset,
    vectors: &[Vec<f64>],
    config: &GraphConfig,
    seed: u64,
) -> Result<MentionGraph> {
    config.validate()?;
    let n_train = dataset.train.mention_count();
    let labeled: Vec<(&[usize], &[f64])> = dataset
        .train
        .mentions()
        .zip(vectors)
        .map(|(m, v)| (&m.record.labels[..], &v[..]))
        .collect();
    let prototypes = build_prototypes(dataset.hierarchy.len(), &labeled)?;
    let universe: Vec<usize> = match config.universe {
        Universe::TrainOnly => (0..n_train).collect(),
        Universe::Transductive => (0..vectors.len()).collect(),
    };
    let cands = select_candidates(&prototypes, vectors, &universe, config.delta)?;
    Ok(build_graph(&cands, vectors, config.variant, config.delta, seed))
}

/// Node index of the first mention of `split` in dataset node order.
pub fn split_offset(dataset: &Dataset, split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Dev => dataset.train.mention_count(),
        Split::Test => dataset.train.mention_count() + dataset.dev.mention_count(),
    }
}
