//! Synthetic typing corpora with a known hierarchy and controlled label noise.
//!
//! Every mention has a true leaf type. Context tokens are drawn from
//! type-specific vocabularies along the leaf's chain (mixed with filler),
//! mention names carry a top-level prefix, and the optional mention vector is
//! a sum of per-level type directions plus Gaussian noise. Noise is injected
//! by adding a label from a divergent branch.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, Dataset, MentionRecord, Sentence, TypeHierarchy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub depth: usize,
    pub branching: usize,
    /// Total mentions (one per sentence).
    pub mentions: usize,
    /// Fraction of (training) mentions receiving a divergent extra label.
    pub noise: f64,
    pub seed: u64,
    /// Words per type vocabulary.
    pub vocab_per_type: usize,
    pub filler_vocab: usize,
    /// Probability that a context token is drawn from a type vocabulary.
    pub signal_rate: f64,
    pub min_context: usize,
    pub max_context: usize,
    pub names_per_root: usize,
    /// Dimension of the mention vectors; 0 disables them.
    pub vector_dim: usize,
    pub vector_noise: f64,
    /// Train/dev fractions; the rest is test.
    pub train_fraction: f64,
    pub dev_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            depth: 3,
            branching: 2,
            mentions: 2000,
            noise: 0.3,
            seed: 7,
            vocab_per_type: 6,
            filler_vocab: 60,
            signal_rate: 0.25,
            min_context: 2,
            max_context: 6,
            names_per_root: 40,
            vector_dim: 16,
            vector_noise: 0.15,
            train_fraction: 0.7,
            dev_fraction: 0.1,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.depth == 0 || self.branching == 0 {
            return bad("synthetic hierarchy needs depth and branching >= 1");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise rate must lie in [0, 1)");
        }
        if self.noise > 0.0 && self.branching < 2 && self.depth < 2 {
            return bad("noise needs at least two branches");
        }
        if !(0.0..=1.0).contains(&self.signal_rate) {
            return bad("signal_rate must lie in [0, 1]");
        }
        if self.min_context > self.max_context {
            return bad("min_context exceeds max_context");
        }
        if self.vocab_per_type == 0 || self.filler_vocab == 0 || self.names_per_root == 0 {
            return bad("vocabulary sizes must be positive");
        }
        if self.train_fraction <= 0.0
            || self.dev_fraction < 0.0
            || self.train_fraction + self.dev_fraction > 1.0
        {
            return bad("split fractions must be positive and sum to at most 1");
        }
        if !(self.vector_noise >= 0.0) {
            return bad("vector_noise must be nonnegative");
        }
        Ok(())
    }
}

/// Full `branching`-ary hierarchy of the given depth with paths like
/// `/T0/T01/T010`.
pub fn synth_hierarchy(depth: usize, branching: usize) -> Result<TypeHierarchy> {
    let mut paths = Vec::new();
    let mut frontier = vec![(String::new(), String::new())];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (path, code) in &frontier {
            for b in 0..branching {
                let code = format!("{code}{b}");
                let path = format!("{path}/T{code}");
                paths.push(path.clone());
                next.push((path, code));
            }
        }
        frontier = next;
    }
    TypeHierarchy::from_paths(&paths)
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    h: &'a TypeHierarchy,
    leaves: Vec<usize>,
    directions: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a SynthSpec, h: &'a TypeHierarchy) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let leaves = (0..h.len()).filter(|&t| h.children(t).is_empty()).collect();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let directions = (0..h.len())
            .map(|_| {
                let mut v: Vec<f64> = (0..spec.vector_dim).map(|_| normal.sample(&mut rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.iter_mut().for_each(|x| *x /= n);
                v
            })
            .collect();
        Generator { spec, h, leaves, directions, rng }
    }

    fn sentence(&mut self) -> Sentence {
        let leaf = *self.leaves.choose(&mut self.rng).expect("hierarchy has leaves");
        let chain = self.h.chain(leaf);
        let root = *chain.last().expect("nonempty chain");
        let mut tokens = Vec::new();
        let left = self.rng.random_range(self.spec.min_context..=self.spec.max_context);
        for _ in 0..left {
            tokens.push(self.context_token(&chain));
        }
        let start = tokens.len();
        let name_len = self.rng.random_range(1..=2);
        for _ in 0..name_len {
            let k = self.rng.random_range(0..self.spec.names_per_root);
            tokens.push(format!("N{root}x{k}"));
        }
        let end = tokens.len();
        let right = self.rng.random_range(self.spec.min_context..=self.spec.max_context);
        for _ in 0..right {
            tokens.push(self.context_token(&chain));
        }
        let vector = (self.spec.vector_dim > 0).then(|| self.vector(&chain));
        let mut labels = chain;
        labels.sort_unstable();
        Sentence {
            tokens,
            mentions: vec![MentionRecord { start, end, labels, is_clean: true, vector }],
        }
    }

    fn context_token(&mut self, chain: &[usize]) -> String {
        if self.rng.random_bool(self.spec.signal_rate) {
            let t = *chain.choose(&mut self.rng).expect("nonempty chain");
            let k = self.rng.random_range(0..self.spec.vocab_per_type);
            format!("w{t}x{k}")
        } else {
            format!("f{}", self.rng.random_range(0..self.spec.filler_vocab))
        }
    }

    fn vector(&mut self, chain: &[usize]) -> Vec<f64> {
        let noise = Normal::new(0.0, self.spec.vector_noise).expect("finite noise scale");
        let mut v = vec![0.0; self.spec.vector_dim];
        for &t in chain {
            for (o, d) in v.iter_mut().zip(&self.directions[t]) {
                *o += d;
            }
        }
        for o in &mut v {
            *o += noise.sample(&mut self.rng);
        }
        v
    }

    /// Adds a divergent label to exactly `round(rate * n)` mentions.
    fn inject_noise(&mut self, corpus: &mut Corpus, rate: f64) {
        let n = corpus.sentences.len();
        let k = (rate * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        for &i in &order[..k] {
            let m = &mut corpus.sentences[i].mentions[0];
            let leaf = *m.labels.iter().max_by_key(|&&t| self.h.depth(t)).expect("labels");
            let chain = self.h.chain(leaf);
            // pick a level whose node has a sibling and add that sibling
            let candidates: Vec<(usize, Vec<usize>)> = chain
                .iter()
                .map(|&t| (t, self.siblings(t)))
                .filter(|(_, s)| !s.is_empty())
                .collect();
            let (_, sibs) = candidates.choose(&mut self.rng).expect("a node with a sibling");
            let extra = *sibs.choose(&mut self.rng).expect("nonempty");
            m.labels.push(extra);
            m.labels.sort_unstable();
            m.is_clean = self.h.is_single_path(&m.labels);
        }
    }

    fn siblings(&self, t: usize) -> Vec<usize> {
        let peers = match self.h.parent(t) {
            Some(p) => self.h.children(p),
            None => self.h.roots(),
        };
        peers.into_iter().filter(|&s| s != t).collect()
    }
}

/// One corpus of `spec.mentions` mentions with noise applied to all of them.
pub fn synth_corpus(spec: &SynthSpec) -> Result<(TypeHierarchy, Corpus)> {
    spec.validate()?;
    let h = synth_hierarchy(spec.depth, spec.branching)?;
    let mut g = Generator::new(spec, &h);
    let mut corpus = Corpus { sentences: (0..spec.mentions).map(|_| g.sentence()).collect() };
    g.inject_noise(&mut corpus, spec.noise);
    Ok((h, corpus))
}

/// Train/dev/test split; only the training split receives label noise.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let h = synth_hierarchy(spec.depth, spec.branching)?;
    let mut g = Generator::new(spec, &h);
    let n_train = (spec.train_fraction * spec.mentions as f64).round() as usize;
    let n_dev = ((spec.dev_fraction * spec.mentions as f64).round() as usize)
        .min(spec.mentions.saturating_sub(n_train));
    let n_test = spec.mentions - n_train - n_dev;
    let mut take = |n: usize| Corpus { sentences: (0..n).map(|_| g.sentence()).collect() };
    let mut train = take(n_train);
    let dev = take(n_dev);
    let test = take(n_test);
    g.inject_noise(&mut train, spec.noise);
    Ok(Dataset { hierarchy: h, train, dev, test })
}
