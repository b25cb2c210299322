//! Stage-I mention encoder.
//!
//! A mention is encoded as `[p_l; c_l; e; c_r; p_r]`:
//!
//! * `e`: final state of a character LSTM over the mention text (tokens joined
//!   by a space),
//! * `c_l`, `c_r`: `[backward; forward]` final states of a bidirectional LSTM
//!   over the left / right context words, each side with its own weights,
//! * `p_l`, `p_r`: final states of one position LSTM over learned embeddings
//!   of signed offsets (`-k..-1` to the left, `1..k` to the right).
//!
//! Contexts are cut to `window` tokens per side, keeping the tokens nearest to
//! the mention. An empty side encodes to zeros.

mod vocab;

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use vocab::{Embeddings, Vocab, UNK};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::corpus::{Corpus, MentionRef};
use crate::error::{Error, Result};

pub const CHAR_SEPARATOR: char = ' ';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub char_hidden: usize,
    /// Per direction.
    pub context_hidden: usize,
    pub position_hidden: usize,
    pub word_embedding_dim: usize,
    pub char_embedding_dim: usize,
    pub position_embedding_dim: usize,
    pub window: usize,
    pub init_scale: f64,
    /// Text table of pretrained word vectors.
    pub pretrained: Option<PathBuf>,
    /// Append each mention's precomputed vector to its encoding.
    pub use_precomputed: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            char_hidden: 200,
            context_hidden: 100,
            position_hidden: 100,
            word_embedding_dim: 300,
            char_embedding_dim: 50,
            position_embedding_dim: 50,
            window: 15,
            init_scale: 0.1,
            pretrained: None,
            use_precomputed: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("char_hidden", self.char_hidden),
            ("context_hidden", self.context_hidden),
            ("position_hidden", self.position_hidden),
            ("word_embedding_dim", self.word_embedding_dim),
            ("char_embedding_dim", self.char_embedding_dim),
            ("position_embedding_dim", self.position_embedding_dim),
            ("window", self.window),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("encoder.{name} must be positive")));
            }
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("encoder.init_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn layout(&self, extra: usize) -> Layout {
        Layout {
            e: self.char_hidden,
            c: 2 * self.context_hidden,
            p: self.position_hidden,
            extra,
        }
    }
}

/// Part sizes of an encoding: `L = e + 2c + 2p (+ extra)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub e: usize,
    pub c: usize,
    pub p: usize,
    pub extra: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.e + 2 * self.c + 2 * self.p + self.extra
    }

    fn sizes(&self) -> [usize; 5] {
        [self.p, self.c, self.e, self.c, self.p]
    }

    /// Splits an encoding into `[p_l, c_l, e, c_r, p_r]` (and the extra tail).
    pub fn split<'a>(&self, v: &'a [f64]) -> Result<([&'a [f64]; 5], &'a [f64])> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let mut out: [&[f64]; 5] = [&[]; 5];
        let mut rest = v;
        for (slot, n) in out.iter_mut().zip(self.sizes()) {
            let (a, b) = rest.split_at(n);
            *slot = a;
            rest = b;
        }
        Ok((out, rest))
    }
}

#[derive(Debug, Clone, Copy)]
struct Lstm {
    w: ParamId,
    b: ParamId,
    hidden: usize,
}

impl Lstm {
    fn create<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.uniform(&format!("{name}.w"), vec![4 * hidden, input + hidden], scale, rng)?;
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let b = store.insert(&format!("{name}.b"), vec![4 * hidden], bias)?;
        Ok(Lstm { w, b, hidden })
    }

    fn find(store: &ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let w = lookup(store, &format!("{name}.w"), &[4 * hidden, input + hidden])?;
        let b = lookup(store, &format!("{name}.b"), &[4 * hidden])?;
        Ok(Lstm { w, b, hidden })
    }

    /// Final hidden state after consuming `inputs` in order; zeros if empty.
    fn run(&self, tape: &mut Tape, inputs: impl Iterator<Item = Var>) -> Var {
        let mut state = None;
        for x in inputs {
            state = Some(tape.lstm_step(self.w, self.b, x, state));
        }
        match state {
            Some(s) => tape.slice(s, 0, self.hidden),
            None => tape.zeros(self.hidden),
        }
    }
}

pub(crate) fn lookup(store: &ParamStore, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = store
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
    if store.get(id).shape != shape {
        return Err(Error::Checkpoint(format!(
            "parameter `{name}` has shape {:?}, expected {shape:?}",
            store.get(id).shape
        )));
    }
    Ok(id)
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    chars: Vocab,
    words: Vocab,
    extra: usize,
    char_emb: ParamId,
    word_emb: ParamId,
    pos_emb: ParamId,
    char_lstm: Lstm,
    left_fw: Lstm,
    left_bw: Lstm,
    right_fw: Lstm,
    right_bw: Lstm,
    pos_lstm: Lstm,
}

/// Character and word vocabularies of a training corpus.
pub fn build_vocabs(train: &Corpus) -> (Vocab, Vocab) {
    let mut chars = Vocab::new();
    let mut words = Vocab::new();
    chars.add(&CHAR_SEPARATOR.to_string());
    for s in &train.sentences {
        for t in &s.tokens {
            words.add(t);
        }
    }
    for m in train.mentions() {
        for t in m.mention_tokens() {
            for ch in t.chars() {
                chars.add(&ch.to_string());
            }
        }
    }
    (chars, words)
}

const PARAM_NAMES: [&str; 6] =
    ["char_lstm", "ctx_left_fw", "ctx_left_bw", "ctx_right_fw", "ctx_right_bw", "pos_lstm"];

impl Encoder {
    /// Registers freshly initialized encoder parameters in `store`.
    /// `extra` is the precomputed vector dimension (ignored unless
    /// `use_precomputed`).
    pub fn new<R: Rng>(
        config: EncoderConfig,
        chars: Vocab,
        words: Vocab,
        extra: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let s = config.init_scale;
        let (ce, wd, pd) =
            (config.char_embedding_dim, config.word_embedding_dim, config.position_embedding_dim);
        let (e, c, p) = (config.char_hidden, config.context_hidden, config.position_hidden);
        let char_emb = store.uniform("enc.char_emb", vec![chars.len(), ce], s, rng)?;
        let word_emb = store.uniform("enc.word_emb", vec![words.len(), wd], s, rng)?;
        let pos_emb = store.uniform("enc.pos_emb", vec![2 * config.window + 1, pd], s, rng)?;
        let mut mk = |i: usize, input, hidden| {
            Lstm::create(store, &format!("enc.{}", PARAM_NAMES[i]), input, hidden, s, rng)
        };
        let char_lstm = mk(0, ce, e)?;
        let left_fw = mk(1, wd, c)?;
        let left_bw = mk(2, wd, c)?;
        let right_fw = mk(3, wd, c)?;
        let right_bw = mk(4, wd, c)?;
        let pos_lstm = mk(5, pd, p)?;
        let extra = if config.use_precomputed { extra } else { 0 };
        Ok(Encoder {
            config,
            chars,
            words,
            extra,
            char_emb,
            word_emb,
            pos_emb,
            char_lstm,
            left_fw,
            left_bw,
            right_fw,
            right_bw,
            pos_lstm,
        })
    }

    /// Binds to parameters already present in `store` (e.g. a checkpoint).
    pub fn from_store(
        config: EncoderConfig,
        chars: Vocab,
        words: Vocab,
        extra: usize,
        store: &ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let (ce, wd, pd) =
            (config.char_embedding_dim, config.word_embedding_dim, config.position_embedding_dim);
        let (e, c, p) = (config.char_hidden, config.context_hidden, config.position_hidden);
        let find = |i: usize, input, hidden| {
            Lstm::find(store, &format!("enc.{}", PARAM_NAMES[i]), input, hidden)
        };
        Ok(Encoder {
            char_emb: lookup(store, "enc.char_emb", &[chars.len(), ce])?,
            word_emb: lookup(store, "enc.word_emb", &[words.len(), wd])?,
            pos_emb: lookup(store, "enc.pos_emb", &[2 * config.window + 1, pd])?,
            char_lstm: find(0, ce, e)?,
            left_fw: find(1, wd, c)?,
            left_bw: find(2, wd, c)?,
            right_fw: find(3, wd, c)?,
            right_bw: find(4, wd, c)?,
            pos_lstm: find(5, pd, p)?,
            extra: if config.use_precomputed { extra } else { 0 },
            config,
            chars,
            words,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn chars(&self) -> &Vocab {
        &self.chars
    }

    pub fn words(&self) -> &Vocab {
        &self.words
    }

    pub fn layout(&self) -> Layout {
        self.config.layout(self.extra)
    }

    pub fn output_dim(&self) -> usize {
        self.layout().dim()
    }

    /// Overwrites word-embedding rows of known words with pretrained vectors.
    /// Returns how many rows were set.
    pub fn load_pretrained(&self, store: &mut ParamStore, table: &Embeddings) -> Result<usize> {
        if table.dim != self.config.word_embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.word_embedding_dim,
                got: table.dim,
            });
        }
        let t = store.get_mut(self.word_emb);
        let d = table.dim;
        let mut hits = 0;
        for i in 1..self.words.len() {
            if let Some(v) = table.vectors.get(self.words.symbol(i)) {
                t.data[i * d..(i + 1) * d].copy_from_slice(v);
                hits += 1;
            }
        }
        if let Some(v) = table.vectors.get(UNK) {
            t.data[..d].copy_from_slice(v);
        }
        Ok(hits)
    }

    pub fn encode_chars(&self, tape: &mut Tape, mention: &[String]) -> Result<Var> {
        let text = mention.join(&CHAR_SEPARATOR.to_string());
        if text.is_empty() {
            return Err(Error::EmptyMention);
        }
        let ids: Vec<usize> = text.chars().map(|ch| self.chars.get(&ch.to_string())).collect();
        let inputs: Vec<Var> = ids.into_iter().map(|i| tape.row(self.char_emb, i)).collect();
        Ok(self.char_lstm.run(tape, inputs.into_iter()))
    }

    fn bilstm(&self, tape: &mut Tape, fw: Lstm, bw: Lstm, tokens: &[String]) -> Var {
        let inputs: Vec<Var> =
            tokens.iter().map(|t| tape.row(self.word_emb, self.words.get(t))).collect();
        let f = fw.run(tape, inputs.iter().copied());
        let b = bw.run(tape, inputs.iter().rev().copied());
        tape.concat(&[b, f])
    }

    /// `([backward; forward]` of the left side, same for the right side).
    pub fn encode_context(&self, tape: &mut Tape, left: &[String], right: &[String]) -> (Var, Var) {
        let l = self.bilstm(tape, self.left_fw, self.left_bw, left);
        let r = self.bilstm(tape, self.right_fw, self.right_bw, right);
        (l, r)
    }

    /// Position encodings for `left_len` tokens before and `right_len` after
    /// the mention (both at most `window`).
    pub fn encode_positions(&self, tape: &mut Tape, left_len: usize, right_len: usize) -> Result<(Var, Var)> {
        let w = self.config.window;
        if left_len > w || right_len > w {
            return Err(Error::InvalidArgument(format!(
                "position sequence longer than the window ({left_len}/{right_len} > {w})"
            )));
        }
        let left: Vec<Var> = (1..=left_len).rev().map(|k| tape.row(self.pos_emb, w - k)).collect();
        let right: Vec<Var> = (1..=right_len).map(|k| tape.row(self.pos_emb, w + k)).collect();
        let l = self.pos_lstm.run(tape, left.into_iter());
        let r = self.pos_lstm.run(tape, right.into_iter());
        Ok((l, r))
    }

    /// Concatenates `[p_l, c_l, e, c_r, p_r]` after checking part sizes.
    pub fn concat_encoding(&self, tape: &mut Tape, parts: [Var; 5]) -> Result<Var> {
        concat_parts(tape, &self.config.layout(0), parts)
    }

    pub fn encode(&self, tape: &mut Tape, m: MentionRef<'_>) -> Result<Var> {
        let w = self.config.window;
        let left = m.left_tokens();
        let left = &left[left.len().saturating_sub(w)..];
        let right = m.right_tokens();
        let right = &right[..right.len().min(w)];
        let e = self.encode_chars(tape, m.mention_tokens())?;
        let (cl, cr) = self.encode_context(tape, left, right);
        let (pl, pr) = self.encode_positions(tape, left.len(), right.len())?;
        let x = self.concat_encoding(tape, [pl, cl, e, cr, pr])?;
        if self.extra == 0 {
            return Ok(x);
        }
        let v = m.record.vector.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "mention ({}, {}) has no precomputed vector",
                m.sentence, m.mention
            ))
        })?;
        if v.len() != self.extra {
            return Err(Error::DimensionMismatch { expected: self.extra, got: v.len() });
        }
        let v = tape.input(v.clone());
        Ok(tape.concat(&[x, v]))
    }

    /// Encoding of one mention as a plain vector.
    pub fn encode_value(&self, store: &ParamStore, m: MentionRef<'_>) -> Result<Vec<f64>> {
        let mut tape = Tape::new(store);
        let v = self.encode(&mut tape, m)?;
        Ok(tape.value(v).to_vec())
    }
}

fn concat_parts(tape: &mut Tape, layout: &Layout, parts: [Var; 5]) -> Result<Var> {
    for (v, n) in parts.iter().zip(layout.sizes()) {
        if tape.dim(*v) != n {
            return Err(Error::DimensionMismatch { expected: n, got: tape.dim(*v) });
        }
    }
    Ok(tape.concat(&parts))
}

/// Value-level concatenation of `[p_l, c_l, e, c_r, p_r]`.
pub fn concat_encoding(layout: &Layout, parts: [&[f64]; 5]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layout.dim());
    for (v, n) in parts.iter().zip(layout.sizes()) {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        out.extend_from_slice(v);
    }
    Ok(out)
}
