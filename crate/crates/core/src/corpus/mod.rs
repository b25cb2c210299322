//! Corpora of typed entity mentions.
//!
//! A corpus file is JSON lines: an optional header line
//! `{"format":"hypertype-corpus","version":1}` followed by one sentence per
//! line, `{"tokens":[..],"mentions":[{"start":s,"end":e,"labels":["/a","/a/b"]}]}`.
//! Mention vectors live in a separate sidecar text file keyed by
//! `(sentence, mention)` index.

mod hierarchy;
pub mod synth;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use hierarchy::{TypeHierarchy, HIERARCHY_HEADER};

use crate::error::{Error, Result};

pub const CORPUS_FORMAT: &str = "hypertype-corpus";
pub const CORPUS_VERSION: u32 = 1;
pub const VECTORS_HEADER: &str = "# hypertype-vectors v1";

#[derive(Debug, Clone, PartialEq)]
pub struct MentionRecord {
    pub start: usize,
    pub end: usize,
    /// Sorted, deduplicated type ids.
    pub labels: Vec<usize>,
    pub is_clean: bool,
    pub vector: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub mentions: Vec<MentionRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct MentionRef<'a> {
    pub sentence: usize,
    pub mention: usize,
    pub tokens: &'a [String],
    pub record: &'a MentionRecord,
}

impl MentionRef<'_> {
    pub fn mention_tokens(&self) -> &[String] {
        &self.tokens[self.record.start..self.record.end]
    }

    pub fn left_tokens(&self) -> &[String] {
        &self.tokens[..self.record.start]
    }

    pub fn right_tokens(&self) -> &[String] {
        &self.tokens[self.record.end..]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RawMention {
    start: usize,
    end: usize,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawSentence {
    tokens: Vec<String>,
    mentions: Vec<RawMention>,
}

impl Corpus {
    pub fn mentions(&self) -> impl Iterator<Item = MentionRef<'_>> {
        self.sentences.iter().enumerate().flat_map(|(si, s)| {
            s.mentions.iter().enumerate().map(move |(mi, m)| MentionRef {
                sentence: si,
                mention: mi,
                tokens: &s.tokens,
                record: m,
            })
        })
    }

    pub fn mention_count(&self) -> usize {
        self.sentences.iter().map(|s| s.mentions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.mention_count() == 0
    }

    /// Reads a JSON-lines corpus, validating spans and labels against
    /// `hierarchy`, and marks each mention clean or noisy.
    pub fn load(path: &Path, hierarchy: &TypeHierarchy) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, hierarchy)
    }

    pub fn parse(text: &str, path: &Path, hierarchy: &TypeHierarchy) -> Result<Self> {
        let mut sentences = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            if n == 0 && line.contains("\"format\"") {
                let h: Header = serde_json::from_str(line)
                    .map_err(|e| Error::parse(path, lineno, format!("bad header: {e}")))?;
                if h.format != CORPUS_FORMAT || h.version != CORPUS_VERSION {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("unsupported corpus format {} v{}", h.format, h.version),
                    ));
                }
                continue;
            }
            let raw: RawSentence =
                serde_json::from_str(line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let mut mentions = Vec::with_capacity(raw.mentions.len());
            for (mi, m) in raw.mentions.into_iter().enumerate() {
                if m.start >= m.end || m.end > raw.tokens.len() {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!(
                            "mention {mi}: span [{}, {}) out of range for {} tokens",
                            m.start,
                            m.end,
                            raw.tokens.len()
                        ),
                    ));
                }
                if m.labels.is_empty() {
                    return Err(Error::parse(path, lineno, format!("mention {mi}: no labels")));
                }
                let mut labels = Vec::with_capacity(m.labels.len());
                for l in &m.labels {
                    let id = hierarchy.id(l.trim_end_matches('/')).ok_or_else(|| {
                        Error::parse(path, lineno, format!("mention {mi}: unknown type `{l}`"))
                    })?;
                    labels.push(id);
                }
                labels.sort_unstable();
                labels.dedup();
                let is_clean = hierarchy.is_single_path(&labels);
                mentions.push(MentionRecord {
                    start: m.start,
                    end: m.end,
                    labels,
                    is_clean,
                    vector: None,
                });
            }
            sentences.push(Sentence { tokens: raw.tokens, mentions });
        }
        Ok(Corpus { sentences })
    }

    pub fn save(&self, path: &Path, hierarchy: &TypeHierarchy) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        let header = Header { format: CORPUS_FORMAT.into(), version: CORPUS_VERSION };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
        for s in &self.sentences {
            let raw = RawSentence {
                tokens: s.tokens.clone(),
                mentions: s
                    .mentions
                    .iter()
                    .map(|m| RawMention {
                        start: m.start,
                        end: m.end,
                        labels: m.labels.iter().map(|&t| hierarchy.path(t).to_string()).collect(),
                    })
                    .collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&raw).expect("sentence serializes")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Attaches vectors from a sidecar file. Returns the vector dimension.
    pub fn load_vectors(&mut self, path: &Path) -> Result<usize> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut dim: Option<usize> = None;
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if n == 0 {
                    if !line.starts_with(VECTORS_HEADER) {
                        return Err(Error::parse(path, lineno, format!("unsupported header `{line}`")));
                    }
                    dim = rest
                        .split_whitespace()
                        .find_map(|kv| kv.strip_prefix("dim="))
                        .map(|d| d.parse::<usize>())
                        .transpose()
                        .map_err(|e| Error::parse(path, lineno, format!("bad dim: {e}")))?;
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut index = |what: &str| -> Result<usize> {
                fields
                    .next()
                    .ok_or_else(|| Error::parse(path, lineno, format!("missing {what} index")))?
                    .parse::<usize>()
                    .map_err(|e| Error::parse(path, lineno, format!("bad {what} index: {e}")))
            };
            let si = index("sentence")?;
            let mi = index("mention")?;
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, lineno, format!("bad value: {e}")))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(path, lineno, "non-finite vector entry"));
            }
            match dim {
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("expected {d} values, got {}", values.len()),
                    ))
                }
                None => dim = Some(values.len()),
                _ => {}
            }
            let m = self
                .sentences
                .get_mut(si)
                .and_then(|s| s.mentions.get_mut(mi))
                .ok_or_else(|| Error::parse(path, lineno, format!("no mention ({si}, {mi})")))?;
            m.vector = Some(values);
        }
        Ok(dim.unwrap_or(0))
    }

    pub fn save_vectors(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        let dim = self.mentions().find_map(|m| m.record.vector.as_ref().map(Vec::len)).unwrap_or(0);
        writeln!(w, "{VECTORS_HEADER} dim={dim}").map_err(io)?;
        for m in self.mentions() {
            if let Some(v) = &m.record.vector {
                write!(w, "{} {}", m.sentence, m.mention).map_err(io)?;
                for x in v {
                    write!(w, " {x}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Recomputes clean flags and returns `(clean, noisy)` flat mention indices.
pub fn bifurcate(corpus: &mut Corpus, hierarchy: &TypeHierarchy) -> (Vec<usize>, Vec<usize>) {
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut flat = 0;
    for s in &mut corpus.sentences {
        for m in &mut s.mentions {
            m.is_clean = hierarchy.is_single_path(&m.labels);
            if m.is_clean {
                clean.push(flat);
            } else {
                noisy.push(flat);
            }
            flat += 1;
        }
    }
    (clean, noisy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Train/dev/test corpora over one type hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub hierarchy: TypeHierarchy,
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// File locations of a dataset on disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    pub hierarchy: PathBuf,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train_vectors: Option<PathBuf>,
    pub dev_vectors: Option<PathBuf>,
    pub test_vectors: Option<PathBuf>,
}

impl DatasetPaths {
    /// The layout written by [`Dataset::save_dir`].
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            hierarchy: dir.join("types.txt"),
            train: dir.join("train.jsonl"),
            dev: Some(dir.join("dev.jsonl")),
            test: Some(dir.join("test.jsonl")),
            train_vectors: Some(dir.join("train.vec")),
            dev_vectors: Some(dir.join("dev.vec")),
            test_vectors: Some(dir.join("test.vec")),
        }
    }

    /// Resolves relative paths against `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let ro = |p: &Option<PathBuf>| p.as_ref().map(r);
        DatasetPaths {
            hierarchy: r(&self.hierarchy),
            train: r(&self.train),
            dev: ro(&self.dev),
            test: ro(&self.test),
            train_vectors: ro(&self.train_vectors),
            dev_vectors: ro(&self.dev_vectors),
            test_vectors: ro(&self.test_vectors),
        }
    }
}

impl Dataset {
    pub fn corpus(&self, split: Split) -> &Corpus {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn load(paths: &DatasetPaths) -> Result<Self> {
        if paths.hierarchy.as_os_str().is_empty() || paths.train.as_os_str().is_empty() {
            return Err(Error::Config("corpus.hierarchy and corpus.train are required".into()));
        }
        let hierarchy = TypeHierarchy::load(&paths.hierarchy)?;
        let load = |p: &Option<PathBuf>, v: &Option<PathBuf>| -> Result<Corpus> {
            let mut c = match p {
                Some(p) => Corpus::load(p, &hierarchy)?,
                None => Corpus::default(),
            };
            if let Some(v) = v {
                c.load_vectors(v)?;
            }
            Ok(c)
        };
        let train = load(&Some(paths.train.clone()), &paths.train_vectors)?;
        let dev = load(&paths.dev, &paths.dev_vectors)?;
        let test = load(&paths.test, &paths.test_vectors)?;
        Ok(Dataset { hierarchy, train, dev, test })
    }

    /// Writes `types.txt`, `{train,dev,test}.jsonl` and `.vec` sidecars.
    pub fn save_dir(&self, dir: &Path) -> Result<DatasetPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths::in_dir(dir);
        self.hierarchy.save(&paths.hierarchy)?;
        self.train.save(&paths.train, &self.hierarchy)?;
        self.train.save_vectors(paths.train_vectors.as_ref().unwrap())?;
        self.dev.save(paths.dev.as_ref().unwrap(), &self.hierarchy)?;
        self.dev.save_vectors(paths.dev_vectors.as_ref().unwrap())?;
        self.test.save(paths.test.as_ref().unwrap(), &self.hierarchy)?;
        self.test.save_vectors(paths.test_vectors.as_ref().unwrap())?;
        Ok(paths)
    }

    /// Mentions of all splits in node order: train, then dev, then test.
    pub fn all_mentions(&self) -> impl Iterator<Item = (Split, MentionRef<'_>)> {
        Split::ALL
            .into_iter()
            .flat_map(move |s| self.corpus(s).mentions().map(move |m| (s, m)))
    }

    pub fn total_mentions(&self) -> usize {
        self.train.mention_count() + self.dev.mention_count() + self.test.mention_count()
    }
}
