use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const HIERARCHY_HEADER: &str = "# hypertype-hierarchy v1";

/// Type forest given by slash-separated paths such as `/organization/company`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeHierarchy {
    paths: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    index: HashMap<String, usize>,
}

impl TypeHierarchy {
    /// Type ids follow the order of `paths`. Every non-top-level path needs
    /// its parent path to be present.
    pub fn from_paths<S: AsRef<str>>(paths: &[S]) -> Result<Self> {
        let mut index = HashMap::new();
        let mut clean = Vec::with_capacity(paths.len());
        for p in paths {
            let p = normalize(p.as_ref())?;
            if index.contains_key(&p) {
                return Err(Error::InvalidArgument(format!("duplicate type `{p}`")));
            }
            index.insert(p.clone(), clean.len());
            clean.push(p);
        }
        let mut parent = Vec::with_capacity(clean.len());
        let mut depth = Vec::with_capacity(clean.len());
        for p in &clean {
            let segs = p.matches('/').count();
            depth.push(segs - 1);
            if segs == 1 {
                parent.push(None);
                continue;
            }
            let cut = p.rfind('/').unwrap_or(0);
            let up = &p[..cut];
            match index.get(up) {
                Some(&i) => parent.push(Some(i)),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "type `{p}` has no declared parent `{up}`"
                    )))
                }
            }
        }
        Ok(TypeHierarchy { paths: clean, parent, depth, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut paths = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                if n == 0 && line.starts_with("# hypertype-hierarchy") && line != HIERARCHY_HEADER {
                    return Err(Error::parse(path, n + 1, format!("unsupported header `{line}`")));
                }
                continue;
            }
            if !line.starts_with('/') {
                return Err(Error::parse(path, n + 1, format!("type path must start with '/': `{line}`")));
            }
            paths.push(line.to_string());
        }
        Self::from_paths(&paths).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from(HIERARCHY_HEADER);
        out.push('\n');
        for p in &self.paths {
            out.push_str(p);
            out.push('\n');
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn id(&self, path: &str) -> Option<usize> {
        self.index.get(path).copied()
    }

    pub fn path(&self, t: usize) -> &str {
        &self.paths[t]
    }

    pub fn paths(&self) -> &[String] {
        &self.paths
    }

    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent[t]
    }

    /// Zero for top-level types.
    pub fn depth(&self, t: usize) -> usize {
        self.depth[t]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn children(&self, t: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(t)).collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c].is_none()).collect()
    }

    /// `t` itself followed by its ancestors up to the top level.
    pub fn chain(&self, t: usize) -> Vec<usize> {
        let mut out = vec![t];
        let mut cur = t;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }

    /// True if `a` is `b` or an ancestor of `b`.
    pub fn is_ancestor_or_self(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.parent[c];
        }
        false
    }

    /// A label set is a single path when every label is an ancestor of (or
    /// equal to) the deepest one.
    pub fn is_single_path(&self, labels: &[usize]) -> bool {
        let Some(&deepest) = labels.iter().max_by_key(|&&t| (self.depth[t], t)) else {
            return true;
        };
        labels.iter().all(|&t| self.is_ancestor_or_self(t, deepest))
    }
}

fn normalize(p: &str) -> Result<String> {
    let p = p.trim().trim_end_matches('/');
    if !p.starts_with('/') || p.len() < 2 || p.contains("//") {
        return Err(Error::InvalidArgument(format!("malformed type path `{p}`")));
    }
    Ok(p.to_string())
}
