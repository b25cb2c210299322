//! Plain-text tables for `stats` and `report`.

use std::fmt::Write;

use hypertype::corpus::{Dataset, Split, TypeHierarchy};
use hypertype::graphbuild::{MentionGraph, NormalizedGraph};
use hypertype::trainer::{Evaluation, Trainer};
use hypertype::typer::{per_label, LabelStats};

pub fn dataset_stats(dataset: &Dataset) -> String {
    let h = &dataset.hierarchy;
    let mut out = String::new();
    let _ = writeln!(out, "types {}  max depth {}", h.len(), h.max_depth());
    for d in 0..=h.max_depth() {
        let n = (0..h.len()).filter(|&t| h.depth(t) == d).count();
        let _ = writeln!(out, "  depth {d}: {n} types");
    }
    let _ = writeln!(out, "{:<6} {:>9} {:>7} {:>7} {:>11}", "split", "mentions", "clean", "noisy", "labels/m");
    for s in Split::ALL {
        let c = dataset.corpus(s);
        let n = c.mention_count();
        let clean = c.mentions().filter(|m| m.record.is_clean).count();
        let labels: usize = c.mentions().map(|m| m.record.labels.len()).sum();
        let avg = if n == 0 { 0.0 } else { labels as f64 / n as f64 };
        let _ = writeln!(out, "{:<6} {:>9} {:>7} {:>7} {:>11.2}", s.name(), n, clean, n - clean, avg);
    }
    out
}

pub fn graph_stats(graph: &MentionGraph) -> String {
    let mut degree = vec![0usize; graph.n];
    for &(i, j, _) in &graph.edges {
        degree[i] += 1;
        degree[j] += 1;
    }
    let isolated = degree.iter().filter(|&&d| d == 0).count();
    let max = degree.iter().copied().max().unwrap_or(0);
    let mean = if graph.n == 0 { 0.0 } else { 2.0 * graph.edge_count() as f64 / graph.n as f64 };
    format!(
        "graph {} (delta {}): {} nodes, {} edges, mean degree {:.2}, max degree {}, isolated {}\n",
        graph.variant,
        graph.delta,
        graph.n,
        graph.edge_count(),
        mean,
        max,
        isolated
    )
}

pub fn label_table(hierarchy: &TypeHierarchy, stats: &[LabelStats]) -> String {
    let width = hierarchy.paths().iter().map(String::len).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}", "Type", "Prec", "Rec", "F1", "Support");
    for (t, s) in stats.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>7}",
            hierarchy.path(t),
            s.precision,
            s.recall,
            s.f1,
            s.support
        );
    }
    out
}

/// Mean label norm per depth, index = depth.
pub fn mean_norm_by_depth(hierarchy: &TypeHierarchy, norms: &[f64]) -> Vec<f64> {
    (0..=hierarchy.max_depth())
        .map(|d| {
            let xs: Vec<f64> = (0..hierarchy.len()).filter(|&t| hierarchy.depth(t) == d).map(|t| norms[t]).collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        })
        .collect()
}

pub fn norm_table(hierarchy: &TypeHierarchy, norms: &[f64]) -> String {
    let mut order: Vec<usize> = (0..hierarchy.len()).collect();
    order.sort_by_key(|&t| (hierarchy.depth(t), hierarchy.path(t).to_string()));
    let width = hierarchy.paths().iter().map(String::len).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:>5}  {:<width$}  {:>8}", "Depth", "Type", "Norm");
    for t in order {
        let _ = writeln!(out, "{:>5}  {:<width$}  {:>8.4}", hierarchy.depth(t), hierarchy.path(t), norms[t]);
    }
    for (d, m) in mean_norm_by_depth(hierarchy, norms).iter().enumerate() {
        let _ = writeln!(out, "mean norm at depth {d}: {m:.4}");
    }
    out
}

/// Strict-correctness transitions from the stage-I-only head to the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Corrections {
    pub both_right: usize,
    pub fixed: usize,
    pub broken: usize,
    pub changed_wrong: usize,
    pub same_wrong: usize,
}

pub fn corrections(stage1: &Evaluation, full: &Evaluation) -> Corrections {
    let mut c = Corrections::default();
    for (a, b) in stage1.items.iter().zip(&full.items) {
        let ra = a.predicted == a.gold;
        let rb = b.predicted == b.gold;
        match (ra, rb) {
            (true, true) => c.both_right += 1,
            (false, true) => c.fixed += 1,
            (true, false) => c.broken += 1,
            (false, false) if a.predicted != b.predicted => c.changed_wrong += 1,
            (false, false) => c.same_wrong += 1,
        }
    }
    c
}

pub fn render(trainer: &Trainer<'_>, dataset: &Dataset, split: Split) -> hypertype::Result<String> {
    let h = &dataset.hierarchy;
    let full = trainer.evaluate(split)?;
    let stage1 = trainer.evaluate_with(split, &NormalizedGraph::identity(dataset.total_mentions()).rows)?;
    let mut out = String::new();
    let _ = writeln!(out, "== per-label scores ({}, {} mentions) ==", split.name(), full.items.len());
    out.push_str(&label_table(h, &per_label(h.len(), full.pairs())));
    let _ = writeln!(out, "\n== label vector norms ==");
    let norms = trainer.pipeline().labels.norms(trainer.store());
    out.push_str(&norm_table(h, &norms));
    let c = corrections(&stage1, &full);
    let _ = writeln!(out, "\n== stage-I head vs full model ==");
    let _ = writeln!(out, "stage-I strict {:.4}  full strict {:.4}", stage1.metrics.strict, full.metrics.strict);
    let _ = writeln!(out, "correct in both       {}", c.both_right);
    let _ = writeln!(out, "corrected by graph    {}", c.fixed);
    let _ = writeln!(out, "broken by graph       {}", c.broken);
    let _ = writeln!(out, "changed, still wrong  {}", c.changed_wrong);
    let _ = writeln!(out, "unchanged, wrong      {}", c.same_wrong);
    Ok(out)
}
