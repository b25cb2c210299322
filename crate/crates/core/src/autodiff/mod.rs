//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes hold dense
//! `f64` vectors (scalars are length-1 vectors). Large parameter tensors are
//! never copied onto the tape: matrix products, embedding lookups and LSTM
//! cells read them straight from the [`ParamStore`] and scatter their
//! gradients back into [`Gradients`].

mod check;
mod params;

pub use check::{gradient_check, relative_error, GradCheck};
pub use params::{Gradients, ParamId, ParamStore, Tensor};

use crate::manifold::Radial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    Sqrt,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Row { table: ParamId, row: usize },
    MatVec { w: ParamId, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Var),
    Dot(Var, Var),
    Linear(Vec<(Var, f64)>),
    ScalarMul(Var, Var),
    ScalarDiv(Var, Var),
    Map(Var, Unary),
    Profile { y: Var, kind: Radial },
    RadialScale { x: Var, inv_k: f64, factor: f64, slope: f64 },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Lstm { w: ParamId, b: ParamId, x: Var, state: Option<Var>, gates: Vec<f64> },
    Clip { x: Var, max_norm: f64, clipped: bool },
    Hinge { scores: Var, terms: Vec<(usize, f64)> },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    // ---- leaves ----

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.input(vec![c])
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.input(vec![0.0; n])
    }

    /// Copies a (small) parameter onto the tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id).data.clone();
        self.push(value, Op::Param(id))
    }

    /// Row `row` of a 2-D parameter (embedding lookup).
    pub fn row(&mut self, table: ParamId, row: usize) -> Var {
        let value = self.params.get(table).row(row).to_vec();
        self.push(value, Op::Row { table, row })
    }

    // ---- linear algebra ----

    /// `W x` for a `rows x cols` parameter `W`.
    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let t = self.params.get(w);
        let (rows, cols) = (t.rows(), t.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "matvec: `{}` has {} columns, input has {}", t.name, cols, xv.len());
        let value = (0..rows).map(|r| dot(&t.data[r * cols..(r + 1) * cols], xv)).collect();
        self.push(value, Op::MatVec { w, x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise op on lengths {} and {}", av.len(), bv.len());
        av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect()
    }

    /// Vector `x` times scalar node `s`.
    pub fn scale(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.value(x).iter().map(|v| v * sv).collect();
        self.push(value, Op::Scale(x, s))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let value = vec![dot(self.value(a), self.value(b))];
        self.push(value, Op::Dot(a, b))
    }

    /// `sum_i c_i x_i + bias` over equal-length nodes; `bias` is added to
    /// every component.
    pub fn linear(&mut self, terms: &[(Var, f64)], bias: f64) -> Var {
        assert!(!terms.is_empty(), "linear combination of nothing");
        let n = self.dim(terms[0].0);
        let mut value = vec![bias; n];
        for &(v, c) in terms {
            let xv = &self.nodes[v.0].value;
            assert_eq!(xv.len(), n, "linear combination of unequal lengths");
            for (o, x) in value.iter_mut().zip(xv) {
                *o += c * x;
            }
        }
        // the bias is a constant; it does not need to be replayed in backward
        self.push(value, Op::Linear(terms.to_vec()))
    }

    /// `x * c` for a constant `c`.
    pub fn scale_const(&mut self, x: Var, c: f64) -> Var {
        self.linear(&[(x, c)], 0.0)
    }

    pub fn scalar_mul(&mut self, a: Var, b: Var) -> Var {
        let value = vec![self.scalar(a) * self.scalar(b)];
        self.push(value, Op::ScalarMul(a, b))
    }

    pub fn scalar_div(&mut self, a: Var, b: Var) -> Var {
        let value = vec![self.scalar(a) / self.scalar(b)];
        self.push(value, Op::ScalarDiv(a, b))
    }

    pub fn map(&mut self, x: Var, f: Unary) -> Var {
        let value = self
            .value(x)
            .iter()
            .map(|&v| match f {
                Unary::Sigmoid => sigmoid(v),
                Unary::Tanh => v.tanh(),
                Unary::Relu => v.max(0.0),
                Unary::Sqrt => v.sqrt(),
            })
            .collect();
        self.push(value, Op::Map(x, f))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Unary::Relu)
    }

    /// Scalar radial profile `g(y)`.
    pub fn profile(&mut self, y: Var, kind: Radial) -> Var {
        let value = vec![kind.value(self.scalar(y))];
        self.push(value, Op::Profile { y, kind })
    }

    /// `g(|x|^2 / K) x`: the origin exp/log maps in chart coordinates.
    pub fn radial_scale(&mut self, x: Var, kind: Radial, k: f64) -> Var {
        let inv_k = 1.0 / k;
        let xv = self.value(x);
        let (factor, slope) = kind.eval(dot(xv, xv) * inv_k);
        let value = xv.iter().map(|v| v * factor).collect();
        self.push(value, Op::RadialScale { x, inv_k, factor, slope })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x)[start..start + len].to_vec();
        self.push(value, Op::Slice { x, start })
    }

    /// One LSTM step. `w` is `4h x (in + h)` acting on `[x; h_prev]`, `b` has
    /// length `4h`, gate order input/forget/cell/output. `state` is the
    /// previous `[h; c]` node (zeros when `None`). Returns `[h; c]`.
    pub fn lstm_step(&mut self, w: ParamId, b: ParamId, x: Var, state: Option<Var>) -> Var {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let h = bt.len() / 4;
        let xv = self.value(x);
        let cols = wt.cols();
        assert_eq!(cols, xv.len() + h, "lstm `{}`: input width mismatch", wt.name);
        let zero = vec![0.0; 2 * h];
        let sv: &[f64] = match state {
            Some(s) => self.value(s),
            None => &zero,
        };
        let (h_prev, c_prev) = sv.split_at(h);
        let mut gates = vec![0.0; 4 * h];
        for (r, g) in gates.iter_mut().enumerate() {
            let row = &wt.data[r * cols..(r + 1) * cols];
            *g = bt.data[r] + dot(&row[..xv.len()], xv) + dot(&row[xv.len()..], h_prev);
        }
        for j in 0..h {
            gates[j] = sigmoid(gates[j]);
            gates[h + j] = sigmoid(gates[h + j]);
            gates[2 * h + j] = gates[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(gates[3 * h + j]);
        }
        let mut value = vec![0.0; 2 * h];
        for j in 0..h {
            let c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            value[h + j] = c;
            value[j] = gates[3 * h + j] * c.tanh();
        }
        self.push(value, Op::Lstm { w, b, x, state, gates })
    }

    /// Rescales `x` onto the sphere of radius `max_norm` when it lies outside.
    pub fn clip_norm(&mut self, x: Var, max_norm: f64) -> Var {
        let xv = self.value(x);
        let n = dot(xv, xv).sqrt();
        let clipped = n > max_norm;
        let value = if clipped {
            xv.iter().map(|v| v * max_norm / n).collect()
        } else {
            xv.to_vec()
        };
        self.push(value, Op::Clip { x, max_norm, clipped })
    }

    /// `sum_k relu(1 + sign_k * scores[idx_k])`; the margin hinge used by the
    /// typing losses (`sign = -1` for true labels, `+1` for false ones).
    pub fn hinge(&mut self, scores: Var, terms: &[(usize, f64)]) -> Var {
        let sv = self.value(scores);
        let value = terms.iter().map(|&(i, s)| (1.0 + s * sv[i]).max(0.0)).sum();
        self.push(vec![value], Op::Hinge { scores, terms: terms.to_vec() })
    }

    /// Sum of scalar nodes; the empty sum is 0.
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let value = xs.iter().map(|x| self.scalar(*x)).sum();
        self.push(vec![value], Op::Sum(xs.to_vec()))
    }

    /// Adjoint of `v` from a [`Tape::backward_full`] result.
    pub fn adjoint<'a>(adjoints: &'a [Option<Vec<f64>>], v: Var) -> Option<&'a [f64]> {
        adjoints[v.0].as_deref()
    }

    /// Gradients of the scalar node `root` with respect to every parameter.
    pub fn backward(&self, root: Var) -> Gradients {
        self.run_backward(root, false).0
    }

    /// Like [`Tape::backward`] but also returns the adjoint of every node;
    /// `None` where the root does not depend on the node.
    pub fn backward_full(&self, root: Var) -> (Gradients, Vec<Option<Vec<f64>>>) {
        self.run_backward(root, true)
    }

    fn run_backward(&self, root: Var, keep: bool) -> (Gradients, Vec<Option<Vec<f64>>>) {
        assert_eq!(self.dim(root), 1, "backward from a non-scalar node");
        let mut grads = Gradients::new(self.params.len());
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj, &mut grads);
            if keep {
                adj[i] = Some(g);
            }
        }
        (grads, adj)
    }

    fn propagate(
        &self,
        i: usize,
        g: &[f64],
        adj: &mut [Option<Vec<f64>>],
        grads: &mut Gradients,
    ) {
        let node = &self.nodes[i];
        let params = self.params;
        fn add_into(adj: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl Fn(usize) -> f64) {
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
            for (k, s) in slot.iter_mut().enumerate() {
                *s += f(k);
            }
        }
        match &node.op {
            Op::Input => {}
            Op::Param(id) => {
                let slot = grads.slot(*id, g.len());
                for (s, x) in slot.iter_mut().zip(g) {
                    *s += x;
                }
            }
            Op::Row { table, row } => {
                let t = params.get(*table);
                let c = t.cols();
                let slot = grads.slot(*table, t.len());
                for (s, x) in slot[row * c..(row + 1) * c].iter_mut().zip(g) {
                    *s += x;
                }
            }
            Op::MatVec { w, x } => {
                let t = params.get(*w);
                let (rows, cols) = (t.rows(), t.cols());
                let xv = &self.nodes[x.0].value;
                {
                    let slot = grads.slot(*w, t.len());
                    for r in 0..rows {
                        if g[r] != 0.0 {
                            for (s, xc) in slot[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *s += g[r] * xc;
                            }
                        }
                    }
                }
                let slot = adj[x.0].get_or_insert_with(|| vec![0.0; cols]);
                for r in 0..rows {
                    if g[r] != 0.0 {
                        for (s, wv) in slot.iter_mut().zip(&t.data[r * cols..(r + 1) * cols]) {
                            *s += g[r] * wv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(adj, *a, g.len(), |k| g[k]);
                add_into(adj, *b, g.len(), |k| g[k]);
            }
            Op::Sub(a, b) => {
                add_into(adj, *a, g.len(), |k| g[k]);
                add_into(adj, *b, g.len(), |k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                add_into(adj, *a, g.len(), |k| g[k] * bv[k]);
                add_into(adj, *b, g.len(), |k| g[k] * av[k]);
            }
            Op::Scale(x, s) => {
                let xv = &self.nodes[x.0].value;
                let sv = self.nodes[s.0].value[0];
                add_into(adj, *x, g.len(), |k| g[k] * sv);
                let ds = dot(g, xv);
                add_into(adj, *s, 1, |_| ds);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let g0 = g[0];
                add_into(adj, *a, av.len(), |k| g0 * bv[k]);
                add_into(adj, *b, bv.len(), |k| g0 * av[k]);
            }
            Op::Linear(terms) => {
                for &(v, c) in terms {
                    add_into(adj, v, g.len(), |k| c * g[k]);
                }
            }
            Op::ScalarMul(a, b) => {
                let (av, bv) = (self.nodes[a.0].value[0], self.nodes[b.0].value[0]);
                add_into(adj, *a, 1, |_| g[0] * bv);
                add_into(adj, *b, 1, |_| g[0] * av);
            }
            Op::ScalarDiv(a, b) => {
                let (av, bv) = (self.nodes[a.0].value[0], self.nodes[b.0].value[0]);
                add_into(adj, *a, 1, |_| g[0] / bv);
                add_into(adj, *b, 1, |_| -g[0] * av / (bv * bv));
            }
            Op::Map(x, f) => {
                let out = &node.value;
                let xv = &self.nodes[x.0].value;
                add_into(adj, *x, g.len(), |k| {
                    let d = match f {
                        Unary::Sigmoid => out[k] * (1.0 - out[k]),
                        Unary::Tanh => 1.0 - out[k] * out[k],
                        Unary::Relu => {
                            if xv[k] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Sqrt => 0.5 / out[k],
                    };
                    g[k] * d
                });
            }
            Op::Profile { y, kind } => {
                let (_, d) = kind.eval(self.nodes[y.0].value[0]);
                add_into(adj, *y, 1, |_| g[0] * d);
            }
            Op::RadialScale { x, inv_k, factor, slope, .. } => {
                // y = f(|x|^2/K) x  =>  x_bar = f g + 2 f'/K (x.g) x
                let xv = &self.nodes[x.0].value;
                let c = 2.0 * slope * inv_k * dot(xv, g);
                add_into(adj, *x, g.len(), |k| factor * g[k] + c * xv[k]);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    add_into(adj, *p, n, |k| g[off + k]);
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let n = self.nodes[x.0].value.len();
                let (s, len) = (*start, g.len());
                let slot = adj[x.0].get_or_insert_with(|| vec![0.0; n]);
                for (t, v) in slot[s..s + len].iter_mut().zip(g) {
                    *t += v;
                }
            }
            Op::Lstm { w, b, x, state, gates } => {
                self.lstm_backward(node, g, *w, *b, *x, *state, gates, adj, grads);
            }
            Op::Clip { x, max_norm, clipped } => {
                let xv = &self.nodes[x.0].value;
                if *clipped {
                    // y = m x/|x|  =>  x_bar = m/|x| (g - (x̂.g) x̂)
                    let n = dot(xv, xv).sqrt();
                    let xg = dot(xv, g) / (n * n);
                    add_into(adj, *x, g.len(), |k| max_norm / n * (g[k] - xg * xv[k]));
                } else {
                    add_into(adj, *x, g.len(), |k| g[k]);
                }
            }
            Op::Hinge { scores, terms } => {
                let sv = &self.nodes[scores.0].value;
                let n = sv.len();
                let slot = adj[scores.0].get_or_insert_with(|| vec![0.0; n]);
                for &(idx, sign) in terms {
                    if 1.0 + sign * sv[idx] > 0.0 {
                        slot[idx] += g[0] * sign;
                    }
                }
            }
            Op::Sum(xs) => {
                for x in xs {
                    add_into(adj, *x, 1, |_| g[0]);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        node: &Node,
        g: &[f64],
        w: ParamId,
        b: ParamId,
        x: Var,
        state: Option<Var>,
        gates: &[f64],
        adj: &mut [Option<Vec<f64>>],
        grads: &mut Gradients,
    ) {
        let wt = self.params.get(w);
        let h = gates.len() / 4;
        let xv = &self.nodes[x.0].value;
        let nin = xv.len();
        let cols = wt.cols();
        let zero = vec![0.0; 2 * h];
        let sv: &[f64] = match state {
            Some(s) => &self.nodes[s.0].value,
            None => &zero,
        };
        let (h_prev, c_prev) = sv.split_at(h);
        let c_new = &node.value[h..];
        let (gi, gf, gg, go) = (&gates[..h], &gates[h..2 * h], &gates[2 * h..3 * h], &gates[3 * h..]);
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let tc = c_new[j].tanh();
            let dh = g[j];
            let dc = g[h + j] + dh * go[j] * (1.0 - tc * tc);
            let d_o = dh * tc;
            dz[j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
            dz[h + j] = dc * c_prev[j] * gf[j] * (1.0 - gf[j]);
            dz[2 * h + j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
            dz[3 * h + j] = d_o * go[j] * (1.0 - go[j]);
            dc_prev[j] = dc * gf[j];
        }
        {
            let bslot = grads.slot(b, 4 * h);
            for (s, d) in bslot.iter_mut().zip(&dz) {
                *s += d;
            }
        }
        {
            let wslot = grads.slot(w, wt.len());
            for (r, d) in dz.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut wslot[r * cols..(r + 1) * cols];
                for (s, xc) in row[..nin].iter_mut().zip(xv) {
                    *s += d * xc;
                }
                for (s, hc) in row[nin..].iter_mut().zip(h_prev) {
                    *s += d * hc;
                }
            }
        }
        let mut dx = vec![0.0; nin];
        let mut dh_prev = vec![0.0; h];
        for (r, d) in dz.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &wt.data[r * cols..(r + 1) * cols];
            for (s, wv) in dx.iter_mut().zip(&row[..nin]) {
                *s += d * wv;
            }
            for (s, wv) in dh_prev.iter_mut().zip(&row[nin..]) {
                *s += d * wv;
            }
        }
        let slot = adj[x.0].get_or_insert_with(|| vec![0.0; nin]);
        for (s, d) in slot.iter_mut().zip(&dx) {
            *s += d;
        }
        if let Some(s) = state {
            let slot = adj[s.0].get_or_insert_with(|| vec![0.0; 2 * h]);
            for j in 0..h {
                slot[j] += dh_prev[j];
                slot[h + j] += dc_prev[j];
            }
        }
    }
}

#[cfg(test)]
mod tests;
