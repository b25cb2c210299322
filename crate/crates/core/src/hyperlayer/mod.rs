//! Stage-II hyperbolic refinement.
//!
//! A layer maps every mention point `p` to
//!
//! ```text
//! h = exp_o(W log_o(p))          linear transform
//! t = exp_h(PT_{o->h}(b))        bias
//! y = AGG_i(t)                   weighted aggregation over graph neighbours
//! z = exp_o(relu(log_o(y)))      activation
//! ```
//!
//! Unsubscripted maps are taken at the origin `o`. Aggregation sums
//! `w_ij log_o(t_j)` over the normalized neighbourhood of `i` and maps the sum
//! back with `exp_o` ([`AggregationBase::Origin`]) or, transported, with
//! `exp_{t_i}` ([`AggregationBase::SelfPoint`]).
//!
//! On the tape points are kept in chart coordinates: the spatial part `s` of a
//! hyperboloid point (with `p_0 = sqrt(K + |s|^2)` implicit) or the ball
//! coordinates of a Poincaré point. The free functions at the bottom work on
//! [`ManifoldPoint`]s through the general manifold maps and serve as the
//! reference implementation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Unary, Var};
use crate::encoder::lookup;
use crate::error::{Error, Result};
use crate::graphbuild::NormalizedGraph;
use crate::manifold::{
    exp_map, lift_from_origin, parallel_transport, to_tangent_at_origin, Curvature, ManifoldPoint,
    Model, Radial, TangentVec, BALL_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationBase {
    #[default]
    Origin,
    SelfPoint,
}

/// Chart-coordinate operations of one model on the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub model: Model,
    pub curvature: Curvature,
}

impl Chart {
    pub fn new(model: Model, curvature: Curvature) -> Self {
        Chart { model, curvature }
    }

    fn k(&self) -> f64 {
        self.curvature.k()
    }

    /// Riemannian norm of an origin tangent vector with coordinates `v`.
    fn origin_norm(&self, v: &[f64]) -> f64 {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self.model {
            Model::Hyperboloid => n,
            Model::Poincare => 2.0 * n,
        }
    }

    fn guard(&self, tape: &Tape, v: Var) -> Result<()> {
        let norm = self.origin_norm(tape.value(v));
        let limit = self.curvature.tangent_limit();
        if norm > limit || !norm.is_finite() {
            return Err(Error::TangentNormTooLarge { norm, limit });
        }
        Ok(())
    }

    fn ball_clip(&self, tape: &mut Tape, x: Var) -> Var {
        tape.clip_norm(x, (1.0 - BALL_EPS) * self.curvature.sqrt_k())
    }

    /// `exp_o(v)` for an origin tangent vector given by its spatial part.
    pub fn exp0(&self, tape: &mut Tape, v: Var) -> Result<Var> {
        self.guard(tape, v)?;
        Ok(match self.model {
            Model::Hyperboloid => tape.radial_scale(v, Radial::Sinhc, self.k()),
            Model::Poincare => {
                let x = tape.radial_scale(v, Radial::Tanhc, self.k());
                self.ball_clip(tape, x)
            }
        })
    }

    /// Spatial part of `log_o(p)`.
    pub fn log0(&self, tape: &mut Tape, p: Var) -> Var {
        match self.model {
            Model::Hyperboloid => tape.radial_scale(p, Radial::Asinhc, self.k()),
            Model::Poincare => tape.radial_scale(p, Radial::Artanhc, self.k()),
        }
    }

    /// `exp_o(W log_o(p))`.
    pub fn linear(&self, tape: &mut Tape, p: Var, w: ParamId) -> Result<Var> {
        let v = self.log0(tape, p);
        let wv = tape.matvec(w, v);
        self.exp0(tape, wv)
    }

    /// `exp_p(PT_{o->p}(b))` for an origin tangent vector `b`.
    pub fn bias_add(&self, tape: &mut Tape, p: Var, b: Var) -> Result<Var> {
        self.guard(tape, b)?;
        let k = self.k();
        let sk = self.curvature.sqrt_k();
        Ok(match self.model {
            Model::Hyperboloid => {
                // transported vector has spatial part b + coef s with
                // coef = <s, b> / (sqrt(K) (sqrt(K) + p_0)); its norm stays |b|
                let ss = tape.dot(p, p);
                let p0sq = tape.linear(&[(ss, 1.0)], k);
                let p0 = tape.map(p0sq, Unary::Sqrt);
                let denom = tape.linear(&[(p0, sk)], k);
                let sb = tape.dot(p, b);
                let coef = tape.scalar_div(sb, denom);
                let cs = tape.scale(p, coef);
                let w = tape.add(b, cs);
                let bb = tape.dot(b, b);
                let y = tape.scale_const(bb, 1.0 / k);
                let ch = tape.profile(y, Radial::Cosh);
                let sh = tape.profile(y, Radial::Sinhc);
                let a = tape.scale(p, ch);
                let c = tape.scale(w, sh);
                tape.add(a, c)
            }
            Model::Poincare => {
                let e = tape.radial_scale(b, Radial::Tanhc, k);
                let e = self.ball_clip(tape, e);
                let sum = self.mobius_add(tape, p, e);
                self.ball_clip(tape, sum)
            }
        })
    }

    fn mobius_add(&self, tape: &mut Tape, x: Var, y: Var) -> Var {
        let c = 1.0 / self.k();
        let xy = tape.dot(x, y);
        let x2 = tape.dot(x, x);
        let y2 = tape.dot(y, y);
        let a = tape.linear(&[(xy, 2.0 * c), (y2, c)], 1.0);
        let b = tape.linear(&[(x2, -c)], 1.0);
        let x2y2 = tape.scalar_mul(x2, y2);
        let d = tape.linear(&[(xy, 2.0 * c), (x2y2, c * c)], 1.0);
        let ax = tape.scale(x, a);
        let by = tape.scale(y, b);
        let num = tape.add(ax, by);
        let one = tape.constant(1.0);
        let inv = tape.scalar_div(one, d);
        tape.scale(num, inv)
    }

    /// `exp_o(relu(log_o(p)))`.
    pub fn activate(&self, tape: &mut Tape, p: Var) -> Result<Var> {
        let v = self.log0(tape, p);
        let r = tape.relu(v);
        self.exp0(tape, r)
    }

    /// Aggregates neighbour tangents `sum_j w_j v_j` into a point.
    /// `base` is the point used by [`AggregationBase::SelfPoint`].
    pub fn aggregate(
        &self,
        tape: &mut Tape,
        terms: &[(Var, f64)],
        base: Option<Var>,
    ) -> Result<Var> {
        let sum = tape.linear(terms, 0.0);
        match base {
            None => self.exp0(tape, sum),
            Some(p) => self.bias_add(tape, p, sum),
        }
    }

    /// Ambient coordinates: `(p_0, s)` on the hyperboloid (with `-p_0` for
    /// the Minkowski product), the ball coordinates otherwise.
    pub fn ambient(&self, tape: &mut Tape, p: Var, minkowski: bool) -> Var {
        match self.model {
            Model::Hyperboloid => {
                let ss = tape.dot(p, p);
                let p0sq = tape.linear(&[(ss, 1.0)], self.k());
                let p0 = tape.map(p0sq, Unary::Sqrt);
                let t = if minkowski { tape.scale_const(p0, -1.0) } else { p0 };
                tape.concat(&[t, p])
            }
            Model::Poincare => p,
        }
    }

    /// Chart coordinates to a manifold point.
    pub fn to_point(&self, chart: &[f64]) -> ManifoldPoint {
        let coords = match self.model {
            Model::Hyperboloid => std::iter::once(0.0).chain(chart.iter().copied()).collect(),
            Model::Poincare => chart.to_vec(),
        };
        ManifoldPoint::projected(self.model, coords, self.curvature)
    }

    pub fn from_point(&self, p: &ManifoldPoint) -> Result<Vec<f64>> {
        if p.model() != self.model {
            return Err(Error::ModelMismatch(format!("expected a {} point", self.model)));
        }
        Ok(match self.model {
            Model::Hyperboloid => p.coords()[1..].to_vec(),
            Model::Poincare => p.coords().to_vec(),
        })
    }
}

/// Weight and bias of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

/// A stack of refinement layers.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTwo {
    pub chart: Chart,
    pub base: AggregationBase,
    pub layers: Vec<LayerParams>,
}

impl StageTwo {
    /// `dims = [d_0, d_1, ..., d_L]`. Weights start near the identity
    /// (`I + U(-scale, scale)`) and biases at `U(-scale, scale)`.
    pub fn new<R: Rng>(
        chart: Chart,
        base: AggregationBase,
        dims: &[usize],
        scale: f64,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            let mut data: Vec<f64> =
                (0..d_in * d_out).map(|_| rng.random_range(-scale..=scale)).collect();
            for i in 0..d_in.min(d_out) {
                data[i * d_in + i] += 1.0;
            }
            let w = store.insert(&format!("layer{}.w", l + 1), vec![d_out, d_in], data)?;
            let b = store.uniform(&format!("layer{}.b", l + 1), vec![d_out], scale, rng)?;
            layers.push(LayerParams { w, b, d_in, d_out });
        }
        Ok(StageTwo { chart, base, layers })
    }

    pub fn from_store(chart: Chart, base: AggregationBase, dims: &[usize], store: &ParamStore) -> Result<Self> {
        let mut layers = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            let w = lookup(store, &format!("layer{}.w", l + 1), &[d_out, d_in])?;
            let b = lookup(store, &format!("layer{}.b", l + 1), &[d_out])?;
            layers.push(LayerParams { w, b, d_in, d_out });
        }
        Ok(StageTwo { chart, base, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Runs layer `l` (0-based) for `targets`. `points[j]` must be present for
    /// every neighbour `j` of every target. Returns a node-indexed vector with
    /// the outputs of `targets` filled in.
    pub fn layer_forward(
        &self,
        tape: &mut Tape,
        l: usize,
        points: &[Option<Var>],
        rows: &[Vec<(usize, f64)>],
        targets: &[usize],
    ) -> Result<Vec<Option<Var>>> {
        let layer = self.layers[l];
        let c = self.chart;
        let n = points.len();
        let mut moved: Vec<Option<(Var, Var)>> = vec![None; n];
        let mut out = vec![None; n];
        for &i in targets {
            let row = rows
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("node {i} is not in the graph")))?;
            let mut terms = Vec::with_capacity(row.len());
            for &(j, w) in row {
                let (_, v) = match moved.get(j).copied().flatten() {
                    Some(tv) => tv,
                    None => {
                        let p = points.get(j).copied().flatten().ok_or_else(|| {
                            Error::InvalidArgument(format!("neighbour {j} of node {i} has no input point"))
                        })?;
                        let h = c.linear(tape, p, layer.w)?;
                        let b = tape.param(layer.b);
                        let t = c.bias_add(tape, h, b)?;
                        let v = c.log0(tape, t);
                        moved[j] = Some((t, v));
                        (t, v)
                    }
                };
                terms.push((v, w));
            }
            let base = match self.base {
                AggregationBase::Origin => None,
                AggregationBase::SelfPoint => Some(
                    moved[i]
                        .ok_or_else(|| Error::InvalidArgument(format!("node {i} lacks a self-loop")))?
                        .0,
                ),
            };
            let y = c.aggregate(tape, &terms, base)?;
            out[i] = Some(c.activate(tape, y)?);
        }
        Ok(out)
    }

    /// Node sets needed per layer: `sets[L] = targets`,
    /// `sets[l - 1] = neighbours of sets[l]`.
    pub fn receptive_sets(&self, rows: &[Vec<(usize, f64)>], targets: &[usize]) -> Vec<Vec<usize>> {
        let n = rows.len();
        let mut sets = vec![targets.to_vec()];
        for _ in 0..self.depth() {
            let mut mark = vec![false; n];
            for &i in sets.last().expect("nonempty") {
                for &(j, _) in &rows[i] {
                    mark[j] = true;
                }
            }
            sets.push((0..n).filter(|&j| mark[j]).collect());
        }
        sets.reverse();
        sets
    }

    /// All layers for `targets`, given layer-0 points for `sets[0]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        points: Vec<Option<Var>>,
        rows: &[Vec<(usize, f64)>],
        sets: &[Vec<usize>],
    ) -> Result<Vec<Option<Var>>> {
        let mut cur = points;
        for l in 0..self.depth() {
            cur = self.layer_forward(tape, l, &cur, rows, &sets[l + 1])?;
        }
        Ok(cur)
    }
}

/// Dense row-major weight and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperLayerParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub d_in: usize,
    pub d_out: usize,
}

impl HyperLayerParams {
    pub fn new(w: Vec<f64>, b: Vec<f64>, d_in: usize, d_out: usize) -> Result<Self> {
        if w.len() != d_in * d_out {
            return Err(Error::DimensionMismatch { expected: d_in * d_out, got: w.len() });
        }
        if b.len() != d_out {
            return Err(Error::DimensionMismatch { expected: d_out, got: b.len() });
        }
        Ok(HyperLayerParams { w, b, d_in, d_out })
    }

    pub fn identity(d: usize) -> Self {
        let mut w = vec![0.0; d * d];
        (0..d).for_each(|i| w[i * d + i] = 1.0);
        HyperLayerParams { w, b: vec![0.0; d], d_in: d, d_out: d }
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d_in {
            return Err(Error::DimensionMismatch { expected: self.d_in, got: v.len() });
        }
        Ok((0..self.d_out)
            .map(|r| self.w[r * self.d_in..(r + 1) * self.d_in].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Refined mention points after a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedEncodings {
    pub layer: usize,
    pub model: Model,
    pub points: Vec<ManifoldPoint>,
}

/// `exp_o(W log_o(p))`.
pub fn linear_transform(p: &ManifoldPoint, params: &HyperLayerParams) -> Result<ManifoldPoint> {
    let v = to_tangent_at_origin(p)?;
    lift_from_origin(&params.apply(&v)?, p.curvature(), p.model())
}

/// `exp_p(PT_{o->p}(b))`.
pub fn bias_add(p: &ManifoldPoint, b: &[f64]) -> Result<ManifoldPoint> {
    let o = ManifoldPoint::origin(p.model(), p.dim(), p.curvature());
    let bt = TangentVec::at_origin(p.model(), b, p.curvature());
    let moved = parallel_transport(&o, p, &bt)?;
    exp_map(p, &moved)
}

/// Weighted aggregation of origin tangents over each node's normalized row.
pub fn aggregate(
    points: &[ManifoldPoint],
    graph: &NormalizedGraph,
    base: AggregationBase,
) -> Result<Vec<ManifoldPoint>> {
    if graph.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: graph.len() });
    }
    let tangents = points.iter().map(to_tangent_at_origin).collect::<Result<Vec<_>>>()?;
    graph
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut sum = vec![0.0; tangents[i].len()];
            for &(j, w) in row {
                let t = tangents
                    .get(j)
                    .ok_or_else(|| Error::InvalidArgument(format!("edge to missing node {j}")))?;
                sum.iter_mut().zip(t).for_each(|(s, x)| *s += w * x);
            }
            match base {
                AggregationBase::Origin => lift_from_origin(&sum, points[i].curvature(), points[i].model()),
                AggregationBase::SelfPoint => bias_add(&points[i], &sum),
            }
        })
        .collect()
}

/// `exp_o(relu(log_o(p)))`.
pub fn activate(p: &ManifoldPoint) -> Result<ManifoldPoint> {
    let v: Vec<f64> = to_tangent_at_origin(p)?.into_iter().map(|x| x.max(0.0)).collect();
    lift_from_origin(&v, p.curvature(), p.model())
}

/// One full layer over all mentions.
pub fn layer_forward(
    points: &[ManifoldPoint],
    graph: &NormalizedGraph,
    params: &HyperLayerParams,
    base: AggregationBase,
    layer: usize,
) -> Result<RefinedEncodings> {
    let model = points.first().map_or(Model::Hyperboloid, |p| p.model());
    let moved = points
        .iter()
        .map(|p| bias_add(&linear_transform(p, params)?, &params.b))
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(&moved, graph, base)?;
    let points = agg.iter().map(activate).collect::<Result<Vec<_>>>()?;
    Ok(RefinedEncodings { layer, model, points })
}

#[cfg(test)]
mod tests;
