//! Hyperboloid and Poincaré-ball models of hyperbolic space with constant
//! curvature `-1/K`.
//!
//! Hyperboloid points live in `R^{d+1}` and satisfy `<p, p>_L = -K`, `p_0 > 0`,
//! where `<p, q>_L = -p_0 q_0 + sum_i p_i q_i` is the Minkowski inner product.
//! The origin is `o = (sqrt(K), 0, ..., 0)`.
//!
//! Poincaré-ball points live in the open ball of radius `sqrt(K)` in `R^d`.
//! With `c = 1/K` the ball uses the usual gyrovector operations:
//!
//! | quantity | formula |
//! |----------|---------|
//! | conformal factor | `lambda_x = 2 / (1 - c |x|^2)` |
//! | Möbius addition | `x (+) y = ((1 + 2c<x,y> + c|y|^2) x + (1 - c|x|^2) y) / (1 + 2c<x,y> + c^2 |x|^2 |y|^2)` |
//! | distance | `d(x, y) = 2 sqrt(K) artanh(|(-x) (+) y| / sqrt(K))` |
//! | exp map | `exp_x(v) = x (+) tanh(sqrt(c) lambda_x |v| / 2) v / (sqrt(c) |v|)` |
//! | log map | `log_x(y) = 2 / (sqrt(c) lambda_x) artanh(sqrt(c) |w|) w / |w|`, `w = (-x) (+) y` |
//! | transport | `P_{x->y}(v) = lambda_x / lambda_y gyr[y, -x] v` |
//!
//! Every operation that produces a point re-projects it: hyperboloid points get
//! `p_0 = sqrt(K + |p_{1..d}|^2)`, ball points are pulled inside radius
//! `(1 - BALL_EPS) sqrt(K)`.

mod hyperboloid;
mod poincare;
pub mod radial;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hyperboloid::minkowski_inner;
pub use radial::Radial;

/// Relative margin kept between ball points and the ball boundary.
pub const BALL_EPS: f64 = 1e-5;

/// Tolerance used when validating the hyperboloid constraint and tangency.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Tangent vectors with Riemannian norm above `TANGENT_GUARD / sqrt(K)` are
/// rejected by the exponential map instead of overflowing `cosh`.
pub const TANGENT_GUARD: f64 = 50.0;

/// Curvature parameter `K > 0`; the space has curvature `-1/K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_finite() && k > 0.0 {
            Ok(Curvature(k))
        } else {
            Err(Error::InvalidArgument(format!("curvature K must be positive, got {k}")))
        }
    }

    pub fn k(self) -> f64 {
        self.0
    }

    pub fn sqrt_k(self) -> f64 {
        self.0.sqrt()
    }

    /// Largest Riemannian norm accepted by the exponential map.
    pub fn tangent_limit(self) -> f64 {
        TANGENT_GUARD / self.sqrt_k()
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature(1.0)
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;

    fn try_from(k: f64) -> Result<Self> {
        Curvature::new(k)
    }
}

impl From<Curvature> for f64 {
    fn from(k: Curvature) -> f64 {
        k.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Hyperboloid,
    #[serde(alias = "poincare_ball")]
    Poincare,
}

impl Model {
    /// Ambient coordinate count for a `d`-dimensional manifold.
    pub fn ambient_dim(self, d: usize) -> usize {
        match self {
            Model::Hyperboloid => d + 1,
            Model::Poincare => d,
        }
    }

    /// Intrinsic dimension for a given ambient coordinate count.
    pub fn intrinsic_dim(self, ambient: usize) -> usize {
        match self {
            Model::Hyperboloid => ambient.saturating_sub(1),
            Model::Poincare => ambient,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hyperboloid" | "lorentz" => Ok(Model::Hyperboloid),
            "poincare" | "poincare_ball" | "poincareball" | "ball" => Ok(Model::Poincare),
            other => Err(Error::InvalidArgument(format!("unknown manifold model `{other}`"))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Hyperboloid => "hyperboloid",
            Model::Poincare => "poincare",
        })
    }
}

/// A point on one of the two models.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    model: Model,
    coords: Vec<f64>,
    curvature: Curvature,
}

impl ManifoldPoint {
    /// Validates `coords` against the model constraint.
    pub fn new(model: Model, coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        let p = ManifoldPoint { model, coords, curvature };
        p.check()?;
        Ok(p)
    }

    /// Builds a point after re-projecting `coords` onto the model.
    pub fn projected(model: Model, mut coords: Vec<f64>, curvature: Curvature) -> Self {
        match model {
            Model::Hyperboloid => hyperboloid::reproject(&mut coords, curvature),
            Model::Poincare => poincare::reproject(&mut coords, curvature),
        }
        ManifoldPoint { model, coords, curvature }
    }

    pub fn origin(model: Model, dim: usize, curvature: Curvature) -> Self {
        let mut coords = vec![0.0; model.ambient_dim(dim)];
        if model == Model::Hyperboloid {
            coords[0] = curvature.sqrt_k();
        }
        ManifoldPoint { model, coords, curvature }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Intrinsic dimension `d`.
    pub fn dim(&self) -> usize {
        self.model.intrinsic_dim(self.coords.len())
    }

    /// Signed violation of the model constraint: `<p,p>_L + K` for the
    /// hyperboloid, `|p|^2 - K` (negative inside) for the ball.
    pub fn constraint_residual(&self) -> f64 {
        match self.model {
            Model::Hyperboloid => {
                hyperboloid::minkowski(&self.coords, &self.coords) + self.curvature.k()
            }
            Model::Poincare => dot(&self.coords, &self.coords) - self.curvature.k(),
        }
    }

    pub fn is_on_manifold(&self) -> bool {
        match self.model {
            Model::Hyperboloid => {
                // absolute at unit scale, relative once p_0^2 dominates K
                let scale = (self.coords[0] * self.coords[0] / self.curvature.k()).max(1.0);
                self.coords.len() >= 2
                    && self.coords[0] > 0.0
                    && self.constraint_residual().abs() <= CONSTRAINT_TOL * scale
            }
            Model::Poincare => self.constraint_residual() < 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        if self.coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::OffManifold("non-finite coordinate".into()));
        }
        if self.model == Model::Hyperboloid && self.coords.len() < 2 {
            return Err(Error::OffManifold("hyperboloid points need at least 2 coordinates".into()));
        }
        if !self.is_on_manifold() {
            return Err(Error::OffManifold(format!(
                "{} constraint residual {:e}",
                self.model,
                self.constraint_residual()
            )));
        }
        Ok(())
    }

    fn same_space(&self, other: &ManifoldPoint) -> Result<()> {
        if self.model != other.model {
            return Err(Error::ModelMismatch(format!("{} vs {}", self.model, other.model)));
        }
        if self.curvature != other.curvature {
            return Err(Error::ModelMismatch(format!(
                "curvature {} vs {}",
                self.curvature.k(),
                other.curvature.k()
            )));
        }
        if self.coords.len() != other.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                got: other.coords.len(),
            });
        }
        Ok(())
    }
}

/// A vector in the tangent space at `base`, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    base: ManifoldPoint,
    coords: Vec<f64>,
}

impl TangentVec {
    /// Checks the dimension and, for the hyperboloid, tangency `<v, p>_L = 0`.
    pub fn new(base: ManifoldPoint, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != base.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: base.coords.len(),
                got: coords.len(),
            });
        }
        if base.model == Model::Hyperboloid {
            let scale = 1.0 + norm(&coords) * norm(&base.coords);
            let off = hyperboloid::minkowski(&coords, &base.coords);
            if off.abs() > CONSTRAINT_TOL * scale {
                return Err(Error::OffManifold(format!("tangency residual {off:e}")));
            }
        }
        Ok(TangentVec { base, coords })
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        let coords = vec![0.0; base.coords.len()];
        TangentVec { base, coords }
    }

    /// Tangent vector at the origin with spatial part `x` (the hyperboloid
    /// gets a zero time coordinate prepended).
    pub fn at_origin(model: Model, x: &[f64], curvature: Curvature) -> Self {
        let base = ManifoldPoint::origin(model, x.len(), curvature);
        let coords = match model {
            Model::Hyperboloid => std::iter::once(0.0).chain(x.iter().copied()).collect(),
            Model::Poincare => x.to_vec(),
        };
        TangentVec { base, coords }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Riemannian norm at the base point.
    pub fn norm(&self) -> f64 {
        inner(self, self).max(0.0).sqrt()
    }

    pub fn scaled(&self, s: f64) -> TangentVec {
        TangentVec {
            base: self.base.clone(),
            coords: self.coords.iter().map(|x| x * s).collect(),
        }
    }
}

/// Riemannian inner product of two vectors tangent at the same point.
pub fn inner(u: &TangentVec, v: &TangentVec) -> f64 {
    match u.base.model {
        Model::Hyperboloid => hyperboloid::minkowski(&u.coords, &v.coords),
        Model::Poincare => {
            let lambda = poincare::conformal(&u.base.coords, u.base.curvature);
            lambda * lambda * dot(&u.coords, &v.coords)
        }
    }
}

/// Geodesic distance. Symmetric, nonnegative, zero iff `p == q`.
pub fn dist(p: &ManifoldPoint, q: &ManifoldPoint) -> Result<f64> {
    p.same_space(q)?;
    Ok(match p.model {
        Model::Hyperboloid => hyperboloid::dist(&p.coords, &q.coords, p.curvature),
        Model::Poincare => poincare::dist(&p.coords, &q.coords, p.curvature),
    })
}

/// Exponential map at `p`. A zero vector returns `p` unchanged.
pub fn exp_map(p: &ManifoldPoint, v: &TangentVec) -> Result<ManifoldPoint> {
    p.same_space(&v.base)?;
    if v.base.coords != p.coords {
        return Err(Error::InvalidArgument("tangent vector is based at a different point".into()));
    }
    let n = v.norm();
    let limit = p.curvature.tangent_limit();
    if n > limit {
        return Err(Error::TangentNormTooLarge { norm: n, limit });
    }
    if n == 0.0 {
        return Ok(p.clone());
    }
    let coords = match p.model {
        Model::Hyperboloid => hyperboloid::exp(&p.coords, &v.coords, p.curvature),
        Model::Poincare => poincare::exp(&p.coords, &v.coords, p.curvature),
    };
    Ok(ManifoldPoint::projected(p.model, coords, p.curvature))
}

/// Logarithmic map: the tangent vector at `p` pointing to `q` with length
/// `dist(p, q)`. Returns the zero vector when `p == q`.
pub fn log_map(p: &ManifoldPoint, q: &ManifoldPoint) -> Result<TangentVec> {
    p.same_space(q)?;
    if p.coords == q.coords {
        return Ok(TangentVec::zero(p.clone()));
    }
    let coords = match p.model {
        Model::Hyperboloid => hyperboloid::log(&p.coords, &q.coords, p.curvature),
        Model::Poincare => poincare::log(&p.coords, &q.coords, p.curvature),
    };
    Ok(TangentVec { base: p.clone(), coords })
}

/// Parallel transport of `v` (tangent at `from`) along the geodesic to `to`.
pub fn parallel_transport(
    from: &ManifoldPoint,
    to: &ManifoldPoint,
    v: &TangentVec,
) -> Result<TangentVec> {
    from.same_space(to)?;
    from.same_space(&v.base)?;
    if v.base.coords != from.coords {
        return Err(Error::InvalidArgument("tangent vector is based at a different point".into()));
    }
    if from.coords == to.coords {
        return Ok(TangentVec { base: to.clone(), coords: v.coords.clone() });
    }
    let coords = match from.model {
        Model::Hyperboloid => hyperboloid::transport(&from.coords, &to.coords, &v.coords, from.curvature),
        Model::Poincare => poincare::transport(&from.coords, &to.coords, &v.coords, from.curvature),
    };
    Ok(TangentVec { base: to.clone(), coords })
}

/// Maps a Euclidean vector, read as a tangent vector at the origin, onto the
/// manifold with the origin exponential map.
pub fn lift_from_origin(x: &[f64], curvature: Curvature, model: Model) -> Result<ManifoldPoint> {
    if model == Model::Hyperboloid && x.is_empty() {
        return Err(Error::InvalidArgument("cannot lift a zero-dimensional vector".into()));
    }
    let n = norm(x);
    let limit = curvature.tangent_limit();
    let riemannian = match model {
        Model::Hyperboloid => n,
        Model::Poincare => 2.0 * n,
    };
    if riemannian > limit {
        return Err(Error::TangentNormTooLarge { norm: riemannian, limit });
    }
    let y = n * n / curvature.k();
    let coords = match model {
        Model::Hyperboloid => {
            let s = Radial::Sinhc.value(y);
            let mut c = Vec::with_capacity(x.len() + 1);
            c.push(0.0);
            c.extend(x.iter().map(|xi| s * xi));
            c
        }
        Model::Poincare => {
            let t = Radial::Tanhc.value(y);
            x.iter().map(|xi| t * xi).collect()
        }
    };
    Ok(ManifoldPoint::projected(model, coords, curvature))
}

/// Spatial coordinates of `log_o(p)`; inverse of [`lift_from_origin`].
pub fn to_tangent_at_origin(p: &ManifoldPoint) -> Result<Vec<f64>> {
    p.check()?;
    let k = p.curvature.k();
    Ok(match p.model {
        Model::Hyperboloid => {
            let s = &p.coords[1..];
            let g = Radial::Asinhc.value(dot(s, s) / k);
            s.iter().map(|si| g * si).collect()
        }
        Model::Poincare => {
            let g = Radial::Artanhc.value(dot(&p.coords, &p.coords) / k);
            p.coords.iter().map(|xi| g * xi).collect()
        }
    })
}

/// Hyperboloid point to the Poincaré ball with the same curvature.
pub fn hyperboloid_to_ball(p: &ManifoldPoint) -> Result<ManifoldPoint> {
    if p.model != Model::Hyperboloid {
        return Err(Error::ModelMismatch("expected a hyperboloid point".into()));
    }
    let sk = p.curvature.sqrt_k();
    let denom = p.coords[0] + sk;
    let coords = p.coords[1..].iter().map(|s| sk * s / denom).collect();
    Ok(ManifoldPoint::projected(Model::Poincare, coords, p.curvature))
}

/// Poincaré-ball point to the hyperboloid with the same curvature.
pub fn ball_to_hyperboloid(x: &ManifoldPoint) -> Result<ManifoldPoint> {
    if x.model != Model::Poincare {
        return Err(Error::ModelMismatch("expected a Poincaré-ball point".into()));
    }
    let k = x.curvature.k();
    let n2 = dot(&x.coords, &x.coords);
    let denom = k - n2;
    let mut coords = Vec::with_capacity(x.coords.len() + 1);
    coords.push(x.curvature.sqrt_k() * (k + n2) / denom);
    coords.extend(x.coords.iter().map(|xi| 2.0 * k * xi / denom));
    Ok(ManifoldPoint::projected(Model::Hyperboloid, coords, x.curvature))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
