use super::{dot, norm, Curvature, BALL_EPS};

pub(super) fn conformal(x: &[f64], k: Curvature) -> f64 {
    2.0 / (1.0 - dot(x, x) / k.k())
}

pub(super) fn reproject(coords: &mut [f64], k: Curvature) {
    let max = (1.0 - BALL_EPS) * k.sqrt_k();
    let n = norm(coords);
    if n > max {
        let s = max / n;
        coords.iter_mut().for_each(|x| *x *= s);
    }
}

pub(crate) fn mobius_add(x: &[f64], y: &[f64], k: Curvature) -> Vec<f64> {
    let c = 1.0 / k.k();
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let a = 1.0 + 2.0 * c * xy + c * y2;
    let b = 1.0 - c * x2;
    let d = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    x.iter().zip(y).map(|(xi, yi)| (a * xi + b * yi) / d).collect()
}

fn neg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| -v).collect()
}

pub(super) fn dist(x: &[f64], y: &[f64], k: Curvature) -> f64 {
    let w = mobius_add(&neg(x), y, k);
    let r = (norm(&w) / k.sqrt_k()).min(1.0 - f64::EPSILON);
    2.0 * k.sqrt_k() * r.atanh()
}

pub(super) fn exp(x: &[f64], v: &[f64], k: Curvature) -> Vec<f64> {
    let sc = 1.0 / k.sqrt_k();
    let n = norm(v);
    let lambda = conformal(x, k);
    let t = (sc * lambda * n / 2.0).tanh() / (sc * n);
    let step: Vec<f64> = v.iter().map(|vi| t * vi).collect();
    mobius_add(x, &step, k)
}

pub(super) fn log(x: &[f64], y: &[f64], k: Curvature) -> Vec<f64> {
    let sc = 1.0 / k.sqrt_k();
    let w = mobius_add(&neg(x), y, k);
    let n = norm(&w);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let lambda = conformal(x, k);
    let r = (sc * n).min(1.0 - f64::EPSILON);
    let s = 2.0 / (sc * lambda) * r.atanh() / n;
    w.iter().map(|wi| s * wi).collect()
}

/// `gyr[u, v] w` in closed form.
fn gyration(u: &[f64], v: &[f64], w: &[f64], k: Curvature) -> Vec<f64> {
    let c = 1.0 / k.k();
    let c2 = c * c;
    let (u2, v2) = (dot(u, u), dot(v, v));
    let (uv, uw, vw) = (dot(u, v), dot(u, w), dot(v, w));
    let a = -c2 * uw * v2 + c * vw + 2.0 * c2 * uv * vw;
    let b = -c2 * vw * u2 - c * uw;
    let d = 1.0 + 2.0 * c * uv + c2 * u2 * v2;
    w.iter()
        .zip(u.iter().zip(v))
        .map(|(wi, (ui, vi))| wi + 2.0 * (a * ui + b * vi) / d)
        .collect()
}

pub(super) fn transport(x: &[f64], y: &[f64], v: &[f64], k: Curvature) -> Vec<f64> {
    let ratio = conformal(x, k) / conformal(y, k);
    gyration(y, &neg(x), v, k).into_iter().map(|g| g * ratio).collect()
}
