use super::radial::{acosh_over_sinh, Radial};
use super::{dot, Curvature};
use crate::error::{Error, Result};

/// `-p_0 q_0 + sum_{i>=1} p_i q_i`.
pub fn minkowski_inner(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: q.len() });
    }
    if p.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Minkowski inner product needs dimension >= 2, got {}",
            p.len()
        )));
    }
    Ok(minkowski(p, q))
}

pub(super) fn minkowski(p: &[f64], q: &[f64]) -> f64 {
    -p[0] * q[0] + dot(&p[1..], &q[1..])
}

pub(super) fn reproject(coords: &mut [f64], k: Curvature) {
    let s = &coords[1..];
    coords[0] = (k.k() + dot(s, s)).sqrt();
}

/// `sqrt(K) acosh(-<p,q>_L / K)`, evaluated through the chord
/// `<p-q, p-q>_L = 2K (beta - 1)` so that nearby points do not lose all
/// precision to cancellation; a negative chord from roundoff clamps to 0.
pub(super) fn dist(p: &[f64], q: &[f64], k: Curvature) -> f64 {
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let chord = minkowski(&diff, &diff).max(0.0);
    2.0 * k.sqrt_k() * (chord / (4.0 * k.k())).sqrt().asinh()
}

pub(super) fn exp(p: &[f64], v: &[f64], k: Curvature) -> Vec<f64> {
    let y = minkowski(v, v).max(0.0) / k.k();
    let c = Radial::Cosh.value(y);
    let s = Radial::Sinhc.value(y);
    p.iter().zip(v).map(|(pi, vi)| c * pi + s * vi).collect()
}

pub(super) fn log(p: &[f64], q: &[f64], k: Curvature) -> Vec<f64> {
    let alpha = minkowski(p, q);
    let beta = -alpha / k.k();
    let mut u: Vec<f64> = q.iter().zip(p).map(|(qi, pi)| qi + alpha / k.k() * pi).collect();
    // u is tangent analytically; remove the roundoff component along p
    let off = minkowski(p, &u) / k.k();
    for (ui, pi) in u.iter_mut().zip(p) {
        *ui += off * pi;
    }
    let scale = acosh_over_sinh(beta);
    u.iter().map(|ui| scale * ui).collect()
}

pub(super) fn transport(x: &[f64], y: &[f64], v: &[f64], k: Curvature) -> Vec<f64> {
    let coef = minkowski(y, v) / (k.k() - minkowski(x, y));
    v.iter()
        .zip(x.iter().zip(y))
        .map(|(vi, (xi, yi))| vi + coef * (xi + yi))
        .collect()
}
