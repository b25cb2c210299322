//! Scalar profiles `g(y)` of the radial maps `v -> g(|v|^2 / K) * v` used by the
//! origin-anchored exponential and logarithmic maps of both models.
//!
//! Each profile is an even analytic function of the geodesic radius, so it is
//! smooth in `y` at zero. Below `SERIES_CUTOFF` the closed forms cancel badly
//! and a Taylor expansion in `y` is used instead.

const SERIES_CUTOFF: f64 = 1e-4;

/// Radial profile selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Radial {
    /// `sinh(a) / a`, a = sqrt(y). Hyperboloid exp at the origin.
    Sinhc,
    /// `asinh(a) / a`. Hyperboloid log at the origin.
    Asinhc,
    /// `tanh(a) / a`. Poincaré-ball exp at the origin.
    Tanhc,
    /// `artanh(a) / a`, requires a < 1. Poincaré-ball log at the origin.
    Artanhc,
    /// `cosh(a)`. Time-like coefficient of the hyperboloid exp map.
    Cosh,
}

impl Radial {
    /// Value and derivative with respect to `y`.
    pub fn eval(self, y: f64) -> (f64, f64) {
        let y = y.max(0.0);
        if y < SERIES_CUTOFF {
            return self.series(y);
        }
        self.closed(y)
    }

    fn closed(self, y: f64) -> (f64, f64) {
        let a = y.sqrt();
        let a3 = 2.0 * a * y;
        match self {
            Radial::Sinhc => {
                let (s, c) = (a.sinh(), a.cosh());
                (s / a, (a * c - s) / a3)
            }
            Radial::Asinhc => {
                let s = a.asinh();
                (s / a, (a / (1.0 + y).sqrt() - s) / a3)
            }
            Radial::Tanhc => {
                let t = a.tanh();
                let sech2 = 1.0 - t * t;
                (t / a, (a * sech2 - t) / a3)
            }
            Radial::Artanhc => {
                let t = a.atanh();
                (t / a, (a / (1.0 - y) - t) / a3)
            }
            Radial::Cosh => (a.cosh(), 0.5 * a.sinh() / a),
        }
    }

    pub fn value(self, y: f64) -> f64 {
        self.eval(y).0
    }

    fn series(self, y: f64) -> (f64, f64) {
        let coeffs: [f64; 5] = match self {
            Radial::Sinhc => [1.0, 1.0 / 6.0, 1.0 / 120.0, 1.0 / 5040.0, 1.0 / 362_880.0],
            Radial::Asinhc => [1.0, -1.0 / 6.0, 3.0 / 40.0, -5.0 / 112.0, 35.0 / 1152.0],
            Radial::Tanhc => [1.0, -1.0 / 3.0, 2.0 / 15.0, -17.0 / 315.0, 62.0 / 2835.0],
            Radial::Artanhc => [1.0, 1.0 / 3.0, 1.0 / 5.0, 1.0 / 7.0, 1.0 / 9.0],
            Radial::Cosh => [1.0, 0.5, 1.0 / 24.0, 1.0 / 720.0, 1.0 / 40_320.0],
        };
        let mut value = 0.0;
        let mut deriv = 0.0;
        for (n, c) in coeffs.iter().enumerate().rev() {
            value = value * y + c;
            if n > 0 {
                deriv = deriv * y + c * n as f64;
            }
        }
        (value, deriv)
    }
}

/// `acosh(b) / sqrt(b^2 - 1)` for b >= 1, evaluated without cancellation near 1.
pub fn acosh_over_sinh(b: f64) -> f64 {
    let e = (b - 1.0).max(0.0);
    if e == 0.0 {
        return 1.0;
    }
    let root = (e * (b + 1.0)).sqrt();
    (e + root).ln_1p() / root
}
