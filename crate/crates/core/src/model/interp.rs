//! Shape-preserving (Fritsch-Carlson) cubic Hermite interpolation.

use serde::Serialize;

/// Monotone piecewise-cubic interpolant through `(xs[i], ys[i])`.
///
/// Node derivatives follow the PCHIP rule, so the interpolant never
/// overshoots the data between two knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    #[serde(skip)]
    ds: Vec<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant. `flat_ends` forces zero slope at both end
    /// knots so that a constant extension beyond the data stays C¹.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, flat_ends: bool) -> Result<Self, String> {
        if xs.len() != ys.len() {
            return Err(format!(
                "table has {} abscissae but {} ordinates",
                xs.len(),
                ys.len()
            ));
        }
        if xs.len() < 2 {
            return Err("table needs at least two points".into());
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err("table entries must be finite".into());
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err("table abscissae must be strictly increasing".into());
        }
        let ds = pchip_slopes(&xs, &ys, flat_ends);
        Ok(Self { xs, ys, ds })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min() && x <= self.x_max()
    }

    /// Smallest knot spacing.
    pub fn min_spacing(&self) -> f64 {
        self.xs
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        let idx = self.xs.partition_point(|&k| k <= x);
        idx.clamp(1, n - 1) - 1
    }

    /// Interpolated value; `x` is clamped to the knot range.
    pub fn value(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_min(), self.x_max());
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.ds[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.ds[i + 1]
    }

    /// Derivative of the interpolant; `x` is clamped to the knot range.
    pub fn slope(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_min(), self.x_max());
        let i = self.segment(x);
        let (a, b, c) = self.slope_coefficients(i);
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        (a * t + b) * t + c
    }

    // Derivative on segment i as a quadratic in the local coordinate t.
    fn slope_coefficients(&self, i: usize) -> (f64, f64, f64) {
        let h = self.xs[i + 1] - self.xs[i];
        let secant = (self.ys[i + 1] - self.ys[i]) / h;
        let (d0, d1) = (self.ds[i], self.ds[i + 1]);
        (
            -6.0 * secant + 3.0 * d0 + 3.0 * d1,
            6.0 * secant - 4.0 * d0 - 2.0 * d1,
            d0,
        )
    }

    /// Exact maximum of |slope| over the knot range.
    pub fn max_abs_slope(&self) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..self.xs.len() - 1 {
            let (a, b, c) = self.slope_coefficients(i);
            best = best.max(c.abs()).max((a + b + c).abs());
            if a != 0.0 {
                let t = -b / (2.0 * a);
                if t > 0.0 && t < 1.0 {
                    best = best.max(((a * t + b) * t + c).abs());
                }
            }
        }
        best
    }

    /// Smallest derivative value over the knot range.
    pub fn min_slope(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.xs.len() - 1 {
            let (a, b, c) = self.slope_coefficients(i);
            best = best.min(c).min(a + b + c);
            if a != 0.0 {
                let t = -b / (2.0 * a);
                if t > 0.0 && t < 1.0 {
                    best = best.min((a * t + b) * t + c);
                }
            }
        }
        best
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64], flat_ends: bool) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        if !flat_ends {
            d[0] = delta[0];
            d[1] = delta[0];
        }
        return d;
    }
    for i in 1..n - 1 {
        let (dl, dr) = (delta[i - 1], delta[i]);
        if dl == 0.0 || dr == 0.0 || dl.signum() != dr.signum() {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }
    if !flat_ends {
        d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}
