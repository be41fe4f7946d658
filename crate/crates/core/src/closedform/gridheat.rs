//! Heat semigroup on a uniform price grid.
//!
//! Grid data is extended linearly past both ends and convolved with a
//! Gaussian through its piecewise-linear interpolant. The interpolant
//! itself smooths with variance `dp²/6`, so the Gaussian gets the reduced
//! variance `s² - dp²/6`; the discrete kernel then carries exactly the
//! second moment `s²` and repeated application does not accumulate
//! spurious diffusion. For `s² <= dp²/6` the three-point kernel with
//! the same second moment is used.

use libm::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Kernel support in units of the effective standard deviation.
const KERNEL_REACH: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct GridHeat {
    stdev: f64,
    /// Weights for offsets `-reach..=reach`.
    weights: Vec<f64>,
    reach: usize,
}

/// `E[(x + sZ)^+]` for `x <= 0`, written to avoid cancellation.
fn call_floor(x_abs: f64, s: f64) -> f64 {
    let u = x_abs / s;
    s * (INV_SQRT_2PI * (-0.5 * u * u).exp() - u * 0.5 * erfc(u / std::f64::consts::SQRT_2))
}

impl GridHeat {
    /// Operator `f -> E[f(· + stdev Z)]` on a grid with spacing `dp`.
    pub fn new(dp: f64, stdev: f64) -> Self {
        assert!(dp > 0.0 && stdev >= 0.0, "invalid grid heat parameters");
        if stdev == 0.0 {
            return Self {
                stdev,
                weights: vec![1.0],
                reach: 0,
            };
        }
        let var_eff = stdev * stdev - dp * dp / 6.0;
        if var_eff <= 0.0 {
            let r = stdev * stdev / (dp * dp);
            return Self {
                stdev,
                weights: vec![0.5 * r, 1.0 - r, 0.5 * r],
                reach: 1,
            };
        }
        let s = var_eff.sqrt();
        let reach = (KERNEL_REACH * s / dp).ceil() as usize + 1;
        let r = |m: usize| call_floor(m as f64 * dp, s);
        let mut half = Vec::with_capacity(reach + 1);
        half.push((dp + 2.0 * r(1) - 2.0 * r(0)) / dp);
        for m in 1..=reach {
            half.push((r(m + 1) - 2.0 * r(m) + r(m - 1)) / dp);
        }
        let mut weights = Vec::with_capacity(2 * reach + 1);
        weights.extend(half.iter().rev());
        weights.extend(&half[1..]);
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self {
            stdev,
            weights,
            reach,
        }
    }

    pub fn stdev(&self) -> f64 {
        self.stdev
    }

    /// Writes the smoothed grid function into `out`. `f.len() >= 2`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        assert!(n >= 2 && out.len() == n);
        let j = self.reach;
        if j == 0 {
            out.copy_from_slice(f);
            return;
        }
        let lo_slope = f[1] - f[0];
        let hi_slope = f[n - 1] - f[n - 2];
        let ext = |k: isize| -> f64 {
            if k < 0 {
                f[0] + k as f64 * lo_slope
            } else if k as usize >= n {
                f[n - 1] + (k as usize - (n - 1)) as f64 * hi_slope
            } else {
                f[k as usize]
            }
        };
        for (i, o) in out.iter_mut().enumerate() {
            let start = i as isize - j as isize;
            let interior = start >= 0 && i + j < n;
            *o = if interior {
                let base = start as usize;
                f[base..base + 2 * j + 1]
                    .iter()
                    .zip(&self.weights)
                    .map(|(v, w)| v * w)
                    .sum()
            } else {
                self.weights
                    .iter()
                    .enumerate()
                    .map(|(m, w)| w * ext(start + m as isize))
                    .sum()
            };
        }
    }

    pub fn apply_new(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply(f, &mut out);
        out
    }
}
