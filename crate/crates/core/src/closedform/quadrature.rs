//! Rules for Gaussian expectations `E[f(Z)]`, `Z ~ N(0,1)`.
//!
//! Gauss-Hermite is the default. Mollified payoffs with a feature width `w`
//! are analytic only in a strip of half-width `~π w` around the real axis;
//! once the Gaussian is much wider than `w`, Gauss-Hermite converges far
//! too slowly and a truncated trapezoid rule (geometrically convergent for
//! strip-analytic integrands) takes over.

use std::borrow::Cow;
use std::f64::consts::{PI, SQRT_2};
use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;

/// `-ln(machine epsilon)`, roughly: target decay exponent of the
/// quadrature error.
const RESOLUTION: f64 = 36.0;
/// Trapezoid rules are truncated at `|z| <= TRAPEZOID_REACH`.
pub const TRAPEZOID_REACH: f64 = 10.0;
const MAX_TRAPEZOID_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point Gauss-Hermite rule in expectation form.
    pub fn gauss_hermite(n: usize) -> Self {
        let n = NonZeroUsize::new(n).unwrap_or(NonZeroUsize::MIN);
        let rule = GaussHermite::new(n);
        let mut nodes = Vec::with_capacity(n.get());
        let mut weights = Vec::with_capacity(n.get());
        for &(x, w) in rule.as_node_weight_pairs() {
            nodes.push(SQRT_2 * x);
            weights.push(w);
        }
        Self::normalized(nodes, weights)
    }

    /// Trapezoid rule with step `h` on `[-reach, reach]` against the
    /// standard normal density.
    pub fn trapezoid(h: f64, reach: f64) -> Self {
        let k_max = (reach / h).ceil() as i64;
        let mut nodes = Vec::with_capacity((2 * k_max + 1) as usize);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for k in -k_max..=k_max {
            let z = k as f64 * h;
            nodes.push(z);
            weights.push((-0.5 * z * z).exp());
        }
        Self::normalized(nodes, weights)
    }

    fn normalized(nodes: Vec<f64>, mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k f(z_k)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Picks a quadrature rule per standard deviation for integrands whose
/// sharpest feature has width `feature_width` (in price units).
#[derive(Debug, Clone)]
pub struct HeatQuadrature {
    gauss_hermite: QuadratureRule,
    n_nodes: usize,
    feature_width: f64,
}

impl HeatQuadrature {
    pub fn new(quad_nodes: usize, feature_width: f64) -> Self {
        Self {
            gauss_hermite: QuadratureRule::gauss_hermite(quad_nodes),
            n_nodes: quad_nodes.max(1),
            feature_width,
        }
    }

    pub fn feature_width(&self) -> f64 {
        self.feature_width
    }

    pub fn gauss_hermite(&self) -> &QuadratureRule {
        &self.gauss_hermite
    }

    /// Trapezoid step in z units, or `None` when Gauss-Hermite suffices.
    fn trapezoid_step(&self, stdev: f64) -> Option<f64> {
        if !(self.feature_width.is_finite() && stdev > 0.0) {
            return None;
        }
        // Half-width of the analyticity strip in z units.
        let strip = PI * self.feature_width / stdev;
        if 2.0 * strip * (self.n_nodes as f64).sqrt() >= RESOLUTION {
            return None;
        }
        Some((2.0 * PI * strip / RESOLUTION).min(MAX_TRAPEZOID_STEP))
    }

    /// Rule for `E[f(p + stdev Z)]`.
    pub fn rule_for(&self, stdev: f64) -> Cow<'_, QuadratureRule> {
        match self.trapezoid_step(stdev) {
            None => Cow::Borrowed(&self.gauss_hermite),
            Some(h) => Cow::Owned(QuadratureRule::trapezoid(h, TRAPEZOID_REACH)),
        }
    }

    /// Trapezoid layout whose price step divides `dp`, so that samples are
    /// shared by every point of a uniform price row. `None` when
    /// Gauss-Hermite is selected or the aligned rule would be much larger.
    pub fn row_layout(&self, stdev: f64, dp: f64) -> Option<RowLayout> {
        let h = self.trapezoid_step(stdev)?;
        let substeps = (dp / (h * stdev)).ceil().max(1.0) as usize;
        let h_p = dp / substeps as f64;
        let h_z = h_p / stdev;
        if h_z < 0.25 * h {
            return None;
        }
        let half = (TRAPEZOID_REACH / h_z).ceil() as usize;
        let mut weights: Vec<f64> = (0..=2 * half)
            .map(|k| {
                let z = (k as f64 - half as f64) * h_z;
                (-0.5 * z * z).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Some(RowLayout {
            weights,
            substeps,
            half,
            h_p,
        })
    }
}

/// Trapezoid nodes `p + k h_p`, `|k| <= half`, with `h_p = dp / substeps`.
#[derive(Debug, Clone)]
pub struct RowLayout {
    pub weights: Vec<f64>,
    pub substeps: usize,
    pub half: usize,
    pub h_p: f64,
}

impl RowLayout {
    /// Samples of `f` at every node of every point of the row
    /// `p_min + i dp`, `i < n_p`.
    pub fn samples(&self, f: impl Fn(f64) -> f64, p_min: f64, n_p: usize) -> Vec<f64> {
        let len = (n_p - 1) * self.substeps + 2 * self.half + 1;
        (0..len)
            .map(|l| f(p_min + (l as f64 - self.half as f64) * self.h_p))
            .collect()
    }

    /// `Σ_k w_k y[i·substeps + k]` for every point `i` of the row.
    pub fn sums(&self, ys: &[f64], n_p: usize) -> Vec<f64> {
        (0..n_p)
            .map(|i| {
                let start = i * self.substeps;
                ys[start..start + self.weights.len()]
                    .iter()
                    .zip(&self.weights)
                    .map(|(y, w)| y * w)
                    .sum()
            })
            .collect()
    }
}
