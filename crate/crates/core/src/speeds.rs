//! Equilibrium trading-speed algebra.
//!
//! Given the players' effective gradients `e^j` (`λ v^j_p` for risk-neutral
//! players, `λ ṽ^j_p` for CARA players after the log transform), the
//! aggregate speed `z*` is the unique root of
//!
//! ```text
//! Φ(z) = N g(z) + z g'(z) - Σ_j e^j
//! ```
//!
//! and each player trades at `(e^j - g(z*)) / g'(z*)`.

use serde::Serialize;
use thiserror::Error;

use crate::model::{CostFunction, GameSpec};

/// Fraction of the sampled minimum of `g'` reported as the certified floor.
pub const EPS_SAFETY: f64 = 0.99;
/// `g'` must stay above this fraction of its maximum on the working
/// interval; below that it is not treated as bounded away from zero.
pub const MIN_RELATIVE_SLOPE: f64 = 1e-3;
pub const DEFAULT_CERT_SAMPLES: usize = 2001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("z = {z} lies outside the cost table [{lo}, {hi}]")]
    OutOfInterval { z: f64, lo: f64, hi: f64 },
    #[error("cost function is inadmissible: {reason}")]
    Certification {
        reason: String,
        certificate: Option<CostCertificate>,
    },
    #[error("root not bracketed on [{lo}, {hi}] (Φ = {f_lo}, {f_hi})")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("root search exceeded {0} iterations")]
    MaxIterations(usize),
}

impl CostFunction {
    /// `(g(z), g'(z))`.
    pub fn eval(&self, z: f64) -> Result<(f64, f64), SpeedError> {
        match self {
            CostFunction::Linear { kappa } => Ok((kappa * z, *kappa)),
            CostFunction::SmoothedSpread {
                kappa,
                spread,
                sharpness,
            } => {
                let two_over_pi = std::f64::consts::FRAC_2_PI;
                let u = sharpness * z;
                Ok((
                    kappa * z + spread * two_over_pi * u.atan(),
                    kappa + spread * two_over_pi * sharpness / (1.0 + u * u),
                ))
            }
            CostFunction::CustomTable { curve } => {
                if !curve.contains(z) {
                    return Err(SpeedError::OutOfInterval {
                        z,
                        lo: curve.x_min(),
                        hi: curve.x_max(),
                    });
                }
                Ok((curve.value(z), curve.slope(z)))
            }
        }
    }

    /// g(z).
    pub fn value(&self, z: f64) -> Result<f64, SpeedError> {
        self.eval(z).map(|(g, _)| g)
    }

    /// g'(z).
    pub fn slope(&self, z: f64) -> Result<f64, SpeedError> {
        self.eval(z).map(|(_, d)| d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostCertificate {
    /// Certified lower bound on `g'` over the working interval.
    pub eps_floor: f64,
    pub min_slope: f64,
    pub max_slope: f64,
    /// Whether `z -> g(z) + z g'(z)` increased at every sample.
    pub marginal_monotone: bool,
    pub working_interval: (f64, f64),
    pub samples: usize,
}

/// Samples `g'` and `g + z g'` uniformly on `interval` and checks the
/// admissibility conditions.
pub fn certify_cost(
    g: &CostFunction,
    interval: (f64, f64),
    samples: usize,
) -> Result<CostCertificate, SpeedError> {
    let (lo, hi) = interval;
    if samples < 100 {
        return Err(SpeedError::Certification {
            reason: format!("at least 100 samples are required, got {samples}"),
            certificate: None,
        });
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(SpeedError::Certification {
            reason: format!("invalid working interval [{lo}, {hi}]"),
            certificate: None,
        });
    }
    let mut min_slope = f64::INFINITY;
    let mut max_slope = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut prev_marginal = f64::NEG_INFINITY;
    let step = (hi - lo) / (samples - 1) as f64;
    for k in 0..samples {
        let z = if k + 1 == samples {
            hi
        } else {
            lo + k as f64 * step
        };
        let (gz, dz) = g.eval(z)?;
        min_slope = min_slope.min(dz);
        max_slope = max_slope.max(dz);
        let marginal = gz + z * dz;
        if marginal <= prev_marginal {
            monotone = false;
        }
        prev_marginal = marginal;
    }
    let cert = CostCertificate {
        eps_floor: EPS_SAFETY * min_slope,
        min_slope,
        max_slope,
        marginal_monotone: monotone,
        working_interval: interval,
        samples,
    };
    let fail = |reason: String| {
        Err(SpeedError::Certification {
            reason,
            certificate: Some(cert),
        })
    };
    if min_slope <= 0.0 {
        return fail(format!("min g' = {min_slope:e} is not positive"));
    }
    if min_slope < MIN_RELATIVE_SLOPE * max_slope {
        return fail(format!(
            "g' is not bounded away from zero: min g' = {min_slope:e} vs max g' = {max_slope:e}"
        ));
    }
    if !monotone {
        return fail("z -> g(z) + z g'(z) is not strictly increasing".into());
    }
    Ok(cert)
}

/// `N (λ/ε) max_j sup|H^j_p|`: bound on every equilibrium speed.
pub fn apriori_speed_bound(game: &GameSpec, cert: &CostCertificate) -> f64 {
    game.n_players() as f64 * game.market.lambda / cert.eps_floor * game.max_payoff_slope()
}

/// Certifies the game's cost function on an interval that contains the
/// a-priori speed bound. Table costs are certified on their full range.
pub fn certify_for_game(game: &GameSpec) -> Result<CostCertificate, SpeedError> {
    let g = &game.cost;
    if let CostFunction::CustomTable { curve } = g {
        let cert = certify_cost(g, (curve.x_min(), curve.x_max()), DEFAULT_CERT_SAMPLES)?;
        let bound = apriori_speed_bound(game, &cert);
        let reach = curve.x_min().abs().min(curve.x_max());
        if bound > reach {
            return Err(SpeedError::Certification {
                reason: format!(
                    "speed bound {bound:e} exceeds the cost table range [{}, {}]",
                    curve.x_min(),
                    curve.x_max()
                ),
                certificate: Some(cert),
            });
        }
        return Ok(cert);
    }
    let mut half = 1.0_f64;
    for _ in 0..16 {
        let cert = certify_cost(g, (-half, half), DEFAULT_CERT_SAMPLES)?;
        let bound = apriori_speed_bound(game, &cert);
        if bound <= half {
            return Ok(cert);
        }
        half = 2.0 * bound;
    }
    Err(SpeedError::Certification {
        reason: "working interval did not stabilize".into(),
        certificate: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedSolverSettings {
    /// Absolute tolerance on the aggregate speed.
    pub root_tol: f64,
    pub max_iter: usize,
}

impl Default for SpeedSolverSettings {
    fn default() -> Self {
        Self {
            root_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Root of `Φ(z) = N g(z) + z g'(z) - s`, bracketed analytically by
/// `|z*| <= |s| / ((N+1) ε)` and located by Illinois regula falsi with a
/// bisection fallback.
pub fn aggregate_speed(
    g: &CostFunction,
    n: usize,
    s: f64,
    eps_floor: f64,
    settings: &SpeedSolverSettings,
) -> Result<f64, SpeedError> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let phi = |z: f64| -> Result<f64, SpeedError> {
        let (gz, dz) = g.eval(z)?;
        Ok(nf * gz + z * dz - s)
    };
    let tol = settings.root_tol;
    let reach = s.abs() / ((nf + 1.0) * eps_floor) + tol;
    let (mut lo, mut hi) = (-reach, reach);
    let (mut f_lo, mut f_hi) = (phi(lo)?, phi(hi)?);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(SpeedError::Bracket { lo, hi, f_lo, f_hi });
    }
    // Illinois weights; the true values are kept for the final secant.
    let (mut w_lo, mut w_hi) = (f_lo, f_hi);
    let mut last_side = 0i8;
    for _ in 0..settings.max_iter {
        if hi - lo <= tol {
            let z = lo - f_lo * (hi - lo) / (f_hi - f_lo);
            return Ok(if z >= lo && z <= hi {
                z
            } else {
                0.5 * (lo + hi)
            });
        }
        let width = hi - lo;
        let mut z = hi - w_hi * width / (w_hi - w_lo);
        if !(z > lo && z < hi) {
            z = 0.5 * (lo + hi);
        }
        let fz = phi(z)?;
        if fz == 0.0 {
            return Ok(z);
        }
        if fz < 0.0 {
            lo = z;
            f_lo = fz;
            w_lo = fz;
            if last_side == -1 {
                w_hi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = z;
            f_hi = fz;
            w_hi = fz;
            if last_side == 1 {
                w_lo *= 0.5;
            }
            last_side = 1;
        }
        if hi - lo > 0.5 * width {
            let m = 0.5 * (lo + hi);
            if m <= lo || m >= hi {
                return Ok(m);
            }
            let fm = phi(m)?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm < 0.0 {
                lo = m;
                f_lo = fm;
                w_lo = fm;
            } else {
                hi = m;
                f_hi = fm;
                w_hi = fm;
            }
            last_side = 0;
        }
    }
    Err(SpeedError::MaxIterations(settings.max_iter))
}

/// Individual speeds `(e^j - g(z*)) / g'(z*)` written into `out`.
pub fn player_speeds_into(
    g: &CostFunction,
    effective_gradients: &[f64],
    z_star: f64,
    out: &mut [f64],
) -> Result<(), SpeedError> {
    let (gz, dz) = g.eval(z_star)?;
    for (o, e) in out.iter_mut().zip(effective_gradients) {
        *o = (e - gz) / dz;
    }
    Ok(())
}

pub fn player_speeds(
    g: &CostFunction,
    effective_gradients: &[f64],
    z_star: f64,
) -> Result<Vec<f64>, SpeedError> {
    let mut out = vec![0.0; effective_gradients.len()];
    player_speeds_into(g, effective_gradients, z_star, &mut out)?;
    Ok(out)
}

/// Bundles the cost function, certificate and settings for repeated
/// per-node solves.
#[derive(Debug, Clone)]
pub struct SpeedSolver<'a> {
    pub cost: &'a CostFunction,
    pub n_players: usize,
    pub certificate: CostCertificate,
    pub settings: SpeedSolverSettings,
}

impl<'a> SpeedSolver<'a> {
    pub fn for_game(game: &'a GameSpec, settings: SpeedSolverSettings) -> Result<Self, SpeedError> {
        Ok(Self {
            cost: &game.cost,
            n_players: game.n_players(),
            certificate: certify_for_game(game)?,
            settings,
        })
    }

    /// Solves for the aggregate and individual speeds; returns `(z*, g(z*))`.
    pub fn solve(
        &self,
        effective_gradients: &[f64],
        speeds: &mut [f64],
    ) -> Result<(f64, f64), SpeedError> {
        let s: f64 = effective_gradients.iter().sum();
        let z = aggregate_speed(
            self.cost,
            self.n_players,
            s,
            self.certificate.eps_floor,
            &self.settings,
        )?;
        player_speeds_into(self.cost, effective_gradients, z, speeds)?;
        Ok((z, self.cost.value(z)?))
    }
}
