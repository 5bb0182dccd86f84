//! Analytic collision probability between the ego and an obstacle edge under
//! Gaussian measurement noise, with braking-opportunity smoothing.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Heading differences above this leave the small-angle regime.
pub const SMALL_ANGLE_LIMIT: f64 = 0.3;

/// Measured geometry of one obstacle edge relative to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeObservation {
    /// Longitudinal distance to the nearest point of the edge, m.
    pub x_bar: f64,
    /// Lateral distance to the edge centre, m.
    pub y_bar: f64,
    /// Heading difference, rad.
    pub psi_bar: f64,
    /// Edge length, m.
    pub w_t: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub var_psi: f64,
    pub var_wt: f64,
}

impl EdgeObservation {
    pub fn exact(x_bar: f64, y_bar: f64, psi_bar: f64, w_t: f64) -> Self {
        Self {
            x_bar,
            y_bar,
            psi_bar,
            w_t,
            var_x: 0.0,
            var_y: 0.0,
            var_psi: 0.0,
            var_wt: 0.0,
        }
    }

    pub fn with_noise(mut self, noise: &ObservationNoise) -> Self {
        self.var_x = noise.var_x;
        self.var_y = noise.var_y;
        self.var_psi = noise.var_psi;
        self.var_wt = noise.var_wt;
        self
    }
}

/// Variances attached to every edge observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationNoise {
    pub var_x: f64,
    pub var_y: f64,
    pub var_psi: f64,
    pub var_wt: f64,
}

impl Default for ObservationNoise {
    fn default() -> Self {
        Self {
            var_x: 0.25,
            var_y: 0.04,
            var_psi: 0.0025,
            var_wt: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionParams {
    /// Ego width, m.
    pub w_e: f64,
    /// Braking deceleration threshold, m/s².
    pub d0: f64,
    /// Sigmoid steepness, 1/(m/s²).
    pub alpha: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        Self {
            w_e: 1.9,
            d0: 3.0,
            alpha: 2.0,
        }
    }
}

/// Mean and variance of the lateral offset once the ego has advanced to the
/// edge (`x̄ = 0`).
pub fn lateral_offset_at_zero(obs: &EdgeObservation) -> (f64, f64) {
    if obs.psi_bar.abs() > SMALL_ANGLE_LIMIT {
        tracing::warn!(psi = obs.psi_bar, "heading difference outside small-angle regime");
    }
    let mean = obs.y_bar + obs.x_bar * obs.psi_bar.tan();
    let var = obs.var_y + obs.var_psi * (obs.x_bar * obs.x_bar + obs.var_x);
    (mean, var)
}

/// Probability that the lateral offset at the edge falls inside the combined
/// half-width `(w_e + w_t) / 2`.
pub fn collision_probability(obs: &EdgeObservation, params: &CollisionParams) -> f64 {
    let (mu, var) = lateral_offset_at_zero(obs);
    let half = 0.5 * (params.w_e + obs.w_t);
    let var = var + 0.25 * obs.var_wt;
    band_probability(mu, var, half)
}

/// `P(-half < N(mu, var) < half)`; a zero variance degenerates to the
/// indicator `|mu| < half`.
pub fn band_probability(mu: f64, var: f64, half: f64) -> f64 {
    if var <= 0.0 {
        return if mu.abs() < half { 1.0 } else { 0.0 };
    }
    let std = Normal::standard();
    let sigma = var.sqrt();
    let p = std.cdf((half - mu) / sigma) - std.cdf((-half - mu) / sigma);
    p.clamp(0.0, 1.0)
}

/// Constant deceleration needed to stop exactly at the edge.
pub fn braking_deceleration(v: f64, obs: &EdgeObservation) -> Result<f64> {
    if obs.x_bar <= 0.0 {
        return Err(Error::Domain(format!(
            "obstacle edge already reached (x_bar = {})",
            obs.x_bar
        )));
    }
    let closing = v * obs.psi_bar.cos();
    Ok(closing * closing / (2.0 * obs.x_bar))
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Collision probability attenuated when braking before the edge is easy
/// (`d < d0`) and preserved when it is not (`d > d0`).
pub fn smoothed_collision_probability(v: f64, obs: &EdgeObservation, params: &CollisionParams) -> Result<f64> {
    let d = braking_deceleration(v, obs)?;
    let p = collision_probability(obs, params);
    Ok(p * logistic(params.alpha * (d - params.d0)))
}
