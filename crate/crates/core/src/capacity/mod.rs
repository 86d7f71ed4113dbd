//! Shannon, zero-error and η-th moment control capacities of the actuation
//! channel `X ↦ X + B·U`, all reported in bits per step.
//!
//! The Shannon and η-th moment capacities maximize a single-letter objective
//! over linear gains `U = d·X`:
//!
//! * Shannon: `max_d E[-log2 |1 + B d|]`
//! * η-th moment: `max_d -(1/η) log2 E[|1 + B d|^η]`
//!
//! The zero-error capacity and the second-moment capacity have closed forms.

mod optimize;

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::ActuationDistribution;
use crate::error::{Error, Result};

pub use optimize::{maximize_over_d, search_grid, Diagnostics, Maximum, TIE_TOLERANCE};

/// η at or above which moment objectives are accumulated in log space.
pub const LOG_SPACE_ETA: f64 = 8.0;
/// Slack allowed when checking that capacities decrease in η.
pub const MONOTONE_SLACK: f64 = 1e-7;

const MAX_HALFWIDTH: f64 = 1e6;
const HALFWIDTH_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "sense", content = "eta", rename_all = "snake_case")]
pub enum Sense {
    Shannon,
    ZeroError,
    Eta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityQuery {
    pub sense: Sense,
    /// Search interval `[-H, H]` for `d`; `None` derives it from the distribution.
    pub d_search_halfwidth: Option<f64>,
    pub coarse_grid_points: usize,
    pub refine_tolerance: f64,
}

impl CapacityQuery {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            d_search_halfwidth: None,
            coarse_grid_points: 2001,
            refine_tolerance: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Sense::Eta(eta) = self.sense {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidQuery(format!("eta must be positive, got {eta}")));
            }
        }
        if self.coarse_grid_points < 101 || self.coarse_grid_points.is_multiple_of(2) {
            return Err(Error::InvalidQuery(format!(
                "coarse grid needs an odd number of points >= 101, got {}",
                self.coarse_grid_points
            )));
        }
        if let Some(h) = self.d_search_halfwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidQuery(format!("search halfwidth must be positive, got {h}")));
            }
        }
        if !(self.refine_tolerance > 0.0) {
            return Err(Error::InvalidQuery("refine tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityResult {
    /// Capacity in bits per step; may be `+∞`.
    pub value_bits: f64,
    pub optimal_d: Option<f64>,
    pub sense: Sense,
    pub diagnostics: Diagnostics,
}

impl CapacityResult {
    fn closed_form(sense: Sense, value_bits: f64, optimal_d: Option<f64>) -> Self {
        Self {
            value_bits,
            optimal_d,
            sense,
            diagnostics: Diagnostics {
                objective_at_optimum: value_bits,
                ..Diagnostics::default()
            },
        }
    }
}

/// `E[-log2 |1 + B d|]`. Returns `+∞` when an atom of `B` sits exactly at `-1/d`.
pub fn shannon_objective(dist: &ActuationDistribution, d: f64) -> Result<f64> {
    if d == 0.0 {
        return Ok(0.0);
    }
    if dist.support().atoms.iter().any(|&(b, _)| 1.0 + b * d == 0.0) {
        return Ok(f64::INFINITY);
    }
    let nats = dist.expect(|b| -(1.0 + b * d).abs().ln(), &[-1.0 / d])?;
    Ok(nats / LN_2)
}

/// `-(1/η) log2 E[|1 + B d|^η]`.
pub fn eta_objective(dist: &ActuationDistribution, d: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidQuery(format!("eta must be positive, got {eta}")));
    }
    if d == 0.0 {
        return Ok(0.0);
    }
    let singular = [-1.0 / d];
    let nats = if eta >= LOG_SPACE_ETA {
        // Normalize by the largest |1 + b d| on the support so the integrand stays in (0, 1].
        let (lo, hi) = dist.integration_bounds();
        let peak = dist
            .support()
            .atoms
            .iter()
            .map(|&(b, _)| b)
            .chain([lo, hi].into_iter().filter(|x| x.is_finite()))
            .map(|b| (1.0 + b * d).abs().ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let scaled = dist.expect(|b| (eta * ((1.0 + b * d).abs().ln() - peak)).exp(), &singular)?;
        if scaled <= 0.0 {
            return Ok(f64::INFINITY);
        }
        -(peak + scaled.ln() / eta)
    } else {
        // E|y|^η - 1 integrated directly keeps precision as η → 0.
        let excess = dist.expect(|b| (eta * (1.0 + b * d).abs().ln()).exp_m1(), &singular)?;
        if excess <= -1.0 {
            return Ok(f64::INFINITY);
        }
        -excess.ln_1p() / eta
    };
    Ok(nats / LN_2)
}

/// Default search halfwidth `H = 100 · max(1/|μ|, 1/max(|b1|, |b2|, σ), 1)`, capped at `1e6`.
pub fn default_halfwidth(dist: &ActuationDistribution) -> f64 {
    let m = dist.moments();
    let s = dist.support();
    let scale = s.lower.abs().max(s.upper.abs()).max(m.variance.sqrt());
    let h = 100.0 * (1.0 / m.mean.abs()).max(1.0 / scale).max(1.0);
    if h.is_finite() {
        h.min(MAX_HALFWIDTH)
    } else {
        MAX_HALFWIDTH
    }
}

fn optimize<F>(dist: &ActuationDistribution, query: &CapacityQuery, objective: F) -> Result<CapacityResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    query.validate()?;
    let mean = dist.moments().mean;
    let center = (mean != 0.0).then(|| -1.0 / mean);
    let mut halfwidth = query.d_search_halfwidth.unwrap_or_else(|| default_halfwidth(dist));
    let candidates: Vec<f64> = dist
        .support()
        .atoms
        .iter()
        .filter(|&&(b, _)| b != 0.0)
        .map(|&(b, _)| -1.0 / b)
        .collect();
    let mut found = maximize_over_d(&objective, query, halfwidth, center, &candidates)?;
    for _ in 0..HALFWIDTH_DOUBLINGS {
        if !found.diagnostics.search_bound_hit {
            break;
        }
        halfwidth *= 2.0;
        found = maximize_over_d(&objective, query, halfwidth, center, &candidates)?;
    }
    // d = 0 always achieves 0, so a capacity is never negative.
    let (value, d) = if found.value < 0.0 { (0.0, 0.0) } else { (found.value, found.d) };
    Ok(CapacityResult {
        value_bits: value,
        optimal_d: Some(d),
        sense: query.sense,
        diagnostics: found.diagnostics,
    })
}

/// Shannon control capacity. Infinite whenever `B` has an atom away from zero.
pub fn shannon_capacity(dist: &ActuationDistribution) -> Result<CapacityResult> {
    shannon_capacity_with(dist, &CapacityQuery::new(Sense::Shannon))
}

pub fn shannon_capacity_with(dist: &ActuationDistribution, query: &CapacityQuery) -> Result<CapacityResult> {
    if dist.support().has_nonzero_atom {
        return Ok(CapacityResult::closed_form(Sense::Shannon, f64::INFINITY, None));
    }
    let query = CapacityQuery {
        sense: Sense::Shannon,
        ..*query
    };
    optimize(dist, &query, |d| shannon_objective(dist, d))
}

/// Zero-error control capacity from the essential support `[b1, b2]`:
/// `log2(|b1 + b2| / |b2 - b1|)` with `d* = -2/(b1 + b2)` when `0 ∉ [b1, b2]`,
/// zero otherwise (and zero for unbounded support).
pub fn zero_error_capacity(dist: &ActuationDistribution) -> CapacityResult {
    let s = dist.support();
    if !s.is_bounded() {
        return CapacityResult::closed_form(Sense::ZeroError, 0.0, None);
    }
    if s.contains_zero {
        return CapacityResult::closed_form(Sense::ZeroError, 0.0, Some(0.0));
    }
    let (b1, b2) = (s.lower, s.upper);
    let value = ((b1 + b2).abs() / (b2 - b1).abs()).log2();
    CapacityResult::closed_form(Sense::ZeroError, value, Some(-2.0 / (b1 + b2)))
}

pub fn eta_capacity(dist: &ActuationDistribution, eta: f64) -> Result<CapacityResult> {
    eta_capacity_with(dist, &CapacityQuery::new(Sense::Eta(eta)))
}

pub fn eta_capacity_with(dist: &ActuationDistribution, query: &CapacityQuery) -> Result<CapacityResult> {
    let Sense::Eta(eta) = query.sense else {
        return Err(Error::InvalidQuery("eta_capacity needs an Eta sense".into()));
    };
    optimize(dist, query, |d| eta_objective(dist, d, eta))
}

/// `C_2 = ½ log2(1 + μ²/σ²)` with `d* = -μ/(μ² + σ²)`.
pub fn second_moment_closed_form(dist: &ActuationDistribution) -> CapacityResult {
    let m = dist.moments();
    let sense = Sense::Eta(2.0);
    if m.variance == 0.0 {
        return if m.mean == 0.0 {
            CapacityResult::closed_form(sense, 0.0, Some(0.0))
        } else {
            CapacityResult::closed_form(sense, f64::INFINITY, Some(-1.0 / m.mean))
        };
    }
    let value = 0.5 * (m.mean * m.mean / m.variance).ln_1p() / LN_2;
    CapacityResult::closed_form(sense, value, Some(-m.mean / m.second_moment))
}

/// `C_η` along a strictly increasing η grid; fails if the curve is not
/// nonincreasing within [`MONOTONE_SLACK`].
pub fn capacity_curve(dist: &ActuationDistribution, etas: &[f64]) -> Result<Vec<CapacityResult>> {
    capacity_curve_with(dist, etas, &CapacityQuery::new(Sense::Eta(1.0)))
}

/// [`capacity_curve`] with the search settings of `query`; its sense is ignored.
pub fn capacity_curve_with(
    dist: &ActuationDistribution,
    etas: &[f64],
    query: &CapacityQuery,
) -> Result<Vec<CapacityResult>> {
    if etas.iter().any(|&e| !(e > 0.0)) || etas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidQuery(
            "eta grid must be positive and strictly increasing".into(),
        ));
    }
    let curve = etas
        .par_iter()
        .map(|&eta| {
            let q = CapacityQuery {
                sense: Sense::Eta(eta),
                ..*query
            };
            eta_capacity_with(dist, &q)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = curve
        .windows(2)
        .find(|w| w[1].value_bits > w[0].value_bits + MONOTONE_SLACK)
    {
        return Err(Error::InvariantViolated(format!(
            "C_eta increased from {} at {:?} to {} at {:?}",
            w[0].value_bits, w[0].sense, w[1].value_bits, w[1].sense
        )));
    }
    Ok(curve)
}
