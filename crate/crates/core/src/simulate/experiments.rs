//! Experiments built on [`simulate`](super::simulate): stability threshold
//! scans, the strong converse and robustness to additive noise.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use super::{ls_slope, run, simulate, SimParams, SimulationReport, StrategySpec, SystemSpec};
use crate::capacity::{eta_capacity, eta_objective, shannon_capacity, Sense};
use crate::distributions::ActuationDistribution;
use crate::error::{Error, Result};

/// Slopes within this many bits per step of zero are reported as marginal.
pub const DEAD_BAND_BITS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

impl Verdict {
    fn from_slope(slope: f64) -> Self {
        if slope < -DEAD_BAND_BITS {
            Verdict::Stable
        } else if slope > DEAD_BAND_BITS {
            Verdict::Unstable
        } else {
            Verdict::Marginal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub a: f64,
    pub log2_a: f64,
    pub slope_bits: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub sense: Sense,
    pub capacity_bits: f64,
    pub optimal_d: f64,
    pub points: Vec<ScanPoint>,
    /// `log2 a` where the fitted slope first crosses zero, by linear interpolation.
    pub critical_log2_a: Option<f64>,
}

/// Simulates the plant at every `a` with the capacity-achieving gain and
/// classifies the growth of the statistic matching `sense`: the mean of
/// `log2 |X|` for Shannon, the η-th moment (per η, factorized) for `Eta`.
pub fn threshold_scan(
    dist: &ActuationDistribution,
    sense: Sense,
    a_grid: &[f64],
    params: &SimParams,
) -> Result<ScanReport> {
    if a_grid.is_empty() || a_grid.iter().any(|a| !(*a >= 1.0 && a.is_finite())) {
        return Err(Error::InvalidQuery("a grid must be nonempty with every a >= 1".into()));
    }
    let mut params = params.clone();
    let capacity = match sense {
        Sense::Shannon => shannon_capacity(dist)?,
        Sense::Eta(eta) => {
            params.etas = vec![eta];
            eta_capacity(dist, eta)?
        }
        Sense::ZeroError => {
            return Err(Error::InvalidQuery("threshold scans support Shannon and eta senses".into()))
        }
    };
    let d = capacity.optimal_d.ok_or_else(|| {
        Error::InvalidQuery("capacity is attained only by hitting an atom; no finite gain to simulate".into())
    })?;
    let strategy = StrategySpec::LinearMemoryless { d };

    let mut grid = a_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let points = grid
        .iter()
        .map(|&a| {
            let r = simulate(&SystemSpec::new(a, dist.clone()), &strategy, &params)?;
            let slope = match sense {
                Sense::Eta(_) => r.factorized_slopes_bits[0],
                _ => r.growth_slope_bits,
            };
            Ok(ScanPoint {
                a,
                log2_a: a.log2(),
                slope_bits: slope,
                verdict: Verdict::from_slope(slope),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let critical_log2_a = points.windows(2).find_map(|w| {
        let (p, q) = (&w[0], &w[1]);
        (p.slope_bits.is_finite() && q.slope_bits.is_finite() && p.slope_bits < 0.0 && q.slope_bits >= 0.0)
            .then(|| p.log2_a + (q.log2_a - p.log2_a) * (-p.slope_bits) / (q.slope_bits - p.slope_bits))
    });

    Ok(ScanReport {
        sense,
        capacity_bits: capacity.value_bits,
        optimal_d: d,
        points,
        critical_log2_a,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConverseTrajectory {
    pub name: String,
    pub strategy: StrategySpec,
    /// `P(|X[n]| ≥ M)` per step, one array per threshold.
    pub fractions: Vec<Vec<f64>>,
    pub final_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConverseReport {
    pub a: f64,
    pub capacity_bits: f64,
    /// `log2 a - C_sh`.
    pub margin_bits: f64,
    pub thresholds: Vec<f64>,
    pub trajectories: Vec<ConverseTrajectory>,
}

/// Above the Shannon capacity no strategy keeps the state tight. Runs the
/// capacity-achieving gain, no control, and a gain redrawn uniformly from
/// `[2 d*, 0]` every step, recording `P(|X[n]| ≥ M)` for every `M`.
pub fn strong_converse_experiment(
    dist: &ActuationDistribution,
    a: f64,
    thresholds: &[f64],
    params: &SimParams,
) -> Result<ConverseReport> {
    if dist.support().has_nonzero_atom {
        return Err(Error::InvalidQuery(
            "the strong converse needs a gain law with a bounded density; atoms away from zero are not supported"
                .into(),
        ));
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidQuery("at least one threshold M is required".into()));
    }
    let capacity = shannon_capacity(dist)?;
    let d = capacity.optimal_d.unwrap_or(0.0);
    let strategies = [
        ("optimal", StrategySpec::LinearMemoryless { d }),
        ("zero", StrategySpec::ZeroControl),
        (
            "random",
            StrategySpec::RandomLinear {
                lo: (2.0 * d).min(0.0),
                hi: (2.0 * d).max(0.0),
            },
        ),
    ];
    let spec = SystemSpec::new(a, dist.clone());
    let trajectories = strategies
        .iter()
        .map(|(name, strategy)| {
            let (_, fractions) = run(&spec, strategy, params, thresholds)?;
            Ok(ConverseTrajectory {
                name: name.to_string(),
                strategy: *strategy,
                final_fractions: fractions.iter().map(|f| f[f.len() - 1]).collect(),
                fractions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConverseReport {
        a,
        capacity_bits: capacity.value_bits,
        margin_bits: a.log2() - capacity.value_bits,
        thresholds: thresholds.to_vec(),
        trajectories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseVerdict {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveNoiseReport {
    pub verdict: NoiseVerdict,
    pub eta: f64,
    /// Slope of `log2 E|X[n]|^η / η` over the final quarter of the horizon.
    pub final_quarter_slope_bits: f64,
    /// `sup_n log2 E|X[n]|^η`.
    pub sup_log2_moment: f64,
    /// Per-step moment multiplier `log2 (E|a(1 + B d)|^η)^(1/η)`, estimated from the draws.
    pub log2_rho: f64,
    /// The same multiplier from quadrature.
    pub log2_rho_exact: f64,
    /// `log2` of the moment ceiling implied by the triangle inequality; `+∞` when `ρ ≥ 1`.
    pub ceiling_log2_moment: f64,
    pub report: SimulationReport,
}

/// `E|Z|^η` for `Z ~ N(0, σ²)`.
fn gaussian_abs_moment(sigma: f64, eta: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    sigma.powf(eta) * 2f64.powf(eta / 2.0) * gamma((eta + 1.0) / 2.0) / PI.sqrt()
}

/// Simulates the noisy plant under `U = d* Y` and decides whether `E|X[n]|^η`
/// stays bounded: the final-quarter trend must sit inside the dead band and
/// the running moment below the ceiling
///
/// ```text
/// ‖X[n+1]‖ ≤ ρ ‖X[n]‖ + |a d| ‖B‖ ‖V‖ + ‖W‖,   ‖·‖ = (E|·|^η)^(1/η)
/// ```
///
/// (for `η < 1`, the same recursion on `E|·|^η` itself). Without `ρ < 1` no
/// ceiling exists and the verdict is unbounded.
pub fn additive_noise_check(
    spec: &SystemSpec,
    d_star: f64,
    eta: f64,
    params: &SimParams,
) -> Result<AdditiveNoiseReport> {
    let mut params = params.clone();
    params.etas = vec![eta];
    let report = simulate(spec, &StrategySpec::LinearMemoryless { d: d_star }, &params)?;
    let h = report.horizon;
    let x0_term = eta * spec.x0.abs().log2();
    let moment: Vec<f64> = report.log2_moments[0].iter().map(|m| m + x0_term).collect();
    let final_quarter_slope_bits = ls_slope(&moment, h - h / 4) / eta;
    let sup_log2_moment = moment.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log2_rho = report.factorized_log2_moments[0][h] / (h as f64 * eta);
    let log2_rho_exact = spec.a.abs().log2() - eta_objective(&spec.dist, d_star, eta)?;

    let ceiling_log2_moment = if log2_rho < 0.0 {
        let rho = log2_rho.exp2();
        let b_moment = spec.dist.expect(|b| b.abs().powf(eta), &[])?;
        let v_moment = gaussian_abs_moment(spec.obs_noise_std, eta);
        let w_moment = gaussian_abs_moment(spec.process_noise_std, eta);
        let gain = (spec.a * d_star).abs();
        if eta >= 1.0 {
            let forcing = gain * (b_moment * v_moment).powf(1.0 / eta) + w_moment.powf(1.0 / eta);
            eta * spec.x0.abs().max(forcing / (1.0 - rho)).log2()
        } else {
            let forcing = gain.powf(eta) * b_moment * v_moment + w_moment;
            spec.x0.abs().powf(eta).max(forcing / (1.0 - rho.powf(eta))).log2()
        }
    } else {
        f64::INFINITY
    };

    let bounded = log2_rho < 0.0
        && report.overflowed_paths == 0
        && final_quarter_slope_bits.abs() <= DEAD_BAND_BITS
        && sup_log2_moment <= ceiling_log2_moment;
    Ok(AdditiveNoiseReport {
        verdict: if bounded { NoiseVerdict::Bounded } else { NoiseVerdict::Unbounded },
        eta,
        final_quarter_slope_bits,
        sup_log2_moment,
        log2_rho,
        log2_rho_exact,
        ceiling_log2_moment,
        report,
    })
}
