//! Monte Carlo simulation of the scalar plant
//!
//! ```text
//! X[n+1] = a (X[n] + B[n] U[n]) + W[n],   Y[n] = X[n] + V[n],   U[n] = d[n] Y[n]
//! ```
//!
//! with i.i.d. actuation gains `B[n]`. Without additive noise the state is kept
//! as `log2 |X|`, which survives long horizons at large `a`; with noise it is
//! kept as a plain double clamped at `1e300`.
//!
//! Paths are processed in fixed-size blocks, each drawing from its own
//! counter-based stream, and block statistics are merged in block order. The
//! result is bitwise identical for any number of worker threads.

mod experiments;
pub mod rng;
mod scaling;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::ActuationDistribution;
use crate::error::{Error, Result};

pub use experiments::{
    additive_noise_check, strong_converse_experiment, threshold_scan, AdditiveNoiseReport, ConverseReport,
    ConverseTrajectory, NoiseVerdict, ScanPoint, ScanReport, Verdict, DEAD_BAND_BITS,
};
pub use scaling::scaling_equivalence_check;

/// Magnitude at which additive-noise paths are clamped and flagged.
pub const CLAMP: f64 = 1e300;
const BLOCK_PATHS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSpec {
    pub a: f64,
    pub dist: ActuationDistribution,
    pub x0: f64,
    pub process_noise_std: f64,
    pub obs_noise_std: f64,
}

impl SystemSpec {
    /// Noise-free plant started at `x0 = 1`.
    pub fn new(a: f64, dist: ActuationDistribution) -> Self {
        Self {
            a,
            dist,
            x0: 1.0,
            process_noise_std: 0.0,
            obs_noise_std: 0.0,
        }
    }

    pub fn with_noise(mut self, process_noise_std: f64, obs_noise_std: f64) -> Self {
        self.process_noise_std = process_noise_std;
        self.obs_noise_std = obs_noise_std;
        self
    }

    pub fn noise_free(&self) -> bool {
        self.process_noise_std == 0.0 && self.obs_noise_std == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a.abs() >= 1.0) {
            return Err(Error::InvalidSimulation(format!("need |a| >= 1, got {}", self.a)));
        }
        if !(self.x0.is_finite() && self.x0 != 0.0) {
            return Err(Error::InvalidSimulation(format!("x0 must be finite and nonzero, got {}", self.x0)));
        }
        for (name, s) in [("process", self.process_noise_std), ("observation", self.obs_noise_std)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidSimulation(format!("{name} noise std must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// `U[n] = d · Y[n]`.
    LinearMemoryless { d: f64 },
    ZeroControl,
    /// `U[n] = d[n] · Y[n]` with a fresh `d[n] ~ Uniform(lo, hi)` every step.
    RandomLinear { lo: f64, hi: f64 },
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategySpec::LinearMemoryless { d } if !d.is_finite() => {
                Err(Error::InvalidSimulation(format!("gain must be finite, got {d}")))
            }
            StrategySpec::RandomLinear { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(Error::InvalidSimulation(format!("random gain range [{lo}, {hi}] is invalid")))
            }
            _ => Ok(()),
        }
    }

    fn gain<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            StrategySpec::LinearMemoryless { d } => d,
            StrategySpec::ZeroControl => 0.0,
            StrategySpec::RandomLinear { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimParams {
    pub horizon: usize,
    pub paths: usize,
    pub etas: Vec<f64>,
    pub threshold_m: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn new(horizon: usize, paths: usize, seed: u64) -> Self {
        Self {
            horizon,
            paths,
            etas: vec![2.0],
            threshold_m: 1e6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 || self.paths < 1 {
            return Err(Error::InvalidSimulation("horizon and paths must be at least 1".into()));
        }
        if let Some(e) = self.etas.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidSimulation(format!("eta must be positive, got {e}")));
        }
        if !(self.threshold_m > 0.0) {
            return Err(Error::InvalidSimulation(format!(
                "threshold M must be positive, got {}",
                self.threshold_m
            )));
        }
        Ok(())
    }
}

/// Per-step statistics. Arrays indexed by `n` have `horizon + 1` entries;
/// per-transition arrays (`step_decay_*`) have `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub etas: Vec<f64>,
    pub threshold_m: f64,
    /// Mean over paths of `log2 |X[n] / x0|`.
    pub mean_log2: Vec<f64>,
    /// `log2` of the empirical `E |X[n] / x0|^η`, one array per η.
    pub log2_moments: Vec<Vec<f64>>,
    /// `Σ_{k<n} log2` of the empirical one-step moment `E |X[k+1] / X[k]|^η`
    /// for noise-free plants (the moment multiplier `a(1 + B d)` otherwise),
    /// one array per η. Unlike `log2_moments` it stays informative after most
    /// paths have been driven to zero.
    pub factorized_log2_moments: Vec<Vec<f64>>,
    /// Fraction of paths with `|X[n]| ≥ M`.
    pub fraction_above: Vec<f64>,
    /// Mean and standard deviation over paths of `-log2 |1 + B[n] d[n]|`.
    pub step_decay_mean: Vec<f64>,
    pub step_decay_sd: Vec<f64>,
    /// Least-squares slope of `mean_log2` over the final half of the horizon.
    pub growth_slope_bits: f64,
    /// Least-squares slopes over the final half of `log2_moments / η` and
    /// `factorized_log2_moments / η`.
    pub moment_slopes_bits: Vec<f64>,
    pub factorized_slopes_bits: Vec<f64>,
    pub overflowed_paths: u64,
}

/// Running `log2 Σ 2^v`, stored as a maximum and a scaled sum.
#[derive(Debug, Clone, Copy)]
struct Log2Sum {
    max: f64,
    sum: f64,
}

impl Log2Sum {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp2() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp2();
        }
    }

    fn merge(&mut self, other: &Self) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max > self.max {
            self.sum = self.sum * (self.max - other.max).exp2() + other.sum;
            self.max = other.max;
        } else {
            self.sum += other.sum * (other.max - self.max).exp2();
        }
    }

    /// `log2` of the mean over `count` terms.
    fn log2_mean(&self, count: usize) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.log2() - (count as f64).log2()
        }
    }
}

struct Accumulator {
    log_sum: Vec<f64>,
    above: Vec<Vec<u64>>,
    moments: Vec<Vec<Log2Sum>>,
    multipliers: Vec<Vec<Log2Sum>>,
    decay_sum: Vec<f64>,
    decay_sq: Vec<f64>,
    overflowed: u64,
}

impl Accumulator {
    fn new(horizon: usize, etas: usize, thresholds: usize) -> Self {
        Self {
            log_sum: vec![0.0; horizon + 1],
            above: vec![vec![0; horizon + 1]; thresholds],
            moments: vec![vec![Log2Sum::EMPTY; horizon + 1]; etas],
            multipliers: vec![vec![Log2Sum::EMPTY; horizon]; etas],
            decay_sum: vec![0.0; horizon],
            decay_sq: vec![0.0; horizon],
            overflowed: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        add_into(&mut self.log_sum, &other.log_sum);
        add_into(&mut self.decay_sum, &other.decay_sum);
        add_into(&mut self.decay_sq, &other.decay_sq);
        for (mine, theirs) in self.above.iter_mut().zip(&other.above) {
            mine.iter_mut().zip(theirs).for_each(|(x, y)| *x += y);
        }
        for (mine, theirs) in self.moments.iter_mut().zip(&other.moments) {
            mine.iter_mut().zip(theirs).for_each(|(x, y)| x.merge(y));
        }
        for (mine, theirs) in self.multipliers.iter_mut().zip(&other.multipliers) {
            mine.iter_mut().zip(theirs).for_each(|(x, y)| x.merge(y));
        }
        self.overflowed += other.overflowed;
    }

    /// Records the state `log2 |X[n] / x0| = rel` and `log2 |X[n]| = abs`.
    fn record_state(&mut self, n: usize, rel: f64, abs: f64, etas: &[f64], log2_thresholds: &[f64]) {
        self.log_sum[n] += rel;
        for (counts, &t) in self.above.iter_mut().zip(log2_thresholds) {
            if abs >= t {
                counts[n] += 1;
            }
        }
        for (m, &eta) in self.moments.iter_mut().zip(etas) {
            m[n].add(eta * rel);
        }
    }

    fn record_step(&mut self, n: usize, decay: f64, log2_multiplier: f64, etas: &[f64]) {
        self.decay_sum[n] += decay;
        self.decay_sq[n] += decay * decay;
        for (m, &eta) in self.multipliers.iter_mut().zip(etas) {
            m[n].add(eta * log2_multiplier);
        }
    }
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    acc.iter_mut().zip(other).for_each(|(x, y)| *x += y);
}

/// Least-squares slope of `values[start..]` against the index. Infinite
/// entries make the slope infinite with the same sign.
pub(crate) fn ls_slope(values: &[f64], start: usize) -> f64 {
    let tail = &values[start.min(values.len())..];
    if tail.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    if let Some(v) = tail.iter().find(|v| v.is_infinite()) {
        return *v;
    }
    if tail.len() < 2 {
        return 0.0;
    }
    let n = tail.len() as f64;
    let x_mean = start as f64 + (n - 1.0) / 2.0;
    let y_mean = tail.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in tail.iter().enumerate() {
        let dx = (start + i) as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn simulate_block(
    spec: &SystemSpec,
    strategy: &StrategySpec,
    params: &SimParams,
    log2_thresholds: &[f64],
    paths: std::ops::Range<usize>,
) -> Accumulator {
    let h = params.horizon;
    let etas = &params.etas;
    let mut acc = Accumulator::new(h, etas.len(), log2_thresholds.len());
    let log2_x0 = spec.x0.abs().log2();
    let a = spec.a;
    for path in paths {
        let mut rng = rng::path_rng(params.seed, rng::ROLE_PATHS, path as u64);
        if spec.noise_free() {
            let mut l = log2_x0;
            acc.record_state(0, 0.0, l, etas, log2_thresholds);
            for n in 0..h {
                let b = spec.dist.sample(&mut rng);
                let d = strategy.gain(&mut rng);
                let contraction = (1.0 + b * d).abs().log2();
                let lm = a.abs().log2() + contraction;
                l += lm;
                acc.record_step(n, -contraction, lm, etas);
                acc.record_state(n + 1, l - log2_x0, l, etas, log2_thresholds);
            }
        } else {
            let mut x = spec.x0;
            let mut clamped = false;
            acc.record_state(0, 0.0, log2_x0, etas, log2_thresholds);
            for n in 0..h {
                let b = spec.dist.sample(&mut rng);
                let d = strategy.gain(&mut rng);
                let v = if spec.obs_noise_std > 0.0 {
                    spec.obs_noise_std * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let w = if spec.process_noise_std > 0.0 {
                    spec.process_noise_std * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                x = a * (x + b * d * (x + v)) + w;
                if !(x.abs() <= CLAMP) {
                    x = if x < 0.0 { -CLAMP } else { CLAMP };
                    clamped = true;
                }
                let contraction = (1.0 + b * d).abs().log2();
                acc.record_step(n, -contraction, a.abs().log2() + contraction, etas);
                let l = x.abs().log2();
                acc.record_state(n + 1, l - log2_x0, l, etas, log2_thresholds);
            }
            acc.overflowed += u64::from(clamped);
        }
    }
    acc
}

/// Runs the plant and returns the report together with the `≥ M` fractions
/// for every entry of `thresholds`.
fn run(
    spec: &SystemSpec,
    strategy: &StrategySpec,
    params: &SimParams,
    thresholds: &[f64],
) -> Result<(SimulationReport, Vec<Vec<f64>>)> {
    spec.validate()?;
    strategy.validate()?;
    params.validate()?;
    if let Some(m) = thresholds.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::InvalidSimulation(format!("threshold must be positive, got {m}")));
    }
    let mut all_thresholds = vec![params.threshold_m];
    all_thresholds.extend_from_slice(thresholds);
    let log2_thresholds: Vec<f64> = all_thresholds.iter().map(|m| m.log2()).collect();

    let blocks: Vec<std::ops::Range<usize>> = (0..params.paths)
        .step_by(BLOCK_PATHS)
        .map(|s| s..(s + BLOCK_PATHS).min(params.paths))
        .collect();
    let parts: Vec<Accumulator> = blocks
        .into_par_iter()
        .map(|r| simulate_block(spec, strategy, params, &log2_thresholds, r))
        .collect();
    let mut parts = parts.into_iter();
    let mut acc = parts.next().expect("at least one path");
    for p in parts {
        acc.merge(&p);
    }

    let n_paths = params.paths as f64;
    let h = params.horizon;
    let mean_log2: Vec<f64> = acc.log_sum.iter().map(|s| s / n_paths).collect();
    let log2_moments: Vec<Vec<f64>> = acc
        .moments
        .iter()
        .map(|m| m.iter().map(|s| s.log2_mean(params.paths)).collect())
        .collect();
    let factorized_log2_moments: Vec<Vec<f64>> = acc
        .multipliers
        .iter()
        .map(|m| {
            let mut cum = Vec::with_capacity(h + 1);
            cum.push(0.0);
            let mut total = 0.0;
            for s in m {
                total += s.log2_mean(params.paths);
                cum.push(total);
            }
            cum
        })
        .collect();
    let mut fractions: Vec<Vec<f64>> = acc
        .above
        .iter()
        .map(|c| c.iter().map(|&k| k as f64 / n_paths).collect())
        .collect();
    let step_decay_mean: Vec<f64> = acc.decay_sum.iter().map(|s| s / n_paths).collect();
    let step_decay_sd: Vec<f64> = acc
        .decay_sq
        .iter()
        .zip(&step_decay_mean)
        .map(|(sq, m)| {
            if params.paths < 2 {
                0.0
            } else {
                ((sq - n_paths * m * m) / (n_paths - 1.0)).max(0.0).sqrt()
            }
        })
        .collect();

    let half = h / 2;
    let report = SimulationReport {
        horizon: h,
        paths: params.paths,
        seed: params.seed,
        etas: params.etas.clone(),
        threshold_m: params.threshold_m,
        growth_slope_bits: ls_slope(&mean_log2, half),
        moment_slopes_bits: log2_moments
            .iter()
            .zip(&params.etas)
            .map(|(m, eta)| ls_slope(m, half) / eta)
            .collect(),
        factorized_slopes_bits: factorized_log2_moments
            .iter()
            .zip(&params.etas)
            .map(|(m, eta)| ls_slope(m, half) / eta)
            .collect(),
        mean_log2,
        log2_moments,
        factorized_log2_moments,
        fraction_above: fractions.remove(0),
        step_decay_mean,
        step_decay_sd,
        overflowed_paths: acc.overflowed,
    };
    Ok((report, fractions))
}

pub fn simulate(spec: &SystemSpec, strategy: &StrategySpec, params: &SimParams) -> Result<SimulationReport> {
    run(spec, strategy, params, &[]).map(|(r, _)| r)
}
