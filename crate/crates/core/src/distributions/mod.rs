//! Laws of the multiplicative actuation gain `B`.
//!
//! An [`ActuationDistribution`] is immutable after construction. It knows its
//! support (bounds and atoms), its first two moments in closed form, how to
//! draw from itself, how to integrate a functional against itself, and how to
//! condition on a cell `[lo, hi)`.

mod quadrature;
mod spec;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

pub use quadrature::{integrate, FAIL_TOL, REL_TOL};
pub use spec::parse_distribution;

/// Gaussian laws are integrated over `mu ± GAUSSIAN_TAIL_SIGMAS * sigma`.
pub const GAUSSIAN_TAIL_SIGMAS: f64 = 10.0;

const MIXTURE_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform {
        b1: f64,
        b2: f64,
    },
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    /// `B = beta` with probability `p`, `B = 0` otherwise (the erasure channel).
    ScaledBernoulli {
        beta: f64,
        p: f64,
    },
    FiniteMixture {
        components: Vec<(f64, ActuationDistribution)>,
    },
    /// Pure atom set: every sample carries mass `1/n`.
    Empirical {
        samples: Vec<f64>,
    },
    /// Gaussian density restricted to `[lo, hi]` and renormalized.
    TruncatedGaussian {
        mu: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportInfo {
    pub lower: f64,
    pub upper: f64,
    /// `(location, mass)` sorted by location; masses are positive.
    pub atoms: Vec<(f64, f64)>,
    pub contains_zero: bool,
    pub has_nonzero_atom: bool,
}

impl SupportInfo {
    fn new(lower: f64, upper: f64, atoms: Vec<(f64, f64)>) -> Self {
        let contains_zero = lower <= 0.0 && 0.0 <= upper;
        let has_nonzero_atom = atoms.iter().any(|&(x, m)| x != 0.0 && m > 0.0);
        Self {
            lower,
            upper,
            atoms,
            contains_zero,
            has_nonzero_atom,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
}

/// A half-open interval `[lo, hi)`, or `[lo, hi]` when `closed` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl Cell {
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            closed: false,
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            closed: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (self.closed && x == self.hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActuationDistribution {
    kind: DistributionKind,
    #[serde(skip)]
    support: SupportInfo,
}

impl ActuationDistribution {
    pub fn uniform(b1: f64, b2: f64) -> Result<Self> {
        if !(b1.is_finite() && b2.is_finite() && b1 < b2) {
            return Err(Error::InvalidDistribution(format!(
                "uniform needs finite b1 < b2, got ({b1}, {b2})"
            )));
        }
        Ok(Self::build(DistributionKind::Uniform { b1, b2 }))
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "gaussian needs finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(Self::build(DistributionKind::Gaussian { mu, sigma }))
    }

    pub fn scaled_bernoulli(beta: f64, p: f64) -> Result<Self> {
        if !(beta.is_finite() && beta != 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "erasure gain beta must be finite and nonzero, got {beta}"
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!(
                "erasure probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(Self::build(DistributionKind::ScaledBernoulli { beta, p }))
    }

    pub fn mixture(components: Vec<(f64, ActuationDistribution)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("empty mixture".into()));
        }
        if components.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "mixture weights must be nonnegative".into(),
            ));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
            return Err(Error::InvalidDistribution(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::build(DistributionKind::FiniteMixture { components }))
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDistribution(
                "empirical distribution needs at least one sample".into(),
            ));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDistribution(
                "empirical samples must be finite".into(),
            ));
        }
        Ok(Self::build(DistributionKind::Empirical { samples }))
    }

    /// Point mass at `x`.
    pub fn point(x: f64) -> Result<Self> {
        Self::empirical(vec![x])
    }

    pub fn truncated_gaussian(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::gaussian(mu, sigma)?;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidDistribution(format!(
                "truncation interval [{lo}, {hi}] is empty"
            )));
        }
        if normal_mass(mu, sigma, lo, hi) <= 0.0 {
            return Err(Error::EmptyCell { lo, hi });
        }
        Ok(Self::build(DistributionKind::TruncatedGaussian { mu, sigma, lo, hi }))
    }

    fn build(kind: DistributionKind) -> Self {
        let support = compute_support(&kind);
        Self { kind, support }
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn support(&self) -> &SupportInfo {
        &self.support
    }

    /// Closed-form mean, variance and second moment.
    pub fn moments(&self) -> Moments {
        let (mean, second) = match &self.kind {
            DistributionKind::Uniform { b1, b2 } => {
                let mean = 0.5 * (b1 + b2);
                let var = (b2 - b1).powi(2) / 12.0;
                (mean, var + mean * mean)
            }
            DistributionKind::Gaussian { mu, sigma } => (*mu, sigma * sigma + mu * mu),
            DistributionKind::ScaledBernoulli { beta, p } => (beta * p, beta * beta * p),
            DistributionKind::FiniteMixture { components } => {
                components.iter().fold((0.0, 0.0), |(m, s), (w, c)| {
                    let cm = c.moments();
                    (m + w * cm.mean, s + w * cm.second_moment)
                })
            }
            DistributionKind::Empirical { samples } => {
                let n = samples.len() as f64;
                let mean = samples.iter().sum::<f64>() / n;
                let second = samples.iter().map(|x| x * x).sum::<f64>() / n;
                (mean, second)
            }
            DistributionKind::TruncatedGaussian { mu, sigma, lo, hi } => {
                let (m, v) = truncated_normal_moments(*mu, *sigma, *lo, *hi);
                (m, v + m * m)
            }
        };
        let variance = match &self.kind {
            DistributionKind::Uniform { b1, b2 } => (b2 - b1).powi(2) / 12.0,
            DistributionKind::Gaussian { sigma, .. } => sigma * sigma,
            DistributionKind::ScaledBernoulli { beta, p } => beta * beta * p * (1.0 - p),
            DistributionKind::TruncatedGaussian { mu, sigma, lo, hi } => {
                truncated_normal_moments(*mu, *sigma, *lo, *hi).1
            }
            _ => (second - mean * mean).max(0.0),
        };
        Moments {
            mean,
            variance,
            second_moment: second,
        }
    }

    /// Interval actually integrated for the continuous part (Gaussian tails cut at ±10σ).
    pub fn integration_bounds(&self) -> (f64, f64) {
        match &self.kind {
            DistributionKind::Gaussian { mu, sigma } => (
                mu - GAUSSIAN_TAIL_SIGMAS * sigma,
                mu + GAUSSIAN_TAIL_SIGMAS * sigma,
            ),
            DistributionKind::TruncatedGaussian { mu, sigma, lo, hi } => (
                lo.max(mu - GAUSSIAN_TAIL_SIGMAS * sigma),
                hi.min(mu + GAUSSIAN_TAIL_SIGMAS * sigma),
            ),
            DistributionKind::FiniteMixture { components } => components
                .iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(_, c)| c.integration_bounds())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
                    (a.min(c), b.max(d))
                }),
            _ => (self.support.lower, self.support.upper),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            DistributionKind::Uniform { b1, b2 } => b1 + (b2 - b1) * rng.random::<f64>(),
            DistributionKind::Gaussian { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            DistributionKind::ScaledBernoulli { beta, p } => {
                if rng.random::<f64>() < *p {
                    *beta
                } else {
                    0.0
                }
            }
            DistributionKind::FiniteMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, c) in components {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                // Rounding left u above the cumulative sum; fall back to the last live component.
                let last = components
                    .iter()
                    .rev()
                    .find(|(w, _)| *w > 0.0)
                    .map(|(_, c)| c)
                    .unwrap_or(&components[components.len() - 1].1);
                last.sample(rng)
            }
            DistributionKind::Empirical { samples } => samples[rng.random_range(0..samples.len())],
            DistributionKind::TruncatedGaussian { mu, sigma, lo, hi } => {
                let (plo, phi) = (normal_cdf((lo - mu) / sigma), normal_cdf((hi - mu) / sigma));
                let u = plo + (phi - plo) * rng.random::<f64>();
                let x = mu + sigma * normal_quantile(u);
                x.clamp(*lo, *hi)
            }
        }
    }

    /// `∫ f dp_B`. Atoms are summed exactly; the continuous part is integrated
    /// adaptively with panels cut and graded at every listed singular point.
    pub fn expect<F>(&self, f: F, singularities: &[f64]) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        self.expect_dyn(&f, singularities)
    }

    fn expect_dyn(&self, f: &dyn Fn(f64) -> f64, singularities: &[f64]) -> Result<f64> {
        match &self.kind {
            DistributionKind::Uniform { b1, b2 } => {
                Ok(integrate(f, *b1, *b2, singularities)? / (b2 - b1))
            }
            DistributionKind::Gaussian { mu, sigma } => {
                let (lo, hi) = self.integration_bounds();
                let (mu, sigma) = (*mu, *sigma);
                integrate(|b| f(b) * normal_pdf(mu, sigma, b), lo, hi, singularities)
            }
            DistributionKind::TruncatedGaussian { mu, sigma, lo, hi } => {
                let (a, b) = self.integration_bounds();
                let (mu, sigma) = (*mu, *sigma);
                let mass = normal_mass(mu, sigma, *lo, *hi);
                Ok(integrate(|x| f(x) * normal_pdf(mu, sigma, x), a, b, singularities)? / mass)
            }
            DistributionKind::ScaledBernoulli { beta, p } => {
                let mut total = 0.0;
                if *p < 1.0 {
                    total += (1.0 - p) * f(0.0);
                }
                if *p > 0.0 {
                    total += p * f(*beta);
                }
                Ok(total)
            }
            DistributionKind::FiniteMixture { components } => {
                let mut total = 0.0;
                for (w, c) in components {
                    if *w > 0.0 {
                        total += w * c.expect_dyn(f, singularities)?;
                    }
                }
                Ok(total)
            }
            DistributionKind::Empirical { .. } => Ok(self
                .support
                .atoms
                .iter()
                .map(|&(x, m)| m * f(x))
                .sum()),
        }
    }

    /// `P(B ∈ cell)` and the law of `B` given `B ∈ cell`.
    pub fn restrict(&self, cell: Cell) -> Result<(f64, ActuationDistribution)> {
        let empty = || Error::EmptyCell {
            lo: cell.lo,
            hi: cell.hi,
        };
        if !(cell.lo < cell.hi || (cell.closed && cell.lo == cell.hi)) {
            return Err(empty());
        }
        match &self.kind {
            DistributionKind::Uniform { b1, b2 } => {
                let lo = cell.lo.max(*b1);
                let hi = cell.hi.min(*b2);
                if lo >= hi {
                    return Err(empty());
                }
                Ok(((hi - lo) / (b2 - b1), Self::uniform(lo, hi)?))
            }
            DistributionKind::Gaussian { mu, sigma } => {
                let mass = normal_mass(*mu, *sigma, cell.lo, cell.hi);
                if mass <= 0.0 {
                    return Err(empty());
                }
                if cell.lo == f64::NEG_INFINITY && cell.hi == f64::INFINITY {
                    return Ok((1.0, self.clone()));
                }
                Ok((mass, Self::truncated_gaussian(*mu, *sigma, cell.lo, cell.hi)?))
            }
            DistributionKind::TruncatedGaussian { mu, sigma, lo, hi } => {
                let a = cell.lo.max(*lo);
                let b = cell.hi.min(*hi);
                if a >= b {
                    return Err(empty());
                }
                let mass = normal_mass(*mu, *sigma, a, b) / normal_mass(*mu, *sigma, *lo, *hi);
                if mass <= 0.0 {
                    return Err(empty());
                }
                Ok((mass, Self::truncated_gaussian(*mu, *sigma, a, b)?))
            }
            DistributionKind::ScaledBernoulli { .. } | DistributionKind::Empirical { .. } => {
                self.restrict_atoms(cell)
            }
            DistributionKind::FiniteMixture { components } => {
                let mut parts = Vec::new();
                let mut total = 0.0;
                for (w, c) in components {
                    if *w <= 0.0 {
                        continue;
                    }
                    match c.restrict(cell) {
                        Ok((p, cond)) if p > 0.0 => {
                            total += w * p;
                            parts.push((w * p, cond));
                        }
                        Ok(_) | Err(Error::EmptyCell { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                if total <= 0.0 {
                    return Err(empty());
                }
                if parts.len() == 1 {
                    return Ok((total, parts.pop().map(|(_, c)| c).unwrap()));
                }
                for part in parts.iter_mut() {
                    part.0 /= total;
                }
                let wsum: f64 = parts.iter().map(|(w, _)| w).sum();
                parts.last_mut().unwrap().0 += 1.0 - wsum;
                Ok((total, Self::mixture(parts)?))
            }
        }
    }

    fn restrict_atoms(&self, cell: Cell) -> Result<(f64, ActuationDistribution)> {
        let inside: Vec<(f64, f64)> = self
            .support
            .atoms
            .iter()
            .copied()
            .filter(|&(x, _)| cell.contains(x))
            .collect();
        let mass: f64 = inside.iter().map(|&(_, m)| m).sum();
        if mass <= 0.0 {
            return Err(Error::EmptyCell {
                lo: cell.lo,
                hi: cell.hi,
            });
        }
        let conditional = match (&self.kind, inside.as_slice()) {
            (_, [(x, _)]) => Self::point(*x)?,
            (DistributionKind::ScaledBernoulli { .. }, _) => self.clone(),
            (DistributionKind::Empirical { samples }, _) => Self::empirical(
                samples.iter().copied().filter(|&x| cell.contains(x)).collect(),
            )?,
            _ => unreachable!("atom restriction only applies to atomic kinds"),
        };
        Ok((mass.min(1.0), conditional))
    }
}

fn compute_support(kind: &DistributionKind) -> SupportInfo {
    match kind {
        DistributionKind::Uniform { b1, b2 } => SupportInfo::new(*b1, *b2, vec![]),
        DistributionKind::Gaussian { .. } => {
            SupportInfo::new(f64::NEG_INFINITY, f64::INFINITY, vec![])
        }
        DistributionKind::TruncatedGaussian { lo, hi, .. } => SupportInfo::new(*lo, *hi, vec![]),
        DistributionKind::ScaledBernoulli { beta, p } => {
            let mut atoms = Vec::new();
            if *p < 1.0 {
                atoms.push((0.0, 1.0 - p));
            }
            if *p > 0.0 {
                atoms.push((*beta, *p));
            }
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let lower = atoms.first().map(|a| a.0).unwrap();
            let upper = atoms.last().map(|a| a.0).unwrap();
            SupportInfo::new(lower, upper, atoms)
        }
        DistributionKind::Empirical { samples } => {
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            let mut atoms: Vec<(f64, f64)> = Vec::new();
            for x in sorted {
                match atoms.last_mut() {
                    Some(last) if last.0 == x => last.1 += 1.0,
                    _ => atoms.push((x, 1.0)),
                }
            }
            for atom in atoms.iter_mut() {
                atom.1 /= n;
            }
            SupportInfo::new(atoms[0].0, atoms[atoms.len() - 1].0, atoms)
        }
        DistributionKind::FiniteMixture { components } => {
            let mut lower = f64::INFINITY;
            let mut upper = f64::NEG_INFINITY;
            let mut atoms: Vec<(f64, f64)> = Vec::new();
            for (w, c) in components.iter().filter(|(w, _)| *w > 0.0) {
                let s = c.support();
                lower = lower.min(s.lower);
                upper = upper.max(s.upper);
                atoms.extend(s.atoms.iter().map(|&(x, m)| (x, w * m)));
            }
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for (x, m) in atoms {
                match merged.last_mut() {
                    Some(last) if last.0 == x => last.1 += m,
                    _ => merged.push((x, m)),
                }
            }
            SupportInfo::new(lower, upper, merged)
        }
    }
}

pub(crate) fn normal_pdf(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn normal_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// `P(lo ≤ N(mu, sigma²) ≤ hi)`, computed on the tail that keeps precision.
pub(crate) fn normal_mass(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    if a >= 0.0 {
        // Both in the upper tail: use survival functions.
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * FRAC_1_SQRT_2) - erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - normal_cdf(a) - 0.5 * erfc(b * FRAC_1_SQRT_2)
    }
}

fn truncated_normal_moments(mu: f64, sigma: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let phi = |z: f64| {
        if z.is_finite() {
            (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
        } else {
            0.0
        }
    };
    let zphi = |z: f64| if z.is_finite() { z * phi(z) } else { 0.0 };
    let mass = normal_mass(0.0, 1.0, a, b);
    let shift = (phi(a) - phi(b)) / mass;
    let mean = mu + sigma * shift;
    let var = sigma * sigma * (1.0 + (zphi(a) - zphi(b)) / mass - shift * shift);
    (mean, var.max(0.0))
}
