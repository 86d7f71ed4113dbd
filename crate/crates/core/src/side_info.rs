//! Capacities when the controller sees side information `T` about the gain
//! `B` before acting. `T` is modelled as a finite partition of the support:
//! the controller learns which cell `B` falls in and may pick `d` per cell.

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{eta_capacity, shannon_capacity, CapacityResult, Sense, MONOTONE_SLACK};
use crate::distributions::{ActuationDistribution, Cell};
use crate::error::{Error, Result};

const PROBABILITY_SLACK: f64 = 1e-10;
const MOMENT_SLACK: f64 = 1e-7;
const MAX_BITS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideCell {
    pub label: String,
    pub probability: f64,
    pub conditional: ActuationDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideInformationModel {
    cells: Vec<SideCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCapacity {
    pub label: String,
    pub probability: f64,
    pub capacity: CapacityResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideInfoCapacity {
    pub value_bits: f64,
    pub cells: Vec<CellCapacity>,
}

impl SideInformationModel {
    /// Builds a model from explicit cells and checks it against `base`.
    pub fn from_cells(base: &ActuationDistribution, cells: Vec<SideCell>) -> Result<Self> {
        let model = Self { cells };
        model.validate(base)?;
        Ok(model)
    }

    /// Partition at the given increasing `edges`; cells are `[e_i, e_{i+1})`
    /// with the last one closed. Cells of zero probability are dropped.
    pub fn from_edges(base: &ActuationDistribution, edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidQuery(
                "cell edges must be at least two strictly increasing numbers".into(),
            ));
        }
        let s = base.support();
        if edges[0] > s.lower || edges[edges.len() - 1] < s.upper {
            return Err(Error::InvalidQuery(format!(
                "cell edges [{}, {}] do not cover the support [{}, {}]",
                edges[0],
                edges[edges.len() - 1],
                s.lower,
                s.upper
            )));
        }
        let last = edges.len() - 2;
        let mut cells = Vec::new();
        for (i, w) in edges.windows(2).enumerate() {
            let cell = if i == last {
                Cell::closed(w[0], w[1])
            } else {
                Cell::half_open(w[0], w[1])
            };
            match base.restrict(cell) {
                Ok((p, conditional)) if p > 0.0 => cells.push(SideCell {
                    label: format!("[{}, {}{}", w[0], w[1], if cell.closed { "]" } else { ")" }),
                    probability: p,
                    conditional,
                }),
                Ok(_) | Err(Error::EmptyCell { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Self::from_cells(base, cells)
    }

    /// `k` bits revealing which of `2^k` equal-width subintervals of the support holds `B`.
    pub fn uniform_bit_partition(dist: &ActuationDistribution, k_bits: u32) -> Result<Self> {
        if k_bits > MAX_BITS {
            return Err(Error::InvalidQuery(format!("at most {MAX_BITS} bits, got {k_bits}")));
        }
        let s = dist.support();
        if !s.is_bounded() {
            return Err(Error::UnboundedSupport);
        }
        if k_bits == 0 || s.lower == s.upper {
            return Ok(Self {
                cells: vec![SideCell {
                    label: format!("[{}, {}]", s.lower, s.upper),
                    probability: 1.0,
                    conditional: dist.clone(),
                }],
            });
        }
        let n = 1usize << k_bits;
        let width = s.upper - s.lower;
        let edges: Vec<f64> = (0..=n)
            .map(|i| if i == n { s.upper } else { s.lower + width * i as f64 / n as f64 })
            .collect();
        Self::from_edges(dist, &edges)
    }

    pub fn cells(&self) -> &[SideCell] {
        &self.cells
    }

    /// Cell probabilities sum to one and the cell mixture reproduces the
    /// mean and variance of `base`.
    pub fn validate(&self, base: &ActuationDistribution) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidModel("side information needs at least one cell".into()));
        }
        if let Some(c) = self.cells.iter().find(|c| !(c.probability > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "cell {} has probability {}",
                c.label, c.probability
            )));
        }
        let total: f64 = self.cells.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > PROBABILITY_SLACK {
            return Err(Error::InvalidModel(format!("cell probabilities sum to {total}")));
        }
        let (mut mean, mut second) = (0.0, 0.0);
        for c in &self.cells {
            let m = c.conditional.moments();
            mean += c.probability * m.mean;
            second += c.probability * m.second_moment;
        }
        let variance = second - mean * mean;
        let b = base.moments();
        let close = |x: f64, y: f64| (x - y).abs() <= MOMENT_SLACK * y.abs().max(1.0);
        if !close(mean, b.mean) || !close(variance, b.variance) {
            return Err(Error::InvalidModel(format!(
                "cells give mean {mean}, variance {variance}; base has {}, {}",
                b.mean, b.variance
            )));
        }
        Ok(())
    }
}

fn per_cell<F>(model: &SideInformationModel, capacity: F) -> Result<Vec<CellCapacity>>
where
    F: Fn(&ActuationDistribution) -> Result<CapacityResult> + Sync,
{
    model
        .cells
        .par_iter()
        .map(|c| {
            Ok(CellCapacity {
                label: c.label.clone(),
                probability: c.probability,
                capacity: capacity(&c.conditional)?,
            })
        })
        .collect()
}

/// `Σ p(cell) · C_sh(cell)`.
pub fn shannon_capacity_with_si(model: &SideInformationModel) -> Result<SideInfoCapacity> {
    let cells = per_cell(model, shannon_capacity)?;
    let value_bits = cells.iter().map(|c| c.probability * c.capacity.value_bits).sum();
    Ok(SideInfoCapacity { value_bits, cells })
}

/// `-(1/η) log2 Σ p(cell) · min_d E[|1 + B d|^η | cell]`.
pub fn eta_capacity_with_si(model: &SideInformationModel, eta: f64) -> Result<SideInfoCapacity> {
    let cells = per_cell(model, |d| eta_capacity(d, eta))?;
    // Each cell's minimal moment is 2^(-η C_η(cell)).
    let moment: f64 = cells
        .iter()
        .map(|c| c.probability * (-eta * c.capacity.value_bits).exp2())
        .sum();
    let value_bits = if moment > 0.0 { (-moment.log2() / eta).max(0.0) } else { f64::INFINITY };
    Ok(SideInfoCapacity { value_bits, cells })
}

/// Capacity with `k = 0..=k_max` bits of equal-width side information.
pub fn si_value_curve(dist: &ActuationDistribution, k_max: u32, sense: Sense) -> Result<Vec<(u32, f64)>> {
    let eta = match sense {
        Sense::Shannon => None,
        Sense::Eta(eta) => Some(eta),
        Sense::ZeroError => {
            return Err(Error::InvalidQuery("side-information curve needs Shannon or eta sense".into()))
        }
    };
    let curve = (0..=k_max)
        .map(|k| {
            let model = SideInformationModel::uniform_bit_partition(dist, k)?;
            let r = match eta {
                None => shannon_capacity_with_si(&model)?,
                Some(eta) => eta_capacity_with_si(&model, eta)?,
            };
            Ok((k, r.value_bits))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = curve.windows(2).find(|w| w[1].1 < w[0].1 - MONOTONE_SLACK) {
        return Err(Error::InvariantViolated(format!(
            "capacity fell from {} at k={} to {} at k={}",
            w[0].1, w[0].0, w[1].1, w[1].0
        )));
    }
    Ok(curve)
}
