//! Global 1-D maximization over the control gain `d`: a coarse scan on a grid
//! densified around the places where closed-form optimizers live, followed by
//! golden-section refinement of the best bracket.

use rayon::prelude::*;
use serde::Serialize;

use super::CapacityQuery;
use crate::error::Result;

/// Grid values closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub grid_evaluations: usize,
    pub refinement_iterations: usize,
    pub objective_at_optimum: f64,
    /// Top two grid values differ by less than [`TIE_TOLERANCE`].
    pub flat: bool,
    /// The maximizer sits on `±halfwidth`; the search interval should be enlarged.
    pub search_bound_hit: bool,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub d: f64,
    pub value: f64,
    pub diagnostics: Diagnostics,
}

/// Symmetric grid of exactly `points` values in `[-halfwidth, halfwidth]`
/// containing `0`, log-densified toward `0` and, when given, toward `center`.
pub fn search_grid(points: usize, halfwidth: f64, center: Option<f64>) -> Vec<f64> {
    let per_side = (points - 1) / 2;
    let n_log = per_side / 2;
    let n_lin = per_side - n_log;
    let center = center.filter(|c| c.is_finite() && *c != 0.0 && c.abs() < halfwidth);

    let mut grid = Vec::with_capacity(points);
    grid.push(0.0);
    for sign in [-1.0, 1.0] {
        for k in 0..n_log {
            let t = k as f64 / n_log as f64;
            grid.push(sign * halfwidth * 10f64.powf(-10.0 * (1.0 - t)));
        }
        let clustered = match center {
            Some(c) if c.signum() == sign => (n_lin / 4) & !1,
            _ => 0,
        };
        // The center itself takes one slot from the uniform part.
        let n_uniform = n_lin - clustered - usize::from(clustered > 0);
        for k in 1..=n_uniform {
            grid.push(sign * halfwidth * k as f64 / n_uniform as f64);
        }
        if let Some(c) = center.filter(|_| clustered > 0) {
            grid.push(c);
            let half = clustered / 2;
            for k in 0..half {
                let t = k as f64 / (half.max(2) - 1) as f64;
                let s = 1e-6 * (0.9f64 / 1e-6).powf(t);
                grid.push(c * (1.0 - s));
                grid.push(c * (1.0 + s));
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid
}

/// Maximizes `objective` over `d ∈ [-halfwidth, halfwidth]`.
///
/// `candidates` are evaluated exactly on top of the grid; they cover cusps
/// (gains that send an atom of `B` to zero) that bracketing only approaches.
/// `+∞` values win immediately without refinement. Ties within
/// [`TIE_TOLERANCE`] go to the smaller `|d|`.
pub fn maximize_over_d<F>(
    objective: F,
    query: &CapacityQuery,
    halfwidth: f64,
    center: Option<f64>,
    candidates: &[f64],
) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    query.validate()?;
    let mut grid = search_grid(query.coarse_grid_points, halfwidth, center);
    grid.extend(candidates.iter().copied().filter(|d| d.is_finite() && d.abs() <= halfwidth));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let values = grid
        .par_iter()
        .map(|&d| objective(d).map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v }))
        .collect::<Result<Vec<f64>>>()?;

    let mut diagnostics = Diagnostics {
        grid_evaluations: grid.len(),
        halfwidth,
        ..Diagnostics::default()
    };

    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = (0..grid.len())
        .filter(|&i| values[i] >= top - TIE_TOLERANCE || values[i] == top)
        .min_by(|&i, &j| grid[i].abs().total_cmp(&grid[j].abs()).then(i.cmp(&j)))
        .expect("grid is nonempty");

    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    diagnostics.flat = sorted.len() > 1 && (sorted[0] - sorted[1]).abs() < TIE_TOLERANCE;
    diagnostics.search_bound_hit = grid[best].abs() >= halfwidth;

    if top == f64::INFINITY {
        diagnostics.objective_at_optimum = top;
        return Ok(Maximum {
            d: grid[best],
            value: top,
            diagnostics,
        });
    }

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut d_star, mut v_star) = (grid[best], values[best]);
    let (d_ref, v_ref, iterations) =
        golden_section(&objective, lo, hi, query.refine_tolerance)?;
    diagnostics.refinement_iterations = iterations;
    if v_ref > v_star + TIE_TOLERANCE || (v_ref >= v_star - TIE_TOLERANCE && d_ref.abs() < d_star.abs())
    {
        d_star = d_ref;
        v_star = v_ref;
    }
    diagnostics.objective_at_optimum = v_star;
    Ok(Maximum {
        d: d_star,
        value: v_star,
        diagnostics,
    })
}

/// Golden-section search for a maximum on `[lo, hi]`; returns the best point seen.
fn golden_section<F>(objective: &F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64, usize)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    let mut iterations = 0;
    while hi - lo > tol && iterations < 200 {
        iterations += 1;
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = objective(x1)?;
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = objective(x2)?;
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    Ok((best.0, best.1, iterations))
}
