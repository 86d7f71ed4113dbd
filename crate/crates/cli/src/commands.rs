use rayon::prelude::*;
use serde_json::{json, Value};

use control_capacity::capacity::{
    capacity_curve_with, eta_capacity, eta_capacity_with, second_moment_closed_form, shannon_capacity,
    shannon_capacity_with, zero_error_capacity, CapacityQuery, CapacityResult, Diagnostics, Sense,
};
use control_capacity::carryfree::{cf_shannon_capacity, cf_zero_error_capacity, parse_gain, simulate_degrees};
use control_capacity::distributions::parse_distribution;
use control_capacity::side_info::{
    eta_capacity_with_si, shannon_capacity_with_si, si_value_curve, SideInformationModel,
};
use control_capacity::simulate::{
    additive_noise_check, simulate, strong_converse_experiment, threshold_scan, SimParams, SimulationReport,
    StrategySpec, SystemSpec,
};
use control_capacity::ActuationDistribution;

use crate::output::{emit, format_f64, json_f64, json_opt, Field, Output, Table};
use crate::{
    CapacityArgs, CarryfreeArgs, Cli, CliError, Command, ConverseArgs, CurveArgs, DistArgs, QueryArgs, RunArgs,
    ScanArgs, SideinfoArgs, SimulateArgs, StrategyKind, SweepArgs,
};

type Result<T> = std::result::Result<T, CliError>;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

pub fn run(cli: &Cli) -> Result<()> {
    let output = match &cli.command {
        Command::Capacity(args) => capacity(args)?,
        Command::Curve(args) => curve(args)?,
        Command::Sweep(args) => sweep(args)?,
        Command::Sideinfo(args) => sideinfo(args)?,
        Command::Simulate(args) => simulate_cmd(args, cli.seed)?,
        Command::Scan(args) => scan(args, cli.seed)?,
        Command::Converse(args) => converse(args, cli.seed)?,
        Command::Carryfree(args) => carryfree(args, cli.seed)?,
    };
    let config = serde_json::to_value(cli).map_err(|e| CliError::Config(e.to_string()))?;
    emit(&output, config, cli.format, cli.out.as_deref())?;
    Ok(())
}

fn dist(args: &DistArgs) -> Result<ActuationDistribution> {
    Ok(parse_distribution(args.spec())?)
}

fn query(args: &QueryArgs, sense: Sense) -> CapacityQuery {
    CapacityQuery {
        sense,
        d_search_halfwidth: args.halfwidth,
        coarse_grid_points: args.grid_points,
        refine_tolerance: args.refine_tol,
    }
}

fn diagnostics(d: &Diagnostics) -> Value {
    json!({
        "grid_evaluations": d.grid_evaluations,
        "refinement_iterations": d.refinement_iterations,
        "objective_at_optimum": json_f64(d.objective_at_optimum),
        "flat": d.flat,
        "search_bound_hit": d.search_bound_hit,
        "halfwidth": json_f64(d.halfwidth),
    })
}

fn params(run: &RunArgs, horizon: usize, paths: usize, seed: u64) -> SimParams {
    SimParams::new(run.horizon.unwrap_or(horizon), run.paths.unwrap_or(paths), seed)
}

fn optimal_d(result: &CapacityResult) -> Result<f64> {
    result.optimal_d.ok_or_else(|| {
        CliError::Config("the capacity is attained only by hitting an atom; pass --d explicitly".into())
    })
}

fn capacity(args: &CapacityArgs) -> Result<Output> {
    let dist = dist(&args.dist)?;
    let sh = shannon_capacity_with(&dist, &query(&args.query, Sense::Shannon))?;
    let ze = zero_error_capacity(&dist);
    let c2 = second_moment_closed_form(&dist);
    let etas = args
        .eta
        .par_iter()
        .map(|&eta| eta_capacity_with(&dist, &query(&args.query, Sense::Eta(eta))))
        .collect::<control_capacity::Result<Vec<_>>>()?;

    let mut table = Table::new(["sense", "eta", "capacity_bits", "optimal_d"]);
    table.push(vec!["shannon".into(), Field::Empty, sh.value_bits.into(), sh.optimal_d.into()]);
    table.push(vec!["zero_error".into(), Field::Empty, ze.value_bits.into(), ze.optimal_d.into()]);
    table.push(vec!["second_moment".into(), 2.0.into(), c2.value_bits.into(), c2.optimal_d.into()]);
    for (eta, r) in args.eta.iter().zip(&etas) {
        table.push(vec!["eta".into(), (*eta).into(), r.value_bits.into(), r.optimal_d.into()]);
    }
    Ok(Output {
        table,
        diagnostics: json!({
            "shannon": diagnostics(&sh.diagnostics),
            "eta": etas.iter().map(|r| diagnostics(&r.diagnostics)).collect::<Vec<_>>(),
        }),
    })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn curve(args: &CurveArgs) -> Result<Output> {
    let dist = dist(&args.dist)?;
    let etas = if args.etas.is_empty() {
        log_grid(1e-3, 64.0, 20)
    } else {
        args.etas.clone()
    };
    let curve = capacity_curve_with(&dist, &etas, &query(&args.query, Sense::Eta(1.0)))?;
    let mut table = Table::new(["eta", "capacity_bits", "optimal_d"]);
    for (eta, r) in etas.iter().zip(&curve) {
        table.push(vec![(*eta).into(), r.value_bits.into(), r.optimal_d.into()]);
    }
    Ok(Output {
        table,
        diagnostics: json!({
            "eta": curve.iter().map(|r| diagnostics(&r.diagnostics)).collect::<Vec<_>>(),
        }),
    })
}

const FAMILIES: [&str; 3] = ["gaussian", "uniform", "erasure"];

/// Member of `family` with mean/σ = `r` and unit spread (erasure: β = 1, `p = r²/(1 + r²)`).
fn family_member(family: &str, r: f64) -> control_capacity::Result<ActuationDistribution> {
    match family {
        "gaussian" => ActuationDistribution::gaussian(r, 1.0),
        "uniform" => ActuationDistribution::uniform(r - SQRT_3, r + SQRT_3),
        _ => ActuationDistribution::scaled_bernoulli(1.0, r * r / (1.0 + r * r)),
    }
}

fn sweep(args: &SweepArgs) -> Result<Output> {
    let families: Vec<&str> = if args.family.is_empty() {
        FAMILIES.to_vec()
    } else {
        let mut chosen = Vec::new();
        for f in &args.family {
            let f = FAMILIES
                .iter()
                .find(|k| **k == f.as_str())
                .ok_or_else(|| CliError::Config(format!("unknown family {f:?}; expected one of {FAMILIES:?}")))?;
            chosen.push(*f);
        }
        chosen
    };
    if args.points < 2 || !(args.x_min < args.x_max) {
        return Err(CliError::Config("sweep needs --points >= 2 and --x-min < --x-max".into()));
    }
    let xs: Vec<f64> = (0..args.points)
        .map(|i| args.x_min + (args.x_max - args.x_min) * i as f64 / (args.points - 1) as f64)
        .collect();
    let jobs: Vec<(&str, f64)> = families.iter().flat_map(|f| xs.iter().map(move |x| (*f, *x))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(family, x)| {
            let d = family_member(family, x.exp2())?;
            let sh = shannon_capacity(&d)?;
            Ok(vec![
                family.into(),
                x.into(),
                sh.value_bits.into(),
                zero_error_capacity(&d).value_bits.into(),
                second_moment_closed_form(&d).value_bits.into(),
            ])
        })
        .collect::<control_capacity::Result<Vec<_>>>()?;
    let mut table = Table::new(["family", "log2_mean_over_sd", "c_sh", "c_ze", "c_2"]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output {
        table,
        diagnostics: Value::Null,
    })
}

fn sideinfo(args: &SideinfoArgs) -> Result<Output> {
    let dist = dist(&args.dist)?;
    let sense = args.eta.map_or(Sense::Shannon, Sense::Eta);
    if !args.si_cells.is_empty() {
        let model = SideInformationModel::from_edges(&dist, &args.si_cells)?;
        let r = match args.eta {
            None => shannon_capacity_with_si(&model)?,
            Some(eta) => eta_capacity_with_si(&model, eta)?,
        };
        let mut table = Table::new(["cell", "probability", "capacity_bits", "optimal_d"]);
        for c in &r.cells {
            table.push(vec![
                c.label.clone().into(),
                c.probability.into(),
                c.capacity.value_bits.into(),
                c.capacity.optimal_d.into(),
            ]);
        }
        table.push(vec!["total".into(), 1.0.into(), r.value_bits.into(), Field::Empty]);
        return Ok(Output {
            table,
            diagnostics: json!({ "cells": r.cells.len() }),
        });
    }
    let k_max = args.si_bits.unwrap_or(4);
    let curve = si_value_curve(&dist, k_max, sense)?;
    let mut table = Table::new(["k", "capacity_bits", "gain_bits"]);
    let mut previous: Option<f64> = None;
    for &(k, c) in &curve {
        table.push(vec![k.into(), c.into(), previous.map(|p| c - p).into()]);
        previous = Some(c);
    }
    Ok(Output {
        table,
        diagnostics: Value::Null,
    })
}

fn sense_capacity(dist: &ActuationDistribution, eta: Option<f64>) -> Result<CapacityResult> {
    Ok(match eta {
        None => shannon_capacity(dist)?,
        Some(eta) => eta_capacity(dist, eta)?,
    })
}

fn report_table(r: &SimulationReport) -> Table {
    let mut headers = vec!["n".to_string(), "mean_log2".to_string()];
    for eta in &r.etas {
        headers.push(format!("log2_moment_eta_{}", format_f64(*eta)));
    }
    for eta in &r.etas {
        headers.push(format!("factorized_log2_moment_eta_{}", format_f64(*eta)));
    }
    headers.push("fraction_above".into());
    let mut table = Table::new(headers);
    for n in 0..=r.horizon {
        let mut row: Vec<Field> = vec![n.into(), r.mean_log2[n].into()];
        row.extend(r.log2_moments.iter().map(|m| Field::from(m[n])));
        row.extend(r.factorized_log2_moments.iter().map(|m| Field::from(m[n])));
        row.push(r.fraction_above[n].into());
        table.push(row);
    }
    table
}

fn report_summary(r: &SimulationReport) -> Value {
    json!({
        "growth_slope_bits": json_f64(r.growth_slope_bits),
        "moment_slopes_bits": r.moment_slopes_bits.iter().map(|x| json_f64(*x)).collect::<Vec<_>>(),
        "factorized_slopes_bits": r.factorized_slopes_bits.iter().map(|x| json_f64(*x)).collect::<Vec<_>>(),
        "overflowed_paths": r.overflowed_paths,
    })
}

fn simulate_cmd(args: &SimulateArgs, seed: u64) -> Result<Output> {
    let dist = dist(&args.dist)?;
    let strategy = match (args.strategy, args.d) {
        (StrategyKind::Zero, _) => StrategySpec::ZeroControl,
        (StrategyKind::Linear, Some(d)) => StrategySpec::LinearMemoryless { d },
        (kind, _) => {
            let d = optimal_d(&sense_capacity(&dist, args.eta)?)?;
            if kind == StrategyKind::Random {
                StrategySpec::RandomLinear {
                    lo: (2.0 * d).min(0.0),
                    hi: (2.0 * d).max(0.0),
                }
            } else {
                StrategySpec::LinearMemoryless { d }
            }
        }
    };
    let mut params = params(&args.run, 1000, 1000, seed);
    if !args.etas.is_empty() {
        params.etas = args.etas.clone();
    }
    params.threshold_m = args.threshold_m;
    let mut spec = SystemSpec::new(args.a, dist).with_noise(args.w_std, args.v_std);
    spec.x0 = args.x0;

    let strategy_json = serde_json::to_value(strategy).unwrap_or(Value::Null);
    if args.noise_check {
        let StrategySpec::LinearMemoryless { d } = strategy else {
            return Err(CliError::Config("--noise-check needs the linear strategy".into()));
        };
        let eta = args.eta.unwrap_or(params.etas[0]);
        let check = additive_noise_check(&spec, d, eta, &params)?;
        return Ok(Output {
            table: report_table(&check.report),
            diagnostics: json!({
                "strategy": strategy_json,
                "summary": report_summary(&check.report),
                "noise_check": {
                    "verdict": check.verdict,
                    "eta": json_f64(check.eta),
                    "final_quarter_slope_bits": json_f64(check.final_quarter_slope_bits),
                    "sup_log2_moment": json_f64(check.sup_log2_moment),
                    "log2_rho": json_f64(check.log2_rho),
                    "log2_rho_exact": json_f64(check.log2_rho_exact),
                    "ceiling_log2_moment": json_f64(check.ceiling_log2_moment),
                },
            }),
        });
    }
    let report = simulate(&spec, &strategy, &params)?;
    Ok(Output {
        table: report_table(&report),
        diagnostics: json!({ "strategy": strategy_json, "summary": report_summary(&report) }),
    })
}

fn scan(args: &ScanArgs, seed: u64) -> Result<Output> {
    let dist = dist(&args.dist)?;
    let sense = args.eta.map_or(Sense::Shannon, Sense::Eta);
    let grid = if args.a_grid.is_empty() {
        let c = sense_capacity(&dist, args.eta)?.value_bits;
        if !c.is_finite() {
            return Err(CliError::Config("capacity is infinite; pass --a-grid".into()));
        }
        (0..21).map(|i| (c - 0.5 + 0.05 * f64::from(i)).max(0.0).exp2()).collect()
    } else {
        args.a_grid.clone()
    };
    let report = threshold_scan(&dist, sense, &grid, &params(&args.run, 2000, 1000, seed))?;
    let mut table = Table::new(["a", "log2_a", "slope_bits", "verdict"]);
    for p in &report.points {
        let verdict = serde_json::to_value(p.verdict)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        table.push(vec![p.a.into(), p.log2_a.into(), p.slope_bits.into(), verdict.into()]);
    }
    Ok(Output {
        table,
        diagnostics: json!({
            "capacity_bits": json_f64(report.capacity_bits),
            "optimal_d": json_f64(report.optimal_d),
            "critical_log2_a": json_opt(report.critical_log2_a),
        }),
    })
}

fn converse(args: &ConverseArgs, seed: u64) -> Result<Output> {
    let dist = dist(&args.dist)?;
    let a = match args.a {
        Some(a) => a,
        None => (shannon_capacity(&dist)?.value_bits + 0.5).exp2(),
    };
    let params = params(&args.run, 2000, 1000, seed);
    let report = strong_converse_experiment(&dist, a, &args.threshold_m, &params)?;
    let mut headers = vec!["n".to_string()];
    for t in &report.trajectories {
        for m in &report.thresholds {
            headers.push(format!("{}_above_{}", t.name, format_f64(*m)));
        }
    }
    let mut table = Table::new(headers);
    for n in 0..=params.horizon {
        let mut row: Vec<Field> = vec![n.into()];
        for t in &report.trajectories {
            row.extend(t.fractions.iter().map(|f| Field::from(f[n])));
        }
        table.push(row);
    }
    Ok(Output {
        table,
        diagnostics: json!({
            "a": json_f64(report.a),
            "capacity_bits": json_f64(report.capacity_bits),
            "margin_bits": json_f64(report.margin_bits),
            "final_fractions": report
                .trajectories
                .iter()
                .map(|t| json!({ "strategy": t.name, "fractions": t.final_fractions }))
                .collect::<Vec<_>>(),
        }),
    })
}

fn carryfree(args: &CarryfreeArgs, seed: u64) -> Result<Output> {
    let gain = parse_gain(&args.gain)?;
    let (horizon, paths) = (args.run.horizon.unwrap_or(1000), args.run.paths.unwrap_or(100));
    let stats = simulate_degrees(&gain, args.g_a, horizon, paths, seed, args.initial_degree)?;
    let mut table = Table::new(["n", "mean_degree", "max_degree"]);
    for n in 0..=horizon {
        table.push(vec![n.into(), stats.mean_degree[n].into(), stats.max_degree[n].into()]);
    }
    Ok(Output {
        table,
        diagnostics: json!({
            "c_ze": cf_zero_error_capacity(&gain),
            "c_sh": cf_shannon_capacity(&gain).ok(),
            "mean_decay": json_opt(stats.mean_decay),
            "decay_steps": stats.decay_steps,
            "overall_max_degree": stats.overall_max_degree,
            "bounded": stats.bounded,
        }),
    })
}
