//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test --release -p control-capacity-cli --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use control_capacity::capacity::{capacity_curve, eta_capacity, shannon_capacity, zero_error_capacity, Sense};
use control_capacity::carryfree::{
    cf_add, cf_mul, cf_shannon_capacity, cf_zero_error_capacity, one_step_control, parse_gain, simulate_degrees,
    BitSeries,
};
use control_capacity::side_info::{
    eta_capacity_with_si, shannon_capacity_with_si, si_value_curve, SideInformationModel,
};
use control_capacity::simulate::{
    additive_noise_check, scaling_equivalence_check, strong_converse_experiment, threshold_scan, NoiseVerdict,
    SimParams, SystemSpec, Verdict,
};
use control_capacity::ActuationDistribution;

const EXACT: f64 = 1e-12;
const SECOND_MOMENT_TOL: f64 = 1e-6;
const ERASURE_TOL: f64 = 1e-8;
const FIG3_ZERO_ERROR: (f64, f64) = (1.2075, 1e-4);
const FIG3_SHANNON_UNIFORM: (f64, f64) = (2.7635, 0.02);
const FIG3_SHANNON_GAUSSIAN: (f64, f64) = (2.9586, 0.02);
const SMALL_ETA_TOL: f64 = 5e-3;
const LARGE_ETA_TOL: f64 = 0.02;
const THRESHOLD_TOL: f64 = 0.05;
const CONVERSE_FRACTION: f64 = 0.99;
const SCALING_TOL: f64 = 1e-9;
const SI_BASE_TOL: f64 = 1e-8;
const PER_BIT_GAIN: (f64, f64) = (0.9, 1.1);
const DECAY_TOL: f64 = 0.05;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn uniform(b1: f64, b2: f64) -> ActuationDistribution {
    ActuationDistribution::uniform(b1, b2).unwrap()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn lib<T>(r: control_capacity::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn zero_error_closed_forms() -> Check {
    let u = zero_error_capacity(&uniform(1.0, 3.0)).value_bits;
    ensure((u - 1.0).abs() <= EXACT, format!("C_ze(U(1,3)) = {u}"))?;
    let straddle = zero_error_capacity(&uniform(-1.0, 3.0)).value_bits;
    ensure(straddle == 0.0, format!("C_ze(U(-1,3)) = {straddle}"))?;
    let g = zero_error_capacity(&ActuationDistribution::gaussian(4.0, 1.0).unwrap()).value_bits;
    ensure(g == 0.0, format!("C_ze(N(4,1)) = {g}"))?;
    Ok(format!("U(1,3) -> {u}, U(-1,3) -> 0, N(4,1) -> 0"))
}

fn second_moment_cross_check() -> Check {
    let cases = [
        ("U(1,3)", uniform(1.0, 3.0), 2.0f64, 1.0 / 3.0),
        ("N(4,1)", ActuationDistribution::gaussian(4.0, 1.0).unwrap(), 4.0, 1.0),
        ("SB(2,0.3)", ActuationDistribution::scaled_bernoulli(2.0, 0.3).unwrap(), 0.6, 4.0 * 0.3 * 0.7),
    ];
    let mut worst: f64 = 0.0;
    for (name, dist, mu, var) in cases {
        let r = lib(eta_capacity(&dist, 2.0))?;
        let value = 0.5 * (1.0 + mu * mu / var).log2();
        let d = -mu / (mu * mu + var);
        let (ev, ed) = ((r.value_bits - value).abs(), (r.optimal_d.unwrap_or(f64::NAN) - d).abs());
        ensure(
            ev <= SECOND_MOMENT_TOL && ed <= SECOND_MOMENT_TOL,
            format!("{name}: C_2 = {} vs {value}, d* = {:?} vs {d}", r.value_bits, r.optimal_d),
        )?;
        worst = worst.max(ev).max(ed);
    }
    Ok(format!("worst deviation {worst:.2e}"))
}

fn erasure_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for p in [0.1, 0.5, 0.9] {
        let dist = ActuationDistribution::scaled_bernoulli(2.0, p).unwrap();
        for eta in [0.5, 1.0, 2.0, 4.0] {
            let got = lib(eta_capacity(&dist, eta))?.value_bits;
            let want = -(1.0 - p).log2() / eta;
            ensure((got - want).abs() <= ERASURE_TOL, format!("p={p} eta={eta}: {got} vs {want}"))?;
            worst = worst.max((got - want).abs());
        }
        let sh = lib(shannon_capacity(&dist))?.value_bits;
        ensure(sh == f64::INFINITY, format!("p={p}: C_sh = {sh}"))?;
        let ze = zero_error_capacity(&dist).value_bits;
        ensure(ze == 0.0, format!("p={p}: C_ze = {ze}"))?;
    }
    Ok(format!("12 (eta, p) pairs, worst {worst:.2e}; C_sh = inf, C_ze = 0"))
}

fn reference_values() -> Check {
    let s = 3f64.sqrt();
    let u = uniform(4.0 - s, 4.0 + s);
    let g = ActuationDistribution::gaussian(4.0, 1.0).unwrap();
    let ze = zero_error_capacity(&u).value_bits;
    let sh_u = lib(shannon_capacity(&u))?.value_bits;
    let sh_g = lib(shannon_capacity(&g))?.value_bits;
    let within = |x: f64, (want, tol): (f64, f64)| (x - want).abs() <= tol;
    let detail = format!("C_ze(U) = {ze:.5}, C_sh(U) = {sh_u:.5}, C_sh(N) = {sh_g:.5}");
    ensure(
        within(ze, FIG3_ZERO_ERROR) && within(sh_u, FIG3_SHANNON_UNIFORM) && within(sh_g, FIG3_SHANNON_GAUSSIAN),
        detail.clone(),
    )?;
    Ok(detail)
}

fn eta_limits() -> Check {
    let u = uniform(1.0, 3.0);
    let sh = lib(shannon_capacity(&u))?.value_bits;
    let ze = zero_error_capacity(&u).value_bits;
    let small = lib(eta_capacity(&u, 1e-3))?.value_bits;
    let large = lib(eta_capacity(&u, 64.0))?.value_bits;
    let etas: Vec<f64> = (0..20).map(|i| 1e-3 * (64e3f64).powf(f64::from(i) / 19.0)).collect();
    let curve = lib(capacity_curve(&u, &etas))?;
    let monotone = curve.windows(2).all(|w| w[1].value_bits <= w[0].value_bits);
    let detail = format!(
        "C_1e-3 - C_sh = {:.2e}, C_64 - C_ze = {:.4}, monotone over 20 etas: {monotone}",
        small - sh,
        large - ze
    );
    ensure(
        (small - sh).abs() <= SMALL_ETA_TOL && (large - ze).abs() <= LARGE_ETA_TOL && monotone,
        detail.clone(),
    )?;
    Ok(detail)
}

fn threshold_scans() -> Check {
    let u = uniform(1.0, 3.0);
    let c = lib(shannon_capacity(&u))?.value_bits;
    let grid: Vec<f64> = [-0.2, -0.1, -0.04, 0.04, 0.1, 0.2].iter().map(|o| (c + o).exp2()).collect();
    let scan = lib(threshold_scan(&u, Sense::Shannon, &grid, &SimParams::new(2000, 10_000, 11)))?;
    let critical = scan
        .critical_log2_a
        .ok_or_else(|| format!("no sign change in slopes {:?}", scan.points.iter().map(|p| p.slope_bits).collect::<Vec<_>>()))?;
    ensure(
        (critical - c).abs() <= THRESHOLD_TOL,
        format!("critical log2 a = {critical:.4} vs C_sh = {c:.4}"),
    )?;

    let e = ActuationDistribution::scaled_bernoulli(1.0, 0.5).unwrap();
    let scan_e = lib(threshold_scan(&e, Sense::Eta(2.0), &[1.35, 1.45], &SimParams::new(2000, 10_000, 12)))?;
    let verdicts: Vec<Verdict> = scan_e.points.iter().map(|p| p.verdict).collect();
    ensure(
        verdicts == [Verdict::Stable, Verdict::Unstable],
        format!("erasure verdicts at a = 1.35, 1.45: {verdicts:?}"),
    )?;
    Ok(format!(
        "critical log2 a = {critical:.4} (C_sh = {c:.4}); erasure slopes {:.3}, {:.3}",
        scan_e.points[0].slope_bits, scan_e.points[1].slope_bits
    ))
}

fn strong_converse() -> Check {
    let u = uniform(1.0, 3.0);
    let c = lib(shannon_capacity(&u))?.value_bits;
    let report = lib(strong_converse_experiment(&u, (c + 0.5).exp2(), &[1e6], &SimParams::new(2000, 10_000, 21)))?;
    let finals: Vec<(String, f64)> = report
        .trajectories
        .iter()
        .map(|t| (t.name.clone(), t.final_fractions[0]))
        .collect();
    ensure(
        finals.len() == 3 && finals.iter().all(|(_, f)| *f >= CONVERSE_FRACTION),
        format!("{finals:?}"),
    )?;
    Ok(finals.iter().map(|(n, f)| format!("{n} {f:.4}")).collect::<Vec<_>>().join(", "))
}

fn additive_noise() -> Check {
    let u = uniform(2.0, 6.0);
    let d = lib(eta_capacity(&u, 2.0))?.optimal_d.ok_or("no finite d*")?;
    let params = SimParams::new(5000, 2000, 31);
    let run = |a: f64| {
        let spec = SystemSpec::new(a, u.clone()).with_noise(1.0, 1.0);
        lib(additive_noise_check(&spec, d, 2.0, &params))
    };
    let calm = run(2.0)?;
    let wild = run(4.0)?;
    ensure(
        calm.verdict == NoiseVerdict::Bounded && wild.verdict == NoiseVerdict::Unbounded,
        format!("a=2: {:?} (slope {:.4}), a=4: {:?}", calm.verdict, calm.final_quarter_slope_bits, wild.verdict),
    )?;
    Ok(format!(
        "a=2 bounded (final-quarter slope {:.4}, sup log2 E|X|^2 {:.2} <= ceiling {:.2}); a=4 unbounded (log2 rho {:.3})",
        calm.final_quarter_slope_bits, calm.sup_log2_moment, calm.ceiling_log2_moment, wild.log2_rho
    ))
}

fn scaling_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let dist = match i % 3 {
            0 => {
                let lo = rng.random_range(-1.0..2.0);
                uniform(lo, lo + rng.random_range(0.1..3.0))
            }
            1 => ActuationDistribution::gaussian(rng.random_range(-2.0..4.0), rng.random_range(0.1..2.0)).unwrap(),
            _ => ActuationDistribution::scaled_bernoulli(rng.random_range(0.5..3.0), rng.random_range(0.05..0.95))
                .unwrap(),
        };
        let a = rng.random_range(1.0..4.0);
        let d = rng.random_range(-1.5..0.5);
        let err = scaling_equivalence_check(&dist, a, d, 200, i);
        ensure(err <= SCALING_TOL, format!("triple {i}: discrepancy {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("20 triples, worst relative discrepancy {worst:.1e}"))
}

fn side_information() -> Check {
    let bases = [uniform(1.0, 3.0), uniform(-0.09, 0.11), ActuationDistribution::scaled_bernoulli(2.0, 0.3).unwrap()];
    for base in &bases {
        let m = lib(SideInformationModel::uniform_bit_partition(base, 0))?;
        let sh = lib(shannon_capacity_with_si(&m))?.value_bits;
        let sh0 = lib(shannon_capacity(base))?.value_bits;
        let c2 = lib(eta_capacity_with_si(&m, 2.0))?.value_bits;
        let c20 = lib(eta_capacity(base, 2.0))?.value_bits;
        let same = |x: f64, y: f64| x == y || (x - y).abs() <= SI_BASE_TOL;
        ensure(same(sh, sh0) && same(c2, c20), format!("k=0 differs from base: {sh} vs {sh0}, {c2} vs {c20}"))?;
    }

    let low = lib(si_value_curve(&uniform(-0.09, 0.11), 1, Sense::Shannon))?;
    let first_bit = low[1].1 - low[0].1;
    ensure(first_bit > 1.0, format!("first-bit gain {first_bit}"))?;

    let high = lib(si_value_curve(&uniform(2.387, 3.387), 4, Sense::Shannon))?;
    let gains: Vec<f64> = high.windows(2).map(|w| w[1].1 - w[0].1).collect();
    for k in [3usize, 4] {
        let g = gains[k - 1];
        ensure(
            (PER_BIT_GAIN.0..=PER_BIT_GAIN.1).contains(&g),
            format!("per-bit gain at k={k}: {g}"),
        )?;
    }
    ensure(gains.iter().all(|g| *g >= 0.0), format!("not monotone: {high:?}"))?;
    Ok(format!(
        "first-bit gain {first_bit:.3}; mean/sd = 10 per-bit gains {:?}",
        gains.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>()
    ))
}

fn short_series(rng: &mut ChaCha8Rng) -> BitSeries {
    BitSeries::from_window(rng.random_range(-8..=8), rng.random::<u64>() & (u64::MAX << 48))
}

fn carry_free_algebra(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for trial in 0..10_000 {
        let (x, y, w) = (short_series(rng), short_series(rng), short_series(rng));
        let ok = cf_add(&cf_add(&x, &y), &w) == cf_add(&x, &cf_add(&y, &w))
            && cf_mul(&cf_mul(&x, &y), &w) == cf_mul(&x, &cf_mul(&y, &w))
            && cf_mul(&x, &cf_add(&y, &w)) == cf_add(&cf_mul(&x, &y), &cf_mul(&x, &w))
            && cf_mul(&x, &y) == cf_mul(&y, &x)
            && match (x.degree(), y.degree()) {
                (Some(dx), Some(dy)) => cf_mul(&x, &y).degree() == Some(dx + dy),
                _ => cf_mul(&x, &y).is_zero(),
            };
        ensure(ok, format!("algebra trial {trial}: {x:?} {y:?} {w:?}"))?;
    }
    Ok(())
}

/// For every K <= 12, every pattern of the top K state levels and every
/// assignment of the top unknown gain bits, the control clears those levels.
fn carry_free_control_exhaustive(rng: &mut ChaCha8Rng) -> Result<u64, String> {
    let mut checked = 0u64;
    for k in 1..=12i64 {
        let det: String = std::iter::once('1')
            .chain((1..k).map(|_| if rng.random::<bool>() { '1' } else { '0' }))
            .collect();
        let gain = lib(parse_gain(&format!("cf:{k},0,det={det}")))?;
        let free = 12u32;
        for pattern in 0..(1u64 << (k - 1)) {
            let top = rng.random_range(-10..30);
            let window = 1 << 63 | pattern << (64 - k) | (rng.random::<u64>() >> k);
            let state = BitSeries::from_window(top, window);
            let seen = gain.realize(rng);
            let (u, got) = lib(one_step_control(&state, &gain, &seen))?;
            ensure(got == k, format!("K = {got}, expected {k}"))?;
            for assignment in 0..(1u64 << free) {
                let mut levels: Vec<i64> = seen.levels().into_iter().filter(|&l| l > 0 || l <= -i64::from(free)).collect();
                levels.extend((0..i64::from(free)).filter(|i| (assignment >> i) & 1 == 1).map(|i| -i));
                let b = BitSeries::from_levels(&levels);
                let next = cf_add(&state, &cf_mul(&b, &u));
                ensure(
                    (top - k + 1..=top).all(|l| !next.coefficient(l)),
                    format!("K={k} pattern {pattern:b} assignment {assignment:b} leaves a top level set"),
                )?;
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn carry_free() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    carry_free_algebra(&mut rng)?;
    let checked = carry_free_control_exhaustive(&mut rng)?;

    let mut notes = Vec::new();
    for spec in ["cf:1,0", "cf:3,0"] {
        let gain = lib(parse_gain(spec))?;
        let k = cf_zero_error_capacity(&gain);
        let sh = lib(cf_shannon_capacity(&gain))?;
        ensure(sh == k + 1, format!("{spec}: C_sh = {sh}, C_ze = {k}"))?;
        for g_a in 0..=k + 2 {
            let s = lib(simulate_degrees(&gain, g_a, 1000, 1000, 52, 0))?;
            ensure(
                s.bounded == (g_a <= k),
                format!("{spec}, g_a = {g_a}: bounded = {}, max degree {}", s.bounded, s.overall_max_degree),
            )?;
        }
        let s = lib(simulate_degrees(&gain, 0, 1100, 100, 53, 4500))?;
        let decay = s.mean_decay.ok_or("no decay steps")?;
        ensure(
            s.decay_steps >= 100_000 && (decay - sh as f64).abs() <= DECAY_TOL,
            format!("{spec}: mean decay {decay} over {} steps, expected {sh}", s.decay_steps),
        )?;
        notes.push(format!("{spec} decay {decay:.4} over {} steps", s.decay_steps));
    }

    let trap = lib(parse_gain("cf:1,0,fixed=-1:1"))?;
    let filled = lib(parse_gain("cf:1,0,fixed=-1:1,known=0"))?;
    let (before, after) = (cf_zero_error_capacity(&trap), cf_zero_error_capacity(&filled));
    ensure(after - before == 2, format!("side-information jump {before} -> {after}"))?;
    for (gain, c) in [(&trap, before), (&filled, after)] {
        let at = lib(simulate_degrees(gain, c, 1000, 200, 54, 0))?;
        let above = lib(simulate_degrees(gain, c + 1, 1000, 200, 54, 0))?;
        ensure(at.bounded && !above.bounded, format!("capacity {c} not confirmed by simulation"))?;
    }
    notes.push(format!("revealing one bit lifts C_ze {before} -> {after}"));
    Ok(format!("10^4 algebra trials, {checked} control checks; {}", notes.join("; ")))
}

fn cli_determinism() -> Check {
    let commands: [&[&str]; 8] = [
        &["capacity", "uniform:1,3", "--eta", "0.5,4"],
        &["curve", "gaussian:4,1", "--etas", "0.1,1,2"],
        &["sweep", "--points", "5"],
        &["sideinfo", "uniform:-1,3", "--si-bits", "3"],
        &["simulate", "uniform:2,6", "--a", "2", "--w-std", "1", "--v-std", "1", "--horizon", "300", "--paths", "600", "--noise-check"],
        &["scan", "erasure:1,0.5", "--eta", "2", "--a-grid", "1.3,1.5", "--horizon", "200", "--paths", "600"],
        &["converse", "uniform:1,3", "--horizon", "200", "--paths", "600"],
        &["carryfree", "--gain", "cf:2,0", "--g-a", "2", "--horizon", "300", "--paths", "300"],
    ];
    let run = |args: &[&str], threads: &str, format: &str| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_ccap"))
            .args(args)
            .args(["--seed", "5", "--threads", threads, "--format", format])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        Ok(out.stdout)
    };
    for args in commands {
        for format in ["csv", "json"] {
            let first = run(args, "8", format)?;
            ensure(first == run(args, "8", format)?, format!("{args:?} differs between runs"))?;
            ensure(first == run(args, "1", format)?, format!("{args:?} differs between 1 and 8 threads"))?;
        }
    }
    Ok("8 commands x 2 formats identical across repeats and 1 vs 8 threads".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("closed-form zero-error capacities", zero_error_closed_forms),
        ("second-moment capacity and gain match the closed form", second_moment_cross_check),
        ("erasure moment capacities match the analytic value", erasure_oracle),
        ("reference values for the mean/sd = 4 uniform and Gaussian", reference_values),
        ("small and large eta limits and monotone curve", eta_limits),
        ("simulated stability thresholds", threshold_scans),
        ("strong converse above the Shannon capacity", strong_converse),
        ("additive noise robustness", additive_noise),
        ("exact scaling identity", scaling_identity),
        ("side information", side_information),
        ("carry-free models", carry_free),
        ("CLI determinism", cli_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
