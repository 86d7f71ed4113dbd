//! End-to-end runs of parsed command lines, in process.

use std::fs;
use std::path::Path;

use clap::Parser;

use control_capacity::capacity::{eta_capacity, shannon_capacity, zero_error_capacity};
use control_capacity::distributions::parse_distribution;

use crate::{commands, Cli, CliError};

fn run_to(path: &Path, args: &[&str]) -> Result<String, CliError> {
    let argv = ["ccap"].iter().chain(args).copied().chain(["--out", path.to_str().unwrap()]);
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Config(e.to_string()))?;
    commands::run(&cli)?;
    Ok(fs::read_to_string(path)?)
}

fn run(args: &[&str]) -> Result<String, CliError> {
    let dir = tempfile::tempdir().unwrap();
    run_to(&dir.path().join("out"), args)
}

fn ok(args: &[&str]) -> String {
    run(args).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn exit_code(args: &[&str]) -> u8 {
    run(args).err().map_or(0, |e| e.exit_code())
}

fn table(csv_text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (headers, rows)
}

fn value(rows: &[Vec<String>], label: &str, col: usize) -> f64 {
    rows.iter().find(|r| r[0] == label).unwrap()[col].parse().unwrap()
}

#[test]
fn capacity_of_the_reference_uniform() {
    let s = 3f64.sqrt();
    let spec = format!("uniform:{},{}", 4.0 - s, 4.0 + s);
    let (headers, rows) = table(&ok(&["capacity", &spec]));
    assert_eq!(headers, ["sense", "eta", "capacity_bits", "optimal_d"]);
    assert!((value(&rows, "zero_error", 2) - 1.2075).abs() < 1e-4);

    // The rounded endpoints land near the same value.
    let (_, rows2) = table(&ok(&["capacity", "--dist", "uniform:2.267,5.732"]));
    assert!((value(&rows2, "zero_error", 2) - 1.2075).abs() < 2e-3);
}

#[test]
fn erasure_capacities_print_inf() {
    let (_, rows) = table(&ok(&["capacity", "erasure:1,0.5"]));
    assert_eq!(rows[0][2], "inf");
    assert_eq!(value(&rows, "zero_error", 2), 0.0);
}

#[test]
fn curve_rows_are_monotone() {
    let (_, rows) = table(&ok(&["curve", "uniform:1,3", "--etas", "0.01,1,2,8,64"]));
    assert_eq!(rows.len(), 5);
    let c: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(c.windows(2).all(|w| w[1] <= w[0]), "{c:?}");
}

#[test]
fn csv_round_trips_library_values() {
    let dist = parse_distribution("uniform:0.5,2.5").unwrap();
    let (_, rows) = table(&ok(&["capacity", "uniform:0.5,2.5", "--eta", "0.5,3"]));
    let sh = shannon_capacity(&dist).unwrap();
    let ze = zero_error_capacity(&dist);
    let e3 = eta_capacity(&dist, 3.0).unwrap();
    assert_eq!(value(&rows, "shannon", 2).to_bits(), sh.value_bits.to_bits());
    assert_eq!(value(&rows, "shannon", 3).to_bits(), sh.optimal_d.unwrap().to_bits());
    assert_eq!(value(&rows, "zero_error", 2).to_bits(), ze.value_bits.to_bits());
    let last: f64 = rows[4][2].parse().unwrap();
    assert_eq!(last.to_bits(), e3.value_bits.to_bits());
}

#[test]
fn sweep_columns() {
    let (headers, rows) = table(&ok(&["sweep", "--points", "3", "--family", "uniform,erasure"]));
    assert_eq!(headers, ["family", "log2_mean_over_sd", "c_sh", "c_ze", "c_2"]);
    assert_eq!(rows.len(), 6);
    // log2(mean/sd) = 1 for the uniform family is U(2 - √3, 2 + √3).
    let u = &rows[1];
    assert_eq!((u[0].as_str(), u[1].as_str()), ("uniform", "1"));
    let c_ze: f64 = u[3].parse().unwrap();
    assert!((c_ze - (2.0 / 3f64.sqrt()).log2()).abs() < 1e-12);
    assert!(rows[3..].iter().all(|r| r[2] == "inf" && r[3] == "0"));
    assert_eq!(exit_code(&["sweep", "--family", "cauchy"]), 2);
}

#[test]
fn json_has_config_results_and_diagnostics() {
    let text = ok(&["sideinfo", "uniform:-1,3", "--si-bits", "2", "--eta", "2", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["config"]["command"]["command"], "sideinfo");
    assert_eq!(doc["config"]["command"]["dist"], "uniform:-1,3");
    assert_eq!(doc["results"].as_array().unwrap().len(), 3);
    assert!(doc.get("diagnostics").is_some());

    let text = ok(&["capacity", "erasure:2,0.3", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["results"][0]["capacity_bits"], "inf");
}

#[test]
fn explicit_cells_report_a_total() {
    let (_, rows) = table(&ok(&["sideinfo", "uniform:-1,3", "--si-cells", "-1,1,3", "--eta", "2"]));
    assert_eq!(rows.len(), 3);
    let total = value(&rows, "total", 2);
    assert!((total - 0.4465).abs() < 1e-3, "{total}");
}

#[test]
fn simulation_commands_produce_tables() {
    let (headers, rows) = table(&ok(&[
        "simulate", "uniform:1,3", "--a", "4", "--etas", "1,2", "--horizon", "20", "--paths", "50",
    ]));
    assert_eq!(headers.len(), 7);
    assert_eq!(rows.len(), 21);

    let (_, rows) = table(&ok(&["scan", "erasure:1,0.5", "--eta", "2", "--a-grid", "1.2,1.8", "--horizon", "200"]));
    assert_eq!((rows[0][3].as_str(), rows[1][3].as_str()), ("stable", "unstable"));

    let (headers, _) = table(&ok(&["converse", "uniform:1,3", "--threshold-M", "10,1e6", "--horizon", "10"]));
    assert_eq!(headers.len(), 7);
    assert_eq!(headers[2], "optimal_above_1000000");

    let (_, rows) = table(&ok(&["carryfree", "--gain", "cf:2,0", "--g-a", "1", "--horizon", "30", "--initial-degree", "40"]));
    let last: f64 = rows[30][1].parse().unwrap();
    assert!(last < 40.0);
}

#[test]
fn deterministic_under_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out");
    let args = ["simulate", "uniform:1,3", "--a", "5", "--horizon", "300", "--paths", "700", "--seed", "3"];
    let on = |threads: usize, args: &[&str]| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_to(&path, args).unwrap())
    };
    let one = on(1, &args);
    assert_eq!(one, on(8, &args));
    assert_eq!(one, on(8, &args));
    let mut other_seed = args.to_vec();
    other_seed[9] = "4";
    assert_ne!(on(8, &other_seed), one);
}

#[test]
fn exit_codes() {
    assert_eq!(exit_code(&["capacity", "uniform:1,3"]), 0);
    assert_eq!(exit_code(&["capacity", "nonsense:1"]), 2);
    assert_eq!(exit_code(&["capacity", "uniform:3,1"]), 2);
    assert_eq!(exit_code(&["capacity"]), 2);
    assert_eq!(exit_code(&["frobnicate"]), 2);
    assert_eq!(exit_code(&["simulate", "uniform:1,3", "--a", "0.5"]), 2);
    assert_eq!(exit_code(&["sideinfo", "gaussian:1,1", "--si-bits", "2"]), 2);
    assert_eq!(exit_code(&["carryfree", "--gain", "cf:0,1", "--g-a", "0"]), 2);
    assert_eq!(exit_code(&["curve", "uniform:1,3", "--etas", "2,1"]), 2);
    assert_eq!(exit_code(&["capacity", "uniform:1,3", "--grid-points", "100"]), 2);
}
