//! Text grammar for actuation laws, shared by the CLI and config files:
//!
//! ```text
//! uniform:b1,b2
//! gaussian:mu,sigma
//! erasure:beta,p
//! mixture:w1*<spec>|w2*<spec>|...
//! empirical:@path.csv        (one real per line)
//! ```

use std::fs;

use super::ActuationDistribution;
use crate::error::{Error, Result};

pub fn parse_distribution(spec: &str) -> Result<ActuationDistribution> {
    let spec = spec.trim();
    let (kind, args) = spec
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("missing ':' in {spec:?}")))?;
    match kind.trim() {
        "uniform" => {
            let [b1, b2] = numbers::<2>(args)?;
            ActuationDistribution::uniform(b1, b2)
        }
        "gaussian" => {
            let [mu, sigma] = numbers::<2>(args)?;
            ActuationDistribution::gaussian(mu, sigma)
        }
        "erasure" => {
            let [beta, p] = numbers::<2>(args)?;
            ActuationDistribution::scaled_bernoulli(beta, p)
        }
        "mixture" => {
            let mut components = Vec::new();
            for part in args.split('|') {
                let (w, inner) = part
                    .split_once('*')
                    .ok_or_else(|| Error::Parse(format!("mixture component {part:?} needs w*<spec>")))?;
                if inner.trim_start().starts_with("mixture:") {
                    return Err(Error::Parse("nested mixtures are not supported".into()));
                }
                components.push((number(w)?, parse_distribution(inner)?));
            }
            ActuationDistribution::mixture(components)
        }
        "empirical" => {
            let path = args
                .trim()
                .strip_prefix('@')
                .ok_or_else(|| Error::Parse("empirical spec must be empirical:@path".into()))?;
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Parse(format!("cannot read {path}: {e}")))?;
            let samples = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(number)
                .collect::<Result<Vec<_>>>()?;
            ActuationDistribution::empirical(samples)
        }
        other => Err(Error::Parse(format!("unknown distribution kind {other:?}"))),
    }
}

fn number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

fn numbers<const N: usize>(args: &str) -> Result<[f64; N]> {
    let parsed = args.split(',').map(number).collect::<Result<Vec<_>>>()?;
    parsed
        .try_into()
        .map_err(|v: Vec<f64>| Error::Parse(format!("expected {N} numbers, got {}", v.len())))
}
