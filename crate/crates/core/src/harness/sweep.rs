//! One-parameter sweeps over a base configuration.

use crate::error::{Error, Result};
use crate::harness::config::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Truncation threshold `h0`.
    Truncation,
    /// PCA output dimension `d̂0`.
    ReducedDim,
    /// Number of workers `N`.
    Workers,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "h0" => Some(Self::Truncation),
            "dhat0" => Some(Self::ReducedDim),
            "N" | "n" => Some(Self::Workers),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Truncation => "h0",
            Self::ReducedDim => "dhat0",
            Self::Workers => "N",
        }
    }
}

fn as_count(param: SweepParam, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value < 1e9 {
        Ok(value as usize)
    } else {
        Err(Error::config(param.as_str(), format!("{value} is not a positive integer")))
    }
}

/// Returns `base` with one parameter replaced.
///
/// Changing `N` keeps the total training set fixed (`N · samples_per_worker`
/// of the base config) and cycles through the base distances, so the
/// distance list may be longer or shorter than the original.
pub fn apply_sweep(base: &SimConfig, param: SweepParam, value: f64) -> Result<SimConfig> {
    let mut config = base.clone();
    match param {
        SweepParam::Truncation => config.truncation = value,
        SweepParam::ReducedDim => config.reduced_dim = as_count(param, value)?,
        SweepParam::Workers => {
            let n = as_count(param, value)?;
            let total = base.num_workers() * base.samples_per_worker;
            if !total.is_multiple_of(n) {
                return Err(Error::config(
                    "N",
                    format!("{total} training samples cannot be split evenly over {n} workers"),
                ));
            }
            config.samples_per_worker = total / n;
            config.distances = base.distances.iter().copied().cycle().take(n).collect();
        }
    }
    config.validate()?;
    Ok(config)
}

/// Parses a comma-separated list of numbers.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::config("values", format!("'{s}' is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::config("values", "no values given"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_sweep_keeps_total_data() {
        let base = SimConfig::default();
        let total = base.num_workers() * base.samples_per_worker;
        let c = apply_sweep(&base, SweepParam::Workers, 3.0).unwrap();
        assert_eq!(c.num_workers(), 3);
        assert_eq!(c.num_workers() * c.samples_per_worker, total);
        assert_eq!(c.distances[..], base.distances[..3]);
        let c = apply_sweep(&base, SweepParam::Workers, 12.0).unwrap();
        assert_eq!(c.distances[6..], base.distances[..]);
        assert!(apply_sweep(&base, SweepParam::Workers, 7.0).is_err());
        assert!(apply_sweep(&base, SweepParam::Workers, 2.5).is_err());
    }

    #[test]
    fn other_parameters() {
        let base = SimConfig::default();
        assert_eq!(apply_sweep(&base, SweepParam::Truncation, 1e-2).unwrap().truncation, 1e-2);
        assert_eq!(apply_sweep(&base, SweepParam::ReducedDim, 8.0).unwrap().reduced_dim, 8);
        assert!(apply_sweep(&base, SweepParam::ReducedDim, 1000.0).is_err());
        assert!(apply_sweep(&base, SweepParam::Truncation, -1.0).is_err());
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1e-4, 1e-3,1e-2").unwrap(), vec![1e-4, 1e-3, 1e-2]);
        assert!(parse_values("").is_err());
        assert!(parse_values("1,x").is_err());
        assert_eq!(SweepParam::parse("dhat0"), Some(SweepParam::ReducedDim));
        assert_eq!(SweepParam::parse("beta"), None);
    }
}
