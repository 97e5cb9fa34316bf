use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{dm_lais_with_centers, tqmc_lais_with_centers, upper_layer, LaisConfig};
use crate::distributions::LogDensity;
use crate::quadrature::fit_slope;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LaisMethod {
    #[serde(rename = "dm-lais")]
    Dm,
    #[serde(rename = "tqmc-lais")]
    Tqmc,
}

impl LaisMethod {
    pub const ALL: [LaisMethod; 2] = [LaisMethod::Dm, LaisMethod::Tqmc];

    pub fn name(self) -> &'static str {
        match self {
            LaisMethod::Dm => "dm-lais",
            LaisMethod::Tqmc => "tqmc-lais",
        }
    }
}

impl fmt::Display for LaisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LaisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dm-lais" | "dm" => Ok(LaisMethod::Dm),
            "tqmc-lais" | "tqmc" => Ok(LaisMethod::Tqmc),
            _ => Err(Error::InvalidInput(format!("unknown LAIS method '{s}'"))),
        }
    }
}

/// Which budget parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Samples per proposal component.
    Samples,
    /// Chain length.
    Steps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaisRecord {
    pub method: LaisMethod,
    pub chains: usize,
    pub steps: usize,
    pub samples_per_component: usize,
    pub n_total: usize,
    pub seed: u64,
    /// Euclidean distance between the estimated and the true mean.
    pub error: f64,
    pub ess: f64,
}

pub const LAIS_CSV_HEADER: &str = "method,C,T,M,n_total,seed,error,ess";

impl LaisRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.chains,
            self.steps,
            self.samples_per_component,
            self.n_total,
            self.seed,
            crate::pointsets::fmt_f64(self.error),
            crate::pointsets::fmt_f64(self.ess)
        )
    }
}

/// Mean-estimation sweep. For each seed and sweep value both methods share
/// the same upper layer, so the comparison isolates the lower layer.
pub fn lais_sweep<T: LogDensity + ?Sized>(
    target: &T,
    base: &LaisConfig,
    sweep: Sweep,
    values: &[usize],
    seeds: &[u64],
    true_mean: &[f64],
) -> Result<Vec<LaisRecord>> {
    if true_mean.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: true_mean.len(),
        });
    }
    let mut out = Vec::with_capacity(values.len() * seeds.len() * 2);
    for &v in values {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            match sweep {
                Sweep::Samples => cfg.samples_per_component = v,
                Sweep::Steps => cfg.steps = v,
            }
            let layer = upper_layer(target, &cfg)?;
            for method in LaisMethod::ALL {
                let res = match method {
                    LaisMethod::Dm => {
                        dm_lais_with_centers(target, &layer.centers, &cfg, |z| z.to_vec())?
                    }
                    LaisMethod::Tqmc => {
                        tqmc_lais_with_centers(target, &layer.centers, &cfg, |z| z.to_vec())?
                    }
                };
                let error = res
                    .estimate
                    .iter()
                    .zip(true_mean)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                out.push(LaisRecord {
                    method,
                    chains: cfg.chains,
                    steps: cfg.steps,
                    samples_per_component: cfg.samples_per_component,
                    n_total: res.n_total,
                    seed,
                    error,
                    ess: res.ess,
                });
            }
        }
    }
    Ok(out)
}

/// Log-log slope of the RMS error over seeds against the total sample count.
pub fn sweep_slope(records: &[LaisRecord], method: LaisMethod) -> Result<f64> {
    let mut groups: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.method == method) {
        let g = groups.entry(r.n_total).or_default();
        g.0 += r.error * r.error;
        g.1 += 1;
    }
    let pts: Vec<(f64, f64)> = groups
        .iter()
        .map(|(&n, &(s, c))| (n as f64, (s / c as f64).sqrt()))
        .collect();
    fit_slope(&pts)
}
