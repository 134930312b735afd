use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::stats::ExcessQuantiles;

/// Monte Carlo summary of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean of `‖fit − μ‖²` over used replicates.
    pub mean_risk: f64,
    pub std_error: f64,
    /// `mean_risk − R*`, with `R*` exact.
    pub regret: f64,
    /// 95% half-width of `regret`.
    pub regret_ci: f64,
    /// Mean per-draw excess `‖fit − μ‖² − ‖A_{j*}y − μ‖²`.
    pub paired_regret: f64,
    pub paired_ci: f64,
    pub excess_quantiles: ExcessQuantiles,
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// Number of candidates `M`.
    pub m: usize,
    /// Number of ordered families `q`.
    pub q: usize,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub replicates: usize,
    pub used_replicates: usize,
    /// Exact oracle risk.
    pub r_star: f64,
    pub oracle_index: usize,
    pub methods: Vec<MethodSummary>,
    /// Replicates where the Q-aggregation solve did not certify; excluded
    /// from every summary.
    pub nonconverged: Vec<usize>,
    /// Draws violating the deterministic inequality against `j*`.
    pub inequality_violations: usize,
    /// Largest `excess − bound` seen (negative when the bound always held).
    pub inequality_worst_margin: f64,
    pub runtime_secs: f64,
}

impl RegretReport {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }
}

const CSV_HEADER: [&str; 19] = [
    "m",
    "q",
    "n",
    "sigma",
    "seed",
    "replicates",
    "used_replicates",
    "r_star",
    "oracle_index",
    "method",
    "mean_risk",
    "std_error",
    "regret",
    "regret_ci",
    "paired_regret",
    "paired_ci",
    "excess_q50",
    "excess_q90",
    "excess_q99",
];

/// One row per method per report. Run time is left out so equal seeds give
/// identical bytes.
pub fn write_csv<W: Write>(reports: &[RegretReport], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for r in reports {
        for s in &r.methods {
            writer.write_record([
                r.m.to_string(),
                r.q.to_string(),
                r.n.to_string(),
                r.sigma.to_string(),
                r.seed.to_string(),
                r.replicates.to_string(),
                r.used_replicates.to_string(),
                r.r_star.to_string(),
                r.oracle_index.to_string(),
                s.method.to_string(),
                s.mean_risk.to_string(),
                s.std_error.to_string(),
                s.regret.to_string(),
                s.regret_ci.to_string(),
                s.paired_regret.to_string(),
                s.paired_ci.to_string(),
                s.excess_quantiles.q50.to_string(),
                s.excess_quantiles.q90.to_string(),
                s.excess_quantiles.q99.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
