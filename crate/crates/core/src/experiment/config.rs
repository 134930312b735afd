use serde::{Deserialize, Serialize};

use crate::aggregate::SolverOptions;
use crate::error::{Error, Result};

/// Methods the harness can run on each draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QAgg,
    CpSelect,
    Gcv,
    ExpWeights,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::QAgg,
        Method::CpSelect,
        Method::Gcv,
        Method::ExpWeights,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::QAgg => "q_agg",
            Method::CpSelect => "cp_select",
            Method::Gcv => "gcv",
            Method::ExpWeights => "exp_weights",
            Method::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub scenario: ScenarioSpec,
    pub design: DesignSpec,
    pub families: FamiliesSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Exponential-weights temperature; `4σ²` when absent.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_replicates() -> usize {
    1
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub sigma: f64,
    pub mean: MeanSpec,
}

/// Shape of the unknown mean. Spectral shapes are expressed in the basis of
/// the first family (left singular vectors of `X K^{-1/2}`, by decreasing
/// singular value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    Zero,
    /// Coordinates `scale · (i + 1)^(−rate)`. When `target_oracle_risk` is
    /// set (in units of σ²) the scale is calibrated so that `R*` matches it.
    SpectralDecay {
        rate: f64,
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        target_oracle_risk: Option<f64>,
    },
    SingleSpike {
        coordinate: usize,
        magnitude: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

/// Design matrix: i.i.d. standard normal entries drawn from the experiment
/// seed, or explicit row-major `rows` (n rows of length p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltySpec {
    Identity,
    /// `diag((i + 1)^exponent)`.
    DiagPower { exponent: f64 },
    Diagonal { values: Vec<f64> },
    Dense { rows: Vec<Vec<f64>> },
}

/// Geometric grid of `count` values on `[min, max]`. With `relative`, the
/// bounds are multiples of the mean squared singular value of `X K^{-1/2}`.
/// A single-point grid sits at the geometric center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_min")]
    pub min: f64,
    #[serde(default = "default_grid_max")]
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_relative")]
    pub relative: bool,
}

fn default_grid_min() -> f64 {
    1e-3
}

fn default_grid_max() -> f64 {
    1e3
}

fn default_relative() -> bool {
    true
}

impl GridSpec {
    pub fn geometric(min: f64, max: f64, count: usize) -> Self {
        Self {
            min,
            max,
            count,
            relative: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParameter {
                name: "grid.count",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.min > 0.0 && self.max.is_finite() && self.max >= self.min) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("need 0 < min <= max, got [{}, {}]", self.min, self.max),
            });
        }
        if self.count > 1 && self.max == self.min {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "min == max with more than one point would duplicate lambdas".into(),
            });
        }
        Ok(())
    }

    /// Grid values scaled by `scale`.
    pub fn values(&self, scale: f64) -> Vec<f64> {
        let s = if self.relative { scale } else { 1.0 };
        if self.count == 1 {
            return vec![s * (self.min * self.max).sqrt()];
        }
        let ratio = (self.max / self.min).ln();
        (0..self.count)
            .map(|j| s * self.min * (ratio * j as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub penalty: PenaltySpec,
    pub grid: GridSpec,
}

/// Candidate set: one Tikhonov family or a union of several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamiliesSpec {
    Single {
        penalty: PenaltySpec,
        grid: GridSpec,
    },
    Union {
        families: Vec<FamilySpec>,
    },
    /// `q` diagonal-power penalties with exponents `0, −step, step, −2step,
    /// 2step, …`, all sharing one grid. Prefixes are nested in `q`.
    DiagPowerLadder {
        q: usize,
        step: f64,
        grid: GridSpec,
    },
}

/// Exponent of member `m` of a diagonal-power ladder.
pub fn ladder_exponent(m: usize, step: f64) -> f64 {
    let rung = m.div_ceil(2) as f64;
    if m % 2 == 1 {
        -rung * step
    } else {
        rung * step
    }
}

impl FamiliesSpec {
    /// Expanded list of families.
    pub fn expand(&self) -> Vec<FamilySpec> {
        match self {
            FamiliesSpec::Single { penalty, grid } => vec![FamilySpec {
                penalty: penalty.clone(),
                grid: grid.clone(),
            }],
            FamiliesSpec::Union { families } => families.clone(),
            FamiliesSpec::DiagPowerLadder { q, step, grid } => (0..*q)
                .map(|m| FamilySpec {
                    penalty: PenaltySpec::DiagPower {
                        exponent: ladder_exponent(m, *step),
                    },
                    grid: grid.clone(),
                })
                .collect(),
        }
    }

    /// Sets the grid size of every family.
    pub fn set_count(&mut self, count: usize) {
        match self {
            FamiliesSpec::Single { grid, .. } | FamiliesSpec::DiagPowerLadder { grid, .. } => {
                grid.count = count
            }
            FamiliesSpec::Union { families } => {
                families.iter_mut().for_each(|f| f.grid.count = count)
            }
        }
    }

    /// Restricts to the first `q` families.
    pub fn set_q(&mut self, q: usize) -> Result<()> {
        if q == 0 {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: "must be at least 1".into(),
            });
        }
        match self {
            FamiliesSpec::DiagPowerLadder { q: current, .. } => *current = q,
            FamiliesSpec::Union { families } => {
                if q > families.len() {
                    return Err(Error::InvalidParameter {
                        name: "q",
                        reason: format!("union lists only {} families", families.len()),
                    });
                }
                families.truncate(q);
            }
            FamiliesSpec::Single { .. } => {
                if q != 1 {
                    return Err(Error::InvalidParameter {
                        name: "q",
                        reason: "a single family cannot be swept over q".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Values swept by `--sweep m` / `--sweep q`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub m_values: Vec<usize>,
    #[serde(default)]
    pub q_values: Vec<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter {
                name: "replicates",
                reason: "must be at least 1".into(),
            });
        }
        if self.scenario.n == 0 {
            return Err(Error::InvalidParameter {
                name: "scenario.n",
                reason: "must be at least 1".into(),
            });
        }
        crate::error::check_positive("scenario.sigma", self.scenario.sigma)?;
        if let Some(t) = self.temperature {
            crate::error::check_positive("temperature", t)?;
        }
        if self.methods.is_empty() {
            return Err(Error::Empty("methods"));
        }
        let families = self.families.expand();
        if families.is_empty() {
            return Err(Error::Empty("families"));
        }
        for f in &families {
            f.grid.validate()?;
        }
        Ok(())
    }
}
