use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::causal::check_delta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Exp3,
    Linear,
    Custom,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Exp1 => "exp1",
            ExperimentKind::Exp2 => "exp2",
            ExperimentKind::Exp3 => "exp3",
            ExperimentKind::Linear => "linear",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(ExperimentKind::Exp1),
            "exp2" => Ok(ExperimentKind::Exp2),
            "exp3" => Ok(ExperimentKind::Exp3),
            "linear" => Ok(ExperimentKind::Linear),
            "custom" => Ok(ExperimentKind::Custom),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "c-ucbvi")]
    CUcbvi,
    #[serde(rename = "cf-ucbvi")]
    CfUcbvi,
    #[serde(rename = "ucbvi")]
    Ucbvi,
    #[serde(rename = "f-ucbvi")]
    FUcbvi,
    #[serde(rename = "lsvi-ucb")]
    LsviUcb,
}

impl Algorithm {
    pub const TABULAR: [Algorithm; 4] = [
        Algorithm::CUcbvi,
        Algorithm::CfUcbvi,
        Algorithm::Ucbvi,
        Algorithm::FUcbvi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::CUcbvi => "c-ucbvi",
            Algorithm::CfUcbvi => "cf-ucbvi",
            Algorithm::Ucbvi => "ucbvi",
            Algorithm::FUcbvi => "f-ucbvi",
            Algorithm::LsviUcb => "lsvi-ucb",
        }
    }

    /// Stable numeric id mixed into run seeds.
    pub fn code(self) -> u64 {
        match self {
            Algorithm::CUcbvi => 1,
            Algorithm::CfUcbvi => 2,
            Algorithm::Ucbvi => 3,
            Algorithm::FUcbvi => 4,
            Algorithm::LsviUcb => 5,
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Algorithm>> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c-ucbvi" => Ok(Algorithm::CUcbvi),
            "cf-ucbvi" => Ok(Algorithm::CfUcbvi),
            "ucbvi" => Ok(Algorithm::Ucbvi),
            "f-ucbvi" => Ok(Algorithm::FUcbvi),
            "lsvi-ucb" => Ok(Algorithm::LsviUcb),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    DS,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::DS => "d_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

/// Sizes and hyper-parameters of the linear experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub dim: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_parent_vals: usize,
    pub lambda: f64,
    /// `c` in `β = c·d·H·sqrt(ln(2dT/δ))`.
    pub beta_c: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            dim: 4,
            n_states: 6,
            n_actions: 5,
            n_parent_vals: 3,
            lambda: 1.0,
            beta_c: 1.0,
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub m: usize,
    pub n: usize,
    pub d_s: usize,
    pub horizon: usize,
    pub sweep: Option<Sweep>,
    pub episodes: usize,
    pub delta: f64,
    pub reps: usize,
    pub seed: u64,
    pub algos: Vec<Algorithm>,
    /// Multiplies every tabular learner's bonus; 1 is the textbook constant.
    pub bonus_scale: f64,
    pub start_state: usize,
    pub linear: LinearConfig,
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(ExperimentKind::Exp1)
    }
}

/// Bonus multiplier used by the presets. With the textbook constant the
/// bonus exceeds the value cap for every pair until tens of thousands of
/// visits, so at these episode budgets every learner would stay saturated.
pub const PRESET_BONUS_SCALE: f64 = 0.001;

/// `c` in the LSVI-UCB bonus used by the linear preset. With `c = 1` the
/// bonus keeps every estimate at the cap for the whole 2000-episode run.
pub const PRESET_BETA_C: f64 = 0.05;

impl ExperimentConfig {
    /// Defaults for each experiment at full scale.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            m: 4,
            n: 3,
            d_s: 3,
            horizon: 5,
            sweep: None,
            episodes: 5000,
            delta: 0.05,
            reps: 10,
            seed: 0,
            algos: Algorithm::TABULAR.to_vec(),
            bonus_scale: PRESET_BONUS_SCALE,
            start_state: 0,
            linear: LinearConfig::default(),
            out_dir: PathBuf::from("results"),
            jobs: 0,
        };
        match kind {
            ExperimentKind::Exp1 | ExperimentKind::Custom => base,
            ExperimentKind::Exp2 => ExperimentConfig {
                m: 3,
                horizon: 2,
                sweep: Some(Sweep {
                    axis: SweepAxis::M,
                    values: (3..=7).collect(),
                }),
                ..base
            },
            ExperimentKind::Exp3 => ExperimentConfig {
                m: 3,
                horizon: 2,
                sweep: Some(Sweep {
                    axis: SweepAxis::DS,
                    values: (2..=5).collect(),
                }),
                algos: vec![Algorithm::CUcbvi, Algorithm::CfUcbvi, Algorithm::FUcbvi],
                ..base
            },
            ExperimentKind::Linear => ExperimentConfig {
                horizon: 3,
                episodes: 2000,
                reps: 5,
                algos: vec![Algorithm::LsviUcb],
                linear: LinearConfig {
                    beta_c: PRESET_BETA_C,
                    ..LinearConfig::default()
                },
                ..base
            },
        }
    }

    /// Divides `K` and `reps` by `scale`, keeping both at least 1.
    pub fn scaled(mut self, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Config("scale must be at least 1".into()));
        }
        self.episodes = (self.episodes / scale).max(1);
        self.reps = (self.reps / scale).max(1);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("H must be at least 1".into()));
        }
        if self.algos.is_empty() {
            return Err(Error::Config("algorithm list is empty".into()));
        }
        check_delta(self.delta)?;
        if !(self.bonus_scale >= 0.0 && self.bonus_scale.is_finite()) {
            return Err(Error::Config(format!(
                "bonus scale must be finite and non-negative, got {}",
                self.bonus_scale
            )));
        }
        match (&self.sweep, self.experiment) {
            (None, ExperimentKind::Exp2 | ExperimentKind::Exp3) => {
                return Err(Error::Config(format!(
                    "{} needs a sweep axis",
                    self.experiment
                )));
            }
            (Some(sweep), _) if sweep.values.is_empty() => {
                return Err(Error::Config("sweep has no values".into()));
            }
            (Some(_), ExperimentKind::Linear) => {
                return Err(Error::Config("the linear experiment has no sweep".into()));
            }
            _ => {}
        }
        let linear = self.experiment == ExperimentKind::Linear;
        for algo in &self.algos {
            if linear != (*algo == Algorithm::LsviUcb) {
                return Err(Error::Config(format!(
                    "{algo} cannot run in experiment {}",
                    self.experiment
                )));
            }
        }
        if linear && !(self.linear.lambda > 0.0 && self.linear.beta_c >= 0.0) {
            return Err(Error::Config("need lambda > 0 and beta_c >= 0".into()));
        }
        Ok(())
    }
}
