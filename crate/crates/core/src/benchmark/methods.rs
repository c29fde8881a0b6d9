//! The benchmarked methods and their default settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{PenaltyConfig, SumStructuredProgram};
use crate::report::SolveReport;
use crate::solvers::{solve_first_order, sqp_solve, GdConfig, GdMode, SqpConfig, UpdateRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sqp,
    Isqp,
    Gd,
    Sgd,
    Adam,
    Nadam,
    Isgd,
    Iadam,
    Inadam,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Sqp,
        Algorithm::Gd,
        Algorithm::Sgd,
        Algorithm::Adam,
        Algorithm::Nadam,
        Algorithm::Isqp,
        Algorithm::Isgd,
        Algorithm::Iadam,
        Algorithm::Inadam,
    ];

    /// Methods compared at their default sample sizes.
    pub const MAIN: [Algorithm; 8] = [
        Algorithm::Sqp,
        Algorithm::Sgd,
        Algorithm::Adam,
        Algorithm::Nadam,
        Algorithm::Isqp,
        Algorithm::Isgd,
        Algorithm::Iadam,
        Algorithm::Inadam,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Algorithm::Sqp => "sqp",
            Algorithm::Isqp => "isqp",
            Algorithm::Gd => "gd",
            Algorithm::Sgd => "sgd",
            Algorithm::Adam => "adam",
            Algorithm::Nadam => "nadam",
            Algorithm::Isgd => "isgd",
            Algorithm::Iadam => "iadam",
            Algorithm::Inadam => "inadam",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::Sqp => "SQP",
            Algorithm::Isqp => "I-SQP",
            Algorithm::Gd => "GD",
            Algorithm::Sgd => "SGD",
            Algorithm::Adam => "Adam",
            Algorithm::Nadam => "Nadam",
            Algorithm::Isgd => "I-SGD",
            Algorithm::Iadam => "I-Adam",
            Algorithm::Inadam => "I-Nadam",
        }
    }

    pub fn default_fraction(self) -> f64 {
        match self {
            Algorithm::Sqp | Algorithm::Gd => 1.0,
            Algorithm::Sgd | Algorithm::Adam | Algorithm::Nadam | Algorithm::Isqp => 0.8,
            Algorithm::Isgd | Algorithm::Iadam | Algorithm::Inadam => 0.4,
        }
    }

    pub fn is_sqp(self) -> bool {
        matches!(self, Algorithm::Sqp | Algorithm::Isqp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.key() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Something that solves a program from a start point; `stream` selects an
/// independent random stream for stochastic methods.
pub trait ProgramSolver: Send + Sync {
    fn name(&self) -> String;
    fn seed(&self) -> u64;
    fn solve(&self, program: &SumStructuredProgram, x0: &[f64], stream: u64) -> Result<SolveReport>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub algorithm: Algorithm,
    pub fraction: f64,
    pub seed: u64,
    pub penalty: PenaltyConfig,
    pub time_limit_s: Option<f64>,
}

impl MethodConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            fraction: algorithm.default_fraction(),
            seed: 0,
            penalty: PenaltyConfig::default(),
            time_limit_s: None,
        }
    }

    pub fn with_fraction(mut self, fraction: f64) -> Self {
        self.fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("fraction {} not in (0, 1]", self.fraction)));
        }
        match self.algorithm {
            Algorithm::Sqp | Algorithm::Gd if self.fraction < 1.0 => Err(Error::InvalidConfig(format!(
                "{} uses every term; use the stochastic or incremental variant for fraction < 1",
                self.algorithm.display_name()
            ))),
            _ => self.penalty.validate(),
        }
    }

    /// Label with the sample size, e.g. `I-SQP 80`.
    pub fn label(&self) -> String {
        format!("{} {}", self.algorithm.display_name(), (self.fraction * 100.0).round())
    }

    pub fn gd_config(&self, seed: u64) -> GdConfig {
        let (mode, rule) = match self.algorithm {
            Algorithm::Gd => (GdMode::Full, UpdateRule::Plain),
            Algorithm::Sgd => (GdMode::Stochastic, UpdateRule::Plain),
            Algorithm::Adam => (GdMode::Stochastic, UpdateRule::Adam),
            Algorithm::Nadam => (GdMode::Stochastic, UpdateRule::Nadam),
            Algorithm::Isgd => (GdMode::Incremental, UpdateRule::Plain),
            Algorithm::Iadam => (GdMode::Incremental, UpdateRule::Adam),
            _ => (GdMode::Incremental, UpdateRule::Nadam),
        };
        let mode = if self.fraction >= 1.0 && mode == GdMode::Stochastic {
            GdMode::Full
        } else {
            mode
        };
        GdConfig {
            seed,
            penalty: self.penalty.clone(),
            time_limit_s: self.time_limit_s,
            ..GdConfig::new(mode, rule, self.fraction)
        }
    }

    pub fn sqp_config(&self, seed: u64) -> SqpConfig {
        SqpConfig {
            penalty: self.penalty.clone(),
            fraction: self.fraction,
            seed,
            time_limit_s: self.time_limit_s,
            ..SqpConfig::default()
        }
    }
}

/// SplitMix64 finalizer, used to derive per-run seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ProgramSolver for MethodConfig {
    fn name(&self) -> String {
        self.label()
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn solve(&self, program: &SumStructuredProgram, x0: &[f64], stream: u64) -> Result<SolveReport> {
        self.validate()?;
        let seed = mix_seed(self.seed, stream);
        if self.algorithm.is_sqp() {
            sqp_solve(program, x0, &self.sqp_config(seed))
        } else {
            solve_first_order(program, x0, &self.gd_config(seed))
        }
    }
}
