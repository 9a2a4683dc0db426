//! Run configuration, loaded from TOML.
//!
//! ```toml
//! variant = "infosam"
//! iterations = 1000
//! rho0 = 0.05
//! eta0 = 0.1
//! schedule = "constant"
//! seed = 7
//!
//! [loss]
//! kind = "quadratic"
//! curvatures = [1.0, 0.5]
//!
//! [noise]
//! variance = 0.1
//!
//! [hyper]
//! alpha = 0.9
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{Activation, LossHead};
use crate::zoo::{DEFAULT_ASAM_CLAMP, DEFAULT_FISHER_CLAMP, DEFAULT_VARIANCE_FLOOR};

/// A SAM variant selected by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Sgd,
    Sam,
    Asam,
    Fisher,
    LInf,
    L1,
    NSupport,
    SsamMod,
    Lazy,
    Vasso,
    InfoSam,
    /// Objective preconditioners cascaded in order, written `chain:a,b,...`.
    Chain(Vec<Variant>),
}

impl Variant {
    pub const NAMES: [&'static str; 11] = [
        "sgd", "sam", "asam", "fisher", "linf", "l1", "nsupp", "ssam-mod", "lazy", "vasso",
        "infosam",
    ];

    /// True for variants that only shape the objective (`D = I`).
    pub fn is_objective_preconditioner(&self) -> bool {
        !matches!(self, Variant::Asam | Variant::Fisher | Variant::Sgd)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("chain:") {
            let members = rest
                .split(',')
                .map(str::parse::<Variant>)
                .collect::<Result<Vec<_>>>()?;
            if members.is_empty() {
                return Err(Error::Config("empty chain".into()));
            }
            if let Some(bad) = members
                .iter()
                .find(|m| matches!(m, Variant::Chain(_)) || !m.is_objective_preconditioner())
            {
                return Err(Error::Config(format!(
                    "chain members must be objective preconditioners, got {bad}"
                )));
            }
            return Ok(Variant::Chain(members));
        }
        Ok(match s {
            "sgd" => Variant::Sgd,
            "sam" => Variant::Sam,
            "asam" => Variant::Asam,
            "fisher" => Variant::Fisher,
            "linf" => Variant::LInf,
            "l1" => Variant::L1,
            "nsupp" => Variant::NSupport,
            "ssam-mod" => Variant::SsamMod,
            "lazy" => Variant::Lazy,
            "vasso" => Variant::Vasso,
            "infosam" => Variant::InfoSam,
            other => {
                return Err(Error::Config(format!(
                    "unknown variant {other:?} (expected one of {} or chain:...)",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::Sgd => "sgd",
            Variant::Sam => "sam",
            Variant::Asam => "asam",
            Variant::Fisher => "fisher",
            Variant::LInf => "linf",
            Variant::L1 => "l1",
            Variant::NSupport => "nsupp",
            Variant::SsamMod => "ssam-mod",
            Variant::Lazy => "lazy",
            Variant::Vasso => "vasso",
            Variant::InfoSam => "infosam",
            Variant::Chain(members) => {
                let names: Vec<String> = members.iter().map(|m| m.to_string()).collect();
                return write!(f, "chain:{}", names.join(","));
            }
        };
        f.write_str(name)
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> Self {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    /// `rho = rho0 / sqrt(T)`, `eta = eta0 / sqrt(T)`.
    OneOverSqrtT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// infoSAM EMA coefficient.
    pub alpha: f64,
    /// VaSSO averaging weight.
    pub theta: f64,
    /// Support size for `nsupp`.
    pub support: Option<usize>,
    /// Kept fraction for `ssam-mod`.
    pub keep_ratio: Option<f64>,
    /// Lazy SAM period.
    pub period: Option<usize>,
    pub asam_clamp: f64,
    pub fisher_clamp: f64,
    pub variance_floor: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            theta: 0.4,
            support: None,
            keep_ratio: None,
            period: None,
            asam_clamp: DEFAULT_ASAM_CLAMP,
            fisher_clamp: DEFAULT_FISHER_CLAMP,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Load from CSV instead of generating.
    pub path: Option<PathBuf>,
    pub samples: usize,
    pub classes: usize,
    pub separation: f64,
    /// Fraction of labels flipped after generation.
    pub flip_rate: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            samples: 200,
            classes: 2,
            separation: 2.0,
            flip_rate: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossConfig {
    Quadratic {
        curvatures: Vec<f64>,
    },
    Rosenbrock {
        dim: usize,
    },
    Valley {
        c_sharp: f64,
        c_flat: f64,
        smoothing: f64,
    },
    Mlp {
        widths: Vec<usize>,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        head: LossHead,
        batch_size: usize,
        #[serde(default)]
        dataset: DatasetConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-coordinate variance applied to every coordinate.
    pub variance: Option<f64>,
    /// Explicit per-coordinate variances; overrides `variance`.
    pub variances: Option<Vec<f64>>,
}

impl NoiseConfig {
    pub fn variances(&self, dim: usize) -> Vec<f64> {
        match (&self.variances, self.variance) {
            (Some(v), _) => v.clone(),
            (None, Some(s)) => vec![s; dim],
            (None, None) => vec![0.0; dim],
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.variances {
            Some(v) => v.iter().all(|&x| x == 0.0),
            None => self.variance.unwrap_or(0.0) == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

impl ExportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub loss: LossConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub iterations: usize,
    pub rho0: f64,
    pub eta0: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; defaults depend on the loss.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<ExportFormat>,
}

impl RunConfig {
    /// A noise-free quadratic run, convenient as a starting point.
    pub fn quadratic(variant: Variant, curvatures: Vec<f64>, iterations: usize) -> Self {
        Self {
            variant,
            loss: LossConfig::Quadratic { curvatures },
            noise: NoiseConfig::default(),
            iterations,
            rho0: 0.05,
            eta0: 0.1,
            schedule: ScheduleKind::Constant,
            hyper: Hyperparameters::default(),
            seed: 0,
            x0: None,
            output: None,
            format: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        for (name, v) in [("rho0", self.rho0), ("eta0", self.eta0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        validate_variant(&self.variant, &self.hyper)?;
        if let (LossConfig::Mlp { .. }, false) = (&self.loss, self.noise.is_zero()) {
            return Err(Error::Config(
                "additive noise is not supported for mlp losses (minibatching is the noise)"
                    .into(),
            ));
        }
        Ok(())
    }
}

fn validate_variant(variant: &Variant, hyper: &Hyperparameters) -> Result<()> {
    let missing = |what: &str| Err(Error::Config(format!("variant {variant} requires hyper.{what}")));
    match variant {
        Variant::NSupport if hyper.support.is_none() => missing("support"),
        Variant::SsamMod if hyper.keep_ratio.is_none() => missing("keep_ratio"),
        Variant::Lazy if hyper.period.is_none() => missing("period"),
        Variant::Chain(members) => members.iter().try_for_each(|m| validate_variant(m, hyper)),
        _ => Ok(()),
    }
}
