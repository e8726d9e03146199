use std::path::PathBuf;

use hwctrl::config::ConfigError;
use hwctrl::ctmc::CtmcError;
use hwctrl::elimination::DriftError;
use hwctrl::hjb::HjbError;
use hwctrl::network::NetworkError;
use hwctrl::plan::PlanError;
use hwctrl::sim::SimError;
use hwctrl::simplex::LpError;
use hwctrl::stability::StabilityError;
use hwctrl::cost::CostError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
    #[error(transparent)]
    Hjb(#[from] HjbError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Stable process exit code for each error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Io { .. } => 3,
            Self::Config(ConfigError::Network(_)) | Self::Network(_) => 10,
            Self::Config(_) => 4,
            Self::Plan(_) | Self::Lp(_) => 11,
            Self::Drift(_) => 12,
            Self::Stability(_) => 13,
            Self::Cost(_) => 14,
            Self::Sim(_) => 15,
            Self::Ctmc(_) => 16,
            Self::Hjb(_) => 17,
        }
    }

    pub fn family(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            3 => "io",
            4 => "config",
            10 => "network",
            11 => "plan",
            12 => "elimination",
            13 => "stability",
            14 => "cost",
            15 => "simulation",
            16 => "ctmc",
            _ => "hjb",
        }
    }

    /// Variant name of the underlying module error, e.g. `PoolingViolated`.
    pub fn kind(&self) -> String {
        let debug = match self {
            Self::Io { source, .. } => return format!("{:?}", source.kind()),
            Self::Usage(_) => return "Usage".into(),
            Self::Config(ConfigError::Network(e)) => format!("{e:?}"),
            Self::Config(e) => format!("{e:?}"),
            Self::Network(e) => format!("{e:?}"),
            Self::Plan(e) => format!("{e:?}"),
            Self::Lp(e) => format!("{e:?}"),
            Self::Drift(e) => format!("{e:?}"),
            Self::Stability(e) => format!("{e:?}"),
            Self::Cost(e) => format!("{e:?}"),
            Self::Sim(e) => format!("{e:?}"),
            Self::Ctmc(e) => format!("{e:?}"),
            Self::Hjb(e) => format!("{e:?}"),
        };
        debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: String,
            family: &'a str,
            code: i32,
            message: String,
        }
        let line = Line { error: self.kind(), family: self.family(), code: self.exit_code(), message: self.to_string() };
        serde_json::to_string(&line).expect("error line serializes")
    }
}
