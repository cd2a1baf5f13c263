//! Run configuration: one JSON (or TOML) document per command invocation.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{PsiGridConfig, SpinLaw};
use crate::cone::{XiModel, XiModelSpec};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::measure::DiscreteMeasure;
use crate::path::{PathSpec, RampStepPath};
use crate::variational::{CriticalOptions, VariationalConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EvalPsi,
    Parisi,
    HopfLax,
    Critpoint,
    Uniqueness,
    McFreeEnergy,
    OverlapHist,
    Gateaux,
    PdeResidual,
    Frechet,
    Transport,
    CertifyModel,
    CertifyPath,
    Suite,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EvalPsi => "eval-psi",
            Command::Parisi => "parisi",
            Command::HopfLax => "hopf-lax",
            Command::Critpoint => "critpoint",
            Command::Uniqueness => "uniqueness",
            Command::McFreeEnergy => "mc-free-energy",
            Command::OverlapHist => "overlap-hist",
            Command::Gateaux => "gateaux",
            Command::PdeResidual => "pde-residual",
            Command::Frechet => "frechet",
            Command::Transport => "transport",
            Command::CertifyModel => "certify-model",
            Command::CertifyPath => "certify-path",
            Command::Suite => "suite",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::value_variants().iter().copied().find(|c| c.name() == name)
    }

    /// Commands whose output depends on random draws or random starts.
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Command::EvalPsi | Command::Transport | Command::CertifyPath)
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// Children kept per cascade node.
    pub m: usize,
    pub n_samples: usize,
    /// Histogram bins for overlap entries on `[−1, 1]`.
    pub bins: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            m: 200,
            n_samples: 10_000,
            bins: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Decreasing steps for the directional quotients.
    pub eps: Vec<f64>,
    pub dt: f64,
    pub n_directions: usize,
    /// Displacements `2^{−j}`, `j = 1..=levels`.
    pub levels: u32,
    /// Samples per direction on `[0, 1]`; `0` uses the control grid.
    pub direction_resolution: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.02, 0.01],
            dt: 0.05,
            n_directions: 3,
            levels: 5,
            direction_resolution: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub mu: DiscreteMeasure<f64>,
    pub nu: DiscreteMeasure<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Optional matrix-valued measure checked for a totally ordered support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<DiscreteMeasure<SymMatrix>>,
}

fn default_lambdas() -> Vec<f64> {
    (0..=8).map(|i| i as f64 / 8.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub n_samples: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { n_samples: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<XiModelSpec>,
    /// Defaults to Ising for `D = 1` and the square corners for `D = 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<SpinLaw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<PathSpec>,
    #[serde(deserialize_with = "one_or_many")]
    pub t: Vec<f64>,
    pub n_spins: Vec<usize>,
    /// Cells used to average a path with a linear part before evaluating `ψ`.
    pub psi_cells: usize,
    pub mc: McConfig,
    pub grid: PsiGridConfig,
    pub variational: VariationalConfig,
    pub critical: CriticalOptions,
    pub probe: ProbeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportConfig>,
    pub certify: CertifyConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            model: None,
            law: None,
            q: None,
            t: Vec::new(),
            n_spins: vec![1],
            psi_cells: 64,
            mc: McConfig::default(),
            grid: PsiGridConfig::default(),
            variational: VariationalConfig::default(),
            critical: CriticalOptions::default(),
            probe: ProbeConfig::default(),
            transport: None,
            certify: CertifyConfig::default(),
            seed: None,
            out: None,
        }
    }
}

impl RunConfig {
    /// Parses JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Canonical JSON of the configuration without the output location.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("configs serialize")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    fn missing(key: &str, command: Command) -> Error {
        Error::Config(format!("missing key `{key}` required by `{}`", command.name()))
    }

    /// Validates what `command` needs and pushes the root seed into nested settings.
    pub fn prepare(&mut self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::Config(format!(
                    "key `command` is `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.command = Some(command);
        if command.is_stochastic() && command != Command::Suite && self.seed.is_none() {
            return Err(Self::missing("seed", command));
        }
        if let Some(s) = self.seed {
            self.variational.seed = s;
        }
        self.grid.validate()?;
        self.variational.validate()?;
        if self.t.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config("key `t`: times must be finite and nonnegative".into()));
        }
        if self.psi_cells == 0 {
            return Err(Error::Config("key `psi_cells` must be positive".into()));
        }
        let needs_model = !matches!(command, Command::EvalPsi | Command::CertifyPath | Command::Suite);
        if needs_model && self.model.is_none() {
            return Err(Self::missing("model", command));
        }
        let needs_q = !matches!(command, Command::Transport | Command::CertifyModel | Command::Suite);
        if needs_q && self.q.is_none() {
            return Err(Self::missing("q", command));
        }
        let needs_t = matches!(
            command,
            Command::Parisi
                | Command::HopfLax
                | Command::Critpoint
                | Command::Uniqueness
                | Command::McFreeEnergy
                | Command::OverlapHist
                | Command::Gateaux
                | Command::PdeResidual
                | Command::Frechet
                | Command::Transport
        );
        if needs_t && self.t.is_empty() {
            return Err(Self::missing("t", command));
        }
        if command == Command::Transport && self.transport.is_none() {
            return Err(Self::missing("transport", command));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<XiModel> {
        let spec = self.model.as_ref().ok_or_else(|| Error::Config("missing key `model`".into()))?;
        XiModel::from_spec(spec)
    }

    pub fn path(&self) -> Result<RampStepPath> {
        self.q.as_ref().ok_or_else(|| Error::Config("missing key `q`".into()))?.build()
    }

    /// The configured law, or the default for the dimension of `q` or the model.
    pub fn law(&self) -> Result<SpinLaw> {
        if let Some(l) = &self.law {
            // deserialized laws skip the constructor checks
            return SpinLaw::new(l.atoms().to_vec(), l.weights().to_vec());
        }
        let dim = match (&self.q, &self.model) {
            (Some(q), _) => q.values.first().map(|v| v.dim()).unwrap_or(1),
            (None, Some(m)) => m.dim,
            (None, None) => 1,
        };
        SpinLaw::default_for(dim)
    }
}
