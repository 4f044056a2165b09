//! TOML scenario files.
//!
//! ```toml
//! format = 1
//! name = "three servers"
//!
//! [solver]
//! resolution = 1e-12
//! eps_sat = 1e-9
//!
//! [[servers]]
//! d_ms = 40.0
//! mu = 15.0
//! model = "mm1"
//!
//! [[servers]]
//! d_ms = 30.0
//! mu = 9.0
//! model = "mg1"
//! cv = 3.0
//!
//! [sweep]
//! points = 400
//! rho_min = 0.01
//! rho_max = 0.999
//!
//! [simulation]
//! jobs = 200000
//! warmup = 0.2
//! seed = 1
//! replications = 5
//! ```
//!
//! Delays are in milliseconds, rates in jobs/second. `cv` defaults to 1 and
//! may only be given for `mg1` servers, or with its implied value (1 for
//! `mm1`, 0 for `md1`).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use taskalloc_core::{Horizon, NumericConfig, QueueModel, Scenario, ServerSpec, SimulationConfig};

use crate::error::{CliError, Result};

/// Current value of the top-level `format` key.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub solver: SolverSection,
    pub servers: Vec<ServerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub resolution: f64,
    pub eps_sat: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let cfg = NumericConfig::default();
        Self {
            resolution: cfg.resolution,
            eps_sat: cfg.eps_sat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Mm1,
    Mg1,
    Md1,
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelName::Mm1 => "mm1",
            ModelName::Mg1 => "mg1",
            ModelName::Md1 => "md1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    pub d_ms: f64,
    pub mu: f64,
    pub model: ModelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub points: usize,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            points: 400,
            rho_min: 0.01,
            rho_max: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Jobs generated per replication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<u64>,
    /// Simulated seconds per replication; exclusive with `jobs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl SimulationSection {
    /// Simulation settings for routing vector `p` at `load`, with defaults
    /// filled in for keys the file leaves out.
    pub fn config(&self, load: f64, p: Vec<f64>) -> Result<SimulationConfig> {
        let mut cfg = SimulationConfig::new(load, p);
        match (self.jobs, self.seconds) {
            (Some(_), Some(_)) => {
                return Err(CliError::Invalid(
                    "simulation: give either `jobs` or `seconds`, not both".into(),
                ))
            }
            (Some(jobs), None) => cfg.horizon = Horizon::Jobs(jobs),
            (None, Some(t)) => cfg.horizon = Horizon::Time(t),
            (None, None) => {}
        }
        if let Some(w) = self.warmup {
            cfg.warmup = w;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        if let Some(c) = self.confidence {
            cfg.confidence = c;
        }
        Ok(cfg)
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_column(text, span.start))
                .unwrap_or((0, 0));
            CliError::Syntax {
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        if file.format != FORMAT_VERSION {
            return Err(CliError::Invalid(format!(
                "unsupported format {} (this tool reads format {FORMAT_VERSION})",
                file.format
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn numeric_config(&self) -> NumericConfig {
        NumericConfig {
            resolution: self.solver.resolution,
            eps_sat: self.solver.eps_sat,
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let servers = self
            .servers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.to_spec()
                    .map_err(|e| CliError::Invalid(format!("servers[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario::new(servers, self.numeric_config())?)
    }

    /// File describing `sc`. Generic latency models have no file form.
    pub fn from_scenario(sc: &Scenario) -> Result<Self> {
        let servers = sc
            .servers()
            .iter()
            .map(ServerEntry::from_spec)
            .collect::<Result<Vec<_>>>()?;
        let cfg = sc.config();
        Ok(Self {
            format: FORMAT_VERSION,
            name: None,
            solver: SolverSection {
                resolution: cfg.resolution,
                eps_sat: cfg.eps_sat,
            },
            servers,
            sweep: None,
            simulation: None,
        })
    }
}

impl ServerEntry {
    pub fn to_spec(&self) -> Result<ServerSpec, String> {
        let d = self.d_ms / 1000.0;
        let spec = match (self.model, self.cv) {
            (ModelName::Mm1, None) => ServerSpec::mm1(d, self.mu),
            (ModelName::Mm1, Some(1.0)) => ServerSpec::mm1(d, self.mu),
            (ModelName::Md1, None) => ServerSpec::md1(d, self.mu),
            (ModelName::Md1, Some(0.0)) => ServerSpec::md1(d, self.mu),
            (ModelName::Mg1, cv) => ServerSpec::mg1(d, self.mu, cv.unwrap_or(1.0)),
            (model, Some(cv)) => {
                return Err(format!(
                    "cv = {cv} contradicts model {model}; use model = \"mg1\""
                ))
            }
        };
        spec.map_err(|e| e.to_string())
    }

    pub fn from_spec(s: &ServerSpec) -> Result<Self> {
        let (model, cv) = match s.model() {
            QueueModel::MM1 => (ModelName::Mm1, None),
            QueueModel::MD1 => (ModelName::Md1, None),
            QueueModel::MG1 => (ModelName::Mg1, Some(s.cv())),
            QueueModel::Generic => {
                return Err(CliError::Invalid(
                    "generic latency models cannot be written to a scenario file".into(),
                ))
            }
        };
        Ok(Self {
            d_ms: ms_from_seconds(s.delay()),
            mu: s.mu(),
            model,
            cv,
        })
    }
}

// Millisecond value that converts back to exactly `d` seconds when one exists
// within a few ulps of `1000 d`.
fn ms_from_seconds(d: f64) -> f64 {
    let guess = d * 1000.0;
    let (mut up, mut down) = (guess, guess);
    for _ in 0..8 {
        if up / 1000.0 == d {
            return up;
        }
        if down / 1000.0 == d {
            return down;
        }
        up = up.next_up();
        down = down.next_down();
    }
    guess
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |nl| before.len() - nl - 1)
        + 1;
    (line, column)
}
