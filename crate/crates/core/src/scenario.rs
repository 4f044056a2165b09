use crate::error::{Error, Result};
use crate::latency::{NumericConfig, ServerSpec};

/// An ordered set of servers plus the numeric configuration used to solve it.
///
/// Servers keep the caller's order; solvers sort internally and report results
/// in input order.
#[derive(Debug, Clone)]
pub struct Scenario {
    servers: Vec<ServerSpec>,
    config: NumericConfig,
}

impl Scenario {
    pub fn new(servers: Vec<ServerSpec>, config: NumericConfig) -> Result<Self> {
        if servers.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one server is required".into(),
            ));
        }
        config.validate()?;
        Ok(Self { servers, config })
    }

    /// Scenario with the default numeric configuration.
    pub fn with_servers(servers: Vec<ServerSpec>) -> Result<Self> {
        Self::new(servers, NumericConfig::default())
    }

    pub fn servers(&self) -> &[ServerSpec] {
        &self.servers
    }

    pub fn config(&self) -> &NumericConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }

    /// Total service capacity `sum mu_j`, jobs/second.
    pub fn capacity(&self) -> f64 {
        self.servers.iter().map(ServerSpec::mu).sum()
    }

    /// Largest load the solvers accept, `(1 - eps_sat) sum mu_j`.
    pub fn max_load(&self) -> f64 {
        (1.0 - self.config.eps_sat) * self.capacity()
    }

    pub(crate) fn check_load(&self, load: f64) -> Result<()> {
        let max_load = self.max_load();
        if load > 0.0 && load <= max_load {
            Ok(())
        } else {
            Err(Error::InfeasibleLoad { load, max_load })
        }
    }

    /// Copy with the servers replaced, keeping the numeric configuration.
    pub fn map_servers<F>(&self, f: F) -> Result<Self>
    where
        F: FnMut(&ServerSpec) -> Result<ServerSpec>,
    {
        let servers = self.servers.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(servers, self.config)
    }
}
