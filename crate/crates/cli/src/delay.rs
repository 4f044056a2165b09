//! Delay-mode variants of a scenario.
//!
//! The solvers never see a mode: each mode is a pair of scenarios, one the
//! allocation is computed on and one its latency is evaluated on.

use std::fmt;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use taskalloc_core::{
    activation_thresholds, average_latency, poa_at, solve, AllocationKind, AllocationResult,
    PoaPoint, Scenario, ThresholdTable,
};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DelayMode {
    /// Fixed delays everywhere.
    #[default]
    WithDelays,
    /// Allocate as if delays were zero, evaluate with the true delays.
    IgnoringDelays,
    /// Zero delays everywhere.
    WithoutDelays,
    /// Every delay replaced by the mean delay.
    UniformDelays,
}

impl fmt::Display for DelayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DelayMode::WithDelays => "with_delays",
            DelayMode::IgnoringDelays => "ignoring_delays",
            DelayMode::WithoutDelays => "without_delays",
            DelayMode::UniformDelays => "uniform_delays",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ModeScenarios {
    /// Scenario the allocations are computed on.
    pub solve: Scenario,
    /// Scenario the resulting latencies are evaluated on.
    pub evaluate: Scenario,
}

impl ModeScenarios {
    pub fn is_consistent(&self) -> bool {
        self.solve
            .servers()
            .iter()
            .zip(self.evaluate.servers())
            .all(|(a, b)| a.delay() == b.delay())
    }
}

impl DelayMode {
    pub fn apply(self, sc: &Scenario) -> Result<ModeScenarios> {
        let zero = || sc.map_servers(|s| s.with_delay(0.0));
        Ok(match self {
            DelayMode::WithDelays => ModeScenarios {
                solve: sc.clone(),
                evaluate: sc.clone(),
            },
            DelayMode::IgnoringDelays => ModeScenarios {
                solve: zero()?,
                evaluate: sc.clone(),
            },
            DelayMode::WithoutDelays => {
                let z = zero()?;
                ModeScenarios {
                    solve: z.clone(),
                    evaluate: z,
                }
            }
            DelayMode::UniformDelays => {
                let mean = sc.servers().iter().map(|s| s.delay()).sum::<f64>() / sc.len() as f64;
                let u = sc.map_servers(|s| s.with_delay(mean))?;
                ModeScenarios {
                    solve: u.clone(),
                    evaluate: u,
                }
            }
        })
    }
}

/// Allocation under a delay mode, with its latency on the evaluation scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeAllocation {
    pub mode: DelayMode,
    pub allocation: AllocationResult,
    /// Mean latency of `allocation.p` with the evaluation scenario's delays.
    pub evaluated_latency: f64,
}

pub fn solve_in_mode(
    sc: &Scenario,
    load: f64,
    kind: AllocationKind,
    mode: DelayMode,
) -> Result<ModeAllocation> {
    let view = mode.apply(sc)?;
    let allocation = solve(&view.solve, load, kind)?;
    let evaluated_latency = if view.is_consistent() {
        allocation.mean_latency
    } else {
        average_latency(&view.evaluate, &allocation.p, load)?
    };
    Ok(ModeAllocation {
        mode,
        allocation,
        evaluated_latency,
    })
}

/// One row of a sweep; also the CSV schema of `taskalloc sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub load: f64,
    pub rho: f64,
    pub u_opt: f64,
    pub alpha: f64,
    pub eta: f64,
    pub j_opt: usize,
    pub j_nep: usize,
}

impl From<PoaPoint> for SweepRow {
    fn from(p: PoaPoint) -> Self {
        Self {
            load: p.load,
            rho: p.rho,
            u_opt: p.u_opt,
            alpha: p.alpha,
            eta: p.eta,
            j_opt: p.j_opt,
            j_nep: p.j_nep,
        }
    }
}

/// Price of anarchy at `load` under `mode`. For `ignoring_delays` both
/// latencies are the evaluated ones, so `eta` compares what the two
/// allocations actually deliver.
pub fn poa_in_mode(sc: &Scenario, load: f64, mode: DelayMode) -> Result<SweepRow> {
    let view = mode.apply(sc)?;
    if view.is_consistent() {
        return Ok(poa_at(&view.solve, load)?.into());
    }
    let opt = solve(&view.solve, load, AllocationKind::Optimal)?;
    let nep = solve(&view.solve, load, AllocationKind::Nep)?;
    let u_opt = average_latency(&view.evaluate, &opt.p, load)?;
    let alpha = average_latency(&view.evaluate, &nep.p, load)?;
    Ok(SweepRow {
        load,
        rho: load / sc.capacity(),
        u_opt,
        alpha,
        eta: alpha / u_opt,
        j_opt: opt.active_count,
        j_nep: nep.active_count,
    })
}

pub fn sweep_in_mode(sc: &Scenario, loads: &[f64], mode: DelayMode) -> Result<Vec<SweepRow>> {
    let view = mode.apply(sc)?;
    if view.is_consistent() {
        let curve = taskalloc_core::poa_sweep(&view.solve, loads)?;
        return Ok(curve.points.into_iter().map(SweepRow::from).collect());
    }
    loads.iter().map(|&l| poa_in_mode(sc, l, mode)).collect()
}

pub fn thresholds_in_mode(
    sc: &Scenario,
    kind: AllocationKind,
    mode: DelayMode,
) -> Result<ThresholdTable> {
    Ok(activation_thresholds(&mode.apply(sc)?.solve, kind))
}
