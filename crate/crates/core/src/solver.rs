//! Social optimum and Nash equilibrium of the task allocation game.
//!
//! Both solutions follow the same four steps. Servers are sorted by zero-load
//! latency `d + 1/mu`; activation thresholds are computed for every server;
//! the offered load is compared against them to find the active set; finally a
//! single multiplier is found by bisection so that the per-server rates add up
//! to the offered load.
//!
//! At the optimum every active server runs at the rate where its marginal cost
//! `h` equals the multiplier `gamma`. At the equilibrium every active server
//! runs where its latency `l` equals the common latency `alpha`.

use serde::{Deserialize, Serialize};

use crate::bisect::bisect_increasing;
use crate::error::{Error, Result};
use crate::latency::Curve;
use crate::scenario::Scenario;

/// Which allocation to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationKind {
    /// Minimizes the system-wide mean latency.
    Optimal,
    /// Selfish equilibrium: equal latency on every used server.
    Nep,
}

impl AllocationKind {
    fn curve(self) -> Curve {
        match self {
            AllocationKind::Optimal => Curve::Marginal,
            AllocationKind::Nep => Curve::Latency,
        }
    }
}

impl std::fmt::Display for AllocationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AllocationKind::Optimal => "optimal",
            AllocationKind::Nep => "nep",
        })
    }
}

/// A solved allocation, reported in the caller's server order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub kind: AllocationKind,
    /// Offered load the allocation was computed for, jobs/second.
    pub load: f64,
    /// Routing probability per server, input order.
    pub p: Vec<f64>,
    /// `gamma` (equalized marginal cost) for the optimum, `alpha` (equalized
    /// latency) for the equilibrium. Seconds.
    pub multiplier: f64,
    /// Number of servers receiving traffic; always a prefix of `order`.
    pub active_count: usize,
    /// System mean latency `U(p) = sum p_i l_i(p_i load)`, seconds.
    pub mean_latency: f64,
    /// Server indices sorted by zero-load latency.
    pub order: Vec<usize>,
}

/// Activation load of every server, indexed in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub kind: AllocationKind,
    /// Input indices in activation order.
    pub order: Vec<usize>,
    /// `loads[j]` is the activation load of server `order[j]`, jobs/second.
    pub loads: Vec<f64>,
}

impl ThresholdTable {
    /// Activation load of the server at input index `server`.
    pub fn for_server(&self, server: usize) -> Option<f64> {
        self.order
            .iter()
            .position(|&i| i == server)
            .map(|j| self.loads[j])
    }

    /// Number of servers active at `load`. A server becomes active only once
    /// the load strictly exceeds its threshold.
    pub fn active_count(&self, load: f64) -> usize {
        self.loads.iter().filter(|&&t| t < load).count()
    }
}

/// Server indices sorted by ascending zero-load latency `d + 1/mu`. Stable.
pub fn sort_servers(sc: &Scenario) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sc.len()).collect();
    let servers = sc.servers();
    order.sort_by(|&a, &b| {
        servers[a]
            .zero_load_latency()
            .total_cmp(&servers[b].zero_load_latency())
    });
    order
}

/// Loads at which each server starts receiving traffic.
///
/// Server `j` activates when the multiplier reaches its zero-load latency, so
/// its threshold is the total rate the servers before it absorb at that
/// level: `sum_{i<j} h_i^{-1}(l_j(0))` for the optimum and
/// `sum_{i<j} l_i^{-1}(l_j(0))` for the equilibrium. Servers tied with an
/// earlier one on zero-load latency share its activation load.
pub fn activation_thresholds(sc: &Scenario, kind: AllocationKind) -> ThresholdTable {
    let order = sort_servers(sc);
    let loads = thresholds_sorted(sc, &order, kind);
    ThresholdTable { kind, order, loads }
}

fn thresholds_sorted(sc: &Scenario, order: &[usize], kind: AllocationKind) -> Vec<f64> {
    let servers = sc.servers();
    let cfg = sc.config();
    let curve = kind.curve();
    order
        .iter()
        .enumerate()
        .map(|(j, &sj)| {
            let level = servers[sj].zero_load_latency();
            order[..j].iter().fold(0.0, |acc, &si| {
                acc + servers[si].response(level, cfg, curve)
            })
        })
        .collect()
}

/// Allocation minimizing the mean latency at offered load `load`.
pub fn solve_optimal(sc: &Scenario, load: f64) -> Result<AllocationResult> {
    solve(sc, load, AllocationKind::Optimal)
}

/// Nash equilibrium allocation at offered load `load`.
pub fn solve_nep(sc: &Scenario, load: f64) -> Result<AllocationResult> {
    solve(sc, load, AllocationKind::Nep)
}

/// Solves for either allocation kind.
pub fn solve(sc: &Scenario, load: f64, kind: AllocationKind) -> Result<AllocationResult> {
    sc.check_load(load)?;
    let servers = sc.servers();
    let cfg = sc.config();
    let curve = kind.curve();
    let n = sc.len();

    let order = sort_servers(sc);
    let thresholds = thresholds_sorted(sc, &order, kind);
    let active = thresholds.iter().filter(|&&t| t < load).count();
    let active_set = &order[..active];

    let mut p = vec![0.0; n];
    let multiplier;
    if active == 1 {
        let s = &servers[order[0]];
        if load > s.capacity_bound(cfg.eps_sat) {
            return Err(Error::InversionFailure(format!(
                "load {load} saturates the only active server before the next one activates"
            )));
        }
        p[order[0]] = 1.0;
        multiplier = match kind {
            AllocationKind::Optimal => s.marginal_unchecked(load),
            AllocationKind::Nep => s.latency_unchecked(load),
        };
    } else {
        let residual = |level: f64| -> f64 {
            active_set
                .iter()
                .map(|&i| servers[i].response(level, cfg, curve))
                .sum::<f64>()
                - load
        };
        let lo = servers[order[active - 1]].zero_load_latency();
        let hi = if active < n {
            servers[order[active]].zero_load_latency()
        } else {
            grow_upper_bracket(lo, &residual)?
        };
        if residual(lo) > 0.0 || residual(hi) < 0.0 {
            return Err(Error::InversionFailure(format!(
                "normalization residual does not change sign on [{lo}, {hi}]"
            )));
        }
        // Closed-form responses are resolved to full double precision; generic
        // ones carry bisection noise of order `resolution` in every term.
        multiplier = bisect_increasing(residual, lo, hi, 0.0);
        for &i in active_set {
            p[i] = servers[i].response(multiplier, cfg, curve) / load;
        }
    }

    let mean_latency = average_latency(sc, &p, load)?;
    Ok(AllocationResult {
        kind,
        load,
        p,
        multiplier,
        active_count: active,
        mean_latency,
        order,
    })
}

fn grow_upper_bracket<F: Fn(f64) -> f64>(lo: f64, residual: &F) -> Result<f64> {
    let mut step = lo.max(1e-6);
    for _ in 0..2000 {
        let hi = lo + step;
        if !hi.is_finite() {
            break;
        }
        if residual(hi) >= 0.0 {
            return Ok(hi);
        }
        step *= 2.0;
    }
    Err(Error::InversionFailure(
        "could not bracket the multiplier from above".into(),
    ))
}

/// System mean latency `U(p) = sum_i p_i l_i(p_i load)`.
///
/// Servers with `p_i = 0` contribute nothing; any server pushed to or beyond
/// its capacity is a domain error.
pub fn average_latency(sc: &Scenario, p: &[f64], load: f64) -> Result<f64> {
    if p.len() != sc.len() {
        return Err(Error::InvalidConfig(format!(
            "probability vector has {} entries for {} servers",
            p.len(),
            sc.len()
        )));
    }
    sc.servers()
        .iter()
        .zip(p)
        .filter(|(_, &pi)| pi != 0.0)
        .map(|(s, &pi)| Ok(pi * s.latency(pi * load)?))
        .sum()
}
