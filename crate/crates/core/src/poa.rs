//! Price of anarchy: the ratio of the equilibrium mean latency to the optimal
//! mean latency, `eta(load) = alpha / U(p*)`.
//!
//! The curve is piecewise convex between consecutive equilibrium activation
//! loads, so its maximum over all loads is attained either at one of those
//! activation loads or in the full-load limit. [`worst_case_poa`] evaluates
//! exactly that finite candidate set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::solver::{activation_thresholds, solve_nep, solve_optimal, AllocationKind};

/// Fraction of capacity at which the full-load candidate is evaluated for
/// models without a closed-form limit.
pub const GENERIC_FULL_LOAD_RHO: f64 = 1.0 - 1e-6;

/// One point of the price-of-anarchy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoaPoint {
    /// Offered load, jobs/second.
    pub load: f64,
    /// Normalized load `load / sum mu`.
    pub rho: f64,
    /// Price of anarchy, `>= 1`.
    pub eta: f64,
    /// Equilibrium latency, seconds.
    pub alpha: f64,
    /// Optimal mean latency, seconds.
    pub u_opt: f64,
    /// Optimal marginal-cost multiplier, seconds.
    pub gamma: f64,
    /// Active servers at the optimum.
    pub j_opt: usize,
    /// Active servers at the equilibrium.
    pub j_nep: usize,
}

/// Price of anarchy over a load grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoaCurve {
    pub points: Vec<PoaPoint>,
}

impl PoaCurve {
    /// Point with the largest `eta`; first one on ties.
    pub fn peak(&self) -> Option<&PoaPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&PoaPoint>, p| match best {
                Some(b) if b.eta >= p.eta => Some(b),
                _ => Some(p),
            })
    }
}

/// Where a worst-case candidate sits on the load axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum CandidateLocation {
    /// Equilibrium activation of a server. `rank` is its 1-based position in
    /// activation order, `server` its input index.
    NepActivation { rank: usize, server: usize },
    /// The limit `rho -> 1`.
    FullLoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoaCandidate {
    pub location: CandidateLocation,
    /// Load at which `eta` was evaluated; `None` when the value is a
    /// closed-form limit.
    pub load: Option<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub max: PoaCandidate,
    pub candidates: Vec<PoaCandidate>,
}

/// Price of anarchy at a single load.
pub fn poa_at(sc: &Scenario, load: f64) -> Result<PoaPoint> {
    let opt = solve_optimal(sc, load)?;
    let nep = solve_nep(sc, load)?;
    Ok(PoaPoint {
        load,
        rho: load / sc.capacity(),
        eta: nep.multiplier / opt.mean_latency,
        alpha: nep.multiplier,
        u_opt: opt.mean_latency,
        gamma: opt.multiplier,
        j_opt: opt.active_count,
        j_nep: nep.active_count,
    })
}

/// Price of anarchy at every load of a strictly increasing grid.
///
/// Points are evaluated in parallel and returned in grid order; the result is
/// identical to a serial evaluation.
pub fn poa_sweep(sc: &Scenario, grid: &[f64]) -> Result<PoaCurve> {
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig(format!(
            "load grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    let points = grid
        .par_iter()
        .map(|&load| poa_at(sc, load))
        .collect::<Result<Vec<_>>>()?;
    Ok(PoaCurve { points })
}

/// `points` normalized loads over `[rho_min, rho_max]`, spaced uniformly in
/// `log(1 - rho)` so the grid densifies towards saturation. Increasing.
pub fn rho_grid(points: usize, rho_min: f64, rho_max: f64) -> Result<Vec<f64>> {
    if !(0.0 < rho_min && rho_min < rho_max && rho_max < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rho range must satisfy 0 < rho_min < rho_max < 1, got [{rho_min}, {rho_max}]"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidConfig(
            "a grid needs at least two points".into(),
        ));
    }
    let a = (1.0 - rho_min).ln();
    let b = (1.0 - rho_max).ln();
    let mut grid: Vec<f64> = (0..points)
        .map(|i| 1.0 - (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect();
    grid[0] = rho_min;
    grid[points - 1] = rho_max;
    Ok(grid)
}

/// The default sweep: 400 loads over `rho in [0.01, 0.999]`.
pub fn default_grid(sc: &Scenario) -> Vec<f64> {
    let capacity = sc.capacity();
    rho_grid(400, 0.01, 0.999)
        .expect("default grid parameters are valid")
        .into_iter()
        .map(|rho| rho * capacity)
        .collect()
}

/// Maximum price of anarchy over all feasible loads.
///
/// Evaluates `eta` at every positive equilibrium activation load and at the
/// full-load limit (closed form when every server has one, otherwise at
/// `rho = 1 - 1e-6`).
pub fn worst_case_poa(sc: &Scenario) -> Result<WorstCase> {
    let table = activation_thresholds(sc, AllocationKind::Nep);
    let max_load = sc.max_load();
    let mut candidates = Vec::with_capacity(sc.len());
    for (j, (&server, &load)) in table.order.iter().zip(&table.loads).enumerate().skip(1) {
        if load > 0.0 && load <= max_load {
            candidates.push(PoaCandidate {
                location: CandidateLocation::NepActivation {
                    rank: j + 1,
                    server,
                },
                load: Some(load),
                eta: poa_at(sc, load)?.eta,
            });
        }
    }
    let limit = match asymptotic_poa(sc) {
        Ok(eta) => PoaCandidate {
            location: CandidateLocation::FullLoad,
            load: None,
            eta,
        },
        Err(Error::UnsupportedModel(_)) => {
            let load = (GENERIC_FULL_LOAD_RHO * sc.capacity()).min(max_load);
            PoaCandidate {
                location: CandidateLocation::FullLoad,
                load: Some(load),
                eta: poa_at(sc, load)?.eta,
            }
        }
        Err(e) => return Err(e),
    };
    candidates.push(limit);
    let max = *candidates
        .iter()
        .fold(None, |best: Option<&PoaCandidate>, c| match best {
            Some(b) if b.eta >= c.eta => Some(b),
            _ => Some(c),
        })
        .expect("candidate set contains the full-load limit");
    Ok(WorstCase { max, candidates })
}

/// Limit of the price of anarchy as the load approaches total capacity.
///
/// With `k_j = (1 + C_j^2)/2` the limit is
/// `sum k_j * sum mu_j / (sum sqrt(mu_j k_j))^2`, which reduces to
/// `n sum mu_j / (sum sqrt(mu_j))^2` for M/M/1 servers. Fixed delays vanish
/// from the limit because latencies diverge. Generic models have no closed
/// form.
pub fn asymptotic_poa(sc: &Scenario) -> Result<f64> {
    let mut sum_k = 0.0;
    let mut sum_mu = 0.0;
    let mut sum_root = 0.0;
    for s in sc.servers() {
        let k = s.variability_factor().ok_or_else(|| {
            Error::UnsupportedModel(
                "no closed-form full-load limit for generic latency models".into(),
            )
        })?;
        sum_k += k;
        sum_mu += s.mu();
        sum_root += (s.mu() * k).sqrt();
    }
    Ok(sum_k * sum_mu / (sum_root * sum_root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::ServerSpec;
    use approx::assert_relative_eq;

    fn mm1(pairs: &[(f64, f64)]) -> Scenario {
        Scenario::with_servers(
            pairs
                .iter()
                .map(|&(d, mu)| ServerSpec::mm1(d, mu).unwrap())
                .collect(),
        )
        .unwrap()
    }

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn poa_two_servers() {
        let sc = mm1(&[(0.0, 2.0), (0.0, 1.0)]);
        let pt = poa_at(&sc, 1.0).unwrap();
        assert_relative_eq!(pt.eta, 2.0 / (2.0 * SQRT2 - 1.0), max_relative = 1e-12);
        assert_eq!((pt.j_opt, pt.j_nep), (2, 1));
        // Below the second optimal threshold (2 - sqrt 2) nothing differs.
        assert_eq!(poa_at(&sc, 0.5).unwrap().eta, 1.0);
    }

    #[test]
    fn identical_servers_have_no_anarchy_cost() {
        let sc = mm1(&[(0.01, 4.0), (0.01, 4.0), (0.01, 4.0)]);
        for load in [0.5, 3.0, 11.9] {
            assert_relative_eq!(poa_at(&sc, load).unwrap().eta, 1.0, max_relative = 1e-12);
        }
        assert_relative_eq!(asymptotic_poa(&sc).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn sweep_examples() {
        let single = mm1(&[(0.02, 10.0)]);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.99).collect();
        let curve = poa_sweep(&single, &grid).unwrap();
        assert_eq!(curve.points.len(), 10);
        assert!(curve.points.iter().all(|p| p.eta == 1.0));

        let sc = mm1(&[(0.0, 2.0), (0.0, 1.0)]);
        let curve = poa_sweep(&sc, &[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(curve.points[0].eta, 1.0);
        assert_relative_eq!(
            curve.points[1].eta,
            2.0 / (2.0 * SQRT2 - 1.0),
            max_relative = 1e-12
        );
        assert!(curve.points[2].eta > 1.0);

        assert!(poa_sweep(&sc, &[1.0, 1.0]).is_err());
        assert!(poa_sweep(&sc, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn worst_case_two_servers() {
        let sc = mm1(&[(0.0, 2.0), (0.0, 1.0)]);
        let wc = worst_case_poa(&sc).unwrap();
        assert_eq!(wc.candidates.len(), 2);
        assert_eq!(wc.max.load, Some(1.0));
        assert_relative_eq!(wc.max.eta, 2.0 / (2.0 * SQRT2 - 1.0), max_relative = 1e-12);
        let limit = wc.candidates[1];
        assert_eq!(limit.location, CandidateLocation::FullLoad);
        assert_relative_eq!(limit.eta, 6.0 / (1.0 + SQRT2).powi(2), max_relative = 1e-14);
    }

    #[test]
    fn worst_case_single_server() {
        let wc = worst_case_poa(&mm1(&[(0.05, 3.0)])).unwrap();
        assert_eq!(wc.candidates.len(), 1);
        assert_relative_eq!(wc.max.eta, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn asymptotic_examples() {
        let s1 = mm1(&[(0.040, 15.0), (0.030, 9.0), (0.150, 20.0)]);
        let expected = 3.0 * 44.0 / (15f64.sqrt() + 3.0 + 20f64.sqrt()).powi(2);
        assert_relative_eq!(asymptotic_poa(&s1).unwrap(), expected, max_relative = 1e-15);
        assert!((expected - 1.02556).abs() < 5e-5);

        let mg = Scenario::with_servers(vec![
            ServerSpec::mg1(0.040, 15.0, 1.0).unwrap(),
            ServerSpec::mg1(0.030, 9.0, 1.0).unwrap(),
            ServerSpec::mg1(0.150, 20.0, 1.0).unwrap(),
        ])
        .unwrap();
        assert_relative_eq!(asymptotic_poa(&mg).unwrap(), expected, max_relative = 1e-15);
    }

    #[test]
    fn asymptotic_mg1_zero_cv_matches_md1() {
        let md = Scenario::with_servers(vec![
            ServerSpec::md1(0.0, 4.0).unwrap(),
            ServerSpec::md1(0.1, 9.0).unwrap(),
        ])
        .unwrap();
        let mg = Scenario::with_servers(vec![
            ServerSpec::mg1(0.0, 4.0, 0.0).unwrap(),
            ServerSpec::mg1(0.1, 9.0, 0.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(asymptotic_poa(&md).unwrap(), asymptotic_poa(&mg).unwrap());
    }

    #[test]
    fn asymptotic_rejects_generic() {
        let g = crate::latency::GenericLatencyModel::new(
            |x| 1.0 + 1.0 / (1.0 - x),
            |x| 1.0 / ((1.0 - x) * (1.0 - x)),
        );
        let sc = Scenario::with_servers(vec![ServerSpec::generic(1.0, 1.0, g).unwrap()]).unwrap();
        assert!(matches!(
            asymptotic_poa(&sc),
            Err(Error::UnsupportedModel(_))
        ));
        let wc = worst_case_poa(&sc).unwrap();
        assert!(wc.max.load.is_some());
    }

    #[test]
    fn grid_shape() {
        let g = rho_grid(400, 0.01, 0.999).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[399], 0.999);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(rho_grid(10, 0.5, 0.4).is_err());
        assert!(rho_grid(1, 0.1, 0.4).is_err());
    }

    #[test]
    fn asymptotic_agrees_near_saturation() {
        let sc = mm1(&[(0.040, 15.0), (0.030, 9.0), (0.150, 20.0)]);
        let eta = poa_at(&sc, (1.0 - 1e-4) * sc.capacity()).unwrap().eta;
        let lim = asymptotic_poa(&sc).unwrap();
        assert!((eta - lim).abs() / lim < 0.01, "{eta} vs {lim}");
    }
}
