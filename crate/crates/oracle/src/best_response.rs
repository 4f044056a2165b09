use taskalloc_core::Scenario;

use crate::{check_load, proportional_start, OracleConfig, OracleError, Result};

/// Deviation size used by [`check_no_profitable_deviation`], as a fraction of the load.
pub const DEFAULT_DEVIATION: f64 = 1e-6;

const CAP_MARGIN: f64 = 1e-12;

/// Equilibrium found by damped best-response dynamics.
///
/// Starting from `p` proportional to `mu`, each iteration takes the active
/// server with the highest latency and the server with the lowest latency,
/// finds the transfer that would equalize the two, and moves half of it.
/// When the slow server cannot be equalized even after giving up all of its
/// traffic, the whole share moves at once. Stops when the latency spread over
/// active servers, relative to the largest, is at most `cfg.br_tolerance`.
pub fn best_response_nep(sc: &Scenario, load: f64, cfg: &OracleConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_load(sc, load)?;
    let servers = sc.servers();
    let n = servers.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }

    let mut p = proportional_start(sc);
    let mut lat = vec![0.0; n];
    let mut spread = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        for i in 0..n {
            lat[i] = servers[i].latency(p[i] * load)?;
        }
        let a = (0..n)
            .filter(|&i| p[i] > 0.0)
            .max_by(|&i, &j| lat[i].total_cmp(&lat[j]))
            .expect("some server carries traffic");
        let b = (0..n)
            .min_by(|&i, &j| lat[i].total_cmp(&lat[j]))
            .expect("scenario is non-empty");
        spread = lat[a] - lat[b];
        if spread <= cfg.br_tolerance * lat[a] {
            return Ok(p);
        }

        let (sa, sb) = (&servers[a], &servers[b]);
        let (pa, pb) = (p[a], p[b]);
        let t_max = pa.min(sb.mu() * (1.0 - CAP_MARGIN) / load - pb);
        let gap = |t: f64| -> f64 {
            let la = sa
                .latency((pa - t).max(0.0) * load)
                .unwrap_or(f64::INFINITY);
            let lb = sb.latency((pb + t) * load).unwrap_or(f64::INFINITY);
            la - lb
        };

        let t = if gap(t_max) >= 0.0 {
            if t_max == pa {
                pa
            } else {
                0.5 * t_max
            }
        } else {
            0.5 * equalizing_transfer(gap, t_max)
        };
        p[a] = if t == pa { 0.0 } else { pa - t };
        p[b] = pb + t;
    }
    Err(OracleError::NoConvergence {
        iters: cfg.max_iters,
        spread,
    })
}

// Root of the decreasing `gap` on (0, hi), given gap(0) > 0 > gap(hi).
fn equalizing_transfer<F: Fn(f64) -> f64>(gap: F, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// True when no small block of traffic can lower its latency by switching
/// server. For every server `a` carrying traffic and every other server `b`,
/// moving `delta * load` jobs/second to `b` must not leave that traffic with a
/// latency below `l_a` by more than the relative tolerance `cfg.br_tolerance`.
pub fn check_no_profitable_deviation(
    sc: &Scenario,
    load: f64,
    p: &[f64],
    delta: f64,
    cfg: &OracleConfig,
) -> bool {
    let servers = sc.servers();
    let moved = delta * load;
    for (a, sa) in servers.iter().enumerate() {
        if p[a] <= 0.0 {
            continue;
        }
        let current = sa.latency(p[a] * load).unwrap_or(f64::INFINITY);
        for (b, sb) in servers.iter().enumerate() {
            if b == a {
                continue;
            }
            let Ok(after) = sb.latency(p[b] * load + moved) else {
                continue;
            };
            if after < current * (1.0 - cfg.br_tolerance) {
                return false;
            }
        }
    }
    true
}
