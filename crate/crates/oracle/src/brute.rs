use taskalloc_core::Scenario;

use crate::{check_load, proportional_start, OracleConfig, OracleError, Result};

/// Grid enumeration grows as `(1/step)^(n-1)`; larger scenarios are refused.
pub const MAX_BRUTE_FORCE_SERVERS: usize = 4;

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const CAP_MARGIN: f64 = 1e-12;

/// Mean latency `sum p_i l_i(p_i load)` evaluated directly from the models.
pub fn mean_latency(sc: &Scenario, p: &[f64], load: f64) -> Result<f64> {
    let mut total = 0.0;
    for (s, &pi) in sc.servers().iter().zip(p) {
        if pi > 0.0 {
            total += pi * s.latency(pi * load)?;
        }
    }
    Ok(total)
}

fn objective(sc: &Scenario, p: &[f64], load: f64) -> Option<f64> {
    mean_latency(sc, p, load).ok().filter(|u| u.is_finite())
}

/// Minimizer of the mean latency found by exhaustive search over the simplex
/// grid with spacing `cfg.grid_step`, then polished by exact line searches
/// along pairwise transfer directions until no pair improves.
pub fn brute_force_optimal(sc: &Scenario, load: f64, cfg: &OracleConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_load(sc, load)?;
    let n = sc.len();
    if n > MAX_BRUTE_FORCE_SERVERS {
        return Err(OracleError::TooManyServers {
            n,
            max: MAX_BRUTE_FORCE_SERVERS,
        });
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }

    let mut best_p = proportional_start(sc);
    let mut best_u = objective(sc, &best_p, load).unwrap_or(f64::INFINITY);

    let steps = (1.0 / cfg.grid_step).round().max(1.0) as usize;
    let mut counts = vec![0usize; n];
    let mut p = vec![0.0; n];
    enumerate(&mut counts, 0, steps, &mut |k| {
        for (pi, &ki) in p.iter_mut().zip(k) {
            *pi = ki as f64 / steps as f64;
        }
        if let Some(u) = objective(sc, &p, load) {
            if u < best_u {
                best_u = u;
                best_p.copy_from_slice(&p);
            }
        }
    });

    refine(sc, load, &mut best_p, cfg.max_iters);
    Ok(best_p)
}

// Lexicographic walk over nonnegative integer vectors summing to `left`,
// so ties resolve to the lexicographically smallest grid point.
fn enumerate<F: FnMut(&[usize])>(k: &mut Vec<usize>, i: usize, left: usize, visit: &mut F) {
    if i + 1 == k.len() {
        k[i] = left;
        visit(k);
        return;
    }
    for ki in 0..=left {
        k[i] = ki;
        enumerate(k, i + 1, left - ki, visit);
    }
}

fn refine(sc: &Scenario, load: f64, p: &mut [f64], max_passes: usize) {
    let n = p.len();
    let Some(mut u) = objective(sc, p, load) else {
        return;
    };
    for _ in 0..max_passes {
        let before = u;
        for i in 0..n {
            for j in (i + 1)..n {
                line_search(sc, load, p, i, j);
            }
        }
        u = objective(sc, p, load).unwrap_or(before);
        if before - u <= 1e-15 * before {
            break;
        }
    }
}

// Moves mass `t` from server j to server i, choosing `t` to minimize the
// two-server part of the objective (convex in `t`).
fn line_search(sc: &Scenario, load: f64, p: &mut [f64], i: usize, j: usize) {
    let (si, sj) = (&sc.servers()[i], &sc.servers()[j]);
    let (pi, pj) = (p[i], p[j]);
    let lo = (-pi).max(pj - sj.mu() * (1.0 - CAP_MARGIN) / load);
    let hi = pj.min(si.mu() * (1.0 - CAP_MARGIN) / load - pi);
    if !(lo < hi) {
        return;
    }
    let part = |t: f64| {
        let a = (pi + t).max(0.0);
        let b = (pj - t).max(0.0);
        let la = if a > 0.0 {
            a * si.latency(a * load).unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        let lb = if b > 0.0 {
            b * sj.latency(b * load).unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        la + lb
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (part(c), part(d));
    for _ in 0..200 {
        if b - a <= 1e-16 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = part(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = part(d);
        }
    }

    let mut best_t = 0.0;
    let mut best = part(0.0);
    for t in [lo, hi, c, d] {
        let v = part(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    if best_t != 0.0 {
        p[i] = (pi + best_t).max(0.0);
        p[j] = (pj - best_t).max(0.0);
    }
}
