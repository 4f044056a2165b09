"""Smoke test for the taskalloc Python module.

Build and install first, e.g.
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/taskalloc-*.whl
"""

import math
import pathlib

import taskalloc as ta

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    two = ta.Scenario([ta.Server.mm1(0.0, 2.0), ta.Server.mm1(0.0, 1.0)])
    assert len(two) == 2 and two.capacity == 3.0

    opt = ta.solve(two, 1.0)
    assert close(opt.p[0], 2 * math.sqrt(2) - 2), opt
    assert close(opt.mean_latency, (2 * math.sqrt(2) - 1) / 2), opt

    nep = ta.solve(two, 1.5, kind="nep")
    assert close(nep.p[0], 5 / 6) and close(nep.mean_latency, 4 / 3), nep

    order, loads = ta.thresholds(two, "nep")
    assert order == [0, 1] and loads == [0.0, 1.0]

    eta_max, candidates = ta.worst_case(two)
    assert abs(eta_max - 1.09384) < 1e-5, candidates
    assert close(ta.asymptotic_poa(two), 6 / (1 + math.sqrt(2)) ** 2)

    s1 = ta.Scenario.from_file(str(ROOT / "scenarios" / "scenario1.toml"))
    curve = ta.poa_sweep(s1)
    assert len(curve) == 400 and all(pt.eta >= 1.0 - 1e-12 for pt in curve)
    assert ta.Scenario.from_file(str(ROOT / "scenarios" / "scenario1.toml")).to_toml() == s1.to_toml()

    server = ta.Server.mg1(0.01, 10.0, 1.0)
    assert close(server.invert_latency(server.latency(4.0)), 4.0)

    mean, half_width, per_server = ta.simulate(two, 1.0, opt.p, jobs=50_000, replications=3, seed=5)
    assert abs(mean - opt.mean_latency) / opt.mean_latency < 0.05, (mean, half_width)
    assert len(per_server) == 2

    analytic, empirical, gap, passed = ta.validate(two, 1.5, "nep", jobs=50_000, replications=3)
    assert passed, (analytic, empirical, gap)

    try:
        ta.solve(two, 5.0)
    except ta.InfeasibleLoadError:
        pass
    else:
        raise AssertionError("overload accepted")
    try:
        ta.Server.mm1(0.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative rate accepted")

    print("taskalloc smoke test passed")


if __name__ == "__main__":
    main()
