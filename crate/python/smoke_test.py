#!/usr/bin/env python3
"""Smoke test for the mtdcsim extension module.

Build the module first:

    cargo build -p mtdc-sim-py --release

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import os
import shutil
import sys
import tempfile


def load_module():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libmtdcsim.so", "mtdcsim.so", "libmtdcsim.dylib")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("mtdcsim library not found; run `cargo build -p mtdc-sim-py --release` first")
    stage = tempfile.mkdtemp(prefix="mtdcsim-")
    shutil.copy(built, os.path.join(stage, "mtdcsim.so"))
    sys.path.insert(0, stage)
    import mtdcsim

    return mtdcsim


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    m = load_module()
    checks = 0

    # four-terminal grid, five 3.7-ohm lines
    lines = [(0, 1, 3.7), (0, 2, 3.7), (1, 2, 3.7), (1, 3, 3.7), (2, 3, 3.7)]
    topo = m.GridTopology(4, lines, [0.01] * 4)
    lap = topo.laplacian()
    g = 1.0 / 3.7
    assert all(abs(sum(row)) < 1e-12 for row in lap), "Laplacian rows must sum to zero"
    assert close(lap[1][1], 3 * g) and close(lap[0][1], -g)
    checks += 1
    print("ok: laplacian stamps conductances with zero row sums")

    # Ohm's law on one line
    currents = topo.line_currents([105e3, 104.96e3, 104.9e3, 105.07e3])
    assert close(currents[0], 40.0 / 3.7)
    checks += 1
    print("ok: line currents follow Ohm's law")

    # sharing optimum: closed form vs KKT oracle
    mu, u_star = m.optimal_sharing([1.0, 2.0, 4.0], [7.0, 0.0, 0.0])
    assert close(mu, -4.0) and all(close(a, b) for a, b in zip(u_star, [-4.0, -2.0, -1.0]))
    path = m.GridTopology(3, [(0, 1, 1.0), (1, 2, 1.0)], [0.01] * 3)
    u_kkt = m.qp_oracle([1.0, 2.0, 4.0], [7.0, 0.0, 0.0], path)
    assert all(close(a, b) for a, b in zip(u_star, u_kkt))
    checks += 1
    print("ok: sharing optimum matches the KKT oracle")

    # droop equilibrium shifts uniformly for a uniform draw
    v_eq = m.droop_equilibrium(topo, [10.0] * 4, [100e3] * 4, [-40e3] * 4)
    assert all(close(v, 96e3, 1e-9) for v in v_eq)
    checks += 1
    print("ok: droop equilibrium matches the closed form")

    # deadband hinge
    assert m.deadband([106e3], [95e3], [105e3]) == [1000.0]
    assert m.deadband([100e3], [95e3], [105e3]) == [0.0]
    checks += 1
    print("ok: deadband hinge")

    # short droop simulation settles toward the equilibrium
    cfg = m.ControllerConfig.droop([10.0] * 4, [100e3] * 4)
    run = m.simulate(topo, cfg, [-40e3] * 4, [100e3] * 4, horizon=0.05, extend=True)
    assert run["converged"]
    assert all(close(v, 96e3, 1e-6) for v in run["final_v"])
    checks += 1
    print("ok: droop simulation settles at the equilibrium")

    # the bundled scenario: droop breaks the range, deadband PI restores it
    scenario = m.Scenario.paper_fig1()
    droop_run = scenario.run(controller="droop")
    assert droop_run["converged"] and not droop_run["range_satisfied"]
    db_run = scenario.run()
    assert db_run["converged"] and db_run["range_satisfied"]
    assert db_run["lyapunov_nonincreasing"]
    assert all(95e3 - 1.0 <= v <= 105e3 + 1.0 for v in db_run["final_v"])
    checks += 1
    print("ok: deadband PI recovers the operating range where droop fails")

    print(f"smoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
