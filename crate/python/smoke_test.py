#!/usr/bin/env python3
"""Smoke test for the opscale_py extension module.

Builds the cdylib if needed, loads it, and exercises the main entry
points: instance generation, solving with plain and relaxed iterations,
cone geometry, and the rate formulas.

Usage: python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

REPO = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    lib = REPO / "target" / "release" / "libopscale_py.so"
    if not lib.exists():
        print("building opscale-py (release)...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "opscale-py"],
            cwd=REPO,
            check=True,
        )
    staging = pathlib.Path(tempfile.mkdtemp(prefix="opscale_py_"))
    shutil.copy(lib, staging / "opscale_py.so")
    sys.path.insert(0, str(staging))
    import opscale_py

    return opscale_py


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    op = load_module()

    # --- geometry ----------------------------------------------------------
    approx(op.hilbert_distance([[1.0, 0.0], [0.0, 4.0]], [[1.0, 0.0], [0.0, 1.0]]),
           math.log(4.0), 1e-13)
    # scale invariance
    approx(op.hilbert_distance([[2.0, 0.0], [0.0, 8.0]], [[1.0, 0.0], [0.0, 1.0]]),
           math.log(4.0), 1e-13)
    # geodesic endpoints and the commuting closed form
    g = op.geodesic([[1.0, 0.0], [0.0, 1.0]], [[2.0, 0.0], [0.0, 0.5]], 0.7)
    approx(g[0][0], 2.0 ** 0.7, 1e-12)
    approx(g[1][1], 0.5 ** 0.7, 1e-12)

    # --- rate formulas ------------------------------------------------------
    approx(op.optimal_omega(0.75), 4.0 / 3.0, 1e-15)
    approx(op.predicted_rate(1.0, 0.6), 0.6, 1e-15)
    w = op.optimal_omega(0.6)
    approx(op.predicted_rate(1.9, 0.6), 0.9, 1e-15)
    assert 1.0 < w < 2.0

    # --- instances and solvers ---------------------------------------------
    inst = op.gen_frame(12, 15, seed=1)
    assert (inst.m, inst.n, inst.k) == (15, 12, 15)

    plain = op.solve(inst, method="osi", max_iter=300, tol=1e-12)
    relaxed = op.solve(inst, method="geodesic_or", adaptive_p=10, max_iter=300, tol=1e-12)
    assert relaxed["status"] == "converged", relaxed["status"]
    assert relaxed["final_err"] <= 1e-12
    assert relaxed["omega_hat"] is not None and 1.0 < relaxed["omega_hat"] < 2.0
    assert relaxed["iterations"] <= plain["iterations"], "relaxation should not be slower"

    # the returned factors reproduce the reported error
    approx(op.gradient_norm(inst, relaxed["l"], relaxed["r"]), relaxed["final_err"], 1e-15)

    # errors decrease monotonically for the plain method
    errs = plain["errs"]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(errs, errs[1:])), "plain iteration must not diverge"

    # --- diagnostics ---------------------------------------------------------
    gauss = op.gen_gaussian(4, 4, 6, seed=3)
    report = op.check(gauss, trials=100, seed=1)
    assert report["positivity_improving"] is True
    assert report["lambda1_hat"] < 1.0 and report["lambda2_hat"] < 1.0
    assert report["safe_omega_upper_bound"] > 1.0

    # round trip through the instance file format
    with tempfile.TemporaryDirectory() as tmp:
        path = str(pathlib.Path(tmp) / "inst.json")
        inst.save(path)
        again = op.Instance.load(path)
        assert again.to_json() == inst.to_json()

    print("smoke test passed")


if __name__ == "__main__":
    main()
