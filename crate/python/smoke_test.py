#!/usr/bin/env python3
"""Smoke test for the `hetclutter_py` extension module.

Build the extension first, then run this script with no arguments:

    cargo build -p hetclutter-py
    python3 python/smoke_test.py

The script loads the cdylib straight out of `target/` (release preferred),
exercises every exported class and function, and exits nonzero on the first
failure.
"""

import json
import math
import os
import sys
import tempfile
from importlib.machinery import ExtensionFileLoader
from importlib.util import module_from_spec, spec_from_loader
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load_module():
    candidates = [
        ROOT / "target" / profile / "libhetclutter_py.so"
        for profile in ("release", "debug")
    ]
    try:
        so = next(p for p in candidates if p.exists())
    except StopIteration:
        sys.exit(
            "extension not built; run `cargo build -p hetclutter-py` first\n"
            "looked for: " + ", ".join(str(p) for p in candidates)
        )
    loader = ExtensionFileLoader("hetclutter_py", str(so))
    spec = spec_from_loader("hetclutter_py", loader)
    mod = module_from_spec(spec)
    loader.exec_module(mod)
    print(f"loaded {so.relative_to(ROOT)}")
    return mod


PASSED = 0


def check(name, cond, detail=""):
    global PASSED
    if not cond:
        sys.exit(f"FAIL {name}  {detail}")
    PASSED += 1
    print(f"ok  {name}")


def expect_value_error(name, fn):
    try:
        fn()
    except ValueError:
        check(name, True)
        return
    sys.exit(f"FAIL {name}  expected ValueError")


def main():
    hc = load_module()

    # --- Scenario -----------------------------------------------------------
    ref = hc.Scenario.reference()
    check(
        "scenario.reference",
        ref.n == 8
        and ref.k == 16
        and ref.rho == 0.95
        and ref.nu == 0.5
        and ref.sigma2 == 0.0
        and ref.doppler == 0.0
        and ref.hypothesis == "h0",
        repr(ref),
    )
    expect_value_error("scenario.bad_hypothesis", lambda: hc.Scenario(hypothesis="maybe"))
    expect_value_error("scenario.bad_rho", lambda: hc.Scenario(rho=1.5))

    # --- Simulation: shapes, determinism, trial independence ---------------
    ds = hc.simulate(ref, seed=7)
    check(
        "simulate.shapes",
        len(ds.z) == 8
        and len(ds.v) == 8
        and len(ds.secondaries) == 16
        and all(len(c) == 8 for c in ds.secondaries)
        and len(ds.true_gammas) == 16,
    )
    check("simulate.h0_truth", ds.true_alpha == 0j and all(g > 0 for g in ds.true_gammas))
    again = hc.simulate(ref, seed=7)
    check("simulate.deterministic", again.z == ds.z and again.secondaries == ds.secondaries)
    other = hc.simulate(ref, seed=7, trial=1)
    check("simulate.trials_differ", other.z != ds.z)
    check(
        "steering_vector",
        hc.steering_vector(8) == [1 + 0j] * 8
        and abs(hc.steering_vector(4, 0.25)[1] - 1j) < 1e-15,
    )

    # --- Proposed detector --------------------------------------------------
    out = hc.detect(ds.z, ds.secondaries, ds.v)
    check(
        "detect.defaults",
        math.isfinite(out.log_statistic)
        and out.iterations_h0 == 20
        and out.iterations_h1 == 20
        and not out.converged
        and len(out.gammas_h0) == 16
        and len(out.gammas_h1) == 16
        and all(g > 0 for g in out.gammas_h1),
        f"log_statistic={out.log_statistic}",
    )
    for trace in (out.loglik_h0, out.loglik_h1):
        drops = [
            b - a for a, b in zip(trace, trace[1:]) if b < a - 1e-9 * max(1.0, abs(a))
        ]
        check("detect.loglik_nondecreasing", not drops, f"drops={drops}")
    rerun = hc.detect(ds.z, ds.secondaries, ds.v)
    check("detect.deterministic", rerun.log_statistic == out.log_statistic)

    slow = hc.detect(ds.z, ds.secondaries, ds.v, hc.Options(fast_path=False))
    rel = abs(slow.log_statistic - out.log_statistic) / max(1.0, abs(out.log_statistic))
    check("detect.fast_path_agrees", rel <= 1e-8, f"rel={rel:.3e}")

    early = hc.detect(ds.z, ds.secondaries, ds.v, hc.Options(max_iters=500, epsilon=1e-6))
    check(
        "detect.early_stop",
        early.converged and early.iterations_h1 < 500 and early.alpha is not None,
        f"iters={early.iterations_h1}",
    )

    h1 = hc.Scenario(snr_db=25.0, hypothesis="h1")
    strong = hc.simulate(h1, seed=7)
    check("simulate.h1_truth", strong.true_alpha != 0j)
    s_out = hc.detect(strong.z, strong.secondaries, strong.v)
    check(
        "detect.h1_exceeds_h0",
        s_out.log_statistic > out.log_statistic,
        f"{s_out.log_statistic} vs {out.log_statistic}",
    )
    expect_value_error(
        "detect.ragged_secondaries",
        lambda: hc.detect(ds.z, [ds.z, ds.z[:4]], ds.v),
    )
    expect_value_error("detect.empty_z", lambda: hc.detect([], ds.secondaries, ds.v))

    # --- Matched-filter baselines ------------------------------------------
    for est in ("scm", "nscm", "recursive", "persymmetric-recursive"):
        t = hc.nmf(ds.z, ds.secondaries, ds.v, estimator=est)
        check(f"nmf.{est}_in_unit_interval", 0.0 <= t <= 1.0, f"t={t}")
    check(
        "nmf.h1_exceeds_h0",
        hc.nmf(strong.z, strong.secondaries, strong.v) > hc.nmf(ds.z, ds.secondaries, ds.v),
    )
    expect_value_error("nmf.unknown_estimator", lambda: hc.nmf(ds.z, ds.secondaries, ds.v, estimator="mystery"))

    # --- Calibration helpers ------------------------------------------------
    stats = [float(i) for i in range(1, 1001)]
    thr = hc.calibrate_threshold(stats, 0.01)
    above = sum(1 for s in stats if s > thr)
    check("calibrate_threshold.exceedance_count", above == 10, f"thr={thr}, above={above}")
    expect_value_error("calibrate_threshold.bad_pfa", lambda: hc.calibrate_threshold(stats, 1.5))
    lo, hi = hc.wilson_interval(5, 100, 1.96)
    check("wilson_interval.contains_rate", lo < 0.05 < hi, f"[{lo}, {hi}]")

    # --- Monte Carlo plan round trip ---------------------------------------
    plan = {
        "scenario": {
            "N": 4,
            "K": 8,
            "rho": 0.9,
            "nu": 0.5,
            "sigma2": 0.0,
            "doppler": 0.0,
            "snr_db": 10.0,
            "hypothesis": "H0",
        },
        "detectors": [{"kind": "proposed"}, {"kind": "nmf"}],
        "pfa_target": 0.1,
        "calib_trials": 500,
        "pd_trials": 200,
        "snr_grid_db": [5.0, 15.0],
        "sweep": None,
        "convergence": None,
        "master_seed": 1,
    }
    report = json.loads(hc.run_plan_json(json.dumps(plan)))
    check(
        "run_plan.detectors",
        [d["label"] for d in report["detectors"]] == ["proposed", "nmf-nscm"],
    )
    for det in report["detectors"]:
        check(
            f"run_plan.{det['label']}_threshold",
            det["threshold"] is not None and "error" not in det,
        )
        snrs = [p["snr_db"] for p in det["pd_curve"]]
        rates = [p["pd"]["rate"] for p in det["pd_curve"]]
        check(
            f"run_plan.{det['label']}_pd_curve",
            snrs == [5.0, 15.0]
            and all(p["pd"]["trials"] == 200 for p in det["pd_curve"])
            and rates[1] >= rates[0],
            f"snrs={snrs}, rates={rates}",
        )
    check(
        "run_plan.deterministic",
        hc.run_plan_json(json.dumps(plan)) == hc.run_plan_json(json.dumps(plan)),
    )
    expect_value_error("run_plan.rejects_bad_json", lambda: hc.run_plan_json("{"))
    expect_value_error(
        "run_plan.rejects_empty_detectors",
        lambda: hc.run_plan_json(json.dumps({**plan, "detectors": []})),
    )

    # --- IQ cubes -----------------------------------------------------------
    pulses, bins = 64, 9
    rng_state = 1234567
    samples = []
    for _ in range(pulses * bins):
        # Tiny xorshift so the cube is reproducible without importing numpy.
        rng_state ^= (rng_state << 13) & 0xFFFFFFFFFFFFFFFF
        rng_state ^= rng_state >> 7
        rng_state ^= (rng_state << 17) & 0xFFFFFFFFFFFFFFFF
        samples.append(
            complex((rng_state & 0xFFFF) / 65536.0 - 0.5, ((rng_state >> 16) & 0xFFFF) / 65536.0 - 0.5)
        )
    cube = hc.Cube(pulses, bins, samples, {"source": "smoke", "prf_hz": "1000"})
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "cube.iq")
        cube.save(path)
        loaded = hc.Cube.load(path)
        check(
            "cube.roundtrip",
            loaded.pulses == pulses
            and loaded.range_bins == bins
            and loaded.metadata == {"source": "smoke", "prf_hz": "1000"},
            repr(loaded),
        )
        # Storage is single precision; the values survive a second round trip
        # exactly.
        resaved = os.path.join(tmp, "again.iq")
        loaded.save(resaved)
        check("cube.second_roundtrip_exact", hc.Cube.load(resaved).samples() == loaded.samples())
    expect_value_error("cube.load_missing", lambda: hc.Cube.load("/nonexistent/cube.iq"))

    snaps = cube.cut_snapshots(cut_bin=4, window=4, overlap=2, k=8)
    check("cube.window_count", len(snaps) == (pulses - 4) // 2 + 1, f"{len(snaps)} windows")
    w0, z0, sec0 = snaps[0]
    check(
        "cube.snapshot_shapes",
        w0 == 0 and len(z0) == 4 and len(sec0) == 8 and all(len(c) == 4 for c in sec0),
    )
    v4 = hc.steering_vector(4)
    snap_out = hc.detect(z0, sec0, v4)
    check("cube.snapshot_detects", math.isfinite(snap_out.log_statistic))
    expect_value_error("cube.bad_window", lambda: cube.cut_snapshots(4, 4, overlap=5, k=8))
    expect_value_error("cube.too_many_cells", lambda: cube.cut_snapshots(4, 4, 2, k=40))

    print(f"smoke test: all {PASSED} checks passed")


if __name__ == "__main__":
    main()
