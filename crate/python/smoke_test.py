#!/usr/bin/env python3
"""Smoke test for the trailsim_py extension module.

Builds are expected beforehand:

    cargo build --release -p trailsim-py

The script locates the produced cdylib, imports it, and exercises the main
entry points: scenario loading, seeded runs, determinism, zero-noise
recovery, entropy, and the energy comparison.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_extension():
    names = ["libtrailsim_py.so", "trailsim_py.so", "libtrailsim_py.dylib", "trailsim_py.pyd"]
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in names
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build --release -p trailsim-py")
    stage = Path(tempfile.mkdtemp(prefix="trailsim_py_"))
    shutil.copy(built, stage / "trailsim_py.so")
    sys.path.insert(0, str(stage))
    import trailsim_py

    return trailsim_py


def main():
    ts = import_extension()
    print(f"imported trailsim_py {ts.__version__}")

    # entropy: constant -> 0 bits, uniform binary -> 1 bit
    assert ts.attribute_entropy(["red", "red", "red"]) == 0.0
    assert ts.attribute_entropy(["red", "blue"]) == 1.0
    quarter = ts.attribute_entropy(["red", "blue", "blue", "blue"])
    assert math.isclose(quarter, 0.811278, abs_tol=1e-6), quarter
    try:
        ts.attribute_entropy([])
        raise AssertionError("empty multiset must raise")
    except ValueError:
        pass

    scenario = ts.Scenario.load(str(REPO / "scenarios" / "linear.toml"))
    print(repr(scenario))
    assert scenario.sensor_count == 6
    assert scenario.population_size == 100
    assert scenario.mode == "duty-cycle"

    # seeded runs are reproducible
    a = ts.run(scenario, 7)
    b = ts.run(scenario, 7)
    print(repr(a))
    assert a.unique_count == b.unique_count
    assert a.count_accuracy == b.count_accuracy
    assert a.trails() == b.trails()
    assert a.observation_count == sum(len(t) for t in a.trails())

    # zero noise + distinct attributes recovers the population exactly
    clean = ts.Scenario.load(str(REPO / "scenarios" / "linear.toml"))
    clean.set_noise(0.0, 0.0)
    clean.set_distinct_attributes(True)
    perfect = ts.run(clean, 3)
    assert perfect.unique_count == perfect.true_count == 100, repr(perfect)
    assert perfect.trail_exact_fraction == 1.0

    # replication aggregates and the duty-cycle energy advantage
    stats = ts.replicate(scenario, 10, base_seed=0, jobs=2)
    assert stats["runs"] == 10
    assert 0.0 < stats["mean_count_accuracy"] <= 1.0
    cmp = ts.compare_energy(scenario, 5, base_seed=0, jobs=2)
    assert cmp["saving_percent"] > 0.0, cmp
    assert cmp["mean_units_duty"] < cmp["mean_units_on"]

    # attribute-set overrides mirror the CLI
    ungated = ts.Scenario.load(str(REPO / "scenarios" / "linear.toml"))
    ungated.set_attribute_set("no-timestamp")
    seeds_differ = ts.run(ungated, 7)
    assert seeds_differ.unique_count != a.unique_count

    print("smoke test PASS")


if __name__ == "__main__":
    main()
