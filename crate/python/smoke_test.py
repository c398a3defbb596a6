"""Smoke test for the `caloric` extension module.

Build it first with `pip install --no-build-isolation -e crates/py`, then run
`python python/smoke_test.py` or `pytest python/`.
"""

import json
import tempfile
from pathlib import Path

import caloric

SMALL = """
[grid]
n = 16

[wave]
t_final = 0.3

[wave.data]
kind = "geodesic_bump"
width = 0.4
mirror = true
centers = [[0.48, 0.49]]

[gauge]
times = [0.0]

[[diagnostics.cones]]
apex = { t = 0.32, x = [0.5, 0.5] }
depth = 0.035
"""


def test_default_config_round_trips():
    text = caloric.default_config()
    assert caloric.check_config(text) == text


def test_invalid_config_names_key():
    try:
        caloric.check_config("[wave]\ncfl = 0.9\n")
    except caloric.ConfigError as e:
        assert "wave.cfl" in str(e)
        assert isinstance(e, ValueError)
    else:
        raise AssertionError("expected ConfigError")


def test_full_pipeline_passes_and_writes_outputs():
    with tempfile.TemporaryDirectory() as d:
        report = json.loads(caloric.run(SMALL, "all", d, 2))
        failed = [c for c in report["checks"] if not c["pass"]]
        assert not failed, failed
        assert report["n"] == 16
        assert len(report["slices"]) == 1
        assert len(report["cones"]) == 1
        for name in ("report.json", "energy.csv", "residuals.csv", "scaled_decay.csv"):
            assert (Path(d) / name).exists(), name
        on_disk = json.loads((Path(d) / "report.json").read_text())
        assert on_disk == report


def test_energy_drift_shrinks_under_refinement():
    drifts = []
    for n in (16, 32):
        times, energies = caloric.energy_series(SMALL.replace("n = 16", f"n = {n}"))
        assert len(times) == len(energies) > 1
        drifts.append(abs(energies[-1] - energies[0]) / energies[0])
    assert drifts[1] < drifts[0] / 2, drifts


def test_minkowski_inner_product():
    assert caloric.mink_inner([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == -1.0


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
