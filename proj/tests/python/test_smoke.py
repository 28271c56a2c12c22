"""End-to-end smoke tests for the Python bindings.

These stay deliberately small: the C++ test suites carry the numeric
verification, so here we only check that the module round-trips sensibly.
"""

import math

import pytest

import fedau


def test_preset_names_contains_smoke():
    names = fedau.preset_names()
    assert "synth-smoke" in names
    assert "synth-samples" in names


def test_run_smoke_preset():
    report = fedau.run(preset="synth-smoke", seed=7)
    assert report["name"] == "synth-smoke"
    assert report["seed"] == 7
    assert report["scope"] == "samples"

    methods = {row["method"]: row for row in report["methods"]}
    for name in ("fedavg", "fedau", "retraining", "random_label"):
        assert name in methods, f"missing method row: {name}"
    for row in methods.values():
        assert 0.0 <= row["rm_acc"] <= 1.0
        assert 0.0 <= row["ul_acc"] <= 1.0
        assert row["seconds"] >= 0.0

    assert 0.0 < report["alpha_bound"] <= 0.5
    assert report["r1_rate"] >= 0.0
    assert report["train_seconds"] > 0.0


def test_run_is_deterministic():
    a = fedau.run(preset="synth-smoke", seed=11)
    b = fedau.run(preset="synth-smoke", seed=11)
    rows_a = {row["method"]: row for row in a["methods"]}
    rows_b = {row["method"]: row for row in b["methods"]}
    assert rows_a.keys() == rows_b.keys()
    for name, row in rows_a.items():
        other = rows_b[name]
        assert row["rm_acc"] == other["rm_acc"]
        assert row["ul_acc"] == other["ul_acc"]
        assert row["mia_acc"] == other["mia_acc"]
        assert row["bytes"] == other["bytes"]


def test_sample_combine_alpha_one_is_identity():
    trained = fedau.Head([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5])
    aux = fedau.Head([[9.0, 9.0], [9.0, 9.0]], [9.0, 9.0])
    out = fedau.sample_combine(trained, aux, 1.0)
    assert out["weights"] == [[1.0, 2.0], [3.0, 4.0]]
    assert out["bias"] == [0.5, -0.5]


def test_class_combine_subtracts_aux():
    trained = fedau.Head([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    aux = fedau.Head([[0.5, 0.0], [0.0, 0.5]], [0.25, 0.25])
    out = fedau.class_combine(trained, aux, 1.0)
    assert out["weights"][0][0] == pytest.approx(0.5)
    assert out["bias"][0] == pytest.approx(-0.25)


def test_combine_rejects_bad_coefficients():
    head = fedau.Head([[1.0]], [0.0])
    with pytest.raises(ValueError):
        fedau.sample_combine(head, head, 0.0)
    with pytest.raises(ValueError):
        fedau.sample_combine(head, head, 1.5)
    with pytest.raises(ValueError):
        fedau.class_combine(head, head, -1.0)


def test_unknown_preset_raises():
    with pytest.raises(ValueError):
        fedau.run(preset="no-such-preset")


def test_run_requires_exactly_one_source():
    with pytest.raises(ValueError):
        fedau.run()
    with pytest.raises(ValueError):
        fedau.run(preset="synth-smoke", config="/tmp/whatever.json")


def test_sweep_beta_values():
    rows = fedau.sweep("alpha", [0.5, 0.9], preset="synth-smoke", seed=3)
    assert [row["value"] for row in rows] == [0.5, 0.9]
    for row in rows:
        assert 0.0 <= row["ul_acc"] <= 1.0
        assert 0.0 <= row["rm_acc"] <= 1.0
        assert math.isfinite(row["rm_acc"])
