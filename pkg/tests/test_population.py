import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ffabc.inference import (
    DiagnosticsLog,
    Population,
    StepDiagnostics,
    WeightedSample,
    derive_seed,
    effective_sample_size,
    stage_rng,
)


def _pop(n=5, seed=0, **prov):
    rng = np.random.default_rng(seed)
    return Population(rng.uniform(size=(n, 2)), rng.uniform(0.1, 1, n), rng.uniform(size=n),
                      np.arange(n) * 7919, ("sigma", "epsilon"), provenance=prov)


def test_weights_normalised_and_readonly():
    p = _pop()
    assert p.weights.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        p.phi[0, 0] = 1.0


def test_population_validation():
    with pytest.raises(ValueError):
        Population(np.ones((2, 2)), [-1.0, 2.0], [0, 0], [0, 0], ("a", "b"))
    with pytest.raises(ValueError):
        Population(np.ones((2, 2)), [0.0, 0.0], [0, 0], [0, 0], ("a", "b"))
    with pytest.raises(ValueError):
        Population(np.ones((2, 2)), [1.0, 1.0], [0, -1], [0, 0], ("a", "b"))
    with pytest.raises(ValueError):
        Population(np.ones((2, 3)), [1.0, 1.0], [0, 0], [0, 0], ("a", "b"))


def test_weighted_sample_validation():
    with pytest.raises(ValueError):
        WeightedSample((0.1,), -0.5, 0.0, 1)
    with pytest.raises(ValueError):
        WeightedSample((0.1,), 0.5, float("nan"), 1)


def test_samples_roundtrip():
    p = _pop()
    q = Population.from_samples(p.samples, p.names)
    np.testing.assert_array_equal(q.phi, p.phi)
    np.testing.assert_array_equal(q.weights, p.weights)
    np.testing.assert_array_equal(q.seeds, p.seeds)


def test_csv_byte_roundtrip(tmp_path):
    p = _pop(8, ffabc_version="0.1.0", master_seed=3)
    text = p.to_csv(tmp_path / "a.csv")
    q = Population.read_csv(tmp_path / "a.csv")
    assert q.to_csv() == text
    assert q.provenance == {"ffabc_version": "0.1.0", "master_seed": "3"}
    np.testing.assert_array_equal(q.phi, p.phi)
    assert text.splitlines()[2] == "sigma,epsilon,weight,distance,seed"


def test_csv_rejects_bad_files(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        Population.read_csv(f)
    f.write_text("a,weight,distance,seed\n1,2\n")
    with pytest.raises(ValueError, match=":2:"):
        Population.read_csv(f)


def test_ess():
    assert effective_sample_size(np.ones(10)) == pytest.approx(10.0)
    assert effective_sample_size([1, 0, 0, 0]) == pytest.approx(1.0)


def test_derive_seed_properties():
    a = derive_seed(7, "kernel", 3, 11)
    assert a == derive_seed(7, "kernel", 3, 11)
    assert 0 <= a < 2**63
    others = {derive_seed(7, "prior", 3, 11), derive_seed(8, "kernel", 3, 11),
              derive_seed(7, "kernel", 4, 11), derive_seed(7, "kernel", 3, 12)}
    assert a not in others and len(others) == 4
    with pytest.raises(KeyError):
        derive_seed(7, "nope", 0, 0)


def test_stage_rng_reproducible():
    assert stage_rng(1, "resample", 2).random() == stage_rng(1, "resample", 2).random()


def test_diagnostics_log(tmp_path):
    log = DiagnosticsLog(tmp_path / "d.jsonl", header={"master_seed": 1})
    log.append(StepDiagnostics(0, math.inf, 1.0, 10.0, 10, 0.1))
    log.append(StepDiagnostics(1, 0.5, 0.4, 8.0, 15, 0.2))
    rows = DiagnosticsLog.read(tmp_path / "d.jsonl")
    assert [r["step"] for r in rows] == [0, 1]
    assert rows[0]["gamma"] == "inf" and rows[1]["gamma"] == 0.5
    assert (tmp_path / "d.jsonl").read_text().startswith('{"provenance"')


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=50))
def test_normalisation_property(ws):
    n = len(ws)
    p = Population(np.zeros((n, 1)), ws, np.zeros(n), np.zeros(n), ("x",))
    assert p.weights.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(p.weights >= 0)
    assert 1.0 <= p.ess <= n + 1e-9
