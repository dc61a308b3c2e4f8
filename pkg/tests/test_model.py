import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmediate.errors import DataValidationError
from cfmediate.model import (
    BootstrapResult,
    CMEstimates,
    dataset_from_columns,
    read_columns,
    read_dataset,
    validate_dataset,
    write_dataset,
)


def test_minimal_dataset():
    ds = validate_dataset([1.0, 2.0], [0, 1], [0, 1])
    assert ds.n == 2 and ds.k == 0 and ds.m == 0
    assert ds.x_controls.shape == (2, 0)


@pytest.mark.parametrize(
    "y, z, d, code",
    [
        ([1, 2], [1, 1], [0, 1], "degenerate-treatment-arm"),
        ([1, 2], [0, 1], [1, 1], "degenerate-mediator-arm"),
        ([1.0, np.inf], [0, 1], [0, 1], "non-finite"),
        ([1.0, np.nan], [0, 1], [0, 1], "non-finite"),
        ([1, 2, 3], [0, 1], [0, 1, 1], "length-mismatch"),
        ([1, 2], [0, 2], [0, 1], "non-binary-z"),
        ([1, 2], [0, 1], [0, 0.5], "non-binary-d"),
    ],
)
def test_validation_errors(y, z, d, code):
    with pytest.raises(DataValidationError) as info:
        validate_dataset(y, z, d)
    assert info.value.code == code


def test_binary_accepts_int_and_float():
    a = validate_dataset([1.0, 2.0, 3.0], [0, 1, 1], [1, 0, 1])
    b = validate_dataset([1.0, 2.0, 3.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0])
    assert a == b


def test_input_not_mutated_and_readonly():
    y = np.array([1.0, 2.0, 3.0])
    ds = validate_dataset(y, [0, 1, 0], [1, 0, 0])
    y[0] = 99.0
    assert ds.y[0] == 1.0
    with pytest.raises(ValueError):
        ds.y[0] = 5.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.integers(0, 2))
def test_validate_idempotent(seed, k, m):
    r = np.random.default_rng(seed)
    n = 12
    z = np.array([0, 1] * 6)
    d = np.array([0, 0, 1, 1] * 3)
    ds = validate_dataset(r.normal(size=n), z, d, r.normal(size=(n, k)), r.normal(size=(n, m)))
    again = validate_dataset(ds)
    assert again == ds and again is not ds


def test_csv_round_trip(tmp_path, sample):
    path = tmp_path / "d.csv"
    write_dataset(sample, path)
    back = read_dataset(path)
    assert back == sample
    assert path.read_text().splitlines()[0] == "y,z,d,x1,iv1"


@pytest.mark.parametrize(
    "text, code",
    [
        ("y,z,d\n1.0,0,\n", "missing-cell"),
        ("y,z,d\n1.0,0\n", "missing-cell"),
        ("y,d,z\n1.0,0,1\n", "bad-header"),
        ("y,z,d,iv1,x1\n1,0,1,2,3\n", "bad-header"),
        ("y,z,d,x2\n1,0,1,2\n", "bad-header"),
        ("y,z,d\n1.0,0,abc\n", "non-numeric"),
        ("", "bad-header"),
    ],
)
def test_csv_schema_rejects(tmp_path, text, code):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataValidationError) as info:
        read_columns(path)
    assert info.value.code == code


def test_select_columns(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,z,d,x1,x2,iv1\n1,0,0,1,2,3\n2,1,1,4,5,6\n3,0,1,7,8,9\n")
    cols = read_columns(path)
    ds = dataset_from_columns(cols, controls=["x2"], instruments=[])
    assert ds.control_names == ("x2",) and ds.m == 0
    np.testing.assert_array_equal(ds.x_controls[:, 0], [2, 5, 8])
    with pytest.raises(DataValidationError):
        dataset_from_columns(cols, controls=["x9"])


def _est(**kw):
    base = dict(method="conventional", first_stage=0.5, ate=2.0, ade=1.2, aie=0.8,
                coefficients={"beta": 0.3}, n_used=10)
    base.update(kw)
    return CMEstimates(**base)


def test_estimates_json_round_trip_exact():
    e = _est(ate=2.6000000000000001, ade=1.0 / 3.0, aie=math.pi, warnings=["w"])
    back = CMEstimates.from_json(e.to_json())
    assert back == e
    assert json.loads(e.to_json())["aie_share"] == e.aie / e.ate
    assert set(json.loads(e.to_json())) == {
        "method", "first_stage", "ate", "ade", "aie", "aie_share", "coefficients", "n_used", "warnings"
    }


def test_aie_share_undefined_at_zero_ate():
    e = _est(ate=0.0)
    assert e.aie_share is None
    assert math.isnan(e.vector()[-1])


@pytest.mark.parametrize("bad", [dict(first_stage=1.5), dict(ade=math.nan), dict(method="other")])
def test_estimates_invariants(bad):
    with pytest.raises(ValueError):
        _est(**bad)


def test_bootstrap_result_summaries(tmp_path):
    draws = np.random.default_rng(0).normal(size=(200, 5))
    res = BootstrapResult.from_draws(draws, level=0.9, failures=3)
    assert res.b == 200
    assert np.all(res.se >= 0) and np.all(res.ci_lower <= res.ci_upper)
    np.testing.assert_allclose(res.se, draws.std(axis=0, ddof=1))
    d = res.to_dict()
    assert d["b"] == 200 and d["failures"] == 3 and set(d["ci"]) == set(res.statistics)
    path = tmp_path / "draws.csv"
    res.write_draws(path)
    back = np.loadtxt(path, delimiter=",", skiprows=1)[:, 1:]
    again = BootstrapResult.from_draws(back, level=0.9, failures=3)
    np.testing.assert_array_equal(again.se, res.se)
    np.testing.assert_array_equal(again.ci_lower, res.ci_lower)
