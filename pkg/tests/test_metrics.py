import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from irdrop.exceptions import ValidationError
from irdrop.metrics import NRMSE_NOTE, compute_report


def test_hand_computed_fixture():
    r = compute_report([1, 2, 3], [1, 1, 5])
    assert round(r.mae_mv, 4) == 1.0
    assert round(r.maxe_mv, 4) == 2.0
    assert r.rmse_mv == pytest.approx(math.sqrt(5 / 3))
    assert round(r.nrmse_pct, 2) == 32.27
    assert r.mean_pred_mv == 2.0 and r.max_pred_mv == 3.0
    assert r.mean_label_mv == pytest.approx(7 / 3) and r.max_label_mv == 5.0


def test_identity_is_all_zero():
    y = np.array([3.0, 7.5, 1.25])
    r = compute_report(y, y)
    assert (r.mae_mv, r.maxe_mv, r.nrmse_pct, r.n_violations) == (0, 0, 0, 0)


def test_violation_threshold_is_ten_percent_of_vdd():
    labels = np.zeros(4)
    r = compute_report([81.0, 80.0, -79.0, 0.0], labels, vdd_mv=800)
    assert r.violation_threshold_mv == 80.0
    assert r.n_violations == 1
    assert compute_report([-81.0], [0.0]).n_violations == 1


def test_constant_labels_fallback():
    r = compute_report([2.0, 4.0], [3.0, 3.0])
    assert r.nrmse_pct == pytest.approx(100 / 3)
    assert compute_report([3.0, 3.0], [3.0, 3.0]).nrmse_pct == 0.0
    assert compute_report([1.0, 1.0], [0.0, 0.0]).nrmse_pct == math.inf


vectors = arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3, allow_nan=False))


@settings(max_examples=1000, deadline=None)
@given(data=st.data())
def test_report_invariants(data):
    pred = data.draw(vectors)
    labels = data.draw(arrays(np.float64, pred.shape, elements=st.floats(-1e3, 1e3, allow_nan=False)))
    r = compute_report(pred, labels)
    assert 0 <= r.mae_mv <= r.maxe_mv * (1 + 1e-12) + 1e-12
    assert r.nrmse_pct >= 0
    assert 0 <= r.n_violations <= r.n_samples


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(1e-3, 1e3))
def test_nrmse_is_scale_invariant(seed, alpha):
    rng = np.random.default_rng(seed)
    pred, labels = rng.normal(size=20), rng.normal(size=20)
    a = compute_report(pred, labels).nrmse_pct
    b = compute_report(alpha * pred, alpha * labels).nrmse_pct
    assert b == pytest.approx(a, rel=1e-9)


def test_errors():
    with pytest.raises(ValidationError):
        compute_report([1, 2], [1])
    with pytest.raises(ValidationError):
        compute_report([], [])
    with pytest.raises(ValidationError):
        compute_report([1], [1], vdd_mv=0)
    with pytest.raises(ValidationError):
        compute_report([np.nan], [1])


def test_serialisation():
    r = compute_report([1, 2, 3], [1, 1, 5], wall_clock_s={"predict": 0.5})
    d = json.loads(r.to_json())
    assert d["nrmse_definition"] == NRMSE_NOTE
    assert d["wall_clock_s"] == {"predict": 0.5}
    assert "wall_clock_s" not in json.loads(r.to_json(include_timings=False))
    text = r.to_text()
    assert text.startswith("# NRMSE")
    assert "predict time (s)" in text
    assert compute_report([1, 2, 3], [1, 1, 5]).to_json() == compute_report([1, 2, 3], [1, 1, 5]).to_json()
