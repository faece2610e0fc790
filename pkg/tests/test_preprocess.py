import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from irdrop.exceptions import ValidationError
from irdrop.preprocess import LogMinMaxScaler, ScalerParams, apply_scaler, fit_scaler, log_transform


def test_log1p_identities():
    np.testing.assert_allclose(log_transform([[0.0, np.e - 1, np.e ** 2 - 1]]), [[0.0, 1.0, 2.0]], atol=1e-15)
    assert log_transform([[0.0]])[0, 0] == 0.0


def test_log_compresses_long_tail():
    out = log_transform(np.array([[1.0], [10.0], [100.0], [1000.0]])).ravel()
    gaps = np.diff(out)
    assert np.all(gaps > 0)
    raw_ratio = np.array([9.0, 90.0, 900.0])
    assert np.all(gaps[1:] / gaps[:-1] < raw_ratio[1:] / raw_ratio[:-1])


def test_negative_entry_names_position():
    with pytest.raises(ValidationError, match="row 1, column 2"):
        log_transform([[0, 1, 2], [0, 1, -3]])


def affine(col):
    # Undo the log so the scaler sees the intended post-log column.
    return np.expm1(np.asarray(col, dtype=float))[:, None]


def test_min_max_affine_constant_and_clip():
    p = fit_scaler(affine([0, 1, 2]))
    np.testing.assert_allclose(apply_scaler(affine([0, 1, 2]), p).ravel(), [0, 0.5, 1])
    assert apply_scaler(affine([3]), p)[0, 0] == 1.0
    q = fit_scaler(np.array([[5.0], [5.0]]))
    assert apply_scaler(np.array([[5.0], [5.0], [7.0]]), q).tolist() == [[0.0], [0.0], [0.0]]


def test_column_mismatch():
    p = fit_scaler(np.ones((3, 2)))
    with pytest.raises(ValidationError, match="2 columns"):
        apply_scaler(np.ones((3, 3)), p)


def test_params_round_trip():
    p = fit_scaler(np.array([[0.0, 1.0], [3.0, 2.0]]), columns=["a", "b"])
    assert ScalerParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValidationError):
        ScalerParams(mins=(1.0,), maxs=(0.0,), columns=("a",))


nonneg = arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 5)),
                elements=st.floats(0, 1e9, allow_nan=False, allow_infinity=False))


@settings(max_examples=80, deadline=None)
@given(train=nonneg, other=nonneg)
def test_output_bounded_and_order_preserving(train, other):
    p = fit_scaler(train)
    if other.shape[1] != train.shape[1]:
        other = np.resize(other, (other.shape[0], train.shape[1]))
    out = apply_scaler(other, p)
    assert out.min() >= 0.0 and out.max() <= 1.0
    for j in range(other.shape[1]):
        order = np.argsort(other[:, j], kind="stable")
        assert np.all(np.diff(out[order, j]) >= 0)


@settings(max_examples=80, deadline=None)
@given(train=nonneg)
def test_train_rows_span_unit_interval(train):
    out = apply_scaler(train, fit_scaler(train))
    for j in range(train.shape[1]):
        if np.ptp(np.log1p(train[:, j])) > 0:
            assert out[:, j].min() == 0.0 and out[:, j].max() == 1.0


def test_estimator_api():
    X = np.array([[0.0, 1.0], [1.0, 5.0], [3.0, 2.0]])
    s = LogMinMaxScaler().fit(X)
    assert s.get_params() == {"columns": None}
    np.testing.assert_array_equal(s.transform(X), apply_scaler(X, fit_scaler(X)))
