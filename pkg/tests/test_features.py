import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from candidefit.features import (EPSILON, FeatureVector, NormStats, apply_norm, au8_vector,
                                 denormalize, fit_norm, fp68_vector, kind_for_dim, stack,
                                 unflatten_fp68)
from candidefit.fitting import LandmarkFrame


def test_fp68_layout():
    pts = np.zeros((68, 2))
    assert np.array_equal(fp68_vector(LandmarkFrame(0, pts)).values, np.zeros(136))
    pts[0] = (5, 7)
    v = fp68_vector(LandmarkFrame(0, pts, "smile"))
    assert v.values[:3].tolist() == [5, 7, 0]
    assert v.label == "smile" and v.kind == "fp68"


def test_fp68_round_trip(rng):
    pts = rng.normal(size=(68, 2))
    assert np.array_equal(unflatten_fp68(fp68_vector(LandmarkFrame(0, pts)).values), pts)


def test_feature_vector_validation():
    with pytest.raises(ValueError, match="needs 8"):
        FeatureVector("au8", np.zeros(7))
    with pytest.raises(ValueError, match="finite"):
        au8_vector([np.nan] + [0] * 7)
    with pytest.raises(ValueError, match="unknown"):
        FeatureVector("pixels", np.zeros(8))
    assert kind_for_dim(136) == "fp68"
    with pytest.raises(ValueError):
        kind_for_dim(9)


def test_stack_rejects_mixed_kinds():
    with pytest.raises(ValueError, match="mixed"):
        stack([au8_vector(np.zeros(8)), FeatureVector("fp68", np.zeros(136))])


def test_fit_norm_hand_case():
    s = fit_norm(np.array([[0.0], [2.0]]))
    assert s.mu.tolist() == [1.0] and s.sigma.tolist() == [1.0]


def test_fit_norm_needs_two_samples():
    with pytest.raises(ValueError, match="at least two"):
        fit_norm(np.zeros((1, 8)))


def test_constant_dimension_uses_epsilon():
    s = fit_norm(np.array([[1.0, 0.0], [1.0, 2.0]]))
    assert s.sigma[0] == 0.0
    z = apply_norm(np.array([1.0 + 1e-9, 1.0]), s)
    assert z[0] == pytest.approx(1e-9 / EPSILON)


def test_apply_norm_identities(rng):
    s = NormStats(rng.normal(size=8), rng.uniform(0.5, 2, 8))
    assert np.allclose(apply_norm(s.mu, s), 0)
    assert np.allclose(apply_norm(s.mu + s.sigma, s), 1)
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply_norm(np.zeros(7), s)
    fv = apply_norm(au8_vector(s.mu, "x"), s)
    assert isinstance(fv, FeatureVector) and fv.label == "x"


def test_test_split_uses_train_stats(rng):
    train = rng.normal(0, 1, (100, 8))
    test = rng.normal(0.5, 1, (100, 8))
    s = fit_norm(train)
    assert abs(apply_norm(test, s).mean()) > 0.1


@given(arrays(float, (6, 4), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=100)
def test_normalized_train_is_standardized(X):
    if np.any(X.std(axis=0) < 1e-3):
        return
    Z = apply_norm(X, fit_norm(X))
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-10)
    assert np.allclose(Z.std(axis=0), 1, atol=1e-10)
    assert np.allclose(denormalize(Z, fit_norm(X)), X, atol=1e-12 * max(1.0, np.abs(X).max()))


def test_norm_stats_serialization(rng):
    s = fit_norm(rng.normal(size=(10, 8)))
    back = NormStats.from_dict(s.to_dict())
    assert np.array_equal(back.mu, s.mu) and np.array_equal(back.sigma, s.sigma)
