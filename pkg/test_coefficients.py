#!/usr/bin/env python3
"""Coefficient families and the sampled Lipschitz, growth and zero-set verifiers."""

import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coefficients import (CoefficientFamily, CoefficientModel, ZeroSetClass, classify_zero_set, eval_f,
                          sin_series_V, verify_extended_lipschitz, verify_growth_bound)
from modulus import ModulusSpec, Side
from verdicts import Verdict


def test_cyclic_uses_predecessor():
    model = CoefficientModel.cyclic([2.0, 3.0, 5.0])
    np.testing.assert_array_equal(eval_f(model, [1.0, 10.0, 100.0]), [200.0, 3.0, 50.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=3, max_size=3),
       st.floats(min_value=0.01, max_value=100.0))
def test_cyclic_is_positively_homogeneous(x, lam):
    model = CoefficientModel.cyclic([2.0, 3.0, 5.0])
    x = np.asarray(x)
    np.testing.assert_allclose(eval_f(model, lam * x), lam * eval_f(model, x), rtol=1e-12, atol=0.0)


def test_cyclic_batch_shape():
    model = CoefficientModel.cyclic([1.0, 1.0])
    out = model.eval(np.ones((4, 7, 2)))
    assert out.shape == (4, 7, 2)


def test_constructors_validate():
    with pytest.raises(ValueError):
        CoefficientModel.cyclic([1.0, -1.0])
    with pytest.raises(ValueError):
        CoefficientModel.cyclic([1.0, 1.0], alpha=[0.1])
    with pytest.raises(ValueError):
        CoefficientModel.sin_series([1.0], truncation=0)
    with pytest.raises(ValueError):
        CoefficientModel.constant([1.0, -0.5])


def test_eval_rejects_bad_states():
    model = CoefficientModel.cyclic([1.0, 1.0])
    with pytest.raises(ValueError):
        model.eval([1.0, -1.0])
    with pytest.raises(ValueError):
        model.eval([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        model.eval([math.nan, 1.0])


def test_sin_series_value_at_half_pi():
    n = 1000
    assert float(sin_series_V(math.pi / 2, n)) == pytest.approx(math.pi ** 2 / 8, abs=1.0 / n)
    assert float(sin_series_V(0.0, n)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.0, max_value=50.0), st.integers(min_value=1, max_value=200))
def test_sin_series_truncation_error(u, n):
    gap = abs(float(sin_series_V(u, 2 * n)) - float(sin_series_V(u, n)))
    assert gap <= 1.0 / n + 1e-12


def test_sin_series_model_adds_theta():
    model = CoefficientModel.sin_series([0.5, 2.0], truncation=50)
    x = np.array([1.0, 2.0])
    total = float(sin_series_V(x, 50).sum())
    np.testing.assert_allclose(model.eval(x), [total + 0.5, total + 2.0])


def test_radial_family():
    model = CoefficientModel.radial([1.0, 2.0], power=2.0)
    np.testing.assert_allclose(model.eval([1.0, 1.0]), [9.0, 18.0])
    assert model.family is CoefficientFamily.RADIAL


def test_composite_hook():
    model = CoefficientModel.composite(2, lambda x: x ** 2)
    np.testing.assert_array_equal(model.eval([2.0, 3.0]), [4.0, 9.0])
    with pytest.raises(ValueError):
        CoefficientModel(2, (0.0, 0.0), CoefficientFamily.COMPOSITE)


def test_to_dict_roundtrips_parameters():
    data = CoefficientModel.cyclic([1.0, 2.0], alpha=[0.1, -0.2]).to_dict()
    assert data == {"d": 2, "alpha": [0.1, -0.2], "family": {"kind": "cyclic", "params": {"gamma": [1.0, 2.0]}}}


# ---------------------------------------------------------------------
# verifiers
# ---------------------------------------------------------------------


def test_lipschitz_cyclic_log_is_bounded_by_inverse_log():
    report = verify_extended_lipschitz(CoefficientModel.cyclic([1.0, 1.0]), ModulusSpec.log(), n_pairs=5000, seed=3)
    assert report.verdict is Verdict.PASS
    assert 0.0 < report.C_hat <= 1.0 / math.log(100.0) + 1e-12


def test_lipschitz_constant_model_is_zero():
    report = verify_extended_lipschitz(CoefficientModel.constant([1.0, 2.0]), ModulusSpec.log(), n_pairs=1000)
    assert report.C_hat == 0.0


def test_lipschitz_is_seeded():
    model, r = CoefficientModel.sin_series([1.0, 1.0], truncation=50), ModulusSpec.log()
    a = verify_extended_lipschitz(model, r, n_pairs=500, seed=11)
    b = verify_extended_lipschitz(model, r, n_pairs=500, seed=11)
    assert a.C_hat == b.C_hat and a.worst_pair == b.worst_pair


def test_growth_bound_cyclic_passes():
    rho = ModulusSpec.log(side=Side.INFINITY)
    report = verify_growth_bound(CoefficientModel.cyclic([1.0, 1.0]), rho, C=10.0, k_dom=1.0, n_samples=2000)
    assert report.verdict is Verdict.PASS
    assert report.max_ratio <= 1.0 + 1e-12


def test_growth_bound_quadratic_radial_fails():
    rho = ModulusSpec.log(side=Side.INFINITY)
    report = verify_growth_bound(CoefficientModel.radial([1.0, 1.0], 2.0), rho, C=10.0, k_dom=1.0, n_samples=2000)
    assert report.verdict is Verdict.FAIL
    assert report.max_ratio > 1e6


def test_growth_bound_needs_rho_at_infinity():
    with pytest.raises(ValueError):
        verify_growth_bound(CoefficientModel.cyclic([1.0]), ModulusSpec.log(), C=1.0, k_dom=1.0)


def test_zero_set_constant_is_positive_class():
    report = classify_zero_set(CoefficientModel.constant([1.0, 2.0]), n_interior=200, n_boundary=20)
    assert report.classification is ZeroSetClass.POSITIVE


def test_zero_set_cyclic_is_boundary_class():
    report = classify_zero_set(CoefficientModel.cyclic([1.0, 1.0, 1.0]), n_interior=200, n_boundary=20)
    assert report.classification is ZeroSetClass.BOUNDARY
    face = next(f for f in report.faces if f["zero_indices"] == [1])
    assert face["vanishing"] == [2]
    assert all(f["consistent"] for f in report.faces)


def test_zero_set_cyclic_pair_is_boundary_class():
    report = classify_zero_set(CoefficientModel.cyclic([1.0, 1.0]), n_interior=200, n_boundary=20)
    assert report.classification is ZeroSetClass.BOUNDARY
    assert report.interior_zeros == 0
    vanishing = {tuple(f["zero_indices"]): f["vanishing"] for f in report.faces}
    assert vanishing == {(1,): [2], (2,): [1], (1, 2): [1, 2]}


def test_zero_set_interior_zero_is_neither():
    hook = lambda x: np.maximum(5.0 - x, 0.0)  # noqa: E731
    report = classify_zero_set(CoefficientModel.composite(1, hook), n_interior=50, n_boundary=5)
    assert report.classification is ZeroSetClass.NEITHER
    assert report.interior_zeros > 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
