import numpy as np
import pytest

import gradcases
from cohff.tensor import Parameter, finite_diff_check, mul, relative_error, sum as tsum
from cohff.tensor.gradcheck import numeric_grad


@pytest.mark.parametrize("name", sorted(gradcases.CASES))
def test_case_matches_finite_differences(name):
    worst = max(gradcases.case_error(name, s) for s in gradcases.SEEDS)
    assert worst <= gradcases.TOL, f"{name}: rel err {worst:.3e}"


def test_every_registry_param_gets_gradient():
    # a check against an all-zero gradient would pass trivially
    for name, build in gradcases.CASES.items():
        f, params = build(np.random.default_rng(0))
        for p in params:
            p.grad = None
        f().backward()
        assert any(p.grad is not None and np.any(p.grad != 0) for p in params), name


def test_relative_error_definition():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert np.isclose(relative_error(np.array([1.0, 0.0]), np.array([0.0, 1.0])), 2 ** 0.5 / 2)


def test_numeric_grad_restores_values():
    p = Parameter(np.arange(4.0))
    before = p.data.copy()
    numeric_grad(lambda: tsum(mul(p, p)), p)
    assert np.array_equal(p.data, before)


def test_check_detects_wrong_gradient():
    p = Parameter(np.array([0.5, 1.5]))
    def f():
        # gradient of p*p reported as if it were p*const
        return tsum(mul(p, p.detach()))
    assert finite_diff_check(f, p) > 0.1


@pytest.mark.slow
def test_end_to_end_toy_graph():
    errs = gradcases.e2e_errors()
    bad = {k: v for k, v in errs.items() if not v <= gradcases.TOL}
    assert not bad, bad
    assert len(errs) > 30
