import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qnewton.jacobian import ScaledSystem, assemble
from qnewton.linsolve import lu_solve
from qnewton.norm_tree import NormTree
from qnewton.problem import make_problem
from qnewton.resource import (
    GAUSSIAN_SWITCHOVER,
    CostInputs,
    alpha,
    alpha_from_c,
    alpha_parameters,
    binomial_tails,
    c_delta_x,
    estimate,
    query_counts,
    success_prob,
    time_estimates,
)


def exact_tail(c, j):
    return Fraction(sum(math.comb(2 * c, c + i) for i in range(j + 1, c + 1)), 4**c)


def exact_alpha(c, j0, d=1):
    return Fraction(4, d) * sum(exact_tail(c, j) for j in range(j0 + 1))


def test_small_tail_by_hand():
    assert binomial_tails(2, 0)[0] == pytest.approx(0.3125, rel=1e-15)


@pytest.mark.parametrize("c", range(1, 31))
def test_tails_match_exact_rationals(c):
    tails = binomial_tails(c, c + 2)
    for j in range(c + 3):
        want = float(exact_tail(c, j)) if j < c else 0.0
        assert tails[j] == pytest.approx(want, rel=1e-10, abs=0.0)
        assert tails[j] <= 0.5


@pytest.mark.parametrize("c", range(1, 31))
def test_alpha_matches_exact_rationals(c):
    for j0 in sorted({0, c // 2, c - 1, c + 3}):
        assert alpha_from_c(c, j0) == pytest.approx(float(exact_alpha(c, j0)), rel=1e-10)
    assert alpha_from_c(c, c, d=4) == pytest.approx(float(exact_alpha(c, c, d=4)), rel=1e-10)


def test_alpha_parameters():
    c, j0 = alpha_parameters(2.0, 0.01)
    assert c == math.ceil(4 * math.log(200))
    assert j0 == math.floor(math.sqrt(c * math.log(4 * c / 0.01)))
    with pytest.raises(ValueError):
        alpha_parameters(0.5, 0.1)
    with pytest.raises(ValueError):
        alpha_parameters(2.0, 1.5)
    with pytest.raises(ValueError):
        alpha_parameters(1.0, 0.9)  # ln(1/0.9) < 1 gives c < 1


def test_alpha_end_to_end():
    c, j0 = alpha_parameters(3.0, 1e-3)
    assert alpha(3.0, 1e-3) == pytest.approx(float(exact_alpha(c, j0)), rel=1e-10)
    assert alpha(3.0, 1e-3, d=3) == pytest.approx(alpha(3.0, 1e-3) / 3, rel=1e-15)


def test_gaussian_branch_is_continuous():
    c = GAUSSIAN_SWITCHOVER
    exact = binomial_tails(c, 2000)
    approx = binomial_tails(c + 1, 2000)
    # neighboring c differ by O(1/c); the switch must not produce a jump
    np.testing.assert_allclose(approx[:500], exact[:500], rtol=2e-3)


def test_large_c_finite():
    a = alpha(1e3, 1e-6)
    assert math.isfinite(a) and a > 0


def identity_system(n):
    b = np.zeros(n)
    b[0] = 3.0
    return ScaledSystem(A=sp.eye(n, format="csr"), f_max=1.0, b=b, C_b=3.0)


def test_success_prob_identity():
    system = identity_system(4)
    y = lu_solve(system.A, system.rhs).delta_x
    assert success_prob(system, y, 2.5) == pytest.approx(1 / 2.5**2)


def test_success_prob_rejects_bad_input():
    system = identity_system(3)
    with pytest.raises(ValueError):
        success_prob(system, np.ones(3), 0.0)
    with pytest.raises(ValueError):
        success_prob(system, np.ones(2), 1.0)


@pytest.mark.parametrize("name", ["diffusion", "beam"])
def test_c_delta_x_reproduces_step_norm(name):
    p = make_problem(name, 8, 8)
    x = p.initial_guess()
    system = assemble(p, NormTree(x, p.residuals(x)))
    y = lu_solve(system.A, system.rhs).delta_x
    dense_step = np.linalg.solve(system.unscaled_jacobian().toarray(), -system.b)
    a = alpha(10.0, 1e-3)
    prob = success_prob(system, y, a)
    assert prob == pytest.approx(np.linalg.norm(y) ** 2 / a**2, rel=1e-12)
    assert c_delta_x(a, system.C_b, prob, system.f_max) == pytest.approx(np.linalg.norm(dense_step), rel=1e-10)


@settings(max_examples=50)
@given(
    a=st.floats(0.1, 10),
    cb=st.floats(1e-6, 1e6),
    p=st.floats(1e-8, 1),
    fm=st.floats(1e-3, 1e3),
)
def test_c_delta_x_invariances(a, cb, p, fm):
    base = c_delta_x(a, cb, p, fm)
    assert c_delta_x(2 * a, cb, p / 4, fm) == pytest.approx(base, rel=1e-12)
    assert c_delta_x(a, cb, p, 2 * fm) == pytest.approx(base / 2, rel=1e-12)


def test_cost_inputs_validation():
    with pytest.raises(ValueError):
        CostInputs(N=1, d=3, kappa=10, eps=1e-3, eps_s=0.1)
    with pytest.raises(ValueError):
        CostInputs(N=100, d=3, kappa=0.5, eps=1e-3, eps_s=0.1)
    with pytest.raises(ValueError):
        CostInputs(N=100, d=3, kappa=10, eps=0, eps_s=0.1)
    with pytest.raises(ValueError):
        CostInputs(N=100, d=3, kappa=10, eps=1e-3, eps_s=0)


def test_query_counts_scale_with_eps_s():
    a = query_counts(CostInputs(N=40000, d=3, kappa=50, eps=1e-8, eps_s=0.01))
    b = query_counts(CostInputs(N=40000, d=3, kappa=50, eps=1e-8, eps_s=0.005))
    for key in a:
        assert b[key] / a[key] == pytest.approx(4.0, rel=1e-12)
    assert a["queries_MF"] > a["queries_Of1"] > a["queries_Of2"]


def test_t_c_linear_in_n():
    t1 = time_estimates(CostInputs(N=1000, d=3, kappa=20, eps=1e-6, eps_s=0.1))[1]
    t2 = time_estimates(CostInputs(N=4000, d=3, kappa=20, eps=1e-6, eps_s=0.1))[1]
    assert t2 / t1 == pytest.approx(4.0, rel=1e-12)


@pytest.mark.parametrize("N", [64, 256, 4096, 2**20])
def test_t_q_grows_slower_than_doubling(N):
    args = dict(d=3, kappa=20, eps=1e-6, eps_s=0.1)
    a = time_estimates(CostInputs(N=N, **args))[0]
    b = time_estimates(CostInputs(N=2 * N, **args))[0]
    assert 1.0 < b / a < 2.0


def test_crossover_ratio_decreases_with_n():
    ratios = [
        estimate(CostInputs(N=2**k, d=3, kappa=20, eps=1e-6, eps_s=0.05)).crossover_ratio for k in (10, 20, 30, 40)
    ]
    assert all(r1 > r2 for r1, r2 in zip(ratios, ratios[1:]))
    assert ratios[-1] < 1.0


def test_estimate_fields_positive():
    rep = estimate(CostInputs(N=40000, d=7, kappa=1e3, eps=1e-8, eps_s=0.005))
    for value in (rep.alpha, rep.queries_MF, rep.queries_Of1, rep.queries_Of2, rep.t_q, rep.t_c):
        assert math.isfinite(value) and value > 0


def test_doubling_d_roughly_quadruples_of1():
    a = query_counts(CostInputs(N=40000, d=3, kappa=100, eps=1e-8, eps_s=0.01))["queries_Of1"]
    b = query_counts(CostInputs(N=40000, d=6, kappa=100, eps=1e-8, eps_s=0.01))["queries_Of1"]
    assert 4.0 < b / a < 4.5


def test_t_q_gains_factor_n_at_inverse_sqrt_eps_s():
    N = 40000
    const = time_estimates(CostInputs(N=N, d=3, kappa=50, eps=1e-8, eps_s=1.0 - 1e-12))[0]
    scaled = time_estimates(CostInputs(N=N, d=3, kappa=50, eps=1e-8, eps_s=1 / math.sqrt(N)))[0]
    assert scaled / const == pytest.approx(N * (1.0 - 1e-12) ** 2, rel=1e-9)


def test_regression_values():
    # direct formula evaluation with log2 N and natural logs elsewhere
    inputs = CostInputs(N=40000, d=3, kappa=1e3, eps=1e-8, eps_s=0.005)
    q = query_counts(inputs)
    t_q, t_c, ratio = time_estimates(inputs)
    lg = math.log2(40000)
    core = 3 * 1e3 * lg / 0.005**2 * math.log(3e3 / 1e-8)
    assert q["queries_Of2"] == pytest.approx(core, rel=1e-14)
    assert q["queries_MF"] == pytest.approx((3 + lg) * core, rel=1e-14)
    assert t_q == pytest.approx(lg**2 * core * (lg + 3), rel=1e-14)
    assert t_c == pytest.approx(40000 * 3 * 1e3 * math.log(1e8), rel=1e-14)
    assert ratio == pytest.approx(t_q / t_c, rel=1e-14)
    assert ratio == pytest.approx(93741.0634, rel=1e-9)


@pytest.mark.parametrize("field", ["N", "d", "kappa"])
def test_costs_nondecreasing(field):
    base = dict(N=4096, d=3, kappa=20.0, eps=1e-6, eps_s=0.05)
    lo = estimate(CostInputs(**base))
    hi = estimate(CostInputs(**{**base, field: base[field] * 2}))
    for name in ("queries_MF", "queries_Of1", "queries_Of2", "t_q", "t_c"):
        assert getattr(hi, name) >= getattr(lo, name)


@pytest.mark.parametrize("field", ["eps", "eps_s"])
def test_costs_nonincreasing(field):
    base = dict(N=4096, d=3, kappa=20.0, eps=1e-6, eps_s=0.05)
    lo = estimate(CostInputs(**base))
    hi = estimate(CostInputs(**{**base, field: base[field] * 2}))
    for name in ("queries_MF", "queries_Of1", "queries_Of2", "t_q", "t_c"):
        assert getattr(hi, name) <= getattr(lo, name)
