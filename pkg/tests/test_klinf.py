import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavybandits.distributions import (
    DiscreteDist,
    EmpiricalDistribution,
    GenParetoParams,
    MomentClass,
    genpareto_sample,
)
from heavybandits.klinf import (
    DualPoint,
    InfeasibleTargetError,
    dual_box,
    dual_constraint,
    dual_feasible,
    dual_objective,
    kl_divergence,
    klinf,
    klinf_bounded01,
    moment_projection,
    primal_reconstruct,
)

from oracles import (
    binary_kl,
    klinf_grid,
    klinf_reference,
    klinf_point_mass_zero,
    random_discrete_instance,
)

TWO_POINT = DiscreteDist([0, 1], [0.5, 0.5])
C41 = MomentClass(4, 1)


# ------------------------------------------------------------ dual objective


def test_dual_objective_at_origin_is_zero():
    assert dual_objective(TWO_POINT, 0.3, C41, (0, 0)) == 0.0
    assert dual_objective(DiscreteDist([-2, 5], [0.1, 0.9]), -1.0, MomentClass(30, 0.5), (0, 0)) == 0.0


def test_dual_objective_point_mass_at_target():
    d = DiscreteDist.point_mass(0.7)
    assert dual_objective(d, 0.7, C41, (0.9, 0.0)) == 0.0


def test_dual_objective_two_point_golden():
    # slacks by hand: 1 + 0.8*0.3 - 4*0.05 = 1.04 and 1 - 0.2*0.3 - 3*0.05 = 0.79
    expected = 0.5 * (math.log(1.04) + math.log(0.79))
    assert dual_objective(TWO_POINT, 0.8, C41, DualPoint(0.3, 0.05)) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(-0.0982508, abs=1e-7)


def test_dual_objective_sentinel():
    assert dual_objective(TWO_POINT, 0.8, C41, (10.0, 0.0)) == -math.inf


# ------------------------------------------------------------ feasibility


def test_dual_feasible_examples():
    assert dual_feasible((0, 0), 0.3, C41)
    assert not dual_feasible((0.2, 0), 0.3, C41)
    assert dual_feasible((0, 1 / (2 * (1 - 0))), 0.0, MomentClass(1, 1))
    assert dual_constraint((0, 0.5), 0.0, MomentClass(1, 1)) == pytest.approx(-0.5)
    assert not dual_feasible((-0.1, 0.1), 0.0, C41)


def test_dual_box_examples():
    assert dual_box(0.0, MomentClass(1, 1)) == (1.0, 1.0)
    b1, b2 = dual_box(1.5, MomentClass(7, 0.7))
    assert b1 == pytest.approx(1 / (7 ** (1 / 1.7) - 1.5), rel=1e-14)
    assert b2 == pytest.approx(1 / (7 - 1.5 ** 1.7), rel=1e-14)
    assert b1 == pytest.approx(0.60925, abs=1e-5)
    assert b2 == pytest.approx(0.1997, abs=1e-4)
    x = 0.99 * 7 ** (1 / 1.7)
    b1, _ = dual_box(x, MomentClass(7, 0.7))
    assert b1 == pytest.approx(1 / (0.01 * 7 ** (1 / 1.7)), rel=1e-12)
    assert math.isfinite(b1)


def test_dual_box_infeasible_target():
    with pytest.raises(InfeasibleTargetError):
        dual_box(2.0, C41)
    with pytest.raises(InfeasibleTargetError):
        dual_box(-2.5, C41)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 20), st.floats(0.1, 3), st.floats(-0.99, 0.99), st.floats(1e-3, 1e3),
       st.floats(0, 1))
def test_feasible_region_inside_box(B, eps, frac, y, shrink):
    # boundary points of R(x, B) are parametrised by the extra-atom position y
    cls = MomentClass(B, eps)
    x = frac * cls.max_mean
    D = B + eps * y ** (1 + eps) - (1 + eps) * x * y ** eps
    lam = np.array([(1 + eps) * y ** eps / D, 1 / D]) * shrink
    assert dual_feasible(lam, x, cls, tol=1e-9)
    b1, b2 = dual_box(x, cls)
    assert lam[0] <= b1 * (1 + 1e-9) and lam[1] <= b2 * (1 + 1e-9)


# ------------------------------------------------------------ klinf values


def test_klinf_zero_when_target_reached_in_class():
    r = klinf(TWO_POINT, 0.5, C41)
    assert r.value == 0.0 and r.dual == DualPoint(0, 0)
    assert klinf(TWO_POINT, -0.3, C41).value == 0.0


def test_klinf_point_mass_at_class_edge():
    cls = MomentClass(7, 0.7)
    d = DiscreteDist.point_mass(cls.max_mean)
    for x in (-1.0, 0.0, 2.0, cls.max_mean):
        assert klinf(d, x, cls).value == 0.0


def test_klinf_beyond_class_edge_is_infinite():
    assert klinf(TWO_POINT, 2.0, C41).value == math.inf
    assert klinf(TWO_POINT, 2.5, C41).value == math.inf


def test_klinf_point_mass_zero_closed_form():
    r = klinf(DiscreteDist.point_mass(0.0), 0.5, C41)
    assert r.value == pytest.approx(math.log(16 / 15), abs=1e-12)
    assert r.extra_support == pytest.approx(8.0, rel=1e-9)
    assert r.extra_mass == pytest.approx(1 / 16, rel=1e-9)
    val, y = klinf_point_mass_zero(0.5, 4.0, 1.0)
    assert r.value == pytest.approx(val, abs=1e-10)
    assert r.extra_support == pytest.approx(y, rel=1e-5)


@pytest.mark.parametrize("x,B,eps", [(0.5, 4, 1), (0.2, 1, 0.5), (1.0, 3, 2), (-0.2, 2, 0.3)])
def test_klinf_point_mass_zero_matches_curve_oracle(x, B, eps):
    r = klinf(DiscreteDist.point_mass(0.0), x, MomentClass(B, eps))
    val, y = klinf_point_mass_zero(x, B, eps)
    if x <= 0:
        assert r.value == 0.0
    else:
        assert r.value == pytest.approx(val, abs=1e-9)


def test_klinf_two_point_golden_against_grid():
    r = klinf(TWO_POINT, 0.8, C41)
    grid, _ = klinf_grid([0, 1], [0.5, 0.5], 0.8, 4.0, 1.0)
    assert r.value == pytest.approx(0.024666157960130757, abs=1e-12)
    assert abs(r.value - grid) <= 1e-4
    assert r.value >= grid - 1e-12  # the grid is a lower bound


@pytest.mark.parametrize("seed", range(10))
def test_klinf_matches_grid_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    xs, w, B, eps, x = random_discrete_instance(rng)
    r = klinf(DiscreteDist(xs, w), x, MomentClass(B, eps))
    grid = klinf_reference(xs, w, x, B, eps)
    assert abs(r.value - grid) <= 1e-6
    assert r.value >= grid - 1e-9


def test_klinf_large_sample_experiment_value():
    u = np.random.default_rng(2024).random(100_000)
    d = EmpiricalDistribution(genpareto_sample(GenParetoParams(-1, 1, 0.2), u), epsilon=0.7)
    r = klinf(d, 1.5, MomentClass(7, 0.7))
    assert 0.08 <= r.value <= 0.12
    assert dual_feasible(r.dual, 1.5, MomentClass(7, 0.7), tol=1e-9)


def test_klinf_empty_distribution():
    with pytest.raises(ValueError):
        klinf(EmpiricalDistribution(), 0.1, C41)


def test_klinf_derivative_is_lambda1():
    d = DiscreteDist([-1, 0.5, 2], [0.3, 0.5, 0.2])
    cls = MomentClass(5, 0.8)
    x, h = 0.9, 1e-6
    r = klinf(d, x, cls)
    fd = (klinf(d, x + h, cls).value - klinf(d, x - h, cls).value) / (2 * h)
    assert fd == pytest.approx(r.dual.lambda1, rel=1e-6)


def test_klinf_warm_start_same_answer():
    d = DiscreteDist([-1, 0.5, 2], [0.3, 0.5, 0.2])
    cls = MomentClass(5, 0.8)
    cold = klinf(d, 1.0, cls)
    warm = klinf(d, 1.05, cls, start=cold.dual)
    ref = klinf(d, 1.05, cls)
    assert warm.value == pytest.approx(ref.value, abs=1e-12)


def test_klinf_below_negative_edge_only_moment_binds():
    d = DiscreteDist([-3, 3], [0.5, 0.5])  # moment 9 > B
    cls = MomentClass(4, 1)
    floor, mean = moment_projection(d, cls)
    assert klinf(d, -2.5, cls).value == pytest.approx(floor, abs=1e-12)
    assert klinf(d, -1.0, cls).value == pytest.approx(floor, abs=1e-9)


def test_klinf_outside_class_is_positive_even_below_mean():
    d = DiscreteDist([-3, 3], [0.5, 0.5])
    r = klinf(d, -0.5, MomentClass(4, 1))
    assert r.value > 0


def test_dual_is_feasible_and_extra_atom_on_zero_slack():
    rng = np.random.default_rng(9)
    for _ in range(30):
        xs, w, B, eps, x = random_discrete_instance(rng)
        cls = MomentClass(B, eps)
        r = klinf(DiscreteDist(xs, w), x, cls)
        assert r.value >= 0
        assert dual_feasible(r.dual, x, cls, tol=1e-9)
        if r.extra_support is not None:
            l1, l2 = r.dual
            y = r.extra_support
            slack = 1 - (y - x) * l1 - (B - abs(y) ** (1 + eps)) * l2
            assert abs(slack) <= 1e-6


# ------------------------------------------------------------ primal


def test_primal_reconstruct_trivial():
    wts, y = primal_reconstruct(TWO_POINT, 0.4, C41, DualPoint(0, 0))
    assert np.allclose(wts, [0.5, 0.5]) and y is None


def test_primal_reconstruct_two_point_golden():
    r = klinf(TWO_POINT, 0.8, C41)
    wts, y = primal_reconstruct(TWO_POINT, 0.8, C41, r.dual)
    assert y is not None
    mass = 1 - wts.sum()
    kl = kl_divergence([0.5, 0.5], wts)
    assert kl == pytest.approx(r.value, abs=1e-4)
    mean = np.dot(wts, [0, 1]) + mass * y
    moment = np.dot(wts, [0, 1]) + mass * y ** 2
    assert mean >= 0.8 - 1e-6
    assert moment <= 4 + 1e-6


def test_primal_reconstruct_point_mass_zero():
    r = klinf(DiscreteDist.point_mass(0.0), 0.5, C41)
    wts, y = primal_reconstruct(DiscreteDist.point_mass(0.0), 0.5, C41, r.dual)
    assert wts[0] < 1 and y > 0.5
    assert wts[0] == pytest.approx(15 / 16, rel=1e-9)
    assert y == pytest.approx(8.0, rel=1e-9)


def test_primal_reconstruct_rejects_non_optimal_dual():
    # lam1 = 0 with lam2 > 0 inflates every weight when all moments are small
    with pytest.raises(ValueError):
        primal_reconstruct(TWO_POINT, 0.8, C41, DualPoint(0.0, 0.2))


@pytest.mark.parametrize("seed", range(15))
def test_primal_reconstruct_random(seed):
    rng = np.random.default_rng(500 + seed)
    xs, w, B, eps, x = random_discrete_instance(rng)
    cls = MomentClass(B, eps)
    d = DiscreteDist(xs, w)
    r = klinf(d, x, cls)
    if r.value == 0 or not math.isfinite(r.value):
        return
    wts, y = primal_reconstruct(d, x, cls, r.dual)
    mass = max(1 - wts.sum(), 0.0)
    ext = 0.0 if y is None else mass * y
    ext_m = 0.0 if y is None else mass * abs(y) ** (1 + eps)
    assert kl_divergence(w, wts) == pytest.approx(r.value, abs=1e-6)
    assert np.dot(wts, xs) + ext >= x - 1e-6
    assert np.dot(wts, np.abs(xs) ** (1 + eps)) + ext_m <= B + 1e-6


# ------------------------------------------------------------ bounded support


def test_bounded_binary_kl_example():
    d = DiscreteDist([0, 1], [0.7, 0.3])
    assert klinf_bounded01(d, 0.5) == pytest.approx(binary_kl(0.3, 0.5), abs=1e-12)
    assert klinf_bounded01(d, 0.5) == pytest.approx(0.0822826, abs=1e-6)


def test_bounded_zero_when_mean_reached():
    assert klinf_bounded01(DiscreteDist([0, 1], [0.3, 0.7]), 0.5) == 0.0


def test_bounded_point_mass_zero():
    assert klinf_bounded01(DiscreteDist.point_mass(0.0), 0.5) == pytest.approx(math.log(2), abs=1e-12)
    grid = np.linspace(0, 2, 200_001)
    assert max(np.log1p(0.5 * grid)) == pytest.approx(math.log(2), abs=1e-12)


def test_bounded_errors():
    with pytest.raises(ValueError):
        klinf_bounded01(DiscreteDist([0, 2], [0.5, 0.5]), 0.5)
    with pytest.raises(ValueError):
        klinf_bounded01(TWO_POINT, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 0.999))
def test_bounded_matches_binary_kl(p, x):
    if abs(p - x) < 0.01:
        return
    if p in (0.0, 1.0):
        d = DiscreteDist.point_mass(p)
    else:
        d = DiscreteDist([0, 1], [1 - p, p])
    expected = binary_kl(p, x) if x > p else 0.0
    assert klinf_bounded01(d, x) == pytest.approx(expected, abs=1e-8)


def test_bounded_general_support_against_grid():
    d = DiscreteDist([0.1, 0.4, 0.9], [0.5, 0.3, 0.2])
    x = 0.7
    lam = np.linspace(0, 1 / (1 - x), 400_001)
    xs, w = d.support()
    obj = np.log(1 - np.outer(lam, xs - x)) @ w
    assert klinf_bounded01(d, x) == pytest.approx(obj.max(), abs=1e-9)


# ------------------------------------------------------------ properties


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_and_convex_in_x(seed):
    rng = np.random.default_rng(seed)
    xs, w, B, eps, _ = random_discrete_instance(rng)
    cls = MomentClass(B, eps)
    d = DiscreteDist(xs, w)
    grid = np.linspace(-0.99 * cls.max_mean, 0.99 * cls.max_mean, 25)
    vals = np.array([klinf(d, x, cls).value for x in grid])
    assert np.all(np.diff(vals) >= -1e-9)
    mids = np.array([klinf(d, x, cls).value for x in 0.5 * (grid[1:] + grid[:-1])])
    assert np.all(mids <= 0.5 * (vals[1:] + vals[:-1]) + 1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 3.0))
def test_nonincreasing_in_B(seed, factor):
    rng = np.random.default_rng(seed)
    xs, w, B, eps, x = random_discrete_instance(rng)
    d = DiscreteDist(xs, w)
    small = klinf(d, x, MomentClass(B, eps)).value
    big = klinf(d, x, MomentClass(B * factor, eps)).value
    assert big <= small + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_iff_feasible(seed):
    rng = np.random.default_rng(seed)
    xs, w, B, eps, x = random_discrete_instance(rng)
    cls = MomentClass(B, eps)
    d = DiscreteDist(xs, w)
    v = klinf(d, x, cls).value
    feasible = np.dot(xs, w) >= x and np.dot(np.abs(xs) ** (1 + eps), w) <= B
    assert (v == 0.0) == feasible or abs(np.dot(xs, w) - x) < 1e-6


def test_tiny_but_positive_when_barely_infeasible():
    # mean just below x, small epsilon: a far atom of negligible mass closes the gap
    xs = [0.60004406, -1.77543145, -0.37415814]
    w = [0.08854751, 0.16327744, 0.74817505]
    w = np.array(w) / sum(w)
    cls = MomentClass(1.02219903006179, 0.11748503898997203)
    v = klinf(DiscreteDist(xs, w), -0.5096679092785623, cls).value
    assert 0.0 < v < 1e-12
