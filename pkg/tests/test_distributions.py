import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heavybandits.distributions import (
    DiscreteDist,
    DivergentMomentError,
    EmpiricalDistribution,
    GenParetoParams,
    InfiniteMeanError,
    MomentClass,
    abs_moment,
    class_max_mean,
    genpareto_mean,
    genpareto_sample,
    sample_arm,
)


# ------------------------------------------------------------ GenPareto


def test_sample_lower_endpoint():
    assert genpareto_sample(GenParetoParams(-1, 2, 0.2), 1e-15) == pytest.approx(-1.0, abs=1e-12)


def test_sample_quantile_closed_form_and_density_mass():
    gp = GenParetoParams(0, 1, 0.5)
    x = genpareto_sample(gp, 0.75)
    assert x == pytest.approx(2.0, abs=1e-12)
    mass, _ = integrate.quad(lambda v: gp.pdf(np.array([v]))[0], 0, x)
    assert mass == pytest.approx(0.75, abs=1e-10)


def test_sample_median_experiment2_arm():
    gp = GenParetoParams(2.17, 3.7, 0.5)
    # median of the stated density: mu + sigma (2^zeta - 1) / zeta
    expected = 2.17 + 3.7 * (0.5 ** -0.5 - 1) / 0.5
    assert genpareto_sample(gp, 0.5) == pytest.approx(expected, abs=1e-12)
    mass, _ = integrate.quad(lambda v: gp.pdf(np.array([v]))[0], 2.17, expected)
    assert mass == pytest.approx(0.5, abs=1e-10)


def test_sample_vectorised():
    gp = GenParetoParams(-1, 1, 0.2)
    u = np.linspace(0.01, 0.99, 7)
    out = genpareto_sample(gp, u)
    assert out.shape == (7,)
    assert np.all(np.diff(out) > 0)


@pytest.mark.parametrize("params,mean", [
    ((-1, 2, 0.2), 1.5),
    ((2.17, 3.7, 0.5), 9.57),
    ((-1, 1, 0.2), 0.25),
])
def test_genpareto_mean_values(params, mean):
    gp = GenParetoParams(*params)
    assert genpareto_mean(gp) == pytest.approx(mean, abs=1e-12)
    # quadrature of x h(x), via the tail-integrable substitution
    q, _ = integrate.quad(lambda v: v * gp.pdf(np.array([v]))[0], params[0], np.inf,
                          epsabs=0, epsrel=1e-12, limit=500)
    assert q == pytest.approx(mean, abs=1e-6)


def test_genpareto_infinite_mean():
    with pytest.raises(InfiniteMeanError):
        genpareto_mean(GenParetoParams(0, 1, 1.0))


def test_genpareto_param_validation():
    with pytest.raises(ValueError):
        GenParetoParams(0, 0, 0.5)
    with pytest.raises(ValueError):
        GenParetoParams(0, 1, 0.0)


@pytest.mark.parametrize("params", [(-1, 2, 0.2), (-1, 1, 0.2), (2.17, 3.7, 0.5), (0, 1, 0.5)])
def test_genpareto_mean_matches_sample_mean(params):
    gp = GenParetoParams(*params)
    u = np.random.default_rng(123).random(1_000_000)
    x = genpareto_sample(gp, u)
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean() - genpareto_mean(gp)) <= 3 * se


# ------------------------------------------------------------ moments


def test_abs_moment_trivial_cases():
    assert abs_moment(DiscreteDist([-1, 1], [0.5, 0.5]), 1.7) == pytest.approx(1.0, abs=1e-15)
    assert abs_moment(EmpiricalDistribution([0, 2]), 2) == pytest.approx(2.0, abs=1e-15)


def _moment_by_direct_quad(gp, p):
    # independent route: integrate |x|^p h(x) on the original axis
    f = lambda v: abs(v) ** p * gp.pdf(np.array([v]))[0]
    total = 0.0
    if gp.mu < 0:
        total += integrate.quad(f, gp.mu, 0.0, epsabs=0, epsrel=1e-12)[0]
        total += integrate.quad(f, 0.0, np.inf, epsabs=0, epsrel=1e-12, limit=500)[0]
    else:
        total += integrate.quad(f, gp.mu, np.inf, epsabs=0, epsrel=1e-12, limit=500)[0]
    return total


@pytest.mark.parametrize("params,p,B,frozen", [
    ((-1, 2, 0.2), 1.7, 7.0, 6.4791830261),
    ((-1, 1, 0.2), 1.7, 7.0, 1.7378522876),
    ((2.17, 3.7, 0.5), 1.1, 13.0, 12.900329720),
    ((-1, 2, 0.71), 1.1, 13.0, 9.9410635476),
])
def test_genpareto_abs_moment_experiment_arms(params, p, B, frozen):
    gp = GenParetoParams(*params)
    val = abs_moment(gp, p)
    assert val == pytest.approx(frozen, rel=1e-8)
    assert val == pytest.approx(_moment_by_direct_quad(gp, p), rel=1e-7)
    assert val <= B


def test_genpareto_abs_moment_monte_carlo():
    gp = GenParetoParams(-1, 1, 0.2)
    x = genpareto_sample(gp, np.random.default_rng(7).random(10_000_000))
    f = np.abs(x) ** 1.7
    se = f.std() / math.sqrt(len(f))
    assert abs(f.mean() - abs_moment(gp, 1.7)) <= 4 * se
    assert abs_moment(gp, 1.7) <= 7


def test_genpareto_divergent_moment():
    with pytest.raises(DivergentMomentError):
        abs_moment(GenParetoParams(-1, 2, 0.71), 1.7)
    with pytest.raises(DivergentMomentError):
        abs_moment(GenParetoParams(0, 1, 0.5), 2.0)


# ------------------------------------------------------------ classes


def test_class_max_mean_values():
    assert class_max_mean(MomentClass(1, 1)) == 1.0
    assert class_max_mean(MomentClass(7, 0.7)) == pytest.approx(math.exp(math.log(7) / 1.7), rel=1e-15)
    assert class_max_mean(MomentClass(7, 0.7)) == pytest.approx(3.1414, abs=1e-4)
    assert class_max_mean(MomentClass(13, 0.1)) == pytest.approx(13 ** (1 / 1.1), rel=1e-15)


@given(st.floats(0.01, 1e4), st.floats(0.01, 10))
def test_class_max_mean_power_identity(B, eps):
    cls = MomentClass(B, eps)
    assert cls.max_mean ** (1 + eps) == pytest.approx(B, rel=1e-12)


def test_class_validation():
    for B, eps in [(0, 1), (-1, 1), (1, 0), (math.inf, 1)]:
        with pytest.raises(ValueError):
            MomentClass(B, eps)


def test_class_contains():
    cls = MomentClass(1, 1)
    assert cls.contains(DiscreteDist([-1, 1], [0.5, 0.5]))
    assert not cls.contains(DiscreteDist([2], [1.0]))


# ------------------------------------------------------------ discrete


def test_discrete_validation():
    with pytest.raises(ValueError):
        DiscreteDist([0, 1], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteDist([0, 0], [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteDist([0, 1], [-0.1, 1.1])
    with pytest.raises(ValueError):
        DiscreteDist([], [])
    DiscreteDist([0, 1], [0.5, 0.5 + 5e-13])


def test_discrete_quantile_and_sampling():
    d = DiscreteDist([0, 1], [0.3, 0.7])
    assert d.quantile(0.29) == 0 and d.quantile(0.31) == 1
    u = np.random.default_rng(0).random(100_000)
    assert sample_arm(d, u).mean() == pytest.approx(0.7, abs=0.01)


# ------------------------------------------------------------ empirical


def test_empirical_running_stats():
    e = EmpiricalDistribution(epsilon=1.0)
    assert len(e) == 0
    with pytest.raises(ValueError):
        e.mean()
    e.push(2.0)
    e.extend([-1.0, 3.0])
    assert e.count == 3
    assert e.running_sum == pytest.approx(4.0)
    assert e.running_abs_moment == pytest.approx(4 + 1 + 9)
    assert e.mean() == pytest.approx(4 / 3)
    assert np.array_equal(e.points, [2.0, -1.0, 3.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=300), st.floats(0.05, 3))
def test_empirical_incremental_equals_batch(values, eps):
    inc = EmpiricalDistribution(epsilon=eps)
    for v in values:
        before = inc.points.copy()
        inc.push(v)
        assert np.array_equal(inc.points[:-1], before)
    batch = np.asarray(values)
    assert inc.count == len(values)
    scale = 1 + np.abs(batch).sum()
    assert abs(inc.running_sum - batch.sum()) <= 1e-10 * scale
    mom = (np.abs(batch) ** (1 + eps)).sum()
    assert inc.running_abs_moment == pytest.approx(mom, rel=1e-10, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=10_000), st.floats(1.01, 3))
def test_empirical_abs_moment_is_plain_average(values, p):
    e = EmpiricalDistribution(values, epsilon=p - 1)
    expected = np.mean(np.abs(np.asarray(values)) ** p)
    assert abs_moment(e, p) == pytest.approx(expected, rel=1e-13, abs=1e-300)
    e2 = EmpiricalDistribution(values)
    assert abs_moment(e2, p) == pytest.approx(expected, rel=1e-13, abs=1e-300)


def test_empirical_copy_is_independent():
    e = EmpiricalDistribution([1.0, 2.0], epsilon=1.0)
    c = e.copy()
    c.push(5.0)
    assert len(e) == 2 and len(c) == 3
