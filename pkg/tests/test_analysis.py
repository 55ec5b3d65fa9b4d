import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lrheights.analysis import (
    c1_exact,
    c1_from_second_moment,
    c2_constant,
    ergodic_average,
    fit_cross_sum_constants,
    fit_exponent,
    integrated_autocorr_time,
    mean_with_error,
    moments,
    re_bound_eval,
    re_ledger,
    re_mc_estimate,
    variance_profile,
)
from lrheights.exact import enumerate_measure, re_via_formula
from lrheights.kernel import CouplingKernel, cross_sum, cross_sums
from lrheights.model import FieldConfig, ModelParams, StepProfile
from lrheights.observables import log_rn_name, log_rn_observable, site_height, site_name
from lrheights.sampler import ProposalLaw, RunRecord, Schedule, run_chain


def test_ergodic_average_examples():
    assert ergodic_average(FieldConfig.zeros(-3, 3), 2) == 0.0
    assert ergodic_average(FieldConfig.centered([1, 1, 1]), 1) == 1.5
    assert ergodic_average(FieldConfig.centered([1, 2, 3, 4, 5]), 2) == 3.75
    # only the box {-n..n} enters
    assert ergodic_average(FieldConfig.centered([9, 1, 2, 3, 9]), 1) == 3.0


def test_ergodic_average_box_must_fit():
    with pytest.raises(ValueError):
        ergodic_average(FieldConfig.centered([1, 2, 3]), 2)
    with pytest.raises(ValueError):
        ergodic_average(FieldConfig.zeros(0, 5), 1)


def test_autocorr_iid_and_constant():
    x = np.random.default_rng(0).normal(size=100_000)
    assert integrated_autocorr_time(x) == pytest.approx(0.5, abs=0.05)
    assert integrated_autocorr_time(np.full(100, 2.0)) == 0.5


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_autocorr_ar1(rho):
    rng = np.random.default_rng(1)
    n = 400_000
    noise = rng.normal(size=n)
    x = np.empty(n)
    x[0] = noise[0]
    for k in range(1, n):
        x[k] = rho * x[k - 1] + noise[k]
    expected = (1 + rho) / (2 * (1 - rho))
    assert integrated_autocorr_time(x) == pytest.approx(expected, rel=0.1)


def test_mean_with_error():
    m, se, tau = mean_with_error(np.full(50, -2.0))
    assert (m, se, tau) == (-2.0, 0.0, 0.5)
    x = np.random.default_rng(2).normal(3.0, 2.0, size=40_000)
    m, se, _ = mean_with_error(x)
    assert se == pytest.approx(2.0 / math.sqrt(x.size), rel=0.1)
    with pytest.raises(ValueError):
        mean_with_error([])


@pytest.fixture(scope="module")
def dist5():
    return enumerate_measure((-2, 2), 4, 0, ModelParams.of(2.5, 1.0, 1.5))


def test_moments_oracle_path(dist5):
    rep = moments(dist5)
    assert abs(rep.mean) < 1e-15
    assert rep.mean_se == rep.mean_abs_se == rep.second_moment_se == 0.0
    h = dist5.configs()
    assert rep.mean_abs == pytest.approx(math.fsum(dist5.table * np.abs(h[:, 2])), rel=1e-12)
    assert rep.second_moment == pytest.approx(math.fsum(dist5.table * h[:, 2] ** 2.0), rel=1e-12)
    assert rep.second_moment > rep.mean_abs**2
    side = moments(dist5, site=-2)
    assert side.second_moment == pytest.approx(math.fsum(dist5.table * h[:, 0] ** 2.0), rel=1e-12)


def _record(series):
    params = ModelParams.of(2.5, 1.0)
    return RunRecord(
        seed=0, params=params, window=(-1, 1), omega=0, proposal=ProposalLaw(), schedule=Schedule(0, len(series)),
        sweeps=np.arange(1, len(series) + 1), series={site_name(0): np.asarray(series, dtype=float)},
        acceptance_rate=0.0, final_energy=0.0, recomputed_energy=0.0,
    )


def test_moments_constant_series():
    rep = moments(_record([-3] * 100))
    assert rep.mean_abs == 3.0 and rep.mean_abs_se == 0.0
    assert rep.second_moment == 9.0 and rep.second_moment_se == 0.0
    assert rep.n_samples == 100


def test_moments_errors():
    with pytest.raises(ValueError):
        moments(_record([]))
    with pytest.raises(KeyError):
        moments(_record([1.0]), site=1)
    with pytest.raises(TypeError):
        moments([1, 2, 3])


def test_c2_constant():
    assert c2_constant(2.0) == 1.0
    assert c2_constant(1.0) == 1.0
    assert c2_constant(1.5) == pytest.approx(2**0.5)


def test_re_bound_examples():
    params = ModelParams.of(2.0, 1.0, 2.0)
    assert re_bound_eval(params, 0, 1) == 0.0
    assert re_bound_eval(params, 2, 1) == pytest.approx(8 * math.pi**2 / 3, abs=1e-8)
    assert 8 * math.pi**2 / 3 == pytest.approx(26.318945, abs=1e-6)
    with pytest.raises(ValueError):
        re_bound_eval(params, 1, 1, c1=-1.0)


def test_re_bound_converges_above_two():
    params = ModelParams.of(2.5, 1.0, 1.5)
    vals = np.array([re_bound_eval(params, 2, n, c1=0.3) for n in 2 ** np.arange(2, 13)])
    assert np.all(np.diff(vals) > 0)
    steps = np.diff(vals)
    assert np.all(steps[1:] < steps[:-1])
    assert vals[-1] - vals[-2] < 0.01 * vals[-1]


@given(
    t1=st.integers(0, 10), t2=st.integers(0, 10),
    c1a=st.floats(0, 10), c1b=st.floats(0, 10),
    p=st.floats(1.0, 2.0), n=st.integers(1, 50),
)
@settings(max_examples=50, deadline=None)
def test_re_bound_monotone(t1, t2, c1a, c1b, p, n):
    params = ModelParams.of(2.3, 0.7, p)
    lo_t, hi_t = sorted((t1, t2))
    lo_c, hi_c = sorted((c1a, c1b))
    assert re_bound_eval(params, lo_t, n, lo_c) <= re_bound_eval(params, hi_t, n, lo_c) * (1 + 1e-12)
    assert re_bound_eval(params, hi_t, n, lo_c) <= re_bound_eval(params, hi_t, n, hi_c) * (1 + 1e-12)


def test_c1_values(dist5):
    assert c1_exact(enumerate_measure((-1, 1), 3, 0, ModelParams.of(2.5, 1.0, 2.0)), 1) == 0.0
    c1 = c1_exact(dist5, 2)
    assert c1 > 0
    # exact C1 sits below the second-moment bound built from the largest site variance
    m2 = max(moments(dist5, site=s).second_moment for s in range(-2, 3))
    assert c1 <= c1_from_second_moment(m2, 1.5)
    # brute force over the marginals of the cross pairs of the step with n = 2
    h = dist5.configs()
    best = 0.0
    for i in (-1, 0, 1):
        best = max(best, math.fsum(dist5.table * np.abs(h[:, i + 2]) ** 1.5))
        for j in (-2, 2):
            best = max(best, math.fsum(dist5.table * np.abs(h[:, i + 2] - h[:, j + 2]) ** 1.5))
    assert c1 == pytest.approx((2**0.5 - 1) * best, rel=1e-12)


def test_ledger_zero_step(dist5):
    led = re_ledger(dist5, 0, 1)
    assert led.formula_value == 0.0 and led.bound_value == 0.0 and led.holds


@pytest.mark.parametrize("t,n", [(1, 1), (2, 2), (3, 1)])
def test_ledger_tight_for_quadratic(t, n):
    params = ModelParams.of(2.5, 1.3, 2.0)
    dist = enumerate_measure((-2, 2), 4, 0, params)
    led = re_ledger(dist, t, n)
    expected = params.beta * t**2 * 2 * cross_sum(params.kernel, n)
    assert led.formula_value == pytest.approx(expected, rel=1e-8)
    assert led.bound_value == pytest.approx(led.formula_value, rel=1e-8)
    assert led.c1 == 0.0 and led.c2 == 1.0


@pytest.mark.parametrize("t,n", [(1, 1), (2, 2)])
def test_ledger_strict_for_intermediate_p(dist5, t, n):
    led = re_ledger(dist5, t, n)
    assert led.formula_value < led.bound_value
    assert led.slack > 0


def test_ledger_raises_when_violated():
    # a table skewed toward a raised centre is not the Gibbs measure; its
    # linear term breaks the quadratic bound
    dist = enumerate_measure((-1, 1), 3, 0, ModelParams.of(2.5, 1.0, 2.0))
    skewed = np.zeros(dist.n_states)
    skewed[dist.index_of([0, 3, 0])] = 1.0
    bad = dist.with_table(skewed)
    led = re_ledger(bad, 1, 1, strict=False)
    assert not led.holds
    with pytest.raises(ArithmeticError):
        re_ledger(bad, 1, 1)


def _mc_record(params, t, n, sweeps, seed, window=(-2, 2)):
    step = StepProfile(t, n)
    obs = {log_rn_name(t, n): log_rn_observable(step, params, window[0])}
    return run_chain(params, window, ProposalLaw(), Schedule(500, sweeps), obs, seed=seed)


def test_re_mc_zero_step():
    params = ModelParams.of(2.5, 1.0, 1.5)
    rec = _mc_record(params, 0, 1, 200, 0)
    assert re_mc_estimate(rec, 0, 1) == (0.0, 0.0)
    with pytest.raises(KeyError):
        re_mc_estimate(rec, 1, 1)


@pytest.mark.parametrize("p", [1.0, 1.5])
def test_re_mc_matches_oracle(p):
    params = ModelParams.of(2.5, 0.8, p)
    dist = enumerate_measure((-2, 2), 5, 0, params)
    exact = re_via_formula(dist, StepProfile(2, 2))
    mean, se = re_mc_estimate(_mc_record(params, 2, 2, 100_000, 3), 2, 2)
    assert abs(mean - exact) < 3 * se + dist.boundary_mass


def test_re_mc_quadratic_decomposition():
    params = ModelParams.of(2.5, 1.0, 2.0)
    rec = _mc_record(params, 1, 1, 100_000, 5)
    values = -rec[log_rn_name(1, 1)]
    assert values.std() > 0.1
    mean, se = re_mc_estimate(rec, 1, 1)
    assert abs(mean - 2 * cross_sum(params.kernel, 1)) < 3 * se


def test_re_mc_error_shrinks_with_length():
    params = ModelParams.of(2.5, 0.8, 1.5)
    exact = re_via_formula(enumerate_measure((-2, 2), 5, 0, params), StepProfile(1, 1))
    rms = []
    for sweeps in (1000, 4000, 16000, 64000):
        errs = [re_mc_estimate(_mc_record(params, 1, 1, sweeps, seed), 1, 1)[0] - exact for seed in range(12)]
        rms.append(math.sqrt(np.mean(np.square(errs))))
    assert all(b < a for a, b in zip(rms, rms[1:]))


def test_fit_exponent_examples():
    xs = np.array([16.0, 32, 64, 128, 256])
    fit = fit_exponent(xs, xs)
    assert fit.slope == pytest.approx(1.0, abs=1e-12) and fit.r2 == pytest.approx(1.0)
    fit = fit_exponent(xs, 7.0 * xs**0.5)
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(fit.predict(xs), 7.0 * xs**0.5, rtol=1e-12)


def test_fit_exponent_against_polyfit():
    rng = np.random.default_rng(3)
    xs = np.array([4.0, 8, 16, 32, 64, 128])
    ys = 2.0 * xs**0.8 * np.exp(rng.normal(0, 0.1, xs.size))
    fit = fit_exponent(xs, ys)
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    assert fit.slope == pytest.approx(slope, rel=1e-12)
    assert fit.intercept == pytest.approx(intercept, rel=1e-12)
    resid = np.log(ys) - (slope * np.log(xs) + intercept)
    r2 = 1 - resid @ resid / np.sum((np.log(ys) - np.log(ys).mean()) ** 2)
    assert fit.r2 == pytest.approx(r2, rel=1e-12)
    assert fit.ci_lo < fit.slope < fit.ci_hi


def test_fit_exponent_errors():
    with pytest.raises(ValueError):
        fit_exponent([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_exponent([1, 2, 3, 4], [1, 2, 0, 4])
    with pytest.raises(ValueError):
        fit_exponent([1, 2, 3, 4], [1, 2, 3])


@given(
    ys=st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=10),
    scale=st.floats(1e-3, 1e3),
    xfactor=st.floats(0.1, 10.0),
)
def test_fit_exponent_invariances(ys, scale, xfactor):
    xs = np.arange(1, len(ys) + 1, dtype=float) * 3
    assume(np.ptp(np.log(ys)) > 1e-6)
    base = fit_exponent(xs, ys).slope
    assert abs(fit_exponent(xs, np.array(ys) * scale).slope - base) < 1e-12 * max(1, abs(base)) * 10
    assert abs(fit_exponent(xs * xfactor, ys).slope - base) < 1e-12 * max(1, abs(base)) * 10


def test_fit_on_tail_increments():
    ns = 2 ** np.arange(4, 12)
    kern = CouplingKernel(1.5)
    inc = cross_sums(kern, 2 * ns) - cross_sums(kern, ns)
    assert fit_exponent(ns, inc).slope == pytest.approx(0.5, abs=0.05)
    kern = CouplingKernel(2.5)
    inc = cross_sums(kern, 2 * ns) - cross_sums(kern, ns)
    assert fit_exponent(ns, inc).slope == pytest.approx(-0.5, abs=0.05)


def test_cross_sum_constants():
    kern = CouplingKernel(2.5)
    ns = 2 ** np.arange(4, 13)
    c3, c4 = fit_cross_sum_constants(kern, ns)
    assert c3 == pytest.approx(cross_sum(kern, 2**12), rel=0.01)
    assert c4 < 0


def test_variance_profile_deterministic_and_parallel():
    params = ModelParams.of(3.0, 1.0, 2.0)
    sched = Schedule(200, 2000)
    a = variance_profile(params, [2, 4, 8], sched, seed=5)
    b = variance_profile(params, [2, 4, 8], sched, seed=5)
    c = variance_profile(params, [2, 4, 8], sched, seed=5, n_jobs=2)
    assert a == b == c
    assert [pt.n for pt in a] == [2, 4, 8]
    with pytest.raises(ValueError):
        variance_profile(params, [4, 2], sched)


def test_variance_profile_stiff_chain():
    params = ModelParams.of(3.5, 20.0, 2.0)
    (pt,) = variance_profile(params, [1], Schedule(100, 20_000), seed=1)
    exact = moments(enumerate_measure((-1, 1), 2, 0, params)).second_moment
    assert 0 <= pt.variance < 1e-3
    assert exact < 1e-3


def test_variance_profile_weak_coupling_grows():
    params = ModelParams.of(3.5, 0.05, 2.0)
    pts = variance_profile(params, [1, 2, 4, 8], Schedule(2000, 200_000, 5), seed=3,
                           proposal=ProposalLaw("geometric-step", 0.3))
    var = [pt.variance for pt in pts]
    se = [pt.se for pt in pts]
    assert all(v2 - s2 > v1 + s1 for v1, s1, v2, s2 in zip(var, se, var[1:], se[1:]))
    # smallest size checked against enumeration
    dist = enumerate_measure((-1, 1), 25, 0, params)
    assert dist.boundary_mass < 1e-6
    exact = moments(dist).second_moment
    assert abs(var[0] - exact) < 4 * se[0]
