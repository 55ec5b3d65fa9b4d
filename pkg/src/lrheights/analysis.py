"""Estimators and fits: height moments, box averages, relative-entropy ledgers, scaling exponents."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exact import ExactDistribution, moment, re_via_formula
from .kernel import DEFAULT_EPS, cross_sum, cross_sums
from .model import FieldConfig, ModelParams, StepProfile, potential
from .observables import log_rn_name, site_height, site_name
from .sampler import ProposalLaw, RunRecord, Schedule, run_chain

__all__ = [
    "MomentReport",
    "ReLedger",
    "ExponentFit",
    "ProfilePoint",
    "integrated_autocorr_time",
    "mean_with_error",
    "ergodic_average",
    "moments",
    "c2_constant",
    "c1_exact",
    "c1_from_second_moment",
    "re_bound_eval",
    "re_ledger",
    "re_mc_estimate",
    "fit_exponent",
    "fit_cross_sum_constants",
    "variance_profile",
]


def integrated_autocorr_time(x, c: float = 6.0) -> float:
    """Integrated autocorrelation time ``1/2 + sum_t rho(t)`` with self-consistent window.

    The window is the smallest ``M`` with ``M >= c * tau(M)``.  An exactly
    constant series returns ``0.5``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return 0.5
    y = x - x.mean()
    var = float(y @ y) / n
    if var == 0.0:
        return 0.5
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (var * n)
    tau = np.cumsum(acf) - 0.5
    for m in range(1, n):
        if m >= c * tau[m]:
            return float(max(tau[m], 0.5))
    return float(max(tau[-1], 0.5))


def mean_with_error(x) -> tuple[float, float, float]:
    """``(mean, standard error, tau_int)`` of a correlated series."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    tau = integrated_autocorr_time(x)
    var = float(x.var())
    return float(x.mean()), math.sqrt(2.0 * tau * var / x.size), tau


@dataclass(frozen=True)
class MomentReport:
    """Estimates of ``<phi_0>``, ``<|phi_0|>`` and ``<phi_0^2>`` with standard errors.

    Oracle-backed reports carry zero errors and ``autocorrelation_time = 0``.
    """

    mean: float
    mean_se: float
    mean_abs: float
    mean_abs_se: float
    second_moment: float
    second_moment_se: float
    autocorrelation_time: float
    n_samples: int


def ergodic_average(config: FieldConfig, n: int) -> float:
    """Box average ``(1/2n) sum_{|i| <= n} phi_i`` (``2n + 1`` sites over ``2n``)."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not (config.contains(-n) and config.contains(n)):
        raise ValueError(f"box {{-{n}..{n}}} is not contained in the window {config.window}")
    k = -n - config.lo
    return float(config.heights[k : k + 2 * n + 1].sum()) / (2 * n)


def moments(source, site: int = 0) -> MomentReport:
    """Height moments at ``site`` from an exact table or a recorded chain.

    A :class:`RunRecord` must carry the series ``phi_<site>``.
    """
    if isinstance(source, ExactDistribution):
        marg = source.marginal([site])
        levels = np.arange(-source.kmax, source.kmax + 1, dtype=float)
        return MomentReport(
            mean=float(marg @ levels),
            mean_se=0.0,
            mean_abs=float(marg @ np.abs(levels)),
            mean_abs_se=0.0,
            second_moment=float(marg @ levels**2),
            second_moment_se=0.0,
            autocorrelation_time=0.0,
            n_samples=source.n_states,
        )
    if isinstance(source, RunRecord):
        x = source[site_name(site)]
        if x.size == 0:
            raise ValueError("cannot estimate moments from an empty series")
        m, m_se, t0 = mean_with_error(x)
        a, a_se, t1 = mean_with_error(np.abs(x))
        s, s_se, t2 = mean_with_error(x * x)
        return MomentReport(m, m_se, a, a_se, s, s_se, max(t0, t1, t2), int(x.size))
    raise TypeError(f"cannot compute moments of {type(source).__name__}")


def c2_constant(p: float) -> float:
    """Coefficient of ``t**p`` in the per-pair bound: 1 for ``p = 2``, ``2**(p-1)`` otherwise."""
    return 1.0 if p == 2 else 2.0 ** (p - 1)


def _cross_pairs(step: StepProfile, lo: int, hi: int):
    a, b = step.box
    inside = range(a, b + 1)
    outside = [j for j in range(lo, hi + 1) if not a <= j <= b]
    return inside, outside


def c1_exact(dist: ExactDistribution, n: int) -> float:
    """``(2**(p-1) - 1) * max <|phi_i - phi_j|**p>`` over cross pairs, exactly from the table.

    Zero for ``p`` in ``{1, 2}``.  Partners ``j`` beyond the window sit at ``omega``.
    """
    p = dist.params.p
    if p in (1.0, 2.0):
        return 0.0
    step = StepProfile(0, n)
    step.check_inside(dist.lo, dist.hi)
    inside, outside = _cross_pairs(step, dist.lo, dist.hi)
    levels = np.arange(-dist.kmax, dist.kmax + 1)
    v = potential(levels[:, None] - levels[None, :], p)
    worst = 0.0
    for i in inside:
        marg_i = dist.marginal([i])
        worst = max(worst, float(marg_i @ potential(levels - dist.omega, p)))
        for j in outside:
            worst = max(worst, float(np.sum(dist.marginal([i, j]) * v)))
    return (2.0 ** (p - 1) - 1.0) * worst


def c1_from_second_moment(second_moment: float, p: float, omega: int = 0) -> float:
    """Second-moment bound on the ``C1`` term.

    ``<|phi_i - phi_j|**p> <= <(phi_i - phi_j)**2>**(p/2) <= (4 m2)**(p/2)`` where
    ``m2`` bounds every ``<phi_i**2>`` (and ``omega**2``).
    """
    if p in (1.0, 2.0):
        return 0.0
    m2 = max(float(second_moment), float(omega) ** 2)
    return (2.0 ** (p - 1) - 1.0) * (4.0 * m2) ** (p / 2)


def re_bound_eval(params: ModelParams, t: int, n: int, c1: float = 0.0, eps: float = DEFAULT_EPS) -> float:
    """``beta * 2 X(n) * (C1 + C2 |t|**p)``, the cross-pair relative-entropy bound."""
    if c1 < 0:
        raise ValueError("C1 must be nonnegative")
    if t == 0 and c1 == 0:
        return 0.0
    x = cross_sum(params.kernel, n, eps)
    return params.beta * 2.0 * x * (c1 + c2_constant(params.p) * abs(t) ** params.p)


@dataclass(frozen=True)
class ReLedger:
    n: int
    t: int
    formula_value: float
    bound_value: float
    c1: float
    c2: float
    numerical_error: float

    @property
    def holds(self) -> bool:
        return self.formula_value <= self.bound_value + self.numerical_error

    @property
    def slack(self) -> float:
        return self.bound_value - self.formula_value


def re_ledger(dist: ExactDistribution, t: int, n: int, c1: float | None = None, strict: bool = True) -> ReLedger:
    """Pair the formula-level relative entropy with its cross-pair bound.

    ``C1`` defaults to :func:`c1_exact` (zero for ``t = 0``, where the step is
    the identity).  With ``strict`` a violated inequality raises
    ``ArithmeticError``.
    """
    params = dist.params
    step = StepProfile(t, n)
    step.check_inside(dist.lo, dist.hi)
    if c1 is None:
        c1 = c1_exact(dist, n) if t != 0 else 0.0
    formula = re_via_formula(dist, step)
    bound = re_bound_eval(params, t, n, c1, dist.eps)
    # each boundary field is certified to eps and multiplies at most |V(x+t) - V(x)|
    reach = 2 * dist.kmax + abs(dist.omega) + abs(t)
    err = 2 * params.beta * dist.eps * (2 * n - 1) * (reach**params.p + 1) * 2
    err += 1e-12 * max(abs(formula), abs(bound))
    ledger = ReLedger(n, t, formula, bound, c1, c2_constant(params.p), err)
    if strict and not ledger.holds:
        raise ArithmeticError(f"relative-entropy bound violated: {formula} > {bound}")
    return ledger


def re_mc_estimate(record: RunRecord, t: int, n: int) -> tuple[float, float]:
    """Monte-Carlo relative entropy: mean of ``-log_rn`` over the recorded samples, with its error."""
    values = -record[log_rn_name(t, n)]
    if values.size == 0:
        raise ValueError("empty series")
    mean, se, _ = mean_with_error(values)
    return mean, se


@dataclass(frozen=True)
class ExponentFit:
    xs: np.ndarray
    ys: np.ndarray
    slope: float
    intercept: float
    ci_lo: float
    ci_hi: float
    r2: float
    stderr: float

    def predict(self, x) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_exponent(xs, ys, confidence: float = 0.95) -> ExponentFit:
    """Least-squares slope of ``log ys`` against ``log xs`` with a t-based confidence interval."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if xs.size < 4:
        raise ValueError(f"need at least 4 points, got {xs.size}")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise ValueError("sizes and statistics must be positive")
    res = stats.linregress(np.log(xs), np.log(ys))
    half = stats.t.ppf(0.5 + confidence / 2, xs.size - 2) * res.stderr
    return ExponentFit(
        xs, ys, float(res.slope), float(res.intercept),
        float(res.slope - half), float(res.slope + half), float(res.rvalue**2), float(res.stderr),
    )


def fit_cross_sum_constants(kernel, ns, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """Least-squares ``(C3, C4)`` in ``X(n) ~ C3 + C4 n**(2 - alpha)``, a descriptive summary only."""
    ns = np.asarray(ns, dtype=float)
    design = np.column_stack([np.ones_like(ns), ns ** (2 - kernel.alpha)])
    coef, *_ = np.linalg.lstsq(design, cross_sums(kernel, ns.astype(int), eps), rcond=None)
    return float(coef[0]), float(coef[1])


@dataclass(frozen=True)
class ProfilePoint:
    n: int
    variance: float
    se: float
    tau: float
    acceptance_rate: float


def _profile_cell(params: ModelParams, n: int, schedule: Schedule, seed: int, proposal: ProposalLaw) -> ProfilePoint:
    cell_seed = int(np.random.SeedSequence([seed, n]).generate_state(1)[0])
    rec = run_chain(
        params, (-n, n), proposal, schedule, {site_name(0): site_height(0, -n)}, seed=cell_seed, omega=0
    )
    x = rec[site_name(0)]
    if x.size == 0:
        raise ValueError("schedule yields no measurements")
    centred = (x - x.mean()) ** 2
    var, se, tau = mean_with_error(centred)
    return ProfilePoint(int(n), var, se, tau, rec.acceptance_rate)


def variance_profile(
    params: ModelParams,
    sizes,
    schedule: Schedule,
    seed: int = 0,
    proposal: ProposalLaw = ProposalLaw(),
    n_jobs: int = 1,
) -> list[ProfilePoint]:
    """``Var(phi_0)`` on ``{-n..n}`` with zero boundary for each ``n`` in ``sizes``.

    Each size gets its own chain seeded from ``(seed, n)``, so the profile
    does not depend on ``n_jobs``.
    """
    sizes = [int(n) for n in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            futures = [pool.submit(_profile_cell, params, n, schedule, seed, proposal) for n in sizes]
            points = [f.result() for f in futures]
    else:
        points = [_profile_cell(params, n, schedule, seed, proposal) for n in sizes]
    return sorted(points, key=lambda pt: pt.n)
