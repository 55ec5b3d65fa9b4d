"""Brute-force finite-volume Gibbs measures on truncated height spaces.

Heights are restricted to ``{-K, ..., K}`` and every configuration of the
window is enumerated.  Configuration ids follow ``itertools.product`` order
(first site most significant), so the id of ``-phi`` is ``N - 1 - id(phi)``.
Every distribution carries its boundary-layer mass, the total probability of
configurations touching the truncation level, as a certificate that ``K`` is
large enough.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp, rel_entr

from .kernel import DEFAULT_EPS
from .model import ModelParams, StepProfile, boundary_field, potential

__all__ = [
    "BudgetExceededError",
    "ExactDistribution",
    "enumerate_measure",
    "moment",
    "relative_entropy",
    "re_via_formula",
    "dlr_residual",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 10**7
_CHUNK = 1 << 18

Observable = Callable[[np.ndarray], np.ndarray]


class BudgetExceededError(RuntimeError):
    """Raised when an enumeration would exceed the configured state budget."""


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Probability table of the truncated finite-volume measure.

    Attributes
    ----------
    lo, hi : int
        Window ``{lo..hi}``.
    kmax : int
        Height truncation ``K``.
    omega : int
        Constant boundary height outside the window.
    params : ModelParams
    table : ndarray of shape ``((2K+1)**|window|,)``
        Probabilities in configuration-id order.
    log_z : float
        Log partition function of the truncated measure (relative energies).
    boundary_mass : float
        Probability of the configurations with some ``|phi_i| = K``.
    """

    lo: int
    hi: int
    kmax: int
    omega: int
    params: ModelParams
    table: np.ndarray
    log_z: float
    boundary_mass: float
    eps: float = DEFAULT_EPS

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def base(self) -> int:
        return 2 * self.kmax + 1

    @property
    def n_states(self) -> int:
        return self.table.size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.base,) * self.size

    def configs(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Heights of configuration ids ``start..stop-1`` as an ``(m, size)`` array."""
        stop = self.n_states if stop is None else stop
        return _decode(np.arange(start, stop), self.shape, self.kmax)

    def chunks(self, chunk: int = _CHUNK) -> Iterator[tuple[slice, np.ndarray]]:
        for start in range(0, self.n_states, chunk):
            stop = min(start + chunk, self.n_states)
            yield slice(start, stop), self.configs(start, stop)

    def index_of(self, heights) -> int:
        h = np.asarray(heights, dtype=np.int64)
        if h.shape != (self.size,) or np.any(np.abs(h) > self.kmax):
            raise ValueError("configuration outside the truncated space")
        return int(np.ravel_multi_index(tuple(h + self.kmax), self.shape))

    def probability(self, heights) -> float:
        return float(self.table[self.index_of(heights)])

    def marginal(self, sites) -> np.ndarray:
        """Joint law of the heights at ``sites`` (absolute indices), axes in the given order."""
        axes = [s - self.lo for s in sites]
        if any(a < 0 or a >= self.size for a in axes) or len(set(axes)) != len(axes):
            raise ValueError(f"sites {sites} not distinct sites of the window")
        tab = self.table.reshape(self.shape)
        others = tuple(a for a in range(self.size) if a not in axes)
        marg = tab.sum(axis=others)
        kept = sorted(axes)
        return np.transpose(marg, [kept.index(a) for a in axes])

    def with_table(self, table) -> "ExactDistribution":
        """Same configuration space with a different probability table."""
        table = np.asarray(table, dtype=float)
        if table.shape != self.table.shape:
            raise ValueError("table does not match the configuration space")
        return dataclasses.replace(self, table=table, log_z=float("nan"))

    def to_csv(self, path) -> None:
        """Write ``config_id, h_<site>..., probability`` rows."""
        header = ["config_id"] + [f"h_{i}" for i in range(self.lo, self.hi + 1)] + ["probability"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for sl, hs in self.chunks():
                for cid, row, pr in zip(range(sl.start, sl.stop), hs.tolist(), self.table[sl].tolist()):
                    writer.writerow([cid, *row, repr(pr)])


def _decode(ids: np.ndarray, shape: tuple[int, ...], kmax: int) -> np.ndarray:
    digits = np.unravel_index(ids, shape)
    return np.stack(digits, axis=1).astype(np.int64) - kmax


def _broadcast(values: np.ndarray, axes: tuple[int, ...], ndim: int) -> np.ndarray:
    order = np.argsort(axes)
    values = np.transpose(values, order)
    axes = tuple(axes[k] for k in order)
    shape = [1] * ndim
    for ax, n in zip(axes, values.shape):
        shape[ax] = n
    return values.reshape(shape)


def _energy_tensor(lo, hi, kmax, omega, params, eps) -> np.ndarray:
    # every term of the energy depends on at most two heights, so the full
    # tensor is a sum of broadcast one- and two-site tables
    size = hi - lo + 1
    levels = np.arange(-kmax, kmax + 1)
    diff = levels[:, None] - levels[None, :]
    v_pair = potential(diff, params.p)
    coupling = params.kernel.table(size - 1)
    bfield = boundary_field(params.kernel, lo, hi, eps)
    v_site = potential(levels - omega, params.p)
    out = np.zeros((2 * kmax + 1,) * size)
    for a in range(size):
        out += _broadcast(2.0 * bfield[a] * v_site, (a,), size)
        for b in range(a + 1, size):
            out += _broadcast(2.0 * coupling[b - a] * v_pair, (a, b), size)
    return out


def _edge_mass(tab: np.ndarray) -> float:
    # split by the first site sitting at +-K so the pieces are disjoint
    edge = [0, -1]
    total = 0.0
    for a in range(tab.ndim):
        lead = (slice(1, -1),) * a
        total += float(tab[lead + (edge,)].sum())
    return total


def enumerate_measure(
    window: tuple[int, int],
    kmax: int,
    omega: int,
    params: ModelParams,
    eps: float = DEFAULT_EPS,
    budget: int = DEFAULT_BUDGET,
) -> ExactDistribution:
    """Enumerate the finite-volume measure on ``window`` with heights in ``{-K..K}``."""
    lo, hi = (int(w) for w in window)
    if hi < lo:
        raise ValueError("empty window")
    if int(kmax) != kmax or kmax < 1:
        raise ValueError(f"kmax must be a positive integer, got {kmax}")
    if not isinstance(params, ModelParams):
        raise TypeError("params must be a ModelParams")
    kmax = int(kmax)
    size = hi - lo + 1
    n_states = (2 * kmax + 1) ** size
    if n_states > budget:
        raise BudgetExceededError(f"{n_states} states exceed the enumeration budget of {budget}")
    logw = -params.beta * _energy_tensor(lo, hi, kmax, omega, params, eps).ravel()
    log_z = float(logsumexp(logw))
    table = np.exp(logw - log_z, out=logw)
    boundary_mass = _edge_mass(table.reshape((2 * kmax + 1,) * size))
    return ExactDistribution(lo, hi, kmax, int(omega), params, table, log_z, boundary_mass, eps)


def moment(dist: ExactDistribution, observable: Observable) -> float:
    """``sum_phi P(phi) * observable(phi)``; observables map ``(m, size)`` heights to ``(m,)``."""
    total = 0.0
    for sl, hs in dist.chunks():
        vals = np.asarray(observable(hs), dtype=float)
        if vals.shape != (hs.shape[0],):
            raise ValueError("observable must return one value per configuration")
        total += float(dist.table[sl] @ vals)
    return total


def _table_of(x) -> np.ndarray:
    if isinstance(x, ExactDistribution):
        return x.table
    return np.asarray(x, dtype=float)


def relative_entropy(dist_a, dist_b) -> float:
    """``sum a log(a/b)`` in nats; ``inf`` when ``a`` charges a point where ``b`` vanishes.

    Both arguments must describe the same configuration space; a structural
    mismatch raises ``ValueError``.
    """
    if isinstance(dist_a, ExactDistribution) and isinstance(dist_b, ExactDistribution):
        if (dist_a.lo, dist_a.hi, dist_a.kmax) != (dist_b.lo, dist_b.hi, dist_b.kmax):
            raise ValueError("distributions live on different configuration spaces")
    a, b = _table_of(dist_a), _table_of(dist_b)
    if a.shape != b.shape:
        raise ValueError(f"table shapes differ: {a.shape} vs {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("probability tables must be nonnegative")
    return float(np.sum(rel_entr(a, b)))


def re_via_formula(dist: ExactDistribution, step: StepProfile) -> float:
    """Expected ``-log(d nu_step / d nu)`` under ``dist``.

    Equals ``beta * <H(T phi) - H(phi)>``, the relative entropy between the
    measure and its step-shifted image computed at the level of the density
    ratio, which sidesteps the differing supports of the truncated tables.
    """
    step.check_inside(dist.lo, dist.hi)
    if step.t == 0:
        return 0.0
    return -float(np.sum(dist.table.reshape(dist.shape) * _log_rn_tensor(dist, step)))


def _log_rn_tensor(dist: ExactDistribution, step: StepProfile) -> np.ndarray:
    size, p, t = dist.size, dist.params.p, step.t
    levels = np.arange(-dist.kmax, dist.kmax + 1)
    diff = levels[:, None] - levels[None, :]
    dv_pair = potential(diff + t, p) - potential(diff, p)
    dv_site = potential(levels + t - dist.omega, p) - potential(levels - dist.omega, p)
    coupling = dist.params.kernel.table(size - 1)
    bfield = boundary_field(dist.params.kernel, dist.lo, dist.hi, dist.eps)
    a0, a1 = step.box
    inside = list(range(a0 - dist.lo, a1 - dist.lo + 1))
    outside = [k for k in range(size) if k not in inside]
    out = np.zeros(dist.shape)
    for a in inside:
        out += _broadcast(bfield[a] * dv_site, (a,), size)
        for b in outside:
            out += _broadcast(coupling[abs(b - a)] * dv_pair, (a, b), size)
    out *= -2.0 * dist.params.beta
    return out

def dlr_residual(dist: ExactDistribution, subwindow: tuple[int, int], budget: int = DEFAULT_BUDGET) -> float:
    """Total-variation distance between ``dist`` and its DLR recomposition on ``subwindow``.

    The conditional law on the subwindow is rebuilt from scratch: for every
    configuration of the remaining sites, the subwindow is re-enumerated with
    those sites (and ``omega`` beyond the window) as boundary.  Applied to a
    table produced by :func:`enumerate_measure` the residual only reflects
    floating-point round-off, because both sides use the same truncation.
    """
    slo, shi = (int(w) for w in subwindow)
    if not (dist.lo <= slo <= shi <= dist.hi) or (slo, shi) == (dist.lo, dist.hi):
        raise ValueError("subwindow must be a proper sub-interval of the window")
    if dist.n_states > budget:
        raise BudgetExceededError(f"{dist.n_states} states exceed the budget of {budget}")
    size, k = dist.size, dist.kmax
    sub = np.arange(slo - dist.lo, shi - dist.lo + 1)
    rest = np.setdiff1d(np.arange(size), sub)
    base = dist.base

    # reorder axes to (rest..., sub...)
    tab = dist.table.reshape(dist.shape).transpose(list(rest) + list(sub))
    tab = tab.reshape(base ** rest.size, base ** sub.size)

    s_conf = _decode(np.arange(base ** sub.size), (base,) * sub.size, k)
    r_conf = _decode(np.arange(base ** rest.size), (base,) * rest.size, k)
    params, p = dist.params, dist.params.p
    coupling = params.kernel.table(size - 1)
    outer = boundary_field(params.kernel, dist.lo, dist.hi, dist.eps)

    e_sub = np.zeros(s_conf.shape[0])
    for a in range(sub.size):
        for b in range(a + 1, sub.size):
            e_sub += coupling[sub[b] - sub[a]] * potential(s_conf[:, a] - s_conf[:, b], p)
        e_sub += outer[sub[a]] * potential(s_conf[:, a] - dist.omega, p)
    e_cross = np.zeros((r_conf.shape[0], s_conf.shape[0]))
    for a in range(sub.size):
        for b in range(rest.size):
            j = coupling[abs(int(sub[a]) - int(rest[b]))]
            e_cross += j * potential(s_conf[None, :, a] - r_conf[:, b, None], p)
    logw = -params.beta * 2.0 * (e_sub[None, :] + e_cross)
    cond = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    recomposed = tab.sum(axis=1, keepdims=True) * cond
    return 0.5 * float(np.abs(tab - recomposed).sum())
