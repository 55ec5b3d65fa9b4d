"""Metropolis sampling of the finite-volume measure over unbounded integer heights.

The hot loop is compiled with numba.  Random numbers come from a numpy
``Generator`` and are drawn in blocks before each compiled call, one
proposal and one uniform per site visit, so a trajectory is a deterministic
function of the seed.  The uniform is consumed even when the move lowers the
energy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numba
import numpy as np

from .exact import _decode
from .kernel import DEFAULT_EPS
from .model import FieldConfig, ModelParams, boundary_field, energy, energy_delta

__all__ = [
    "ProposalLaw",
    "Schedule",
    "ChainState",
    "RunRecord",
    "metropolis_step",
    "sweep",
    "run_chain",
    "transition_matrix",
]

Observable = Callable[[np.ndarray], np.ndarray]

_BLOCK = 1 << 18  # site visits drawn per block


@dataclass(frozen=True)
class ProposalLaw:
    """Symmetric proposal for the height increment at one site.

    ``unit-step`` draws ``+-1``.  ``geometric-step`` draws ``|delta| >= 1``
    with ``P(|delta| = k) = (1 - q)**(k - 1) * q`` and a uniform sign.
    """

    kind: str = "unit-step"
    q: float = 0.5

    def __post_init__(self):
        if self.kind not in ("unit-step", "geometric-step"):
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        if not 0 < self.q <= 1:
            raise ValueError(f"geometric parameter must be in (0, 1], got {self.q}")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        sign = 2 * rng.integers(0, 2, size=size, dtype=np.int64) - 1
        if self.kind == "unit-step":
            return sign
        return sign * rng.geometric(self.q, size=size).astype(np.int64)

    def pmf(self, delta: int) -> float:
        k = abs(int(delta))
        if k == 0:
            return 0.0
        if self.kind == "unit-step":
            return 0.5 if k == 1 else 0.0
        return 0.5 * (1 - self.q) ** (k - 1) * self.q

    def support(self, max_abs: int) -> list[int]:
        top = 1 if self.kind == "unit-step" else max_abs
        return [d for k in range(1, top + 1) for d in (-k, k)]


@dataclass(frozen=True)
class Schedule:
    """Burn-in sweeps, measurement sweeps and the thinning interval between measurements."""

    burn_in: int = 0
    sweeps: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.sweeps < 0:
            raise ValueError("sweep counts must be nonnegative")
        if self.thin < 1:
            raise ValueError("thinning interval must be >= 1")

    @property
    def n_measurements(self) -> int:
        return self.sweeps // self.thin


@numba.njit(cache=True)
def _local_delta(h, k, d, coupling, bfield, omega, p):
    hk = h[k]
    s = 0.0
    if p == 2.0:
        for j in range(h.shape[0]):
            if j != k:
                x = hk - h[j]
                s += coupling[abs(k - j)] * (2 * d * x + d * d)
        x = hk - omega
        s += bfield[k] * (2 * d * x + d * d)
    elif p == 1.0:
        for j in range(h.shape[0]):
            if j != k:
                x = hk - h[j]
                s += coupling[abs(k - j)] * (abs(x + d) - abs(x))
        x = hk - omega
        s += bfield[k] * (abs(x + d) - abs(x))
    else:
        for j in range(h.shape[0]):
            if j != k:
                x = float(hk - h[j])
                s += coupling[abs(k - j)] * (abs(x + d) ** p - abs(x) ** p)
        x = float(hk - omega)
        s += bfield[k] * (abs(x + d) ** p - abs(x) ** p)
    return 2.0 * s


@numba.njit(cache=True)
def _moves(h, sites, deltas, uniforms, coupling, bfield, omega, beta, p, e):
    acc = 0
    for m in range(sites.shape[0]):
        k = sites[m]
        d = deltas[m]
        dh = _local_delta(h, k, d, coupling, bfield, omega, p)
        if dh <= 0.0 or uniforms[m] < math.exp(-beta * dh):
            h[k] += d
            e += dh
            acc += 1
    return acc, e


@numba.njit(cache=True)
def _sweeps(h, deltas, uniforms, coupling, bfield, omega, beta, p, e, g0, burn_in, thin, snaps):
    nsw, size = deltas.shape
    acc = 0
    rec = 0
    for s in range(nsw):
        for k in range(size):
            d = deltas[s, k]
            dh = _local_delta(h, k, d, coupling, bfield, omega, p)
            if dh <= 0.0 or uniforms[s, k] < math.exp(-beta * dh):
                h[k] += d
                e += dh
                acc += 1
        g = g0 + s + 1
        if g > burn_in and (g - burn_in) % thin == 0:
            snaps[rec, :] = h
            rec += 1
    return acc, e, rec


@dataclass(eq=False)
class ChainState:
    """Mutable state of one Markov chain; the step functions update it in place."""

    heights: np.ndarray
    lo: int
    omega: int
    params: ModelParams
    rng: np.random.Generator
    cached_energy: float
    sweep_count: int = 0
    proposed: int = 0
    accepted: int = 0
    eps: float = DEFAULT_EPS
    _coupling: np.ndarray = field(init=False, repr=False)
    _bfield: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.heights = np.ascontiguousarray(self.heights, dtype=np.int64).copy()
        self._coupling = self.params.kernel.table(self.heights.size - 1)
        self._bfield = np.array(boundary_field(self.params.kernel, self.lo, self.hi, self.eps))

    @classmethod
    def start(cls, config: FieldConfig, params: ModelParams, seed, eps: float = DEFAULT_EPS) -> "ChainState":
        rng = np.random.default_rng(seed)
        return cls(config.heights, config.lo, config.omega, params, rng, energy(config, params, eps), eps=eps)

    @property
    def hi(self) -> int:
        return self.lo + self.heights.size - 1

    @property
    def config(self) -> FieldConfig:
        return FieldConfig(self.heights.copy(), self.lo, self.omega)

    @property
    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    def recomputed_energy(self) -> float:
        return energy(self.config, self.params, self.eps)

    def _kernel_args(self):
        return self._coupling, self._bfield, self.omega, self.params.beta, float(self.params.p)


def metropolis_step(state: ChainState, site: int, proposal: ProposalLaw = ProposalLaw()) -> ChainState:
    """Propose ``phi_site += delta`` and accept with probability ``min(1, exp(-beta dH))``."""
    if not state.lo <= site <= state.hi:
        raise ValueError(f"site {site} outside the window [{state.lo}, {state.hi}]")
    delta = proposal.draw(state.rng, 1)
    u = state.rng.random(1)
    sites = np.array([site - state.lo], dtype=np.int64)
    acc, state.cached_energy = _moves(state.heights, sites, delta, u, *state._kernel_args(), state.cached_energy)
    state.proposed += 1
    state.accepted += acc
    return state


def sweep(state: ChainState, proposal: ProposalLaw = ProposalLaw()) -> ChainState:
    """One Metropolis update at every site, scanning the window left to right."""
    size = state.heights.size
    deltas = proposal.draw(state.rng, size)
    u = state.rng.random(size)
    sites = np.arange(size, dtype=np.int64)
    acc, state.cached_energy = _moves(state.heights, sites, deltas, u, *state._kernel_args(), state.cached_energy)
    state.proposed += size
    state.accepted += acc
    state.sweep_count += 1
    return state


@dataclass(eq=False)
class RunRecord:
    """Outcome of :func:`run_chain`: observable series plus everything needed to reproduce them."""

    seed: int
    params: ModelParams
    window: tuple[int, int]
    omega: int
    proposal: ProposalLaw
    schedule: Schedule
    sweeps: np.ndarray
    series: dict[str, np.ndarray]
    acceptance_rate: float
    final_energy: float
    recomputed_energy: float

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.series[name]
        except KeyError:
            raise KeyError(f"observable {name!r} was not recorded; have {sorted(self.series)}") from None

    def __eq__(self, other):
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (
            self.json_entry() == other.json_entry()
            and np.array_equal(self.sweeps, other.sweeps)
            and self.series.keys() == other.series.keys()
            and all(np.array_equal(self.series[k], other.series[k]) for k in self.series)
        )

    def json_entry(self, series_path: str | None = None) -> dict:
        return {
            "seed": self.seed,
            "params": self.params.as_dict(),
            "window": list(self.window),
            "omega": self.omega,
            "proposal": {"kind": self.proposal.kind, "q": self.proposal.q},
            "schedule": {"burn_in": self.schedule.burn_in, "sweeps": self.schedule.sweeps, "thin": self.schedule.thin},
            "acceptance_rate": self.acceptance_rate,
            "observables": list(self.series),
            "n_measurements": int(self.sweeps.size),
            "series": series_path,
        }

    def to_jsonl(self, path, series_path: str | None = None) -> None:
        with open(path, "a") as fh:
            fh.write(json.dumps(self.json_entry(series_path), sort_keys=True) + "\n")

    def write_series_csv(self, path) -> None:
        names = list(self.series)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sweep", *names])
            cols = [self.series[n].tolist() for n in names]
            for i, s in enumerate(self.sweeps.tolist()):
                writer.writerow([s, *(repr(float(c[i])) for c in cols)])


def run_chain(
    params: ModelParams,
    window: tuple[int, int],
    proposal: ProposalLaw = ProposalLaw(),
    schedule: Schedule = Schedule(),
    observables: Mapping[str, Observable] | None = None,
    seed: int = 0,
    omega: int = 0,
    init: FieldConfig | None = None,
    eps: float = DEFAULT_EPS,
) -> RunRecord:
    """Run burn-in plus measurement sweeps and record observables every ``thin`` sweeps.

    Observables receive the stored configurations as an ``(m, |window|)``
    integer array and return one value per row.
    """
    lo, hi = (int(w) for w in window)
    observables = dict(observables or {})
    config = init if init is not None else FieldConfig.zeros(lo, hi, omega)
    if config.window != (lo, hi) or config.omega != omega:
        raise ValueError("initial configuration does not match window and boundary")
    state = ChainState.start(config, params, seed, eps)
    size = hi - lo + 1
    total = schedule.burn_in + schedule.sweeps
    block = max(1, _BLOCK // size)
    parts: dict[str, list[np.ndarray]] = {name: [] for name in observables}
    stamps: list[np.ndarray] = []
    done = 0
    while done < total:
        nsw = min(block, total - done)
        deltas = proposal.draw(state.rng, (nsw, size))
        u = state.rng.random((nsw, size))
        snaps = np.empty((nsw // schedule.thin + 1, size), dtype=np.int64)
        acc, state.cached_energy, rec = _sweeps(
            state.heights, deltas, u, *state._kernel_args(), state.cached_energy,
            done, schedule.burn_in, schedule.thin, snaps,
        )
        state.accepted += acc
        state.proposed += nsw * size
        if rec:
            snaps = snaps[:rec]
            g = np.arange(done + 1, done + nsw + 1)
            stamps.append(g[(g > schedule.burn_in) & ((g - schedule.burn_in) % schedule.thin == 0)])
            for name, fn in observables.items():
                vals = np.asarray(fn(snaps), dtype=float)
                if vals.shape != (rec,):
                    raise ValueError(f"observable {name!r} must return one value per configuration")
                parts[name].append(vals)
        done += nsw
    state.sweep_count = total
    sweeps = np.concatenate(stamps) if stamps else np.zeros(0, dtype=np.int64)
    series = {name: (np.concatenate(v) if v else np.zeros(0)) for name, v in parts.items()}
    return RunRecord(
        seed=seed,
        params=params,
        window=(lo, hi),
        omega=omega,
        proposal=proposal,
        schedule=schedule,
        sweeps=sweeps,
        series=series,
        acceptance_rate=state.acceptance_rate,
        final_energy=state.cached_energy,
        recomputed_energy=state.recomputed_energy(),
    )


def transition_matrix(
    window: tuple[int, int],
    kmax: int,
    omega: int,
    params: ModelParams,
    proposal: ProposalLaw = ProposalLaw(),
    scan: str = "sequential",
    site: int | None = None,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """One-step Metropolis kernel on the truncated space ``{-K..K}**window``.

    States are indexed like :class:`~lrheights.exact.ExactDistribution`.
    Proposals leaving the truncated space are rejected (counted as holds).
    ``site`` selects a single-site kernel; otherwise ``scan`` is either
    ``"sequential"`` (product of the site kernels, left to right) or
    ``"random"`` (their average).
    """
    lo, hi = window
    size = hi - lo + 1
    base = 2 * kmax + 1
    states = _decode(np.arange(base**size), (base,) * size, kmax)

    def site_kernel(s: int) -> np.ndarray:
        k = s - lo
        mat = np.zeros((states.shape[0], states.shape[0]))
        for x, hx in enumerate(states):
            cfg = FieldConfig(hx, lo, omega)
            for d in proposal.support(2 * kmax):
                target = hx[k] + d
                if abs(target) > kmax:
                    continue
                hy = hx.copy()
                hy[k] = target
                y = int(np.ravel_multi_index(tuple(hy + kmax), (base,) * size))
                dh = energy_delta(cfg, s, d, params, eps)
                mat[x, y] += proposal.pmf(d) * min(1.0, math.exp(-params.beta * dh))
            mat[x, x] += 1.0 - mat[x].sum()
        return mat

    if site is not None:
        return site_kernel(site)
    kernels = [site_kernel(s) for s in range(lo, hi + 1)]
    if scan == "sequential":
        out = kernels[0]
        for m in kernels[1:]:
            out = out @ m
        return out
    if scan == "random":
        return sum(kernels) / size
    raise ValueError(f"unknown scan {scan!r}")
