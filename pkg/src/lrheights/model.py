"""Energies, single-site moves, the step transformation and its log density ratio.

Conventions
-----------
* ``H(phi) = + sum_{i != j} J(|i-j|) V(phi_i - phi_j)`` over *ordered* pairs,
  so every unordered pair is counted twice and large gradients are penalised.
* Finite-volume energies are relative: pairs with both sites outside the
  window are dropped since they never depend on the configuration.
* Sites outside the window carry the constant boundary height ``omega``.

Most functions come in two flavours: a scalar one acting on a
:class:`FieldConfig` and a ``*_batch`` one acting on an integer array of
shape ``(m, |window|)``.  The batch versions drive the exact enumeration and
the observables recorded by the sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernel import DEFAULT_EPS, CouplingKernel, tail_sum

__all__ = [
    "ModelParams",
    "FieldConfig",
    "StepProfile",
    "potential_eval",
    "potential",
    "boundary_field",
    "energy",
    "energy_batch",
    "energy_delta",
    "apply_step",
    "log_rn_derivative",
    "log_rn_batch",
]


@dataclass(frozen=True)
class ModelParams:
    """Gibbs specification: coupling kernel, inverse temperature and potential exponent."""

    kernel: CouplingKernel
    beta: float
    p: float = 2.0

    def __post_init__(self):
        if not isinstance(self.kernel, CouplingKernel):
            raise TypeError("kernel must be a CouplingKernel")
        if self.kernel.alpha <= 1:
            raise ValueError(f"the model requires alpha > 1, got {self.kernel.alpha}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 1 <= self.p <= 2:
            raise ValueError(f"p must lie in [1, 2], got {self.p}")

    @classmethod
    def of(cls, alpha: float, beta: float, p: float = 2.0, amplitude: float = 1.0) -> "ModelParams":
        return cls(CouplingKernel(float(alpha), float(amplitude)), float(beta), float(p))

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "p": self.p, "amplitude": self.kernel.amplitude}


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """Integer heights on the window ``{lo, ..., lo + len(heights) - 1}``.

    Every site outside the window has the constant height ``omega``.
    """

    heights: np.ndarray
    lo: int = 0
    omega: int = 0

    def __post_init__(self):
        h = np.asarray(self.heights)
        if h.ndim != 1 or h.size == 0:
            raise ValueError("heights must be a non-empty 1-d sequence")
        if h.dtype.kind == "f":
            if not np.all(np.isfinite(h)) or np.any(h != np.round(h)):
                raise ValueError("heights must be integers")
        elif h.dtype.kind not in "iu":
            raise ValueError("heights must be integers")
        h = h.astype(np.int64)
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "lo", int(self.lo))
        if int(self.omega) != self.omega:
            raise ValueError("boundary height must be an integer")
        object.__setattr__(self, "omega", int(self.omega))

    @classmethod
    def zeros(cls, lo: int, hi: int, omega: int = 0) -> "FieldConfig":
        if hi < lo:
            raise ValueError("empty window")
        return cls(np.zeros(hi - lo + 1, dtype=np.int64), lo, omega)

    @classmethod
    def centered(cls, heights, omega: int = 0) -> "FieldConfig":
        """Config on ``{-m..m}`` from ``2m + 1`` heights."""
        h = np.asarray(heights)
        if h.size % 2 != 1:
            raise ValueError("a centred window needs an odd number of sites")
        return cls(h, -(h.size // 2), omega)

    @property
    def hi(self) -> int:
        return self.lo + self.heights.size - 1

    @property
    def size(self) -> int:
        return self.heights.size

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    def contains(self, i: int) -> bool:
        return self.lo <= i <= self.hi

    def height(self, i: int) -> int:
        """Height at site ``i`` anywhere on the line."""
        if self.contains(i):
            return int(self.heights[i - self.lo])
        return self.omega

    def with_heights(self, heights) -> "FieldConfig":
        return FieldConfig(heights, self.lo, self.omega)

    def __eq__(self, other):
        if not isinstance(other, FieldConfig):
            return NotImplemented
        return (
            self.lo == other.lo
            and self.omega == other.omega
            and np.array_equal(self.heights, other.heights)
        )

    def __hash__(self):
        return hash((self.lo, self.omega, self.heights.tobytes()))

    def __repr__(self):
        return f"FieldConfig(lo={self.lo}, hi={self.hi}, omega={self.omega}, heights={self.heights.tolist()})"


@dataclass(frozen=True)
class StepProfile:
    """Step of height ``t`` on the box ``{|i| < n}``."""

    t: int
    n: int

    def __post_init__(self):
        if int(self.t) != self.t:
            raise ValueError("step height must be an integer")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"step half-width must be a positive integer, got {self.n}")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "n", int(self.n))

    @property
    def box(self) -> tuple[int, int]:
        return -(self.n - 1), self.n - 1

    def value(self, i: int) -> int:
        return self.t if abs(i) < self.n else 0

    def profile(self, lo: int, hi: int) -> np.ndarray:
        idx = np.arange(lo, hi + 1)
        return np.where(np.abs(idx) < self.n, self.t, 0).astype(np.int64)

    def check_inside(self, lo: int, hi: int) -> None:
        a, b = self.box
        if a < lo or b > hi:
            raise ValueError(
                f"step box {{{a}..{b}}} is not contained in the window {{{lo}..{hi}}}"
            )


def potential_eval(p: float, x) -> float:
    """``V(x) = |x|**p``."""
    return float(abs(x)) ** p


def potential(x, p: float) -> np.ndarray:
    """Vectorised ``|x|**p`` with exact fast paths for ``p = 1`` and ``p = 2``."""
    x = np.asarray(x, dtype=float)
    if p == 2:
        return x * x
    if p == 1:
        return np.abs(x)
    return np.abs(x) ** p


@lru_cache(maxsize=512)
def _boundary_field(alpha: float, amplitude: float, lo: int, hi: int, eps: float) -> np.ndarray:
    kernel = CouplingKernel(alpha, amplitude)
    out = np.array(
        [tail_sum(kernel, i - lo + 1, eps / 2) + tail_sum(kernel, hi - i + 1, eps / 2) for i in range(lo, hi + 1)]
    )
    out.setflags(write=False)
    return out


def boundary_field(kernel: CouplingKernel, lo: int, hi: int, eps: float = DEFAULT_EPS) -> np.ndarray:
    """``b_i = sum_{j outside [lo, hi]} J(|i - j|)`` for each site of the window, each to ``eps``."""
    return _boundary_field(float(kernel.alpha), float(kernel.amplitude), int(lo), int(hi), float(eps))


def _as_batch(heights) -> np.ndarray:
    h = np.asarray(heights)
    if h.ndim == 1:
        h = h[None, :]
    if h.ndim != 2:
        raise ValueError("expected an array of shape (m, window size)")
    return h.astype(np.int64, copy=False)


def energy_batch(heights, lo: int, omega: int, params: ModelParams, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Relative energies of a batch of configurations sharing window and boundary."""
    h = _as_batch(heights)
    size = h.shape[1]
    coupling = params.kernel.table(size - 1)
    p = params.p
    out = np.zeros(h.shape[0])
    for k in range(1, size):
        out += coupling[k] * potential(h[:, k:] - h[:, :-k], p).sum(axis=1)
    b = boundary_field(params.kernel, lo, lo + size - 1, eps)
    out += potential(h - omega, p) @ b
    return 2.0 * out


def energy(config: FieldConfig, params: ModelParams, eps: float = DEFAULT_EPS) -> float:
    """Relative energy ``H_window(phi | omega)`` over ordered pairs touching the window."""
    if not isinstance(config, FieldConfig):
        raise TypeError("energy needs a FieldConfig with a constant boundary height")
    return float(energy_batch(config.heights, config.lo, config.omega, params, eps)[0])


def energy_delta(config: FieldConfig, site: int, delta: int, params: ModelParams, eps: float = DEFAULT_EPS) -> float:
    """Energy change from ``phi_site -> phi_site + delta``, in ``O(|window|)``."""
    if not config.contains(site):
        raise ValueError(f"site {site} is outside the window {config.window}")
    if int(delta) != delta:
        raise ValueError("delta must be an integer")
    delta = int(delta)
    if delta == 0:
        return 0.0
    k = site - config.lo
    h = config.heights
    p = params.p
    dist = np.abs(np.arange(h.size) - k)
    dist[k] = 0
    coupling = params.kernel.table(h.size - 1)[dist]
    diff = h[k] - h
    b = boundary_field(params.kernel, config.lo, config.hi, eps)[k]
    d0 = h[k] - config.omega
    if p == 2:
        # (d + delta)^2 - d^2 = 2 delta d + delta^2
        inner = float(coupling @ (2.0 * delta * diff + delta * delta))
        outer = b * (2.0 * delta * d0 + delta * delta)
    else:
        inner = float(coupling @ (potential(diff + delta, p) - potential(diff, p)))
        outer = b * (potential_eval(p, d0 + delta) - potential_eval(p, d0))
    return 2.0 * (inner + outer)


def apply_step(config: FieldConfig, step: StepProfile) -> FieldConfig:
    """Add the step ``t`` on ``{|i| < n}``; the box must lie inside the window."""
    step.check_inside(config.lo, config.hi)
    return config.with_heights(config.heights + step.profile(config.lo, config.hi))


def log_rn_batch(
    heights,
    lo: int,
    omega: int,
    step: StepProfile,
    params: ModelParams,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Batch version of :func:`log_rn_derivative`."""
    h = _as_batch(heights)
    size = h.shape[1]
    hi = lo + size - 1
    step.check_inside(lo, hi)
    out = np.zeros(h.shape[0])
    if step.t == 0:
        return out
    a, b_ = step.box
    inside = np.arange(a - lo, b_ - lo + 1)
    outside = np.setdiff1d(np.arange(size), inside)
    coupling = params.kernel.table(size - 1)
    bfield = boundary_field(params.kernel, lo, hi, eps)
    p, t = params.p, step.t
    for k in inside:
        x = h[:, [k]] - h[:, outside]
        w = coupling[np.abs(outside - k)]
        out += (potential(x + t, p) - potential(x, p)) @ w
        d0 = h[:, k] - omega
        out += bfield[k] * (potential(d0 + t, p) - potential(d0, p))
    # only pairs with exactly one site in the box change; each appears twice as an ordered pair
    return -2.0 * params.beta * out


def log_rn_derivative(
    config: FieldConfig,
    step: StepProfile,
    params: ModelParams,
    eps: float = DEFAULT_EPS,
) -> float:
    """``-beta * (H(T phi) - H(phi))`` for the step transformation ``T``.

    Only ordered pairs with exactly one site in the box ``{|i| < n}``
    contribute, since the step difference ``a_i - a_j`` vanishes otherwise.
    """
    return float(log_rn_batch(config.heights, config.lo, config.omega, step, params, eps)[0])
