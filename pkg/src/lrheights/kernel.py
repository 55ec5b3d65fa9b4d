"""Long-range coupling constants and their certified tail sums.

The coupling between sites ``i`` and ``j`` is ``J(|i - j|)`` with the pure
power law ``J(k) = amplitude * k**(-alpha)``.  Every infinite sum over
distances is evaluated by direct summation up to a cutoff plus a second
order Euler-Maclaurin remainder whose error is bounded rigorously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "CouplingKernel",
    "kernel_eval",
    "tail_sum",
    "tail_sum_with_error",
    "cross_sum",
    "cross_sums",
]

DEFAULT_EPS = 1e-10


@dataclass(frozen=True)
class CouplingKernel:
    """Pure power-law coupling ``J(k) = amplitude * k**(-alpha)`` for ``k >= 1``.

    Only the positive pure-power form is supported.  Summations require
    ``alpha > 1``; :func:`kernel_eval` works for any positive exponent.
    """

    alpha: float
    amplitude: float = 1.0
    form: str = "pure-power"

    def __post_init__(self):
        if self.form != "pure-power":
            raise ValueError(f"unsupported kernel form {self.form!r}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be a positive finite number, got {self.alpha}")
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")

    def __call__(self, k):
        return kernel_eval(self, k)

    def table(self, kmax: int) -> np.ndarray:
        """Couplings for distances ``0..kmax`` with ``J(0) = 0`` (no self-interaction)."""
        out = np.zeros(kmax + 1)
        if kmax >= 1:
            out[1:] = self.amplitude * np.arange(1, kmax + 1, dtype=float) ** (-self.alpha)
        return out


def kernel_eval(kernel: CouplingKernel, k) -> float:
    """Coupling at integer distance ``k >= 1``."""
    if isinstance(k, (bool, np.bool_)) or int(k) != k:
        raise ValueError(f"distance must be an integer, got {k!r}")
    k = int(k)
    if k < 1:
        raise ValueError(f"distance must be >= 1 (no self-interaction), got {k}")
    return kernel.amplitude * float(k) ** (-kernel.alpha)


def _require_summable(kernel: CouplingKernel) -> None:
    if kernel.alpha <= 1:
        raise ValueError(f"tail sums diverge for alpha <= 1 (alpha={kernel.alpha})")


def _em_cutoff(alpha: float, amplitude: float, m: int, eps: float) -> int:
    # Remainder after the f'(K)/12 term is bounded by |f'(K)|/12 = A*alpha*K^(-alpha-1)/12.
    k = (amplitude * alpha / (12.0 * eps)) ** (1.0 / (alpha + 1.0))
    return max(int(m), int(math.ceil(k)), 8)


@lru_cache(maxsize=4096)
def _tail(alpha: float, amplitude: float, m: int, eps: float) -> tuple[float, float]:
    cutoff = _em_cutoff(alpha, amplitude, m, eps / 2)
    if cutoff > m:
        ks = np.arange(m, cutoff, dtype=float)
        head = math.fsum(amplitude * ks ** (-alpha))
    else:
        head = 0.0
    c = float(cutoff)
    f = amplitude * c ** (-alpha)
    integral = amplitude * c ** (1.0 - alpha) / (alpha - 1.0)
    slope_term = amplitude * alpha * c ** (-alpha - 1.0) / 12.0
    remainder_bound = slope_term
    value = head + integral + 0.5 * f + slope_term
    # rounding of the head is far below eps for the cutoffs used here
    return value, remainder_bound + 1e-16 * abs(value) * 4


def tail_sum_with_error(kernel: CouplingKernel, m: int, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """Return ``(value, err)`` with ``|value - sum_{k>=m} J(k)| <= err <= eps``."""
    _require_summable(kernel)
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return _tail(float(kernel.alpha), float(kernel.amplitude), int(m), float(eps))


def tail_sum(kernel: CouplingKernel, m: int, eps: float = DEFAULT_EPS) -> float:
    """``sum_{k >= m} J(k)`` to absolute precision ``eps``.

    >>> round(tail_sum(CouplingKernel(2.0), 1), 9)
    1.644934067
    """
    return tail_sum_with_error(kernel, m, eps)[0]


def cross_sum(kernel: CouplingKernel, n: int, eps: float = DEFAULT_EPS) -> float:
    """Coupling mass between the box ``{|i| < n}`` and its complement.

    Returns ``X(n) = sum_{|i|<n} sum_{|j|>=n} J(|i-j|)``.  Each unordered
    cross pair is counted once; sums over ordered pairs equal ``2 * X(n)``.

    Using ``sum_{j>=n} J(j-i) = T(n-i)`` with ``T`` the tail sum, the double
    sum collapses to ``2 * sum_{k>=1} J(k) * min(k, 2n-1)``.
    """
    _require_summable(kernel)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    m = 2 * int(n) - 1
    ks = np.arange(1, m + 1, dtype=float)
    head = math.fsum(ks * (kernel.amplitude * ks ** (-kernel.alpha)))
    tail = tail_sum(kernel, m + 1, eps / (4.0 * m))
    return 2.0 * (head + m * tail)


def cross_sums(kernel: CouplingKernel, ns, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Vector of :func:`cross_sum` values over the sizes ``ns``."""
    return np.array([cross_sum(kernel, int(n), eps) for n in ns])
