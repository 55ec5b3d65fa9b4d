"""Batch observables shared by the exact oracle and the sampler.

An observable maps an ``(m, |window|)`` integer array of configurations to
``m`` real values.  Each factory returns a plain function so it can be used
with :func:`lrheights.exact.moment` and :func:`lrheights.sampler.run_chain`
alike.
"""

from __future__ import annotations

import numpy as np

from .kernel import DEFAULT_EPS
from .model import ModelParams, StepProfile, energy_batch, log_rn_batch


def site_name(site: int) -> str:
    return f"phi_{site}"


def log_rn_name(t: int, n: int) -> str:
    return f"log_rn_t{t}_n{n}"


def site_height(site: int, lo: int):
    k = site - lo
    if k < 0:
        raise ValueError(f"site {site} lies left of the window")

    def obs(h):
        return h[:, k].astype(float)

    return obs


def constant(value: float = 1.0):
    def obs(h):
        return np.full(h.shape[0], float(value))

    return obs


def box_average(n: int, lo: int):
    """Spatial mean ``(1/2n) sum_{|i| <= n} phi_i`` as a batch observable."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = -n - lo, n - lo

    def obs(h):
        if a < 0 or b >= h.shape[1]:
            raise ValueError(f"box {{-{n}..{n}}} not inside the window")
        return h[:, a : b + 1].sum(axis=1) / (2.0 * n)

    return obs


def energy_observable(params: ModelParams, lo: int, omega: int = 0, eps: float = DEFAULT_EPS):
    def obs(h):
        return energy_batch(h, lo, omega, params, eps)

    return obs


def log_rn_observable(step: StepProfile, params: ModelParams, lo: int, omega: int = 0, eps: float = DEFAULT_EPS):
    """Per-configuration log density ratio of the step transform, for Monte-Carlo RE estimates."""

    def obs(h):
        return log_rn_batch(h, lo, omega, step, params, eps)

    return obs
