"""scikit-learn style wrappers.

The exact oracle, the sampler and the exponent fit expose ``get_params`` /
``set_params`` and the usual ``fit`` conventions, so they can be cloned,
grid-searched over and dropped into pipelines.  Heights are passed as
``(n_samples, 2 * half_width + 1)`` integer arrays over the centred window.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import fit_exponent, moments
from .exact import DEFAULT_BUDGET, enumerate_measure, moment
from .kernel import DEFAULT_EPS
from .model import ModelParams
from .observables import site_height, site_name
from .sampler import ProposalLaw, Schedule, run_chain

__all__ = ["GibbsEnumerator", "MetropolisSampler", "PowerLawRegressor"]


class GibbsEnumerator(BaseEstimator):
    """Exact truncated finite-volume measure on ``{-half_width..half_width}``.

    After ``fit``: ``distribution_``, ``log_z_``, ``boundary_mass_`` and
    ``moments_``.  ``X`` and ``y`` are ignored by ``fit``.
    """

    def __init__(self, alpha=2.5, beta=1.0, p=2.0, half_width=1, kmax=4, omega=0, eps=DEFAULT_EPS,
                 budget=DEFAULT_BUDGET):
        self.alpha = alpha
        self.beta = beta
        self.p = p
        self.half_width = half_width
        self.kmax = kmax
        self.omega = omega
        self.eps = eps
        self.budget = budget

    def fit(self, X=None, y=None):
        params = ModelParams.of(self.alpha, self.beta, self.p)
        w = int(self.half_width)
        self.distribution_ = enumerate_measure((-w, w), self.kmax, self.omega, params, self.eps, self.budget)
        self.log_z_ = self.distribution_.log_z
        self.boundary_mass_ = self.distribution_.boundary_mass
        self.moments_ = moments(self.distribution_)
        return self

    def score_samples(self, X):
        """Log-probability of each configuration; ``-inf`` outside the truncated space."""
        check_is_fitted(self, "distribution_")
        X = check_array(X, dtype=np.int64)
        dist = self.distribution_
        if X.shape[1] != dist.size:
            raise ValueError(f"expected {dist.size} heights per row, got {X.shape[1]}")
        out = np.full(X.shape[0], -np.inf)
        ok = np.all(np.abs(X) <= dist.kmax, axis=1)
        if ok.any():
            ids = np.ravel_multi_index(tuple((X[ok] + dist.kmax).T), dist.shape)
            with np.errstate(divide="ignore"):
                out[ok] = np.log(dist.table[ids])
        return out

    def expectation(self, observable) -> float:
        check_is_fitted(self, "distribution_")
        return moment(self.distribution_, observable)


class MetropolisSampler(BaseEstimator):
    """Metropolis chain on ``{-half_width..half_width}`` recording ``phi_0``.

    After ``fit``: ``record_`` (a :class:`~lrheights.sampler.RunRecord`),
    ``moments_`` and ``acceptance_rate_``.
    """

    def __init__(self, alpha=2.5, beta=1.0, p=2.0, half_width=2, omega=0, proposal="unit-step", q=0.5,
                 burn_in=1000, sweeps=10000, thin=1, seed=0, eps=DEFAULT_EPS):
        self.alpha = alpha
        self.beta = beta
        self.p = p
        self.half_width = half_width
        self.omega = omega
        self.proposal = proposal
        self.q = q
        self.burn_in = burn_in
        self.sweeps = sweeps
        self.thin = thin
        self.seed = seed
        self.eps = eps

    def fit(self, X=None, y=None):
        w = int(self.half_width)
        self.record_ = run_chain(
            ModelParams.of(self.alpha, self.beta, self.p),
            (-w, w),
            ProposalLaw(self.proposal, self.q),
            Schedule(self.burn_in, self.sweeps, self.thin),
            {site_name(0): site_height(0, -w)},
            seed=self.seed,
            omega=self.omega,
            eps=self.eps,
        )
        self.acceptance_rate_ = self.record_.acceptance_rate
        self.moments_ = moments(self.record_) if self.record_.sweeps.size else None
        return self


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Fit ``y = exp(intercept) * x**slope`` by least squares in log-log space."""

    def __init__(self, confidence=0.95):
        self.confidence = confidence

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        x = self._column(X)
        self.fit_ = fit_exponent(x, y, self.confidence)
        self.slope_ = self.fit_.slope
        self.intercept_ = self.fit_.intercept
        self.ci_ = (self.fit_.ci_lo, self.fit_.ci_hi)
        self.r2_ = self.fit_.r2
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X, ensure_2d=False)
        return self.fit_.predict(self._column(X))

    @staticmethod
    def _column(X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("expected a single feature (the system size)")
            X = X[:, 0]
        return X
