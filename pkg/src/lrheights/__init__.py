"""Exact enumeration, Metropolis sampling and relative-entropy ledgers for
one-dimensional long-range integer height models (discrete Gaussian chain,
SOS and p-SOS)."""

from .analysis import (
    ExponentFit,
    MomentReport,
    ProfilePoint,
    ReLedger,
    ergodic_average,
    fit_exponent,
    moments,
    re_bound_eval,
    re_ledger,
    re_mc_estimate,
    variance_profile,
)
from .exact import (
    BudgetExceededError,
    ExactDistribution,
    dlr_residual,
    enumerate_measure,
    moment,
    re_via_formula,
    relative_entropy,
)
from .kernel import CouplingKernel, cross_sum, kernel_eval, tail_sum
from .model import (
    FieldConfig,
    ModelParams,
    StepProfile,
    apply_step,
    energy,
    energy_delta,
    log_rn_derivative,
    potential_eval,
)
from .sampler import ChainState, ProposalLaw, RunRecord, Schedule, metropolis_step, run_chain, sweep

__version__ = "0.1.0"
