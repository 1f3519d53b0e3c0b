"""Coupling control variates for continuous-time Markov chain Monte Carlo.

Simulates Markov jump processes (built-in: the boundary-driven exclusion
process and the energy-redistribution heat-conduction chain), pairs them
with a Metropolized shadow copy preserving a product approximation of the
steady state, and corrects time averages with the shadow's known
expectations.  Includes batched-means/autocorrelation diagnostics and an
exact small-chain solver for verification.
"""

from .engine import (
    AbsorbingStateError,
    ConfigurationError,
    CoupledChainState,
    CoupledRunResult,
    CouplingModel,
    EstimatorConfig,
    JointEvent,
    JumpModel,
    SimpleRunResult,
    TimeAverageAccumulator,
    advance_coupled,
    advance_single,
    run_coupled,
    run_simple,
)
from .observables import PairObservable, SiteObservable

__all__ = [
    "AbsorbingStateError",
    "ConfigurationError",
    "CoupledChainState",
    "CoupledRunResult",
    "CouplingModel",
    "EstimatorConfig",
    "JointEvent",
    "JumpModel",
    "PairObservable",
    "SimpleRunResult",
    "SiteObservable",
    "TimeAverageAccumulator",
    "advance_coupled",
    "advance_single",
    "run_coupled",
    "run_simple",
]

__version__ = "0.1.0"
