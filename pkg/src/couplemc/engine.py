"""Continuous-time Markov jump process engine and coupled-chain estimators.

A chain is advanced by the standard event-driven method: an exponential
holding time at the total exit rate, then a jump chosen in proportion to its
rate.  A chain of interest can be paired with a shadow copy whose proposals
are thinned by a Metropolis acceptance so that the shadow preserves a known
product approximation of the steady state.  Time averages of the pair give
the control-variate-corrected estimate

    (1/T) * integral of [ phi(X_t) + alpha * (E_Q[phi] - phi(Y_t)) ] dt,

which converges to E_P[phi] when alpha = 1 and the shadow's expectations
E_Q[phi] are exact under Q.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import math

import numpy as np

from . import _kernels


class AbsorbingStateError(RuntimeError):
    """Raised when a chain reaches a state with zero total exit rate."""


class ConfigurationError(ValueError):
    """Raised for invalid run configuration (missing expectations, bad keys)."""


class JumpModel(ABC):
    """Contract a simulable continuous-time Markov chain fulfills.

    Implementations must keep ``apply`` deterministic given (state, event),
    and ``total_exit_rate`` equal to the sum of ``event_rate`` over all
    events available in the state (enumerable models are tested on this).
    """

    @abstractmethod
    def total_exit_rate(self, state) -> float:
        """Total rate of leaving ``state``."""

    @abstractmethod
    def sample_event(self, state, rng: np.random.Generator):
        """Draw one event with probability proportional to its rate."""

    @abstractmethod
    def apply(self, state, event):
        """Return the state after ``event``; must not mutate ``state``."""

    @abstractmethod
    def event_rate(self, state, event) -> float:
        """Rate of one specific event out of ``state`` (0 if unavailable)."""


@dataclass(frozen=True)
class JointEvent:
    """A joint move of the coupled pair.

    Either component may be absent (None); a shared move carries the same
    event object on both sides and fires in both copies at once.
    """

    x_move: Any = None
    y_move: Any = None

    def __post_init__(self):
        if self.x_move is None and self.y_move is None:
            raise ValueError("joint event must carry at least one move")


class CouplingModel(ABC):
    """Joint dynamics of a chain and its Metropolized shadow copy.

    ``acceptance_ratio`` must return the ratio Z such that accepting the
    y-move with probability min(Z, 1) leaves the shadow's target product
    distribution invariant: Z = [Q(y') R(y|y')] / [Q(y) R(y'|y)].  A zero
    reverse proposal rate with positive forward rate is expressed as
    Z = +inf (always accept); that situation is the model author's
    responsibility and does not occur for the built-in models.
    """

    #: underlying single-chain model; both marginals follow its rates
    model: JumpModel

    @abstractmethod
    def joint_total_rate(self, x, y) -> float:
        """Total rate of the coupled pair at (x, y)."""

    @abstractmethod
    def sample_joint_event(self, x, y, rng: np.random.Generator) -> JointEvent:
        """Draw one joint event proportional to its joint rate."""

    @abstractmethod
    def acceptance_ratio(self, y, event: JointEvent) -> float:
        """Metropolis ratio Z for the y-component of ``event`` applied to y."""


@dataclass
class CoupledChainState:
    """State of the product-space process plus proposal bookkeeping."""

    x: Any
    y: Any
    sim_time: float = 0.0
    proposals: int = 0
    rejections: int = 0

    def __post_init__(self):
        if self.rejections > self.proposals:
            raise ValueError("rejections cannot exceed proposals")


@dataclass(frozen=True)
class EstimatorConfig:
    """Run-level estimator settings.

    alpha is the control coefficient of the corrected estimator (1 by
    default).  With use_mean_holding_times each jump contributes its mean
    holding time 1/R instead of the sampled one (static observables only);
    the weight denominator is then the sum of 1/R values, not elapsed time.
    A burn_in_fraction of the simulated time is discarded before
    accumulation starts.  acf_spacing, when set, samples observables on a
    uniform time grid for autocorrelation analysis.
    """

    alpha: float = 1.0
    use_mean_holding_times: bool = False
    burn_in_fraction: float = 0.1
    n_batches: int = 32
    acf_spacing: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.n_batches < 2:
            raise ValueError("need at least 2 batches")
        if self.acf_spacing is not None and not self.acf_spacing > 0:
            raise ValueError("acf_spacing must be positive")


def _grid_size(t0: float, t1: float, spacing: float) -> int:
    g = int((t1 - t0) / spacing)
    if t0 + g * spacing < t1:
        g += 1
    return g


class TimeAverageAccumulator:
    """Window-clipped running time integrals for a set of observables.

    Tracks the running integral of each observable and of its square over
    the window [t0, t1), equal-duration batch integrals, a jump count, and
    (optionally) samples on a uniform time grid.  The time-average estimate
    of an observable is integral / weight.
    """

    def __init__(self, observables, window: tuple[float, float],
                 n_batches: int = 32, use_mean_holding_times: bool = False,
                 grid_spacing: float | None = None):
        self.observables = list(observables)
        t0, t1 = window
        if not (t1 > t0 >= 0.0):
            raise ValueError("window must satisfy 0 <= t0 < t1")
        if n_batches < 2:
            raise ValueError("need at least 2 batches")
        n_obs = len(self.observables)
        self.window = (float(t0), float(t1))
        self.n_batches = int(n_batches)
        self.batch_duration = (t1 - t0) / n_batches
        self.use_mean_holding_times = bool(use_mean_holding_times)
        self.grid_spacing = grid_spacing
        self._values = np.zeros(n_obs)
        self.integrals = np.zeros(n_obs)
        self.square_integrals = np.zeros(n_obs)
        self.batch_integrals = np.zeros((n_batches, n_obs))
        self.batch_weights = np.zeros(n_batches)
        self._scal = np.zeros(3)  # clock, total weight, jump count
        if grid_spacing is not None:
            self._grid = np.zeros((_grid_size(t0, t1, grid_spacing), n_obs))
            self._grid_dt = float(grid_spacing)
        else:
            self._grid = np.zeros((0, n_obs))
            self._grid_dt = 0.0
        self._grid_next = np.zeros(1, dtype=np.int64)

    @property
    def clock(self) -> float:
        return float(self._scal[0])

    @property
    def weight(self) -> float:
        return float(self._scal[1])

    @property
    def jump_count(self) -> int:
        return int(self._scal[2])

    def observe(self, state, dt: float, exit_rate: float) -> None:
        """Account ``dt`` spent in ``state`` before the next jump."""
        values = self._values
        for k, phi in enumerate(self.observables):
            values[k] = phi(state)
        t0, t1 = self.window
        _kernels.observe_values(
            values, dt, exit_rate, t0, t1, self.batch_duration,
            self.use_mean_holding_times,
            self.integrals, self.square_integrals,
            self.batch_integrals, self.batch_weights, self._scal,
            self._grid, self._grid_next, self._grid_dt)

    def kernel_state(self):
        """Raw arrays in the order the compiled run loops expect."""
        t0, t1 = self.window
        return (self._values, t0, t1, self.batch_duration,
                self.use_mean_holding_times,
                self.integrals, self.square_integrals,
                self.batch_integrals, self.batch_weights, self._scal,
                self._grid, self._grid_next, self._grid_dt)

    def estimates(self) -> np.ndarray:
        return self.integrals / self._scal[1]

    def second_moments(self) -> np.ndarray:
        return self.square_integrals / self._scal[1]

    def batch_means(self) -> np.ndarray:
        return self.batch_integrals / self.batch_weights[:, None]

    def grid_values(self) -> np.ndarray | None:
        if self.grid_spacing is None:
            return None
        return self._grid[:self._grid_next[0]]


class CoupledAccumulator:
    """Paired-chain accumulator sharing one clock and weight.

    Tracks both chains' integrals and batch integrals, the integral of the
    squared difference (for the variance of phi(X)-phi(Y)), and optional
    grid samples of both chains.
    """

    def __init__(self, observables, window, n_batches=32,
                 use_mean_holding_times=False, grid_spacing=None):
        self.observables = list(observables)
        t0, t1 = window
        if not (t1 > t0 >= 0.0):
            raise ValueError("window must satisfy 0 <= t0 < t1")
        if n_batches < 2:
            raise ValueError("need at least 2 batches")
        n_obs = len(self.observables)
        self.window = (float(t0), float(t1))
        self.n_batches = int(n_batches)
        self.batch_duration = (t1 - t0) / n_batches
        self.use_mean_holding_times = bool(use_mean_holding_times)
        self.grid_spacing = grid_spacing
        self._vx = np.zeros(n_obs)
        self._vy = np.zeros(n_obs)
        self.x_integrals = np.zeros(n_obs)
        self.x_square_integrals = np.zeros(n_obs)
        self.y_integrals = np.zeros(n_obs)
        self.y_square_integrals = np.zeros(n_obs)
        self.diff_square_integrals = np.zeros(n_obs)
        self.x_batch_integrals = np.zeros((n_batches, n_obs))
        self.y_batch_integrals = np.zeros((n_batches, n_obs))
        self.batch_weights = np.zeros(n_batches)
        self._scal = np.zeros(3)
        if grid_spacing is not None:
            g = _grid_size(t0, t1, grid_spacing)
            self._grid_x = np.zeros((g, n_obs))
            self._grid_y = np.zeros((g, n_obs))
            self._grid_dt = float(grid_spacing)
        else:
            self._grid_x = np.zeros((0, n_obs))
            self._grid_y = np.zeros((0, n_obs))
            self._grid_dt = 0.0
        self._grid_next = np.zeros(1, dtype=np.int64)

    clock = TimeAverageAccumulator.clock
    weight = TimeAverageAccumulator.weight
    jump_count = TimeAverageAccumulator.jump_count

    def observe(self, x, y, dt: float, exit_rate: float) -> None:
        vx, vy = self._vx, self._vy
        for k, phi in enumerate(self.observables):
            vx[k] = phi(x)
            vy[k] = phi(y)
        t0, t1 = self.window
        _kernels.observe_pair(
            vx, vy, dt, exit_rate, t0, t1, self.batch_duration,
            self.use_mean_holding_times,
            self.x_integrals, self.x_square_integrals, self.x_batch_integrals,
            self.y_integrals, self.y_square_integrals, self.y_batch_integrals,
            self.diff_square_integrals, self.batch_weights, self._scal,
            self._grid_x, self._grid_y, self._grid_next, self._grid_dt)

    def kernel_state(self):
        """Raw arrays in the order the compiled run loops expect."""
        t0, t1 = self.window
        return (self._vx, self._vy, t0, t1, self.batch_duration,
                self.use_mean_holding_times,
                self.x_integrals, self.x_square_integrals, self.x_batch_integrals,
                self.y_integrals, self.y_square_integrals, self.y_batch_integrals,
                self.diff_square_integrals, self.batch_weights, self._scal,
                self._grid_x, self._grid_y, self._grid_next, self._grid_dt)

    def x_estimates(self) -> np.ndarray:
        return self.x_integrals / self._scal[1]

    def y_estimates(self) -> np.ndarray:
        return self.y_integrals / self._scal[1]

    def grid_values(self):
        if self.grid_spacing is None:
            return None, None
        g = self._grid_next[0]
        return self._grid_x[:g], self._grid_y[:g]


def advance_single(model: JumpModel, state, rng: np.random.Generator,
                   accumulator: TimeAverageAccumulator | None = None):
    """One jump of a single chain; returns (new_state, holding_time).

    The holding time is exponential with mean 1/R(state); the accumulator,
    if given, is charged with the pre-jump state over that interval.
    """
    rate = model.total_exit_rate(state)
    if rate <= 0.0:
        raise AbsorbingStateError(f"zero total exit rate in state {state!r}")
    dt = rng.exponential(1.0 / rate)
    if accumulator is not None:
        accumulator.observe(state, dt, rate)
    event = model.sample_event(state, rng)
    return model.apply(state, event), dt


def advance_coupled(coupling: CouplingModel, cstate: CoupledChainState,
                    rng: np.random.Generator,
                    accumulator: CoupledAccumulator | None = None) -> CoupledChainState:
    """One joint jump: the x-move always fires, the y-move passes a
    min(Z, 1) acceptance gate and leaves y unchanged when rejected."""
    x, y = cstate.x, cstate.y
    rate = coupling.joint_total_rate(x, y)
    if rate <= 0.0:
        raise AbsorbingStateError("zero joint total rate")
    dt = rng.exponential(1.0 / rate)
    if accumulator is not None:
        accumulator.observe(x, y, dt, rate)
    event = coupling.sample_joint_event(x, y, rng)
    new_x = x if event.x_move is None else coupling.model.apply(x, event.x_move)
    new_y = y
    proposals = cstate.proposals
    rejections = cstate.rejections
    if event.y_move is not None:
        proposals += 1
        z = coupling.acceptance_ratio(y, event)
        if z >= 1.0 or rng.random() < z:
            new_y = coupling.model.apply(y, event.y_move)
        else:
            rejections += 1
    return CoupledChainState(new_x, new_y, cstate.sim_time + dt,
                             proposals, rejections)


@dataclass
class SimpleRunResult:
    """Time-average estimates of one single-chain run."""

    names: list[str]
    estimates: dict[str, float]
    second_moments: dict[str, float]
    batch_means: np.ndarray
    batch_weights: np.ndarray
    batch_duration: float
    window: tuple[float, float]
    total_weight: float
    jump_count: int
    final_state: Any
    grid_spacing: float | None = None
    grid_values: np.ndarray | None = None
    used_kernel: bool = False

    def variance(self, name: str) -> float:
        """Stationary variance estimate <phi^2> - <phi>^2 (clipped at 0)."""
        m1 = self.estimates[name]
        return max(self.second_moments[name] - m1 * m1, 0.0)

    def batch_series(self, name: str) -> np.ndarray:
        return self.batch_means[:, self.names.index(name)]

    def grid_series(self, name: str) -> np.ndarray:
        if self.grid_values is None:
            raise ValueError("run was not configured with acf_spacing")
        return self.grid_values[:, self.names.index(name)]


@dataclass
class CoupledRunResult:
    """Control-variate-corrected estimates of one coupled run."""

    names: list[str]
    alpha: float
    eq_expectations: dict[str, float]
    estimates: dict[str, float]
    x_means: dict[str, float]
    y_means: dict[str, float]
    x_second_moments: dict[str, float]
    y_second_moments: dict[str, float]
    diff_second_moments: dict[str, float]
    batch_means: np.ndarray
    x_batch_means: np.ndarray
    y_batch_means: np.ndarray
    batch_weights: np.ndarray
    batch_duration: float
    window: tuple[float, float]
    total_weight: float
    jump_count: int
    proposals: int
    rejections: int
    final_state: CoupledChainState
    grid_spacing: float | None = None
    x_grid_values: np.ndarray | None = None
    y_grid_values: np.ndarray | None = None
    used_kernel: bool = False

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.proposals if self.proposals else 0.0

    def diff_variance(self, name: str) -> float:
        """Stationary variance estimate of phi(X) - phi(Y) (clipped at 0)."""
        m1 = self.x_means[name] - self.y_means[name]
        return max(self.diff_second_moments[name] - m1 * m1, 0.0)

    def x_variance(self, name: str) -> float:
        m1 = self.x_means[name]
        return max(self.x_second_moments[name] - m1 * m1, 0.0)

    def batch_series(self, name: str) -> np.ndarray:
        return self.batch_means[:, self.names.index(name)]

    def x_batch_series(self, name: str) -> np.ndarray:
        return self.x_batch_means[:, self.names.index(name)]

    def y_batch_series(self, name: str) -> np.ndarray:
        return self.y_batch_means[:, self.names.index(name)]

    def diff_grid_series(self, name: str) -> np.ndarray:
        if self.x_grid_values is None:
            raise ValueError("run was not configured with acf_spacing")
        k = self.names.index(name)
        return self.x_grid_values[:, k] - self.y_grid_values[:, k]


def _check_observables(observables: Mapping[str, Callable]) -> list[str]:
    names = list(observables)
    if not names:
        raise ValueError("at least one observable is required")
    return names


def run_simple(model: JumpModel, initial_state, t_final: float,
               observables: Mapping[str, Callable],
               config: EstimatorConfig | None = None,
               rng: np.random.Generator | None = None,
               *, accelerated: bool | None = None) -> SimpleRunResult:
    """Simulate one chain over [0, t_final] and time-average the observables.

    Estimates are taken over the post-burn-in window.  When the model
    provides a compiled runner and all observables are site/pair forms, the
    compiled path is used; it consumes the generator identically, so results
    are bit-identical to the generic path.  ``accelerated`` forces the
    choice (True raises if no kernel applies).
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    config = config if config is not None else EstimatorConfig()
    rng = rng if rng is not None else np.random.default_rng()
    names = _check_observables(observables)
    t0 = config.burn_in_fraction * t_final
    acc = TimeAverageAccumulator(
        observables.values(), (t0, t_final), config.n_batches,
        config.use_mean_holding_times, config.acf_spacing)

    used_kernel = False
    final_state = None
    if accelerated is not False:
        runner = getattr(model, "_run_simple_kernel", None)
        if runner is not None:
            out = runner(initial_state, t_final, acc, rng)
            if out is not NotImplemented:
                final_state = out
                used_kernel = True
        if accelerated is True and not used_kernel:
            raise ValueError("no compiled runner available for this model/observables")
    if not used_kernel:
        state = initial_state
        while acc.clock < t_final:
            state, _ = advance_single(model, state, rng, acc)
        final_state = state

    est = acc.estimates()
    m2 = acc.second_moments()
    return SimpleRunResult(
        names=names,
        estimates=dict(zip(names, est.tolist())),
        second_moments=dict(zip(names, m2.tolist())),
        batch_means=acc.batch_means(),
        batch_weights=acc.batch_weights.copy(),
        batch_duration=acc.batch_duration,
        window=acc.window,
        total_weight=acc.weight,
        jump_count=acc.jump_count,
        final_state=final_state,
        grid_spacing=config.acf_spacing,
        grid_values=acc.grid_values(),
        used_kernel=used_kernel,
    )


def run_coupled(coupling: CouplingModel, initial: CoupledChainState,
                t_final: float, observables: Mapping[str, Callable],
                eq_expectations: Mapping[str, float],
                config: EstimatorConfig | None = None,
                rng: np.random.Generator | None = None,
                *, accelerated: bool | None = None) -> CoupledRunResult:
    """Simulate the coupled pair and form the corrected estimates.

    Every observable needs its expectation under the shadow's target
    distribution in ``eq_expectations``; the corrected estimate is
    x_mean + alpha * (E_Q - y_mean), batchwise and overall.  The raw x and
    y averages and the rejection rate are reported for diagnostics.
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    config = config if config is not None else EstimatorConfig()
    rng = rng if rng is not None else np.random.default_rng()
    names = _check_observables(observables)
    missing = [n for n in names if n not in eq_expectations]
    if missing:
        raise ConfigurationError(
            f"missing equilibrium expectation for observable(s): {', '.join(missing)}")
    t0 = config.burn_in_fraction * t_final
    acc = CoupledAccumulator(
        observables.values(), (t0, t_final), config.n_batches,
        config.use_mean_holding_times, config.acf_spacing)

    used_kernel = False
    final = None
    if accelerated is not False:
        runner = getattr(coupling, "_run_coupled_kernel", None)
        if runner is not None:
            out = runner(initial, t_final, acc, rng)
            if out is not NotImplemented:
                final = out
                used_kernel = True
        if accelerated is True and not used_kernel:
            raise ValueError("no compiled runner available for this coupling/observables")
    if not used_kernel:
        cstate = initial
        while acc.clock < t_final:
            cstate = advance_coupled(coupling, cstate, rng, acc)
        final = cstate

    alpha = config.alpha
    eq = np.array([eq_expectations[n] for n in names])
    x_mean = acc.x_estimates()
    y_mean = acc.y_estimates()
    ccv = x_mean + alpha * (eq - y_mean)
    x_batch = acc.x_batch_integrals / acc.batch_weights[:, None]
    y_batch = acc.y_batch_integrals / acc.batch_weights[:, None]
    ccv_batch = x_batch + alpha * (eq[None, :] - y_batch)
    grid_x, grid_y = acc.grid_values()
    return CoupledRunResult(
        names=names,
        alpha=alpha,
        eq_expectations={n: float(eq_expectations[n]) for n in names},
        estimates=dict(zip(names, ccv.tolist())),
        x_means=dict(zip(names, x_mean.tolist())),
        y_means=dict(zip(names, y_mean.tolist())),
        x_second_moments=dict(zip(names, (acc.x_square_integrals / acc.weight).tolist())),
        y_second_moments=dict(zip(names, (acc.y_square_integrals / acc.weight).tolist())),
        diff_second_moments=dict(zip(names, (acc.diff_square_integrals / acc.weight).tolist())),
        batch_means=ccv_batch,
        x_batch_means=x_batch,
        y_batch_means=y_batch,
        batch_weights=acc.batch_weights.copy(),
        batch_duration=acc.batch_duration,
        window=acc.window,
        total_weight=acc.weight,
        jump_count=acc.jump_count,
        proposals=final.proposals,
        rejections=final.rejections,
        final_state=final,
        grid_spacing=config.acf_spacing,
        x_grid_values=grid_x,
        y_grid_values=grid_y,
        used_kernel=used_kernel,
    )
