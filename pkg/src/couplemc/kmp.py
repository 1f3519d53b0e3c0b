"""Energy-redistribution chain between two heat baths.

Each of n sites carries a nonnegative energy.  Each of the n+1 bonds rings
at rate 1: an interior bond pools the two adjacent energies and splits them
by a fresh uniform fraction; a bath bond resamples the boundary site's
energy from the bath's exponential law (mean T_L or T_R).  Away from
equilibrium the steady state is approximated site-wise by exponentials
along the linear temperature profile, and the shared-randomness coupling
(same bond, same split fraction or bath draw in both copies) with a
Metropolis gate on the shadow copy preserves that product approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .engine import (CoupledChainState, CouplingModel, JointEvent, JumpModel)
from .observables import PairObservable, SiteObservable, lattice_index_arrays


@dataclass(frozen=True)
class KmpParams:
    """Site count and bath temperatures (energy units)."""

    n: int
    t_left: float
    t_right: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.t_left <= 0 or self.t_right <= 0:
            raise ValueError("bath temperatures must be positive")

    @property
    def beta_left(self) -> float:
        return 1.0 / self.t_left

    @property
    def beta_right(self) -> float:
        return 1.0 / self.t_right


@dataclass(frozen=True)
class KmpEvent:
    """One bond ring: bond 0 / n are the left/right baths resampling the
    boundary site to ``payload``; interior bond b (1 <= b <= n-1) splits the
    pooled energy of sites b-1, b by the uniform fraction ``payload``."""

    bond: int
    payload: float


class KmpModel(JumpModel):
    """Energy-redistribution dynamics as a jump model over energy vectors."""

    def __init__(self, params: KmpParams):
        self.params = params
        self._n = params.n

    def initial_state(self) -> np.ndarray:
        """All energies at the mean bath temperature."""
        mid = 0.5 * (self.params.t_left + self.params.t_right)
        return np.full(self._n, mid)

    def state_from_energies(self, energies) -> np.ndarray:
        e = np.asarray(energies, dtype=float)
        if e.shape != (self._n,):
            raise ValueError(f"energies must have length {self._n}")
        if np.any(e < 0):
            raise ValueError("energies must be nonnegative")
        return e

    def total_exit_rate(self, state) -> float:
        return self._n + 1.0

    def sample_event(self, state, rng: np.random.Generator) -> KmpEvent:
        n = self._n
        b = int(rng.integers(0, n + 1))
        if b == 0:
            return KmpEvent(0, float(rng.exponential(self.params.t_left)))
        if b == n:
            return KmpEvent(n, float(rng.exponential(self.params.t_right)))
        return KmpEvent(b, float(rng.random()))

    def apply(self, state, event: KmpEvent) -> np.ndarray:
        e = state.copy()
        b = event.bond
        n = self._n
        if b == 0:
            e[0] = event.payload
        elif b == n:
            e[n - 1] = event.payload
        else:
            u = event.payload
            s = e[b - 1] + e[b]
            e[b - 1] = u * s
            e[b] = s - u * s
        return e

    def event_rate(self, state, event: KmpEvent) -> float:
        """Rate of the event's bond clock (the payload is auxiliary
        randomness, not part of the rate)."""
        if 0 <= event.bond <= self._n:
            return 1.0
        return 0.0

    def _run_simple_kernel(self, initial_state, t_final, acc, rng):
        idx = lattice_index_arrays(acc.observables)
        if idx is None:
            return NotImplemented
        obs_i, obs_j = idx
        e = self.state_from_energies(initial_state).copy()
        (values, t0, t1, bw, use_mht, integ, integ_sq, batch_integ,
         batch_w, scal, grid, grid_next, grid_dt) = acc.kernel_state()
        _kernels.kmp_run_simple(
            e, self.params.t_left, self.params.t_right, t_final,
            obs_i, obs_j, values, t0, t1, bw, use_mht,
            integ, integ_sq, batch_integ, batch_w, scal,
            grid, grid_next, grid_dt, rng)
        return e


@dataclass(frozen=True, eq=False)
class TemperatureProfile:
    """Site-wise inverse temperatures of the product approximation.

    beta[i] = 1 / T(x_i) with x_i = (i + 1) / (n + 1).
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if beta.ndim != 1 or beta.shape[0] < 1:
            raise ValueError("beta must be a nonempty vector")
        if np.any(beta <= 0.0):
            raise ValueError("inverse temperatures must be positive")

    @classmethod
    def from_params(cls, params: KmpParams) -> "TemperatureProfile":
        n = params.n
        x = np.arange(1, n + 1) / (n + 1)
        return cls(1.0 / (params.t_left * (1.0 - x) + params.t_right * x))

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    def temperatures(self) -> np.ndarray:
        return 1.0 / self.beta


def temperature_profile(params: KmpParams, x: float) -> float:
    """Macroscopic temperature T_L * (1 - x) + T_R * x at scaled position x."""
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie strictly in (0, 1)")
    return params.t_left * (1.0 - x) + params.t_right * x


def apply_event(state, event: KmpEvent) -> np.ndarray:
    """State after one bond ring; interior sums are conserved bit-exactly
    by computing the second site as s - u*s."""
    e = np.asarray(state, dtype=float).copy()
    n = e.shape[0]
    b = event.bond
    if not 0 <= b <= n:
        raise ValueError(f"bond {b} out of range for {n} sites")
    if b == 0:
        e[0] = event.payload
    elif b == n:
        e[n - 1] = event.payload
    else:
        u = event.payload
        s = e[b - 1] + e[b]
        e[b - 1] = u * s
        e[b] = s - u * s
    return e


def metropolis_ratio(event: KmpEvent, y, y_proposed,
                     profile: TemperatureProfile, params: KmpParams) -> float:
    """Acceptance ratio Z of a shadow-copy event y -> y_proposed.

    Interior bond: exp([b_i e_i + b_j e_j] - [b_i e'_i + b_j e'_j]); bath
    bonds: exp((beta_bath - beta_site) * (e'_site - e_site)).  The uniform
    split is symmetric in both directions, so only the target-density ratio
    survives; Z of an event and of its exact reverse multiply to 1.
    """
    b = event.bond
    n = profile.n
    beta = profile.beta
    if b == 0:
        return float(_kernels.kmp_bath_ratio(params.beta_left, beta[0],
                                             y[0], y_proposed[0]))
    if b == n:
        return float(_kernels.kmp_bath_ratio(params.beta_right, beta[n - 1],
                                             y[n - 1], y_proposed[n - 1]))
    i, j = b - 1, b
    return float(_kernels.kmp_interior_ratio(beta[i], beta[j],
                                             y[i], y[j],
                                             y_proposed[i], y_proposed[j]))


def lte_expectations(profile: TemperatureProfile,
                     observables: Mapping[str, Callable]) -> dict[str, float]:
    """Expectations under the product of exponentials.

    E[e_i] = T(x_i); E[e_i e_j] = T(x_i) * T(x_j) for distinct sites.
    """
    temps = profile.temperatures()
    out = {}
    for name, obs in observables.items():
        if isinstance(obs, SiteObservable):
            out[name] = float(temps[obs.site])
        elif isinstance(obs, PairObservable):
            if obs.site_i == obs.site_j:
                raise ValueError(
                    f"unsupported observable form for {name!r}: same-site product")
            out[name] = float(temps[obs.site_i] * temps[obs.site_j])
        else:
            raise ValueError(f"unsupported observable form for {name!r}")
    return out


class KmpCoupling(CouplingModel):
    """Shared-randomness coupling: the same bond rings at the same time in
    both copies with the identical payload, so every joint event is shared;
    the shadow's update passes a min(Z, 1) gate."""

    def __init__(self, model: KmpModel, profile: TemperatureProfile):
        if profile.n != model.params.n:
            raise ValueError("profile length must match the site count")
        self.model = model
        self.profile = profile

    def initial_state(self) -> CoupledChainState:
        return CoupledChainState(self.model.initial_state(),
                                 self.model.initial_state())

    def joint_total_rate(self, x, y) -> float:
        return self.model.params.n + 1.0

    def sample_joint_event(self, x, y, rng: np.random.Generator) -> JointEvent:
        event = self.model.sample_event(x, rng)
        return JointEvent(x_move=event, y_move=event)

    def acceptance_ratio(self, y, event: JointEvent) -> float:
        ev = event.y_move
        return metropolis_ratio(ev, y, self.model.apply(y, ev),
                                self.profile, self.model.params)

    def _run_coupled_kernel(self, initial: CoupledChainState, t_final, acc, rng):
        idx = lattice_index_arrays(acc.observables)
        if idx is None:
            return NotImplemented
        obs_i, obs_j = idx
        ex = self.model.state_from_energies(initial.x).copy()
        ey = self.model.state_from_energies(initial.y).copy()
        (vx, vy, t0, t1, bw, use_mht,
         x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
         diff_sq, batch_w, scal, grid_x, grid_y, grid_next,
         grid_dt) = acc.kernel_state()
        _, proposals, rejections = _kernels.kmp_run_coupled(
            ex, ey, self.profile.beta,
            self.model.params.t_left, self.model.params.t_right, t_final,
            obs_i, obs_j, vx, vy, t0, t1, bw, use_mht,
            x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
            diff_sq, batch_w, scal, grid_x, grid_y, grid_next, grid_dt, rng)
        return CoupledChainState(ex, ey,
                                 initial.sim_time + acc.clock,
                                 initial.proposals + proposals,
                                 initial.rejections + rejections)
