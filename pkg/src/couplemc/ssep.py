"""Symmetric simple exclusion process with boundary reservoirs.

Particles hop left/right at rate 1/2 per direction on a chain of n sites,
at most one particle per site.  The left reservoir injects into site 0 at
rate alpha when empty and removes at rate beta when occupied; the right
reservoir acts on site n-1 at rates delta (inject) and gamma (remove).
Unequal reservoir densities drive a particle current, and the steady state
is approximated site-wise by independent Bernoulli occupations along the
linear density profile; the same-move self-coupling with a Metropolis gate
on the shadow copy preserves that product approximation exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .engine import (AbsorbingStateError, CoupledChainState, CouplingModel,
                     JointEvent, JumpModel)
from .observables import PairObservable, SiteObservable, lattice_index_arrays

JUMP = "jump"
INJECT_LEFT = "inject_left"
REMOVE_LEFT = "remove_left"
INJECT_RIGHT = "inject_right"
REMOVE_RIGHT = "remove_right"

_RESERVOIR_KINDS = (INJECT_LEFT, REMOVE_LEFT, INJECT_RIGHT, REMOVE_RIGHT)


class DegenerateProfileError(ValueError):
    """Profile density hit 0 or 1, where the Metropolis ratios blow up."""


@dataclass(frozen=True)
class SsepParams:
    """Site count and reservoir rates (all rates per unit time)."""

    n: int
    alpha: float
    beta: float
    delta: float
    gamma: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        for name in ("alpha", "beta", "delta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")
        if self.delta + self.gamma <= 0:
            raise ValueError("delta + gamma must be positive")

    @property
    def rho_left(self) -> float:
        """Left reservoir density alpha / (alpha + beta)."""
        return self.alpha / (self.alpha + self.beta)

    @property
    def rho_right(self) -> float:
        """Right reservoir density delta / (delta + gamma)."""
        return self.delta / (self.delta + self.gamma)


@dataclass(frozen=True)
class SsepMove:
    """A single move: a directed jump from ``site`` or a reservoir action.

    Moves are identified by bond/direction or reservoir action, not by
    particle identity, so "the same move" is well defined across two copies
    of the chain.
    """

    kind: str
    site: int = -1
    direction: int = 0


def _move_to_id(move: SsepMove, n: int) -> int:
    nb = n - 1
    if move.kind == JUMP:
        if move.direction == 1:
            return move.site
        return nb + move.site - 1
    return 2 * nb + _RESERVOIR_KINDS.index(move.kind)


def _move_from_id(m: int, n: int) -> SsepMove:
    m = int(m)
    nb = n - 1
    if m < nb:
        return SsepMove(JUMP, site=m, direction=1)
    if m < 2 * nb:
        return SsepMove(JUMP, site=m - nb + 1, direction=-1)
    return SsepMove(_RESERVOIR_KINDS[m - 2 * nb],
                    site=0 if m - 2 * nb < 2 else n - 1)


class SsepModel(JumpModel):
    """Exclusion dynamics as a jump model over occupation vectors."""

    def __init__(self, params: SsepParams):
        self.params = params
        n = params.n
        self._n = n
        nb = n - 1
        rates = np.empty(2 * nb + 4)
        rates[:2 * nb] = 0.5
        rates[2 * nb:] = (params.alpha, params.beta, params.delta, params.gamma)
        self._rates_univ = rates

    def initial_state(self) -> np.ndarray:
        """All sites empty."""
        return np.zeros(self._n, dtype=np.int64)

    def state_from_occupation(self, occupation) -> np.ndarray:
        occ = np.asarray(occupation, dtype=np.int64)
        if occ.shape != (self._n,):
            raise ValueError(f"occupation must have length {self._n}")
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupation values must be 0 or 1")
        return occ

    def _masked_rates(self, occ: np.ndarray) -> np.ndarray:
        valid = np.empty(self._rates_univ.shape[0], dtype=bool)
        nb = self._n - 1
        valid[:nb] = (occ[:-1] == 1) & (occ[1:] == 0)
        valid[nb:2 * nb] = (occ[1:] == 1) & (occ[:-1] == 0)
        valid[2 * nb:] = (occ[0] == 0, occ[0] == 1,
                          occ[-1] == 0, occ[-1] == 1)
        return self._rates_univ * valid

    def total_exit_rate(self, state) -> float:
        # sequential cumulative sum: bit-identical to the compiled loop
        return float(np.cumsum(self._masked_rates(state))[-1])

    def sample_event(self, state, rng: np.random.Generator) -> SsepMove:
        rv = self._masked_rates(state)
        cum = np.cumsum(rv)
        total = cum[-1]
        if total <= 0.0:
            raise AbsorbingStateError("no moves available")
        u = rng.random() * total
        idx = int(np.searchsorted(cum, u, side="right"))
        if idx >= rv.shape[0]:
            idx = int(np.nonzero(rv)[0][-1])
        return _move_from_id(idx, self._n)

    def apply(self, state, event: SsepMove) -> np.ndarray:
        occ = state.copy()
        _kernels.ssep_apply_move(occ, _move_to_id(event, self._n),
                                 self._n - 1, self._n)
        return occ

    def event_rate(self, state, event: SsepMove) -> float:
        m = _move_to_id(event, self._n)
        return float(_kernels.ssep_move_rate(m, state, self._n - 1, self._n,
                                             self._rates_univ))

    def enumerate_events(self, state) -> list[tuple[SsepMove, float]]:
        """All available moves with their rates."""
        rv = self._masked_rates(state)
        return [(_move_from_id(m, self._n), float(rv[m]))
                for m in np.nonzero(rv)[0]]

    def _run_simple_kernel(self, initial_state, t_final, acc, rng):
        idx = lattice_index_arrays(acc.observables)
        if idx is None:
            return NotImplemented
        obs_i, obs_j = idx
        occ = self.state_from_occupation(initial_state).copy()
        (values, t0, t1, bw, use_mht, integ, integ_sq, batch_integ,
         batch_w, scal, grid, grid_next, grid_dt) = acc.kernel_state()
        status = _kernels.ssep_run_simple(
            occ, self._rates_univ, t_final, obs_i, obs_j, values,
            t0, t1, bw, use_mht, integ, integ_sq, batch_integ, batch_w,
            scal, grid, grid_next, grid_dt, rng)
        if status < 0:
            raise AbsorbingStateError("zero total exit rate")
        return occ


@dataclass(frozen=True, eq=False)
class LocalEquilibriumProfile:
    """Site-wise Bernoulli means of the product approximation.

    rho[i] is the occupation probability of 0-based site i, placed at the
    scaled position (i + 1) / (n + 1).
    """

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "rho", rho)
        if rho.ndim != 1 or rho.shape[0] < 1:
            raise ValueError("rho must be a nonempty vector")
        if np.any(rho <= 0.0) or np.any(rho >= 1.0):
            raise DegenerateProfileError("profile densities must lie strictly in (0, 1)")

    @classmethod
    def from_params(cls, params: SsepParams) -> "LocalEquilibriumProfile":
        """Linear interpolation between the reservoir densities."""
        n = params.n
        x = np.arange(1, n + 1) / (n + 1)
        return cls(params.rho_left * (1.0 - x) + params.rho_right * x)

    @property
    def n(self) -> int:
        return self.rho.shape[0]


def density_profile(params: SsepParams, x: float) -> float:
    """Macroscopic density rho_L * (1 - x) + rho_R * x at scaled position x."""
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie strictly in (0, 1)")
    return params.rho_left * (1.0 - x) + params.rho_right * x


def enumerate_moves(state, params: SsepParams) -> list[tuple[SsepMove, float]]:
    """All moves available from ``state`` with their rates."""
    return SsepModel(params).enumerate_events(np.asarray(state, dtype=np.int64))


def coupled_moves(x, y, params: SsepParams) -> list[tuple[JointEvent, float]]:
    """Joint events of the same-move coupling at (x, y).

    Every move available to either copy is one event at the move's own
    rate: shared when both copies can make it, otherwise one-sided.
    """
    model = SsepModel(params)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    rx = model._masked_rates(x)
    ry = model._masked_rates(y)
    events = []
    for m in np.nonzero((rx > 0) | (ry > 0))[0]:
        move = _move_from_id(int(m), params.n)
        events.append((JointEvent(x_move=move if rx[m] > 0 else None,
                                  y_move=move if ry[m] > 0 else None),
                       float(max(rx[m], ry[m]))))
    return events


def metropolis_ratio(move: SsepMove, profile: LocalEquilibriumProfile,
                     params: SsepParams) -> float:
    """Acceptance ratio Z of a shadow-copy move against the product target.

    For a jump i -> j: [(1-rho_i)/rho_i] * [rho_j/(1-rho_j)]; reservoir
    actions weigh the boundary density against the reservoir's own
    inject/remove ratio.  A zero opposing rate gives +inf (always accept).
    """
    rho = profile.rho
    if move.kind == JUMP:
        i = move.site
        j = i + move.direction
        if not (0 <= i < profile.n and 0 <= j < profile.n):
            raise ValueError(f"jump {move} leaves the lattice")
        ri = rho[i]
        rj = rho[j]
        return ((1.0 - ri) / ri) * (rj / (1.0 - rj))
    r0 = rho[0]
    rn = rho[-1]
    if move.kind == INJECT_LEFT:
        if params.alpha == 0.0:
            return math.inf
        return (r0 / (1.0 - r0)) * (params.beta / params.alpha)
    if move.kind == REMOVE_LEFT:
        if params.beta == 0.0:
            return math.inf
        return ((1.0 - r0) / r0) * (params.alpha / params.beta)
    if move.kind == INJECT_RIGHT:
        if params.delta == 0.0:
            return math.inf
        return (rn / (1.0 - rn)) * (params.gamma / params.delta)
    if move.kind == REMOVE_RIGHT:
        if params.gamma == 0.0:
            return math.inf
        return ((1.0 - rn) / rn) * (params.delta / params.gamma)
    raise ValueError(f"unknown move kind {move.kind!r}")


def lte_expectations(profile: LocalEquilibriumProfile,
                     observables: Mapping[str, Callable]) -> dict[str, float]:
    """Expectations under the product approximation.

    E[s_i] = rho_i; E[s_i s_j] = rho_i * rho_j for distinct sites, and
    rho_i when i = j (binary occupations are idempotent).
    """
    rho = profile.rho
    out = {}
    for name, obs in observables.items():
        if isinstance(obs, SiteObservable):
            out[name] = float(rho[obs.site])
        elif isinstance(obs, PairObservable):
            if obs.site_i == obs.site_j:
                out[name] = float(rho[obs.site_i])
            else:
                out[name] = float(rho[obs.site_i] * rho[obs.site_j])
        else:
            raise ValueError(f"unsupported observable form for {name!r}")
    return out


def covariance_limit(params: SsepParams, x: float, y: float) -> float:
    """Large-n limit of n * Cov(s_[xn], s_[yn]) for 0 < x < y < 1."""
    if not (0.0 < x < y < 1.0):
        raise ValueError("need 0 < x < y < 1")
    d = params.rho_right - params.rho_left
    return -(d * d) * x * (1.0 - y)


class SsepCoupling(CouplingModel):
    """Same-move self-coupling with a Metropolis gate on the shadow copy.

    Moves available to both copies fire in both; one-sided moves fire
    alone.  The shadow's move is accepted with probability min(Z, 1) where
    Z depends only on the move, so the per-move ratios are tabulated once.
    """

    def __init__(self, model: SsepModel, profile: LocalEquilibriumProfile):
        if profile.n != model.params.n:
            raise ValueError("profile length must match the site count")
        self.model = model
        self.profile = profile
        n = model.params.n
        self.z_table = np.array(
            [metropolis_ratio(_move_from_id(m, n), profile, model.params)
             for m in range(model._rates_univ.shape[0])])

    def initial_state(self) -> CoupledChainState:
        """Both copies start from the model's initial state."""
        return CoupledChainState(self.model.initial_state(),
                                 self.model.initial_state())

    def _joint_rates(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rx = self.model._masked_rates(x)
        ry = self.model._masked_rates(y)
        return np.where(rx > 0.0, rx, ry), rx, ry

    def joint_total_rate(self, x, y) -> float:
        joint, _, _ = self._joint_rates(x, y)
        return float(np.cumsum(joint)[-1])

    def sample_joint_event(self, x, y, rng: np.random.Generator) -> JointEvent:
        joint, rx, ry = self._joint_rates(x, y)
        cum = np.cumsum(joint)
        total = cum[-1]
        if total <= 0.0:
            raise AbsorbingStateError("no joint moves available")
        u = rng.random() * total
        idx = int(np.searchsorted(cum, u, side="right"))
        if idx >= joint.shape[0]:
            idx = int(np.nonzero(joint)[0][-1])
        move = _move_from_id(idx, self.model.params.n)
        return JointEvent(x_move=move if rx[idx] > 0 else None,
                          y_move=move if ry[idx] > 0 else None)

    def acceptance_ratio(self, y, event: JointEvent) -> float:
        return float(self.z_table[_move_to_id(event.y_move, self.model.params.n)])

    def enumerate_joint_events(self, x, y) -> list[tuple[JointEvent, float]]:
        return coupled_moves(x, y, self.model.params)

    def _run_coupled_kernel(self, initial: CoupledChainState, t_final, acc, rng):
        idx = lattice_index_arrays(acc.observables)
        if idx is None:
            return NotImplemented
        obs_i, obs_j = idx
        occ_x = self.model.state_from_occupation(initial.x).copy()
        occ_y = self.model.state_from_occupation(initial.y).copy()
        (vx, vy, t0, t1, bw, use_mht,
         x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
         diff_sq, batch_w, scal, grid_x, grid_y, grid_next,
         grid_dt) = acc.kernel_state()
        status, proposals, rejections = _kernels.ssep_run_coupled(
            occ_x, occ_y, self.model._rates_univ, self.z_table, t_final,
            obs_i, obs_j, vx, vy, t0, t1, bw, use_mht,
            x_integ, x_sq, x_batch, y_integ, y_sq, y_batch,
            diff_sq, batch_w, scal, grid_x, grid_y, grid_next, grid_dt, rng)
        if status < 0:
            raise AbsorbingStateError("zero joint total rate")
        return CoupledChainState(occ_x, occ_y,
                                 initial.sim_time + acc.clock,
                                 initial.proposals + proposals,
                                 initial.rejections + rejections)
