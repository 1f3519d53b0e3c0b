"""Brute-force exact solver for small exclusion chains.

Builds the dense generator over all 2^n occupation states (site 0 is the
least significant bit of the state index) and solves for the stationary
distribution by a dense linear system, providing ground truth for the
simulation estimators.  Also builds the generator of the Metropolized
shadow chain, whose stationary law is the product approximation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ssep import (LocalEquilibriumProfile, SsepModel, SsepParams,
                   metropolis_ratio)

MAX_SITES = 12
_ROW_SUM_TOL = 1e-12
_RESIDUAL_TOL = 1e-10


class ReducibilityError(RuntimeError):
    """The linear solve failed beyond the expected rank deficiency."""


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Dense transition-rate matrix with the row-sum-zero convention.

    rates[s, s2] is the rate from state s to s2; states holds the
    corresponding occupation vectors, row s being the bits of s with site 0
    least significant.
    """

    rates: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        q = self.rates
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("generator must be square")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be nonnegative")
        if np.max(np.abs(q.sum(axis=1))) > _ROW_SUM_TOL:
            raise ValueError("generator rows must sum to zero")

    @property
    def n_states(self) -> int:
        return self.rates.shape[0]


@dataclass(frozen=True, eq=False)
class ExactStationary:
    """Stationary probability vector over the enumerated states."""

    probabilities: np.ndarray
    states: np.ndarray
    residual: float

    def __post_init__(self):
        p = self.probabilities
        if np.any(p < 0):
            raise ValueError("stationary probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > _ROW_SUM_TOL:
            raise ValueError("stationary probabilities must sum to one")


def enumerate_states(n: int) -> np.ndarray:
    """(2^n, n) occupation table; row s holds the bits of s, site 0 = LSB."""
    idx = np.arange(2 ** n)
    return (idx[:, None] >> np.arange(n)[None, :]) & 1


def _check_size(n: int) -> None:
    if n > MAX_SITES:
        raise ValueError(f"n = {n} exceeds the dense-solve cap of {MAX_SITES} sites")


def build_ssep_generator(params: SsepParams) -> GeneratorMatrix:
    """Generator of the exclusion chain over all 2^n states."""
    _check_size(params.n)
    model = SsepModel(params)
    states = enumerate_states(params.n)
    size = states.shape[0]
    q = np.zeros((size, size))
    powers = 1 << np.arange(params.n)
    for s in range(size):
        occ = states[s].astype(np.int64)
        for move, rate in model.enumerate_events(occ):
            s2 = int(model.apply(occ, move) @ powers)
            q[s, s2] += rate
    np.fill_diagonal(q, -q.sum(axis=1))
    return GeneratorMatrix(q, states)


def build_metropolized_y_generator(params: SsepParams,
                                   profile: LocalEquilibriumProfile) -> GeneratorMatrix:
    """Generator of the shadow chain: proposal rates thinned by min(Z, 1)."""
    _check_size(params.n)
    model = SsepModel(params)
    states = enumerate_states(params.n)
    size = states.shape[0]
    q = np.zeros((size, size))
    powers = 1 << np.arange(params.n)
    for s in range(size):
        occ = states[s].astype(np.int64)
        for move, rate in model.enumerate_events(occ):
            z = metropolis_ratio(move, profile, params)
            s2 = int(model.apply(occ, move) @ powers)
            q[s, s2] += rate * min(z, 1.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return GeneratorMatrix(q, states)


def stationary_distribution(generator: GeneratorMatrix) -> ExactStationary:
    """Solve pi G = 0 with the normalization row replacing one equation."""
    q = generator.rates
    size = q.shape[0]
    a = q.T.copy()
    a[0, :] = 1.0
    b = np.zeros(size)
    b[0] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ReducibilityError(f"stationary solve failed: {exc}") from exc
    residual = float(np.max(np.abs(pi @ q)))
    if residual > _RESIDUAL_TOL:
        raise ReducibilityError(
            f"stationarity residual {residual:.3e} exceeds {_RESIDUAL_TOL:.0e}; "
            "the chain may be reducible")
    if np.min(pi) < -_ROW_SUM_TOL:
        raise ReducibilityError("stationary solve produced negative probabilities")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return ExactStationary(pi, generator.states, residual)


def exact_expectation(stationary: ExactStationary,
                      observable: Callable) -> float:
    """Expectation sum_s phi(s) pi(s) over the enumerated states."""
    values = np.array([observable(occ) for occ in stationary.states], dtype=float)
    return float(values @ stationary.probabilities)


def product_probabilities(profile: LocalEquilibriumProfile) -> np.ndarray:
    """Probability of each enumerated state under the product approximation."""
    states = enumerate_states(profile.n)
    rho = profile.rho
    return np.prod(np.where(states == 1, rho[None, :], 1.0 - rho[None, :]), axis=1)


def detailed_balance_residual(generator: GeneratorMatrix,
                              weights: np.ndarray) -> float:
    """max |w(s) G(s,s2) - w(s2) G(s2,s)| over off-diagonal pairs."""
    q = generator.rates.copy()
    np.fill_diagonal(q, 0.0)
    flux = weights[:, None] * q
    return float(np.max(np.abs(flux - flux.T)))
