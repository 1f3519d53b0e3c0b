"""Site and pair observables on lattice-vector states.

Both built-in models carry their state as a length-n vector (occupation
numbers or energies), so a single-site value and a product of two sites
cover everything the estimators report.  These forms are also what the
compiled run loops understand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np


@dataclass(frozen=True)
class SiteObservable:
    """Value of one site (0-based index)."""

    site: int

    def __call__(self, state) -> float:
        return float(state[self.site])


@dataclass(frozen=True)
class PairObservable:
    """Product of two site values (0-based indices)."""

    site_i: int
    site_j: int

    def __call__(self, state) -> float:
        return float(state[self.site_i] * state[self.site_j])


def lattice_index_arrays(observables: Iterable[Callable]):
    """Index arrays (obs_i, obs_j) for compiled loops; j = -1 marks a plain
    site.  Returns None when any observable is not a site/pair form."""
    obs_i = []
    obs_j = []
    for obs in observables:
        if isinstance(obs, SiteObservable):
            obs_i.append(obs.site)
            obs_j.append(-1)
        elif isinstance(obs, PairObservable):
            obs_i.append(obs.site_i)
            obs_j.append(obs.site_j)
        else:
            return None
    return np.asarray(obs_i, dtype=np.int64), np.asarray(obs_j, dtype=np.int64)
