"""Shared test helpers: a minimal two-state chain and scripted couplings."""

from __future__ import annotations

import numpy as np

from couplemc.engine import CouplingModel, JointEvent, JumpModel

FLIP = "flip"


class TwoStateChain(JumpModel):
    """Two-state chain: 0 -> 1 at rate a, 1 -> 0 at rate b."""

    def __init__(self, a: float, b: float):
        self.a = a
        self.b = b

    def total_exit_rate(self, state) -> float:
        return self.a if state == 0 else self.b

    def sample_event(self, state, rng):
        return FLIP

    def apply(self, state, event):
        return 1 - state

    def event_rate(self, state, event) -> float:
        return self.total_exit_rate(state) if event == FLIP else 0.0


class MirrorCoupling(CouplingModel):
    """Degenerate coupling: y mirrors x exactly (every move shared, Z = 1)."""

    def __init__(self, model: JumpModel):
        self.model = model

    def joint_total_rate(self, x, y) -> float:
        return self.model.total_exit_rate(x)

    def sample_joint_event(self, x, y, rng) -> JointEvent:
        event = self.model.sample_event(x, rng)
        return JointEvent(x_move=event, y_move=event)

    def acceptance_ratio(self, y, event) -> float:
        return 1.0


class ScriptedCoupling(CouplingModel):
    """Coupling that replays a fixed list of (JointEvent, Z) at unit rate."""

    def __init__(self, model: JumpModel, script):
        self.model = model
        self.script = list(script)
        self._cursor = 0

    def joint_total_rate(self, x, y) -> float:
        return 1.0

    def sample_joint_event(self, x, y, rng) -> JointEvent:
        event, _ = self.script[self._cursor]
        self._cursor += 1
        return event

    def acceptance_ratio(self, y, event) -> float:
        for scripted, z in self.script:
            if scripted is event:
                return z
        raise AssertionError("unscripted event")


def spaced_rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
