"""Self-checks of the ideal protocol algebra, as run by ``bdsprobe verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qlinalg as ql
from .protocol import (
    StepId,
    bell_state,
    build_bipartite_factors,
    build_step_unitary,
    compose_from_factors,
    forward_measurements,
    probe_initial_state,
    probe_observable,
    random_simplex_points,
    recover_coefficients,
    run_ideal_identification,
)

# Bell components exchanged by each step, and the components that read +1
BELL_EXCHANGE = {
    StepId.STEP1: {1: 3, 2: 2, 3: 1, 4: 4},
    StepId.STEP2: {1: 4, 2: 2, 3: 3, 4: 1},
    StepId.STEP3: {1: 1, 2: 2, 3: 4, 4: 3},
}
PLUS_OUTCOME = {StepId.STEP1: {1, 3}, StepId.STEP2: {1, 4}, StepId.STEP3: {1, 2}}


@dataclass(frozen=True)
class CheckResult:
    check_name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error < self.tolerance)

    def to_dict(self) -> dict:
        return {"check_name": self.check_name, "max_error": float(self.max_error), "pass": self.passed}


def unitarity_check() -> CheckResult:
    err = max(ql.unitarity_error(build_step_unitary(s)) for s in StepId)
    return CheckResult("unitarity", err, 1e-12)


def factorization_check() -> CheckResult:
    err = 0.0
    for s in StepId:
        u13, u23 = build_bipartite_factors(s)
        diff = compose_from_factors(u13, u23) - build_step_unitary(s)
        err = max(err, float(np.max(np.abs(diff))))
    return CheckResult("factorization", err, 1e-12)


def bell_action_error(step) -> float:
    """Largest deviation from the expected Bell exchange and probe readout of one step."""
    step = StepId.parse(step)
    u = build_step_unitary(step)
    _, obs = probe_observable(step)
    err = 0.0
    for i in range(1, 5):
        joint = u @ np.kron(bell_state(i), probe_initial_state(step))
        rho = ql.projector(joint)
        pair = ql.partial_trace(rho, [2, 2, 2], [0, 1])
        probe = ql.partial_trace(rho, [2, 2, 2], [2])
        target = ql.projector(bell_state(BELL_EXCHANGE[step][i]))
        expected = 1.0 if i in PLUS_OUTCOME[step] else -1.0
        err = max(err, float(np.max(np.abs(pair - target))),
                  abs(np.trace(obs @ probe).real - expected))
    return err


def bell_action_check() -> CheckResult:
    return CheckResult("bell_action", max(bell_action_error(s) for s in StepId), 1e-12)


def round_trip_check(n_points: int = 100, seed: int = 0) -> CheckResult:
    pts = random_simplex_points(n_points, np.random.default_rng(seed))
    err = 0.0
    for c in pts:
        back = recover_coefficients(*forward_measurements(c)).as_array()
        err = max(err, float(np.max(np.abs(back - c))))
    return CheckResult("round_trip", err, 1e-12)


def nondestructive_check(n_points: int = 100, seed: int = 1) -> CheckResult:
    pts = random_simplex_points(n_points, np.random.default_rng(seed))
    err = max(run_ideal_identification(c).residual_trace_distance for c in pts)
    return CheckResult("nondestructiveness", err, 1e-10)


def run_all_checks() -> list[CheckResult]:
    return [
        unitarity_check(),
        factorization_check(),
        bell_action_check(),
        round_trip_check(),
        nondestructive_check(),
    ]
