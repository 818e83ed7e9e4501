"""Finite-ensemble sampling of probe outcomes and coefficient estimation.

Random numbers come from NumPy's Philox-4x64 counter-based generator keyed by
``SeedSequence([seed, step])``: every step owns an independent stream and the
bit stream is fixed by the algorithm, not by the platform.  An outcome is +1
when a uniform double (53-bit, ``Generator.random``) falls below the outcome
probability, so a run of N shots is an exact Binomial(N, p) draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .protocol import (
    BellCoefficients,
    StepId,
    forward_measurements,
    recover_coefficients,
)

_CHUNK = 1 << 20


@dataclass(frozen=True)
class ShotPlan:
    shots_per_step: int
    seed: int = 0
    include_recovery_shots: bool = False

    def __post_init__(self):
        if int(self.shots_per_step) < 1:
            raise ValueError("shots_per_step must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def effective_shots(self) -> int:
        return int(self.shots_per_step) * (2 if self.include_recovery_shots else 1)


@dataclass(frozen=True)
class EstimateReport:
    m_hat: tuple[float, float, float]
    c_hat: BellCoefficients
    std_err: tuple[float, float, float, float]
    shots_used: tuple[int, int, int]

    def to_dict(self) -> dict:
        return {
            "m_hat": list(self.m_hat),
            "c_hat": list(self.c_hat.c),
            "projected": self.c_hat.projected,
            "std_err": list(self.std_err),
            "shots_used": list(self.shots_used),
        }


def outcome_probability(step, c) -> float:
    """Probability that the probe reads +1 for the step's observable."""
    step = StepId.parse(step)
    c = c if isinstance(c, BellCoefficients) else BellCoefficients(tuple(c))
    m = forward_measurements(c)[int(step) - 1]
    return float(min(1.0, max(0.0, 0.5 * (1.0 + m))))


def step_generator(seed: int, step) -> np.random.Generator:
    step = StepId.parse(step)
    ss = np.random.SeedSequence([int(seed), int(step)])
    return np.random.Generator(np.random.Philox(ss))


def sample_outcomes(step, c, plan: ShotPlan) -> np.ndarray:
    """Individual probe outcomes (+1/-1) for one step, in draw order."""
    p = outcome_probability(step, c)
    rng = step_generator(plan.seed, step)
    u = rng.random(plan.effective_shots)
    return np.where(u < p, 1, -1).astype(np.int8)


def sample_step(step, c, plan: ShotPlan) -> tuple[int, int]:
    """Counts (n_plus, n_minus) of the step's probe outcomes."""
    p = outcome_probability(step, c)
    rng = step_generator(plan.seed, step)
    n = plan.effective_shots
    n_plus = 0
    remaining = n
    while remaining:
        k = min(remaining, _CHUNK)
        n_plus += int(np.count_nonzero(rng.random(k) < p))
        remaining -= k
    return n_plus, n - n_plus


def _std_err(m_hat, n_eff: int) -> tuple[float, float, float, float]:
    # every coefficient is (1 +- M1 +- M2 +- M3)/4, so all share one variance
    var = sum((1.0 - m * m) / n_eff for m in m_hat) / 16.0
    se = max(float(np.sqrt(var)), 1.0 / n_eff)
    return (se, se, se, se)


def estimate_from_counts(counts) -> EstimateReport:
    """Estimate M and c from per-step (n_plus, n_minus) counts."""
    counts = [(int(a), int(b)) for a, b in counts]
    if len(counts) != 3:
        raise ValueError("need counts for all three steps")
    ms = []
    used = []
    for n_plus, n_minus in counts:
        n = n_plus + n_minus
        if n < 1 or n_plus < 0 or n_minus < 0:
            raise ValueError(f"bad counts ({n_plus}, {n_minus})")
        ms.append((n_plus - n_minus) / n)
        used.append(n)
    c_hat = recover_coefficients(*ms)
    return EstimateReport(tuple(ms), c_hat, _std_err(ms, min(used)), tuple(used))


def estimate(c_true, plan: ShotPlan) -> EstimateReport:
    """Sample every step of the protocol and invert the empirical means."""
    counts = [sample_step(step, c_true, plan) for step in StepId]
    return estimate_from_counts(counts)


class BellDiagonalEstimator(BaseEstimator):
    """Estimate Bell-diagonal coefficients from raw probe measurement records.

    ``X`` is an ``(n, 2)`` integer array of ``(step, outcome)`` rows with step
    in {1, 2, 3} and outcome in {-1, +1}.  After ``fit`` the estimator exposes
    ``m_hat_``, ``coef_`` (the four coefficients), ``std_err_``,
    ``n_shots_`` and ``projected_``.

    Parameters
    ----------
    project : bool, default True
        Project inconsistent estimates onto the probability simplex.  With
        ``project=False`` the raw linear inversion is stored in ``coef_``.
    """

    def __init__(self, project: bool = True):
        self.project = project

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.int64, ensure_min_samples=1)
        if X.shape[1] != 2:
            raise ValueError(f"X must have two columns (step, outcome), got {X.shape[1]}")
        steps, outcomes = X[:, 0], X[:, 1]
        if not np.isin(steps, (1, 2, 3)).all():
            raise ValueError("step column may only contain 1, 2, 3")
        if not np.isin(outcomes, (-1, 1)).all():
            raise ValueError("outcome column may only contain -1, +1")

        counts = []
        for s in (1, 2, 3):
            sel = outcomes[steps == s]
            if sel.size == 0:
                raise ValueError(f"no records for step {s}")
            n_plus = int(np.count_nonzero(sel == 1))
            counts.append((n_plus, sel.size - n_plus))
        report = estimate_from_counts(counts)
        self.m_hat_ = np.array(report.m_hat)
        self.n_shots_ = np.array(report.shots_used)
        self.std_err_ = np.array(report.std_err)
        if self.project:
            self.coef_ = report.c_hat.as_array()
            self.projected_ = report.c_hat.projected
        else:
            m1, m2, m3 = self.m_hat_
            self.coef_ = np.array(
                [1 + m1 + m2 + m3, 1 - m1 - m2 + m3, 1 + m1 - m2 - m3, 1 - m1 + m2 - m3]
            ) / 4
            self.projected_ = False
        return self

    def predict_measurements(self):
        """Expectations (M1, M2, M3) implied by the fitted coefficients."""
        check_is_fitted(self, "coef_")
        c1, c2, c3, c4 = self.coef_
        return np.array([c1 + c3 - c2 - c4, c1 + c4 - c2 - c3, c1 + c2 - c3 - c4])


def simulate_records(c, plan: ShotPlan) -> np.ndarray:
    """Stack sampled outcomes of all steps into ``(step, outcome)`` rows."""
    blocks = []
    for step in StepId:
        out = sample_outcomes(step, c, plan)
        blocks.append(np.column_stack([np.full(out.size, int(step)), out]))
    return np.vstack(blocks).astype(np.int64)
