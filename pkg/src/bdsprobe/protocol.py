"""Ideal three-step probe protocol for identifying a Bell diagonal state.

Qubits 1 and 2 carry the Bell diagonal state (BDS); qubit 3 is the probe.
Steps 1 and 2 start the probe in |0> and read it out in the basis of
``PROBE_SIGMA_Z = |1><1| - |0><0|`` (the probe is flipped to |1> exactly when
the pair sits in one of the two Bell components exchanged by the step).
Step 3 starts the probe in (|0> + |1>)/sqrt(2) and reads out sigma_x.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import qlinalg as ql

SQRT2 = np.sqrt(2.0)

# +1 eigenstate is |1>: matches sigma^z = |b><b| - |a><a| used for the atoms
PROBE_SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)
PROBE_SIGMA_X = ql.PAULI_X


class StepId(enum.IntEnum):
    STEP1 = 1
    STEP2 = 2
    STEP3 = 3

    @classmethod
    def parse(cls, value) -> "StepId":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            s = value.strip().lower()
            aliases = {"xx": 1, "yy": 2, "zz": 3}
            if s in aliases:
                return cls(aliases[s])
            s = s.removeprefix("step")
            return cls(int(s))
        return cls(int(value))

    @property
    def pauli_axis(self) -> str:
        return {1: "x", 2: "y", 3: "z"}[int(self)]


@dataclass(frozen=True)
class BellCoefficients:
    """Mixing probabilities (c1, c2, c3, c4) of the four Bell states.

    ``projected`` is set when the values came out of a simplex projection,
    i.e. the raw inversion produced something outside the probability simplex.
    """

    c: tuple[float, float, float, float]
    projected: bool = False

    def __post_init__(self):
        c = tuple(float(x) for x in self.c)
        if len(c) != 4:
            raise ValueError(f"need four coefficients, got {len(c)}")
        if any(not np.isfinite(x) for x in c):
            raise ValueError("coefficients must be finite")
        if any(x < -1e-12 or x > 1 + 1e-12 for x in c):
            raise ValueError(f"coefficients must lie in [0, 1], got {c}")
        if abs(sum(c) - 1.0) > 1e-12:
            raise ValueError(f"coefficients must sum to 1, got sum {sum(c)!r}")
        object.__setattr__(self, "c", c)

    def as_array(self) -> np.ndarray:
        return np.array(self.c)

    def __iter__(self):
        return iter(self.c)


@dataclass(frozen=True)
class ProtocolStepReport:
    step: StepId
    probe_state: np.ndarray = field(repr=False)
    m_value: float
    post_bds: np.ndarray = field(repr=False)
    probe_basis: str
    probe_init: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class IdentificationResult:
    m: tuple[float, float, float]
    recovered: BellCoefficients
    residual_trace_distance: float
    reports: tuple[ProtocolStepReport, ...] = field(default=(), repr=False)


def bell_state(i: int) -> np.ndarray:
    """Bell state |Psi_i>, i = 1..4, over the basis |00>, |01>, |10>, |11>.

    |Psi_1> = (|10> + |01>)/sqrt2, |Psi_2> = (|10> - |01>)/sqrt2,
    |Psi_3> = (|11> + |00>)/sqrt2, |Psi_4> = (|11> - |00>)/sqrt2.
    """
    table = {
        1: (0, 1, 1, 0),
        2: (0, -1, 1, 0),
        3: (1, 0, 0, 1),
        4: (-1, 0, 0, 1),
    }
    if i not in table:
        raise ValueError(f"Bell state index must be 1..4, got {i!r}")
    return np.array(table[i], dtype=complex) / SQRT2


def _coeffs(c) -> BellCoefficients:
    return c if isinstance(c, BellCoefficients) else BellCoefficients(tuple(c))


def bds_density(c) -> np.ndarray:
    c = _coeffs(c)
    rho = np.zeros((4, 4), dtype=complex)
    for i, ci in enumerate(c, start=1):
        rho += ci * ql.projector(bell_state(i))
    return rho


def build_bipartite_factors(step) -> tuple[np.ndarray, np.ndarray]:
    """Two-qubit gates (u13, u23) whose product realizes the step unitary.

    Both factors are exp(-i pi/4 sigma^k (x) sigma^k) with k = x, y, z for
    steps 1, 2, 3; u13 acts on qubits (1, 3), u23 on (2, 3).
    """
    step = StepId.parse(step)
    s = 1.0 / SQRT2
    if step is StepId.STEP1:
        u = s * np.array(
            [[1, 0, 0, -1j], [0, 1, -1j, 0], [0, -1j, 1, 0], [-1j, 0, 0, 1]], dtype=complex
        )
    elif step is StepId.STEP2:
        u = s * np.array(
            [[1, 0, 0, 1j], [0, 1, -1j, 0], [0, -1j, 1, 0], [1j, 0, 0, 1]], dtype=complex
        )
    else:
        u = s * np.diag([1 - 1j, 1 + 1j, 1 + 1j, 1 - 1j])
    return u, u.copy()


def compose_from_factors(u13, u23) -> np.ndarray:
    """(u13 on qubits 1,3) applied after (u23 on qubits 2,3), as an 8x8 matrix."""
    dims = [2, 2, 2]
    return ql.embed(u13, dims, [0, 2]) @ ql.embed(u23, dims, [1, 2])


def build_step_unitary(step) -> np.ndarray:
    """The three-qubit step unitary in the |q1 q2 q3> basis."""
    step = StepId.parse(step)
    if step is StepId.STEP3:
        return np.diag([-1j, 1j, 1, 1, 1, 1, 1j, -1j]).astype(complex)
    i = 1j
    if step is StepId.STEP1:
        rows = [
            [1, 0, 0, -i, 0, -i, -1, 0],
            [0, 1, -i, 0, -i, 0, 0, -1],
            [0, -i, 1, 0, -1, 0, 0, -i],
            [-i, 0, 0, 1, 0, -1, -i, 0],
            [0, -i, -1, 0, 1, 0, 0, -i],
            [-i, 0, 0, -1, 0, 1, -i, 0],
            [-1, 0, 0, -i, 0, -i, 1, 0],
            [0, -1, -i, 0, -i, 0, 0, 1],
        ]
    else:
        rows = [
            [1, 0, 0, i, 0, i, 1, 0],
            [0, 1, -i, 0, -i, 0, 0, 1],
            [0, -i, 1, 0, -1, 0, 0, i],
            [i, 0, 0, 1, 0, -1, -i, 0],
            [0, -i, -1, 0, 1, 0, 0, i],
            [i, 0, 0, -1, 0, 1, -i, 0],
            [1, 0, 0, -i, 0, -i, 1, 0],
            [0, 1, i, 0, i, 0, 0, 1],
        ]
    return 0.5 * np.array(rows, dtype=complex)


def probe_initial_state(step) -> np.ndarray:
    step = StepId.parse(step)
    if step is StepId.STEP3:
        return np.array([1, 1], dtype=complex) / SQRT2
    return np.array([1, 0], dtype=complex)


def probe_observable(step) -> tuple[str, np.ndarray]:
    step = StepId.parse(step)
    if step is StepId.STEP3:
        return "sigma_x", PROBE_SIGMA_X
    return "sigma_z", PROBE_SIGMA_Z


def _check_state(rho12) -> np.ndarray:
    rho12 = np.asarray(rho12, dtype=complex)
    if rho12.shape != (4, 4):
        raise ValueError(f"two-qubit state must be 4x4, got {rho12.shape}")
    if not ql.is_density_matrix(rho12):
        raise ValueError("input is not a valid density matrix")
    return rho12


def apply_step(rho12, step) -> ProtocolStepReport:
    """Run one protocol step on the pair state ``rho12`` with a fresh probe."""
    step = StepId.parse(step)
    rho12 = _check_state(rho12)
    u = build_step_unitary(step)
    probe = probe_initial_state(step)
    joint = u @ np.kron(rho12, ql.projector(probe)) @ u.conj().T
    probe_state = ql.partial_trace(joint, [2, 2, 2], [2])
    post = ql.partial_trace(joint, [2, 2, 2], [0, 1])
    # scrub rounding-level asymmetry so downstream validity checks stay tight
    probe_state = 0.5 * (probe_state + probe_state.conj().T)
    post = 0.5 * (post + post.conj().T)
    tag, obs = probe_observable(step)
    m = float(np.trace(obs @ probe_state).real)
    return ProtocolStepReport(step, probe_state, m, post, tag, probe)


def recovery_pass(report: ProtocolStepReport) -> tuple[np.ndarray, ProtocolStepReport]:
    """Repeat the step on its output with a new probe, undoing the Bell exchange."""
    second = apply_step(report.post_bds, report.step)
    return second.post_bds, second


def simplex_projection(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a non-empty vector")
    if np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-12:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css - 1)[0][-1]
    theta = (css[rho] - 1) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def forward_measurements(c) -> tuple[float, float, float]:
    """Closed-form probe expectations (M1, M2, M3) for coefficients ``c``."""
    c1, c2, c3, c4 = _coeffs(c)
    return (c1 + c3 - c2 - c4, c1 + c4 - c2 - c3, c1 + c2 - c3 - c4)


def recover_coefficients(m1: float, m2: float, m3: float) -> BellCoefficients:
    ms = (float(m1), float(m2), float(m3))
    for k, m in enumerate(ms, start=1):
        if not np.isfinite(m) or abs(m) > 1 + 1e-12:
            raise ValueError(f"M{k}={m!r} lies outside [-1, 1]")
    m1, m2, m3 = ms
    raw = np.array(
        [
            (1 + m1 + m2 + m3) / 4,
            (1 - m1 - m2 + m3) / 4,
            (1 + m1 - m2 - m3) / 4,
            (1 - m1 + m2 - m3) / 4,
        ]
    )
    if np.all(raw >= -1e-12):
        clipped = np.clip(raw, 0.0, 1.0)
        if abs(clipped.sum() - 1.0) <= 1e-12:
            return BellCoefficients(tuple(clipped))
    return BellCoefficients(tuple(simplex_projection(raw)), projected=True)


def run_ideal_identification(c) -> IdentificationResult:
    """All three steps, each followed by its recovery pass, on one BDS."""
    c = _coeffs(c)
    original = bds_density(c)
    rho = original
    ms = []
    reports = []
    for step in StepId:
        first = apply_step(rho, step)
        rho, second = recovery_pass(first)
        ms.append(first.m_value)
        reports.extend([first, second])
    recovered = recover_coefficients(*ms)
    residual = ql.trace_distance(original, rho)
    return IdentificationResult(tuple(ms), recovered, residual, tuple(reports))


def random_simplex_points(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points drawn uniformly from the 3-simplex (flat Dirichlet)."""
    return rng.dirichlet(np.ones(4), size=n)
