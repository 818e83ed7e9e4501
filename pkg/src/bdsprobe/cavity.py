"""Cavity-QED realization of the two-qubit step gates.

Two identical three-level atoms (ground levels a = |0>, b = |1>, excited e)
share one cavity mode.  Atom 1 belongs to the Bell pair, atom 3 is the probe.
The model works in the rotating frame, so it is fully described by the
detunings

    delta_a = w_e - w_c,          delta_b = w_e - w_c - w_ab + delta_1,
    Delta_a = w_e - w_a,          Delta_b = w_e - w_b - w_ab + delta_1,

plus the couplings, Rabi frequencies and the frame shift ``delta_1`` that
appears as an explicit field ``delta_1 |b><b|`` on each atom.  The detunings
stored on :class:`CavityParams` are the final values: tuning ``delta_1`` moves
only the explicit field.  All frequencies are in units of g_a and times in
units of 1/g_a.

Space ordering: atom 1 (3 levels) x probe atom (3 levels) x cavity
(``n_ph`` Fock states), left factor most significant.

The pseudo-spin convention on the atoms is sigma^z = |b><b| - |a><a|, so the
effective field term B (sigma_1^z + sigma_3^z) equals -B (Z I + I Z) in terms of
the standard Pauli Z = diag(1, -1).
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy.optimize import brentq

from . import qlinalg as ql
from ._kernels import rk4_harmonic
from .protocol import StepId, build_bipartite_factors

LEVEL_A, LEVEL_B, LEVEL_E = 0, 1, 2
DEFAULT_DT = 1e-3
LEAKAGE_LIMIT = 0.05

ATOM_SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)  # |b><b| - |a><a|
ATOM_SIGMA_X = ql.PAULI_X


class AdiabaticValidityWarning(UserWarning):
    """Parameters sit outside the far-detuned regime assumed by the effective model."""


@dataclass(frozen=True)
class CavityParams:
    """Rotating-frame parameters of one cavity holding a system atom and the probe."""

    g_a: float
    g_b: float
    omega_ra: float
    omega_rb: float
    delta_a: float
    delta_b: float
    Delta_a: float
    Delta_b: float
    delta_1: float = 0.0
    n_ph: int = 3
    lab_frequencies: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("g_a", "g_b", "omega_ra", "omega_rb", "delta_a", "delta_b",
                     "Delta_a", "Delta_b", "delta_1"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if int(self.n_ph) < 2:
            raise ValueError("n_ph must be at least 2")
        object.__setattr__(self, "n_ph", int(self.n_ph))

        if self.delta_a != 0 and self.delta_b != 0:
            lhs = self.g_a**2 / self.delta_a
            rhs = self.g_b**2 / self.delta_b
            scale = max(abs(lhs), abs(rhs))
            if scale > 0 and abs(lhs - rhs) > 1e-9 * scale:
                raise ValueError(
                    f"matching condition g_a^2/delta_a = g_b^2/delta_b violated ({lhs!r} vs {rhs!r})"
                )

        dets = [abs(self.delta_a), abs(self.delta_b), abs(self.Delta_a), abs(self.Delta_b)]
        couplings = [abs(self.g_a), abs(self.g_b), abs(self.omega_ra), abs(self.omega_rb)]
        if max(couplings) > 0 and min(dets) < 10 * max(couplings):
            warnings.warn(
                f"large-detuning condition not met: min detuning {min(dets):g} < "
                f"10 x max coupling {max(couplings):g}",
                AdiabaticValidityWarning,
                stacklevel=3,
            )

    @property
    def dims(self) -> list[int]:
        return [3, 3, self.n_ph]

    @property
    def dim(self) -> int:
        return 9 * self.n_ph

    def replace(self, **changes) -> "CavityParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["lab_frequencies"] is None:
            d.pop("lab_frequencies")
        return d


@dataclass(frozen=True)
class EffectiveCoefficients:
    j1: float
    j2: float
    b_field: float
    lam: float
    step: StepId
    denominator: float


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    full_values: np.ndarray
    effective_values: np.ndarray
    observable: str
    leakage: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.full_values - self.effective_values)))

    def max_deviation_until(self, t_end: float) -> float:
        sel = self.times <= t_end + 1e-12
        return float(np.max(np.abs(self.full_values[sel] - self.effective_values[sel])))

    @property
    def mean_leakage(self) -> float:
        return float(np.mean(self.leakage))


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    leakage: float
    gate_time: float
    lambda_used: float
    outside_validity: bool
    propagator: np.ndarray = field(repr=False)


# --------------------------------------------------------------------------- #
# selection rules and effective coefficients


def _nonzero(**terms):
    for name, v in terms.items():
        if v == 0:
            raise ValueError(f"{name} is zero; the effective coefficients are undefined")


def matched_g_b(g_a: float, delta_a: float, delta_b: float) -> float:
    """Cavity coupling on b <-> e fixed by g_a^2/delta_a = g_b^2/delta_b."""
    _nonzero(delta_a=delta_a)
    ratio = delta_b / delta_a
    if ratio < 0:
        raise ValueError("delta_a and delta_b must share a sign for a real g_b")
    return abs(g_a) * math.sqrt(ratio)


def omega_b_for_step(step, base: CavityParams) -> float:
    """Rabi frequency Omega_b that makes the effective coupling a pure sigma.sigma term.

    Steps 1 and 2 use +/- g_b Omega_a (1/Delta_a + 1/delta_b) / [g_a (1/delta_a + 1/Delta_b)]
    (equal / opposite exchange amplitudes); step 3 uses
    -Omega_a g_a (1/Delta_a + 1/delta_a) / [g_b (1/Delta_b + 1/delta_b)].
    """
    step = StepId.parse(step)
    p = base
    _nonzero(delta_a=p.delta_a, delta_b=p.delta_b, Delta_a=p.Delta_a, Delta_b=p.Delta_b)
    if step is StepId.STEP3:
        num = -p.omega_ra * p.g_a * (1 / p.Delta_a + 1 / p.delta_a)
        den = p.g_b * (1 / p.Delta_b + 1 / p.delta_b)
        name = "g_b*(1/Delta_b+1/delta_b)"
    else:
        num = p.g_b * p.omega_ra * (1 / p.Delta_a + 1 / p.delta_b)
        den = p.g_a * (1 / p.delta_a + 1 / p.Delta_b)
        name = "g_a*(1/delta_a+1/Delta_b)"
        if step is StepId.STEP2:
            num = -num
    if num == 0:
        # nothing to balance: the rule is satisfied by Omega_b = 0
        return 0.0
    _nonzero(**{name: den})
    return num / den


def _closed_form_field(step: StepId, p: CavityParams, delta_1: float) -> float:
    ga, gb, oa, ob = p.g_a, p.g_b, p.omega_ra, p.omega_rb
    da, db, Da, Db = p.delta_a, p.delta_b, p.Delta_a, p.Delta_b
    shift = ga**2 / da
    if step is StepId.STEP3:
        dens = {
            "delta_a-Delta_b+g_a^2/delta_a": da - Db + shift,
            "delta_b-Delta_a+g_a^2/delta_a": db - Da + shift,
            "Delta_a-Delta_b": Da - Db,
        }
        _nonzero(**dens)
        return (
            0.5 * (ob**2 / Db + delta_1 - oa**2 / Da)
            + 0.5 * (
                (ob**2 * ga**2 / 4) / (da - Db + shift) * (1 / da + 1 / Db) ** 2
                - (oa**2 * gb**2 / 4) / (db - Da + shift) * (1 / db + 1 / Da) ** 2
            )
            + (oa**2 * ob**2 / 4) / (Da - Db) * (1 / Da + 1 / Db) ** 2
        )
    dens = {
        "delta_a-delta_b": da - db,
        "delta_b-Delta_a+g_a^2/delta_a": db - Da + shift,
        "delta_a-Delta_a+g_a^2/delta_a": da - Da + shift,
    }
    _nonzero(**dens)
    return (
        (oa**2 * ob**2 / 4) / (da - db) * (1 / Da + 1 / Db) ** 2
        + (ob**2 * gb**2 / 4) / (db - Da + shift) * (1 / Db + 1 / db) ** 2
        - (oa**2 * ga**2 / 4) / (da - Da + shift) * (1 / Da + 1 / da) ** 2
        + 0.5 * (ob**2 / Db - oa**2 / Da + delta_1)
    )


def coefficients_for_step(step, params: CavityParams) -> EffectiveCoefficients:
    """Exchange amplitudes, effective field and coupling strength for a step.

    For steps 1 and 2 the coupling is lam = 2 J1^2 / (delta_a - Delta_b + g_a^2/delta_a);
    for step 3 it is lam = 2 J1~^2 / (delta_a - Delta_a + g_a^2/delta_a).
    """
    step = StepId.parse(step)
    p = params
    _nonzero(delta_a=p.delta_a, delta_b=p.delta_b, Delta_a=p.Delta_a, Delta_b=p.Delta_b)
    shift = p.g_a**2 / p.delta_a
    if step is StepId.STEP3:
        j1 = p.omega_ra * p.g_a / 2 * (1 / p.Delta_a + 1 / p.delta_a)
        j2 = p.omega_rb * p.g_b / 2 * (1 / p.Delta_b + 1 / p.delta_b)
        den = p.delta_a - p.Delta_a + shift
        _nonzero(**{"delta_a-Delta_a+g_a^2/delta_a": den})
    else:
        j1 = p.g_a * p.omega_rb / 2 * (1 / p.delta_a + 1 / p.Delta_b)
        j2 = p.g_b * p.omega_ra / 2 * (1 / p.delta_b + 1 / p.Delta_a)
        den = p.delta_a - p.Delta_b + shift
        _nonzero(**{"delta_a-Delta_b+g_a^2/delta_a": den})
    b = _closed_form_field(step, p, p.delta_1)
    return EffectiveCoefficients(j1, j2, b, 2 * j1**2 / den, step, den)


def effective_hamiltonian(step, coeffs: EffectiveCoefficients, full_form: bool = False) -> np.ndarray:
    """Two-qubit effective Hamiltonian on (system atom, probe atom).

    The default is the pure ``lam * sigma^k (x) sigma^k`` form.  With
    ``full_form=True`` the exchange form with J1, J2 and the field B is built
    instead (it reduces to the pure form once the selection rule holds and B = 0).
    """
    step = StepId.parse(step)
    if not full_form:
        s = ql.PAULIS[step.pauli_axis]
        return coeffs.lam * np.kron(s, s)

    j1, j2, den = coeffs.j1, coeffs.j2, coeffs.denominator
    sz = ATOM_SIGMA_Z
    field_term = coeffs.b_field * (np.kron(sz, ql.IDENTITY_2) + np.kron(ql.IDENTITY_2, sz))
    if step is StepId.STEP3:
        pa = np.diag([1.0, 0.0]).astype(complex)
        pb = np.diag([0.0, 1.0]).astype(complex)
        op = j1 * pa + j2 * pb
        return 2 * np.kron(op, op) / den + field_term
    sp = np.array([[0, 0], [1, 0]], dtype=complex)  # |b><a|
    sm = sp.conj().T
    return 2 * np.kron(j1 * sp + j2 * sm, j1 * sm + j2 * sp) / den + field_term


def gate_time(lam: float, n: int = 0) -> float:
    """(2n + 1) pi / (4 lam).

    exp(-i lam s.s t) at these times equals exp(-i pi/4 s.s) (-i s.s)^n, i.e. the
    target gate up to a global phase for even n and up to the local correction
    s (x) s for odd n.
    """
    if lam == 0:
        raise ValueError("coupling strength is zero; the gate is never reached")
    if n < 0 or int(n) != n:
        raise ValueError("n must be a non-negative integer")
    return (2 * int(n) + 1) * math.pi / (4 * lam)


# --------------------------------------------------------------------------- #
# full model


@dataclass(frozen=True)
class HarmonicGenerator:
    """H(t) = static + sum_k (e^{i w_k t} A_k + h.c.), with sparse A_k."""

    dim: int
    static: np.ndarray  # dense, Hermitian
    terms: tuple  # of (A_k dense, w_k)

    def at(self, t: float) -> np.ndarray:
        h = self.static.astype(complex).copy()
        for a, w in self.terms:
            ph = np.exp(1j * w * t)
            h += ph * a + np.conj(ph) * a.conj().T
        return h

    @property
    def max_frequency(self) -> float:
        freqs = [abs(w) for _, w in self.terms]
        diag = np.abs(np.diag(self.static))
        return max(freqs + [float(diag.max()) if diag.size else 0.0] + [0.0])

    def period(self, max_denominator: int = 1000) -> float | None:
        """Common period of all nonzero drive frequencies, or None if incommensurate."""
        freqs = [abs(w) for a, w in self.terms if w != 0 and np.any(a)]
        if not freqs:
            return None
        fracs = []
        for w in freqs:
            f = Fraction(w).limit_denominator(max_denominator)
            if abs(float(f) - w) > 1e-12 * max(1.0, w):
                return None
            fracs.append(f)
        lcm_den = reduce(lambda a, b: a * b // math.gcd(a, b), [f.denominator for f in fracs])
        base = reduce(math.gcd, [int(f * lcm_den) for f in fracs])
        return 2 * math.pi * lcm_den / base

    def _coo(self):
        s = self.static
        sr, sc = np.nonzero(s)
        a_rows, a_cols, a_vals, a_term, freqs = [], [], [], [], []
        for k, (a, w) in enumerate(self.terms):
            r, c = np.nonzero(a)
            a_rows.append(r)
            a_cols.append(c)
            a_vals.append(a[r, c])
            a_term.append(np.full(r.size, k))
            freqs.append(w)
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
        return (
            sr.astype(np.int64), sc.astype(np.int64), s[sr, sc].astype(complex),
            cat(a_rows, np.int64), cat(a_cols, np.int64), cat(a_vals, complex),
            cat(a_term, np.int64), np.array(freqs, dtype=float),
        )

    def step(self, states: np.ndarray, t0: float, dt: float, n_steps: int) -> np.ndarray:
        if n_steps <= 0:
            return np.array(states, dtype=complex)
        coo = self._coo()
        return rk4_harmonic(np.ascontiguousarray(states, dtype=complex), float(t0), float(dt),
                            int(n_steps), *coo)


def _atom_op(op3, which: int, n_ph: int) -> np.ndarray:
    eye3 = np.eye(3, dtype=complex)
    eye_c = np.eye(n_ph, dtype=complex)
    return ql.kron(op3, eye3, eye_c) if which == 0 else ql.kron(eye3, op3, eye_c)


def _transition(i: int, j: int) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    m[i, j] = 1.0
    return m


def annihilation(n_ph: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_ph)), 1).astype(complex)


def full_generator(params: CavityParams) -> HarmonicGenerator:
    """Rotating-frame generator of the two-atom + cavity model.

    Per atom j: delta_1 |b><b| + (Omega_a e^{i Delta_a t} + g_a a e^{i delta_a t}) |e><a|
    + (Omega_b e^{i Delta_b t} + g_b a e^{i delta_b t}) |e><b| + h.c.
    """
    p = params
    n = p.n_ph
    cav = ql.kron(np.eye(9), annihilation(n))
    static = np.zeros((p.dim, p.dim), dtype=complex)
    ops = {"Da": 0, "da": 0, "Db": 0, "db": 0}
    for j in (0, 1):
        static = static + p.delta_1 * _atom_op(_transition(LEVEL_B, LEVEL_B), j, n)
        ea = _atom_op(_transition(LEVEL_E, LEVEL_A), j, n)
        eb = _atom_op(_transition(LEVEL_E, LEVEL_B), j, n)
        ops["Da"] = ops["Da"] + p.omega_ra * ea
        ops["da"] = ops["da"] + p.g_a * ea @ cav
        ops["Db"] = ops["Db"] + p.omega_rb * eb
        ops["db"] = ops["db"] + p.g_b * eb @ cav
    terms = (
        (ops["Da"], p.Delta_a),
        (ops["da"], p.delta_a),
        (ops["Db"], p.Delta_b),
        (ops["db"], p.delta_b),
    )
    return HarmonicGenerator(p.dim, static, terms)


def full_hamiltonian(params: CavityParams, step_frame, t: float) -> np.ndarray:
    """Dense rotating-frame Hamiltonian at time ``t``.

    Both gate families share the construction; ``step_frame`` selects which
    detuning set the parameters are meant to describe and is only validated.
    """
    StepId.parse(step_frame)
    return full_generator(params).at(t)


def qubit_indices(n_ph: int) -> list[int]:
    """Indices of |aa,0>, |ab,0>, |ba,0>, |bb,0> (system atom first)."""
    return [(i1 * 3 + i3) * n_ph for i1 in (LEVEL_A, LEVEL_B) for i3 in (LEVEL_A, LEVEL_B)]


def embed_qubit_state(psi4, n_ph: int) -> np.ndarray:
    psi4 = np.asarray(psi4, dtype=complex).ravel()
    if psi4.shape != (4,):
        raise ValueError("need a two-qubit ket")
    out = np.zeros(9 * n_ph, dtype=complex)
    out[qubit_indices(n_ph)] = psi4
    return out


def probe_observable_full(step, n_ph: int) -> tuple[str, np.ndarray]:
    """Probe observable lifted to the full space (zero on the probe's |e>)."""
    step = StepId.parse(step)
    tag, s2 = ("sigma_x", ATOM_SIGMA_X) if step is StepId.STEP3 else ("sigma_z", ATOM_SIGMA_Z)
    s3 = np.zeros((3, 3), dtype=complex)
    s3[:2, :2] = s2
    return tag, ql.kron(np.eye(3), s3, np.eye(n_ph))


def resolve_dt(gen: HarmonicGenerator, dt: float = DEFAULT_DT) -> float:
    """min(requested dt, 2 pi / (50 w_max))."""
    w = gen.max_frequency
    return dt if w == 0 else min(dt, 2 * math.pi / (50 * w))


def propagate(
    gen: HarmonicGenerator,
    states0,
    t_grid,
    dt: float = DEFAULT_DT,
    *,
    max_drift: float = 1e-4,
    periodic: bool | None = None,
) -> np.ndarray:
    """States (one column per branch) at every point of ``t_grid``.

    Fixed-step RK4 from ``t_grid[0]``.  When the generator is periodic and the
    run spans many periods, the one-period RK4 map is computed once and
    reused; with a step that divides the period this is the same RK4 solution,
    since the step map repeats every period.

    Returns an array of shape ``(len(t_grid), dim, n_branches)``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be ascending")
    y0 = np.array(states0, dtype=complex)
    if y0.ndim == 1:
        y0 = y0[:, None]
    dt = resolve_dt(gen, dt)
    norms0 = np.sum(np.abs(y0) ** 2, axis=0)

    period = gen.period()
    span = t_grid[-1] - t_grid[0]
    use_periodic = periodic
    if use_periodic is None:
        use_periodic = False
        if period is not None and t_grid[0] == 0.0:
            m = math.ceil(period / dt)
            direct_cost = span / dt * y0.shape[1]
            periodic_cost = m * gen.dim + t_grid.size * m * y0.shape[1]
            use_periodic = periodic_cost < 0.5 * direct_cost
    if use_periodic and (period is None or t_grid[0] != 0.0):
        raise ValueError("periodic propagation needs a periodic generator and t_grid[0] == 0")

    out = np.empty((t_grid.size,) + y0.shape, dtype=complex)
    if use_periodic:
        m = math.ceil(period / dt)
        h = period / m
        u_period = gen.step(np.eye(gen.dim, dtype=complex), 0.0, h, m)
        k_done, y_k = 0, y0
        for i, t in enumerate(t_grid):
            k = int(math.floor(t / period + 1e-12))
            while k_done < k:
                y_k = u_period @ y_k
                k_done += 1
            tau = max(0.0, t - k * period)
            n_full = int(math.floor(tau / h + 1e-9))
            y = gen.step(y_k, 0.0, h, n_full)
            rem = tau - n_full * h
            if rem > 1e-13:
                y = gen.step(y, n_full * h, rem, 1)
            out[i] = y
    else:
        y, t = y0, t_grid[0]
        out[0] = y
        for i in range(1, t_grid.size):
            target = t_grid[i]
            n_full = int(math.floor((target - t) / dt + 1e-9))
            y = gen.step(y, t, dt, n_full)
            t_mid = t + n_full * dt
            rem = target - t_mid
            if rem > 1e-13:
                y = gen.step(y, t_mid, rem, 1)
            t = target
            out[i] = y

    drift = np.max(np.abs(np.sum(np.abs(out) ** 2, axis=1) - norms0[None, :]))
    if drift > max_drift:
        raise ql.NormDriftError(f"norm drift {drift:.3e} exceeds {max_drift:g}; use a smaller dt")
    return out


# --------------------------------------------------------------------------- #
# Floquet extraction of the true effective Hamiltonian


def period_propagator(params: CavityParams, dt: float = DEFAULT_DT) -> tuple[np.ndarray, float]:
    gen = full_generator(params)
    period = gen.period()
    if period is None:
        if any(np.any(a) for a, _ in gen.terms):
            raise ValueError("drive frequencies are not commensurate; no common period")
        period = 1.0  # static generator: any period will do
    dt = resolve_dt(gen, dt)
    m = math.ceil(period / dt)
    return gen.step(np.eye(gen.dim, dtype=complex), 0.0, period / m, m), period


def floquet_effective_hamiltonian(params: CavityParams, dt: float = DEFAULT_DT) -> np.ndarray:
    """Numerically exact effective Hamiltonian on the four qubit states.

    The one-period propagator of the full model is diagonalized; the four
    Floquet states with the largest weight on |aa,0>, |ab,0>, |ba,0>, |bb,0>
    are projected there and orthonormalized (polar decomposition), and their
    quasi-energies are placed on those vectors.  Basis order and Pauli
    conventions match :func:`effective_hamiltonian` (|a> = |0>).
    """
    u_period, period = period_propagator(params, dt)
    evals, vecs = np.linalg.eig(u_period)
    idx = qubit_indices(params.n_ph)
    weight = np.sum(np.abs(vecs[idx, :]) ** 2, axis=0) / np.sum(np.abs(vecs) ** 2, axis=0)
    sel = np.argsort(weight)[-4:]
    q = vecs[np.ix_(idx, sel)]
    w, _, vh = np.linalg.svd(q)
    q = w @ vh
    ref = evals[sel[-1]]
    # quasi-energies relative to one reference keep the cluster on one branch
    eps = -np.angle(ref) / period - np.angle(evals[sel] * np.conj(ref)) / period
    h = (q * eps) @ q.conj().T
    return 0.5 * (h + h.conj().T)


def pauli_coefficients(h4) -> dict[str, float]:
    """Real coefficients of a 4x4 Hermitian matrix on the two-qubit Pauli basis."""
    h4 = np.asarray(h4, dtype=complex)
    basis = {"I": ql.IDENTITY_2, "X": ql.PAULI_X, "Y": ql.PAULI_Y, "Z": ql.PAULI_Z}
    return {
        n1 + n2: float(np.trace(np.kron(a, b) @ h4).real / 4)
        for n1, a in basis.items()
        for n2, b in basis.items()
    }


def floquet_field(params: CavityParams, dt: float = DEFAULT_DT) -> float:
    """Effective field B (coefficient of sigma_1^z + sigma_3^z) of the full model."""
    c = pauli_coefficients(floquet_effective_hamiltonian(params, dt))
    return -0.5 * (c["ZI"] + c["IZ"])


def floquet_coupling(params: CavityParams, step, dt: float = DEFAULT_DT) -> float:
    step = StepId.parse(step)
    c = pauli_coefficients(floquet_effective_hamiltonian(params, dt))
    k = step.pauli_axis.upper()
    return c[k + k]


# --------------------------------------------------------------------------- #
# tuning the frame shift


def closed_form_field(params: CavityParams, step) -> float:
    """Effective field from the closed-form adiabatic-elimination expressions."""
    return coefficients_for_step(step, params).b_field


def tune_delta1(
    params: CavityParams,
    step,
    method: str = "formula",
    bracket: tuple[float, float] | None = None,
    tol: float | None = None,
    dt: float = DEFAULT_DT,
) -> tuple[float, CavityParams]:
    """Choose delta_1 so that the effective field B vanishes.

    ``method="formula"`` root-finds the closed-form field (Brent bracketing,
    |B| < 1e-10 by default).  The default bracket is
    ``delta_1(current) +/- (4 |B(current)| + 1e-3)``; because delta_1 enters B
    as ``delta_1 / 2`` this always contains a sign change.

    ``method="floquet"`` nulls the field extracted from the full model
    (:func:`floquet_field`) with Newton steps of slope 1/2, to |B| < 1e-9.

    Returns the tuned delta_1 and the updated parameters.
    """
    step = StepId.parse(step)
    if method == "formula":
        tol = 1e-10 if tol is None else tol
        f = lambda d1: closed_form_field(params.replace(delta_1=d1), step)  # noqa: E731
        if bracket is None:
            b0 = f(params.delta_1)
            w = 4 * abs(b0) + 1e-3
            bracket = (params.delta_1 - w, params.delta_1 + w)
        lo, hi = bracket
        f_lo, f_hi = f(lo), f(hi)
        if f_lo * f_hi > 0:
            raise ValueError(
                f"no sign change of B on [{lo:g}, {hi:g}]: B={f_lo:.3e}, {f_hi:.3e}"
            )
        root = brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
        if abs(f(root)) >= tol:
            raise ValueError(f"root finder stalled with |B|={abs(f(root)):.3e}")
        return root, params.replace(delta_1=root)

    if method == "floquet":
        tol = 1e-9 if tol is None else tol
        d1 = params.delta_1
        for _ in range(20):
            b = floquet_field(params.replace(delta_1=d1), dt)
            if abs(b) < tol:
                return d1, params.replace(delta_1=d1)
            d1 -= 2 * b
        raise ValueError(f"Floquet tuning did not converge (last |B|={abs(b):.3e})")

    raise ValueError(f"unknown tuning method {method!r}")


# --------------------------------------------------------------------------- #
# parameter presets


def build_params(
    step,
    g_a: float,
    omega_ra: float,
    delta_a: float,
    delta_b: float,
    Delta_a: float,
    Delta_b: float,
    delta_1: float = 0.0,
    n_ph: int = 3,
) -> CavityParams:
    """Parameters with g_b from the matching condition and Omega_b from the step's rule."""
    g_b = matched_g_b(g_a, delta_a, delta_b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdiabaticValidityWarning)
        base = CavityParams(g_a, g_b, omega_ra, 0.0, delta_a, delta_b, Delta_a, Delta_b,
                            delta_1, n_ph)
    omega_rb = omega_b_for_step(step, base)
    return CavityParams(g_a, g_b, omega_ra, omega_rb, delta_a, delta_b, Delta_a, Delta_b,
                        delta_1, n_ph)


_BASE_XY = dict(g_a=1.0, omega_ra=5.0, delta_a=102.0, delta_b=122.0, Delta_a=120.0,
                Delta_b=100.0)
BENCHMARK_PRESETS = {
    StepId.STEP1: dict(_BASE_XY),
    StepId.STEP2: dict(_BASE_XY),
    StepId.STEP3: dict(_BASE_XY, Delta_a=100.0, Delta_b=120.0),
}


def benchmark_params(step, n_ph: int = 3, detuning_scale: float = 1.0) -> CavityParams:
    """Untuned benchmark regime of a step (Omega_a = 5 g_a, detunings around 100 g_a).

    ``detuning_scale`` multiplies all four detunings to go deeper into the
    dispersive regime.
    """
    step = StepId.parse(step)
    kw = dict(BENCHMARK_PRESETS[step])
    for k in ("delta_a", "delta_b", "Delta_a", "Delta_b"):
        kw[k] *= detuning_scale
    return build_params(step, n_ph=n_ph, **kw)


def benchmark_initial_state(step) -> np.ndarray:
    """Mixed system atom with the probe in |a> (steps 1, 2) or (|a> + |b>)/sqrt2 (step 3)."""
    step = StepId.parse(step)
    mixed = 0.5 * np.eye(2, dtype=complex)
    if step is StepId.STEP3:
        plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
        return np.kron(mixed, ql.projector(plus))
    return np.kron(mixed, ql.projector([1, 0]))


# --------------------------------------------------------------------------- #
# simulations


def _pure_branches(rho, tol: float = 1e-12):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4) or not ql.is_density_matrix(rho):
        raise ValueError("initial state must be a valid 4x4 density matrix")
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = w > tol
    return w[keep], v[:, keep]


def simulate_comparison(
    params: CavityParams,
    step,
    init,
    t_max: float,
    n_samples: int,
    dt: float = DEFAULT_DT,
    lam: float | None = None,
) -> TimeSeries:
    """Probe observable under the full model and under lam * sigma.sigma.

    The mixed initial state is evolved as a convex mixture of its pure
    eigen-branches.  ``lam`` defaults to the closed-form coupling of the step.
    """
    step = StepId.parse(step)
    if n_samples < 2 or not t_max > 0:
        raise ValueError("need t_max > 0 and at least two samples")
    weights, branches = _pure_branches(init)
    times = np.linspace(0.0, float(t_max), int(n_samples))

    gen = full_generator(params)
    y0 = np.column_stack([embed_qubit_state(branches[:, k], params.n_ph)
                          for k in range(branches.shape[1])])
    states = propagate(gen, y0, times, dt)
    tag, obs_full = probe_observable_full(step, params.n_ph)
    full_vals = np.einsum("tik,ij,tjk,k->t", states.conj(), obs_full, states, weights).real
    idx = qubit_indices(params.n_ph)
    in_qubits = np.sum(np.abs(states[:, idx, :]) ** 2, axis=1)
    norms = np.sum(np.abs(states) ** 2, axis=1)
    leakage = ((norms - in_qubits) @ weights).real

    coeffs = coefficients_for_step(step, params)
    lam = coeffs.lam if lam is None else lam
    h_eff = effective_hamiltonian(step, dataclasses.replace(coeffs, lam=lam))
    s2 = ATOM_SIGMA_X if step is StepId.STEP3 else ATOM_SIGMA_Z
    obs_eff = np.kron(ql.IDENTITY_2, s2)
    w_h, v_h = np.linalg.eigh(h_eff)
    eff_vals = np.empty(times.size)
    for i, t in enumerate(times):
        u = (v_h * np.exp(-1j * w_h * t)) @ v_h.conj().T
        psi = u @ branches
        eff_vals[i] = np.einsum("ik,ij,jk,k->", psi.conj(), obs_eff, psi, weights).real
    return TimeSeries(times, full_vals, eff_vals, tag, leakage)


def full_gate_fidelity(
    params: CavityParams,
    step,
    n: int = 0,
    dt: float = DEFAULT_DT,
    effective_only: bool = False,
    lam: float | None = None,
) -> FidelityReport:
    """Fidelity of the full-model gate on the qubit subspace at the n-th gate time.

    The four qubit basis states (cavity vacuum, |e> empty) are propagated to
    t* = gate_time(lam, n); the 4x4 block of the propagator is compared with
    the target two-qubit factor by |tr(U_target^dagger U)| / 4.  Leakage is
    one minus the mean population kept in the qubit subspace.
    """
    step = StepId.parse(step)
    coeffs = coefficients_for_step(step, params)
    lam = coeffs.lam if lam is None else lam
    t_star = gate_time(lam, n)
    target, _ = build_bipartite_factors(step)

    if effective_only:
        block = ql.matexp_unitary(effective_hamiltonian(step, dataclasses.replace(coeffs, lam=lam)), t_star)
    else:
        gen = full_generator(params)
        idx = qubit_indices(params.n_ph)
        y0 = np.zeros((gen.dim, 4), dtype=complex)
        y0[idx, np.arange(4)] = 1.0
        final = propagate(gen, y0, np.array([0.0, t_star]), dt)[-1]
        block = final[idx, :]
    leakage = float(1.0 - np.mean(np.sum(np.abs(block) ** 2, axis=0)))
    fidelity = float(min(1.0, abs(np.trace(target.conj().T @ block)) / 4))
    return FidelityReport(fidelity, leakage, t_star, lam, leakage > LEAKAGE_LIMIT, block)


def count_oscillations(values, hysteresis: float = 0.25) -> float:
    """Completed oscillation cycles in a sampled curve.

    Midline crossings are counted with a hysteresis band of ``hysteresis``
    times the half-range, so small ripples are ignored; two crossings make one
    cycle.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    amp = 0.5 * (hi - lo)
    if amp == 0:
        return 0.0
    mid = 0.5 * (hi + lo)
    band = hysteresis * amp
    state = 0
    crossings = 0
    for x in v:
        s = 1 if x > mid + band else (-1 if x < mid - band else 0)
        if s != 0:
            if state != 0 and s != state:
                crossings += 1
            state = s
    return crossings / 2.0
