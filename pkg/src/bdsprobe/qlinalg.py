"""Dense complex linear algebra and propagation primitives.

Basis convention: the leftmost tensor factor is the most significant index,
with |0> = [1, 0]^T.  A three-qubit ket |q1 q2 q3> therefore sits at index
``4*q1 + 2*q2 + q3``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8

IDENTITY_2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}


class NormDriftError(RuntimeError):
    """Raised when an integration loses more norm (or trace) than allowed."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return a


def kron(*mats) -> np.ndarray:
    """Kronecker product of one or more matrices, left factor most significant."""
    if not mats:
        raise ValueError("kron needs at least one operand")
    out = _as_matrix(mats[0])
    for m in mats[1:]:
        out = np.kron(out, _as_matrix(m))
    return out


def ket(bits: Sequence[int], dims: Sequence[int] | None = None) -> np.ndarray:
    """Computational basis vector for the digit string ``bits``."""
    if dims is None:
        dims = [2] * len(bits)
    if len(dims) != len(bits):
        raise ValueError("bits and dims differ in length")
    idx = 0
    for b, d in zip(bits, dims):
        if not 0 <= b < d:
            raise ValueError(f"digit {b} out of range for dimension {d}")
        idx = idx * d + b
    v = np.zeros(int(np.prod(dims)), dtype=complex)
    v[idx] = 1.0
    return v


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).ravel()
    return np.outer(v, v.conj())


def partial_trace(rho, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every factor of ``rho`` not listed in ``keep``.

    ``dims`` lists the subsystem dimensions, ``keep`` holds zero-based factor
    indices.  The kept factors come back in their original order.
    """
    rho = _as_matrix(rho)
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise ValueError(
            f"matrix shape {rho.shape} does not match factor dims {dims} (product {total})"
        )
    if not keep:
        raise ValueError("keep must name at least one factor")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep indices {keep} out of range for {n} factors")

    t = rho.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract row/col index pairs from the highest factor down so axis numbers stay valid
    for offset, i in enumerate(sorted(traced, reverse=True)):
        m = n - offset
        t = np.trace(t, axis1=i, axis2=i + m)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d_keep, d_keep)


def embed(op, dims: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Lift ``op`` acting on factors ``targets`` (in that order) to the full space."""
    op = _as_matrix(op)
    dims = [int(d) for d in dims]
    targets = [int(t) for t in targets]
    n = len(dims)
    if len(set(targets)) != len(targets) or any(not 0 <= t < n for t in targets):
        raise ValueError(f"bad target factors {targets} for {n} factors")
    d_t = int(np.prod([dims[t] for t in targets]))
    if op.shape != (d_t, d_t):
        raise ValueError(f"operator shape {op.shape} does not fit targets {targets}")

    rest = [i for i in range(n) if i not in targets]
    d_r = int(np.prod([dims[i] for i in rest])) if rest else 1
    full = np.kron(op, np.eye(d_r, dtype=complex))
    # full acts on factor order targets + rest; permute back to natural order
    order = targets + rest
    perm_dims = [dims[i] for i in order]
    inv = np.argsort(order)
    t = full.reshape(perm_dims + perm_dims)
    t = t.transpose(list(inv) + [n + i for i in inv])
    total = int(np.prod(dims))
    return t.reshape(total, total)


def is_hermitian(h, tol: float = HERMITIAN_TOL) -> bool:
    h = _as_matrix(h)
    if h.shape[0] != h.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(h))))
    return float(np.max(np.abs(h - h.conj().T))) <= tol * scale


def unitarity_error(u) -> float:
    u = _as_matrix(u)
    if u.shape[0] != u.shape[1]:
        return np.inf
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def matexp_unitary(h, t: float) -> np.ndarray:
    """Return exp(-i h t) for Hermitian ``h`` through its eigendecomposition."""
    h = _as_matrix(h)
    if not is_hermitian(h):
        raise ValueError("matexp_unitary needs a Hermitian generator")
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def _rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_timedep(
    h_of_t: Callable[[float], np.ndarray],
    state0,
    t_grid: Sequence[float],
    dt: float,
    *,
    density: bool | None = None,
    max_drift: float = 1e-4,
) -> np.ndarray:
    """Fixed-step RK4 integration of the Schrodinger or von Neumann equation.

    ``state0`` is a ket (1-D) or a density matrix (2-D square, treated as a
    density matrix unless ``density=False``).  The integration starts at
    ``t_grid[0]``; every grid point is reached exactly by shortening the last
    step of each interval.  Returns an array of states, one per grid point.

    Raises NormDriftError when the norm (trace) drifts by more than
    ``max_drift``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be ascending")

    y = np.array(state0, dtype=complex)
    if density is None:
        density = y.ndim == 2 and y.shape[0] == y.shape[1] and y.shape[0] > 1
    if density:
        f = lambda t, r: -1j * (h_of_t(t) @ r - r @ h_of_t(t))  # noqa: E731
        measure = lambda r: np.trace(r).real  # noqa: E731
    else:
        f = lambda t, v: -1j * (h_of_t(t) @ v)  # noqa: E731
        measure = lambda v: float(np.vdot(v, v).real)  # noqa: E731
    ref = measure(y)

    out = np.empty((t_grid.size,) + y.shape, dtype=complex)
    t = t_grid[0]
    out[0] = y
    for i, target in enumerate(t_grid[1:], start=1):
        span = target - t
        n_full = int(np.floor(span / dt + 1e-9))
        for _ in range(n_full):
            y = _rk4_step(f, t, y, dt)
            t += dt
        rem = target - t
        if rem > 1e-15:
            y = _rk4_step(f, t, y, rem)
        t = target
        drift = abs(measure(y) - ref)
        if drift > max_drift:
            raise NormDriftError(
                f"norm drift {drift:.3e} at t={t:.6g} exceeds {max_drift:g}; use a smaller dt"
            )
        out[i] = y
    return out


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    rho = _as_matrix(rho)
    sigma = _as_matrix(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    s = np.linalg.svd(rho - sigma, compute_uv=False)
    return float(min(1.0, 0.5 * np.sum(s)))


def gate_fidelity_phase_invariant(u, v, atol: float = UNITARY_TOL) -> float:
    """|tr(u^dagger v)| / d, insensitive to a global phase between the gates."""
    u = _as_matrix(u)
    v = _as_matrix(v)
    if u.shape != v.shape or u.shape[0] != u.shape[1]:
        raise ValueError(f"gates must be square and equal in size, got {u.shape}, {v.shape}")
    for name, g in (("u", u), ("v", v)):
        err = unitarity_error(g)
        if err > atol:
            raise ValueError(f"{name} is not unitary (error {err:.2e})")
    d = u.shape[0]
    return float(min(1.0, abs(np.trace(u.conj().T @ v)) / d))


def expectation(op, state) -> float:
    """Real part of <op> for a ket or density matrix."""
    op = np.asarray(op, dtype=complex)
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return float(np.vdot(state, op @ state).real)
    return float(np.trace(op @ state).real)


def is_density_matrix(rho, tol: float = 1e-10) -> bool:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if not is_hermitian(rho, tol):
        return False
    if abs(np.trace(rho).real - 1.0) > max(tol, 1e-12):
        return False
    return float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))) >= -tol
