"""Compiled RK4 stepping for generators of the form

    H(t) = S + sum_k ( e^{i w_k t} A_k + e^{-i w_k t} A_k^dagger )

with S Hermitian and each A_k stored as COO triplets.  ``states`` holds one
state vector per column, so a propagator is obtained by stepping the identity.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _apply(t, y, s_rows, s_cols, s_vals, a_rows, a_cols, a_vals, a_term, freqs, out):
    n_b = y.shape[1]
    out[:, :] = 0.0
    ph = np.exp(1j * freqs * t)
    for n in range(s_rows.size):
        r = s_rows[n]
        c = s_cols[n]
        v = s_vals[n]
        for b in range(n_b):
            out[r, b] += v * y[c, b]
    for n in range(a_rows.size):
        r = a_rows[n]
        c = a_cols[n]
        v = ph[a_term[n]] * a_vals[n]
        vc = np.conj(v)
        for b in range(n_b):
            out[r, b] += v * y[c, b]
            out[c, b] += vc * y[r, b]
    for i in range(out.shape[0]):
        for b in range(n_b):
            out[i, b] = -1j * out[i, b]


@njit(cache=True)
def rk4_harmonic(states, t0, dt, n_steps, s_rows, s_cols, s_vals, a_rows, a_cols, a_vals,
                 a_term, freqs):
    y = states.copy()
    k1 = np.empty_like(y)
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    tmp = np.empty_like(y)
    t = t0
    half = 0.5 * dt
    for step in range(n_steps):
        _apply(t, y, s_rows, s_cols, s_vals, a_rows, a_cols, a_vals, a_term, freqs, k1)
        tmp[:, :] = y + half * k1
        _apply(t + half, tmp, s_rows, s_cols, s_vals, a_rows, a_cols, a_vals, a_term, freqs, k2)
        tmp[:, :] = y + half * k2
        _apply(t + half, tmp, s_rows, s_cols, s_vals, a_rows, a_cols, a_vals, a_term, freqs, k3)
        tmp[:, :] = y + dt * k3
        _apply(t + dt, tmp, s_rows, s_cols, s_vals, a_rows, a_cols, a_vals, a_term, freqs, k4)
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (step + 1) * dt
    return y
