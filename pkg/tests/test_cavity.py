import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bdsprobe import cavity as cv
from bdsprobe import qlinalg as ql
from bdsprobe.cavity import CavityParams
from bdsprobe.protocol import StepId, build_bipartite_factors

# reference regime for steps 1 and 2, written out independently of the presets
GA, OA, DA, DB, DDA, DDB = 1.0, 5.0, 102.0, 122.0, 120.0, 100.0
GB = math.sqrt(DB / DA)
OB_XX = GB * OA * (1 / DDA + 1 / DB) / (GA * (1 / DA + 1 / DDB))
J1_XX = GA * OB_XX / 2 * (1 / DA + 1 / DDB)
LAM_XX = 2 * J1_XX**2 / (DA - DDB + GA**2 / DA)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", cv.AdiabaticValidityWarning)
        return fn(*args, **kw)


# --------------------------------------------------------------------------- parameters


def test_params_validation():
    with pytest.raises(ValueError, match="n_ph"):
        CavityParams(1, GB, 5, 4, DA, DB, DDA, DDB, n_ph=1)
    with pytest.raises(ValueError, match="matching"):
        CavityParams(1, 1.0, 5, 4, DA, DB, DDA, DDB)
    with pytest.warns(cv.AdiabaticValidityWarning):
        CavityParams(1, 1, 5, 4, 20, 20, 20, 20)


def test_matched_g_b():
    assert cv.matched_g_b(1.0, DA, DB) == pytest.approx(GB, rel=1e-15)
    with pytest.raises(ValueError):
        cv.matched_g_b(1.0, 10.0, -10.0)


def test_benchmark_presets_derive_g_b_and_omega_b():
    p = cv.benchmark_params(1)
    assert p.g_b == pytest.approx(GB, rel=1e-15)
    assert p.omega_rb == pytest.approx(4.564286795578383, rel=1e-13)
    assert p.omega_rb == pytest.approx(OB_XX, rel=1e-13)
    assert cv.benchmark_params(2).omega_rb == pytest.approx(-OB_XX, rel=1e-13)
    assert cv.benchmark_params(3).omega_rb == pytest.approx(-5.477306996619616, rel=1e-13)


def test_symmetric_toy_gives_equal_rabi_frequencies():
    base = quiet(CavityParams, 1.0, 1.0, 2.0, 0.0, 50.0, 50.0, 50.0, 50.0)
    assert cv.omega_b_for_step(1, base) == pytest.approx(2.0)
    assert cv.omega_b_for_step(2, base) == pytest.approx(-2.0)


def test_omega_b_rejects_zero_detuning():
    base = quiet(CavityParams, 1.0, 1.0, 2.0, 0.0, 50.0, 50.0, 0.0, 50.0)
    with pytest.raises(ValueError, match="Delta_a"):
        cv.omega_b_for_step(1, base)


detuning = st.floats(20.0, 400.0)


@settings(max_examples=60, deadline=None)
@given(detuning, detuning, detuning, detuning, st.floats(0.5, 2.0), st.sampled_from(list(StepId)))
def test_selection_rule_identities(da, db, dda, ddb, oa, step):
    p = quiet(cv.build_params, step, g_a=1.0, omega_ra=oa, delta_a=da, delta_b=db,
              Delta_a=dda, Delta_b=ddb)
    try:
        c = cv.coefficients_for_step(step, p)
    except ValueError:
        assume(False)  # degenerate detuning combination, rejected by design
    if step is StepId.STEP1:
        assert c.j1 == pytest.approx(c.j2, rel=1e-12)
    else:
        assert c.j1 == pytest.approx(-c.j2, rel=1e-12)


# --------------------------------------------------------------------------- coefficients


def test_coupling_values():
    cx = cv.coefficients_for_step(1, cv.benchmark_params(1))
    cy = cv.coefficients_for_step(2, cv.benchmark_params(2))
    cz = cv.coefficients_for_step(3, cv.benchmark_params(3))
    assert cx.lam == pytest.approx(LAM_XX, rel=1e-13)
    assert cx.lam == pytest.approx(0.0020326591585587985, rel=1e-13)
    assert cy.lam == pytest.approx(cx.lam, rel=1e-13)
    assert abs(cy.j1) == pytest.approx(abs(cx.j1), rel=1e-13)
    # coupling of the diagonal gate: square of the exchange amplitude over its detuning
    j1z = OA * GA / 2 * (1 / 100.0 + 1 / DA)
    assert cz.j1 == pytest.approx(j1z, rel=1e-13)
    assert cz.lam == pytest.approx(2 * j1z**2 / (DA - 100.0 + GA**2 / DA), rel=1e-13)
    assert cz.lam == pytest.approx(0.002439263510282162, rel=1e-13)


def test_closed_form_field_at_zero_shift():
    assert cv.closed_form_field(cv.benchmark_params(1), 1) == pytest.approx(
        -0.001050661803472712, rel=1e-12)
    assert cv.closed_form_field(cv.benchmark_params(3), 3) == pytest.approx(
        -0.003272223193485726, rel=1e-12)


@pytest.mark.parametrize("step", list(StepId))
def test_field_is_linear_in_shift_with_half_slope(step):
    p = cv.benchmark_params(step)
    b0 = cv.closed_form_field(p, step)
    b1 = cv.closed_form_field(p.replace(delta_1=0.01), step)
    assert b1 - b0 == pytest.approx(0.005, rel=1e-10)


def test_zero_pump_removes_pump_terms():
    ob = OB_XX
    p = CavityParams(GA, GB, 0.0, ob, DA, DB, DDA, DDB)
    c = cv.coefficients_for_step(1, p)
    assert c.j2 == 0.0
    shift = GA**2 / DA
    expected = (ob**2 * GB**2 / 4) / (DB - DDA + shift) * (1 / DDB + 1 / DB) ** 2 + 0.5 * ob**2 / DDB
    assert c.b_field == pytest.approx(expected, rel=1e-13)


def test_zero_denominator_names_the_term():
    p = quiet(CavityParams, 1.0, 1.0, 5.0, 4.0, 100.0, 100.0, 120.0, 90.0)
    with pytest.raises(ValueError, match="delta_a-delta_b"):
        cv.coefficients_for_step(1, p)


# --------------------------------------------------------------------------- tuning


@pytest.mark.parametrize("step", list(StepId))
def test_formula_tuning_nulls_field(step):
    d1, p = cv.tune_delta1(cv.benchmark_params(step), step)
    assert abs(cv.closed_form_field(p, step)) < 1e-10
    assert p.delta_1 == d1
    # other fields untouched
    assert p.delta_b == cv.benchmark_params(step).delta_b


def test_formula_tuning_bad_bracket_reports_values():
    with pytest.raises(ValueError, match="no sign change"):
        cv.tune_delta1(cv.benchmark_params(1), 1, bracket=(1.0, 2.0))


def test_tuning_rejects_unknown_method():
    with pytest.raises(ValueError, match="unknown"):
        cv.tune_delta1(cv.benchmark_params(1), 1, method="magic")


def test_floquet_tuning_nulls_extracted_field():
    p = cv.benchmark_params(1, n_ph=2)
    d1, tuned = cv.tune_delta1(p, 1, method="floquet")
    assert abs(cv.floquet_field(tuned)) < 1e-9
    # the extracted field moves by about half the shift, like the closed form
    b_plus = cv.floquet_field(tuned.replace(delta_1=d1 + 0.01))
    assert b_plus == pytest.approx(0.005, rel=0.01)


def test_floquet_hamiltonian_reproduces_coupling():
    p = cv.tune_delta1(cv.benchmark_params(1), 1, method="floquet")[1]
    c = cv.pauli_coefficients(cv.floquet_effective_hamiltonian(p))
    assert c["XX"] == pytest.approx(LAM_XX, rel=0.01)
    # no stray transverse terms beyond 5% of the coupling
    for k in ("XY", "YX", "XI", "IX", "YY", "ZZ"):
        assert abs(c[k]) < 0.05 * LAM_XX


def test_shifting_detunings_with_delta1_is_a_pure_gauge():
    # delta_1 added to both b detunings and to the |b> field leaves the dynamics unchanged,
    # which is why tuning only moves the explicit field
    d1 = 0.37
    init = np.kron(np.eye(2) / 2, np.diag([1.0, 0.0]))
    ref = CavityParams(0, 0, 5, 4.5, DA, DB, DDA, DDB, 0.0, 2)
    covary = CavityParams(0, 0, 5, 4.5, DA, DB + d1, DDA, DDB + d1, d1, 2)
    explicit = CavityParams(0, 0, 5, 4.5, DA, DB, DDA, DDB, d1, 2)
    s0 = cv.simulate_comparison(ref, 1, init, 30, 31)
    s1 = cv.simulate_comparison(covary, 1, init, 30, 31)
    s2 = cv.simulate_comparison(explicit, 1, init, 30, 31)
    assert np.max(np.abs(s0.full_values - s1.full_values)) < 1e-7
    assert np.max(np.abs(s0.full_values - s2.full_values)) > 1e-4


# --------------------------------------------------------------------------- Hamiltonians


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1000), st.sampled_from(list(StepId)))
def test_full_hamiltonian_is_hermitian(t, step):
    h = cv.full_hamiltonian(cv.benchmark_params(step), step, t)
    assert h.shape == (27, 27)
    assert np.max(np.abs(h - h.conj().T)) < 1e-14


def test_full_hamiltonian_without_drives_is_diagonal_field():
    p = CavityParams(0, 0, 0, 0, DA, DB, DDA, DDB, delta_1=0.3, n_ph=2)
    h = cv.full_hamiltonian(p, 1, 1.234)
    n_b = np.array([[i1, i3] for i1 in range(3) for i3 in range(3) for _ in range(2)])
    expected = 0.3 * ((n_b[:, 0] == 1).astype(float) + (n_b[:, 1] == 1))
    assert np.allclose(h, np.diag(expected))


def test_photon_ladder_matrix_element():
    p = cv.benchmark_params(1, n_ph=4)
    t = 0.77
    h = cv.full_hamiltonian(p, 1, t)
    for n in (1, 2, 3):
        row = (cv.LEVEL_E * 3 + cv.LEVEL_A) * 4 + (n - 1)  # |e, a, n-1>
        col = (cv.LEVEL_A * 3 + cv.LEVEL_A) * 4 + n  # |a, a, n>
        assert h[row, col] == pytest.approx(GA * math.sqrt(n) * np.exp(1j * DA * t), rel=1e-14)


def test_effective_hamiltonian_forms():
    c = cv.EffectiveCoefficients(0.0, 0.0, 0.0, 1.0, StepId.STEP1, 1.0)
    assert np.allclose(cv.effective_hamiltonian(1, c), np.fliplr(np.eye(4)))
    for step in StepId:
        p = cv.benchmark_params(step)
        coeffs = cv.coefficients_for_step(step, cv.tune_delta1(p, step)[1])
        pure = cv.effective_hamiltonian(step, coeffs)
        full = cv.effective_hamiltonian(step, coeffs, full_form=True)
        # exchange form minus its constant offset equals the pure form
        offset = np.trace(full).real / 4
        assert np.max(np.abs(full - offset * np.eye(4) - pure)) < 1e-9 * coeffs.lam


@pytest.mark.parametrize("step", list(StepId))
def test_effective_energy_scale_is_far_below_detunings(step):
    p = cv.benchmark_params(step)
    h = cv.effective_hamiltonian(step, cv.coefficients_for_step(step, p))
    ratio = np.linalg.norm(h, 2) / min(abs(p.delta_a), abs(p.delta_b), abs(p.Delta_a), abs(p.Delta_b))
    assert ratio < 0.01


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 10.0), st.integers(0, 3), st.sampled_from(list(StepId)))
def test_exponential_gate_identity(lam, n, step):
    # exp(-i (2n+1) pi/4 ss) = exp(-i pi/4 ss) (-i ss)^n: a global phase only for even n
    c = cv.EffectiveCoefficients(0.0, 0.0, 0.0, lam, step, 1.0)
    h = cv.effective_hamiltonian(step, c)
    u = ql.matexp_unitary(h, cv.gate_time(lam, n))
    target, _ = build_bipartite_factors(step)
    ss = h / lam
    expected = target @ np.linalg.matrix_power(-1j * ss, n)
    assert np.max(np.abs(u - expected)) < 1e-10
    fid = ql.gate_fidelity_phase_invariant(target, u)
    assert fid == pytest.approx(1.0 if n % 2 == 0 else 0.0, abs=1e-10)


def test_gate_time_values():
    assert cv.gate_time(1.0, 0) == pytest.approx(math.pi / 4)
    assert cv.gate_time(1.0, 1) == pytest.approx(3 * math.pi / 4)
    assert cv.gate_time(2.0e-3, 0) == pytest.approx(392.69908169872417)
    with pytest.raises(ValueError):
        cv.gate_time(0.0)


# --------------------------------------------------------------------------- propagation


def test_generator_period():
    assert cv.full_generator(cv.benchmark_params(1)).period() == pytest.approx(math.pi)
    p = cv.benchmark_params(1).replace(omega_ra=5.0)
    odd = CavityParams(0, 0, 1.0, 1.0, DA, DB, math.sqrt(2) * 100, DDB)
    assert cv.full_generator(odd).period() is None
    assert cv.full_generator(p).period() == pytest.approx(math.pi)


def test_periodic_and_direct_propagation_agree():
    p = cv.benchmark_params(1, n_ph=2)
    gen = cv.full_generator(p)
    y0 = np.zeros((gen.dim, 2), dtype=complex)
    idx = cv.qubit_indices(2)
    y0[idx[0], 0] = 1
    y0[idx[2], 1] = 1
    grid = np.linspace(0, 20, 9)
    direct = cv.propagate(gen, y0, grid, periodic=False)
    periodic = cv.propagate(gen, y0, grid, periodic=True)
    assert np.max(np.abs(direct - periodic)) < 1e-7


def test_propagation_validation():
    gen = cv.full_generator(cv.benchmark_params(1, n_ph=2))
    y0 = np.eye(gen.dim)[:, :1]
    with pytest.raises(ValueError):
        cv.propagate(gen, y0, [1.0, 0.5])
    with pytest.raises(ValueError):
        cv.propagate(gen, y0, [0.5, 1.0], periodic=True)


def test_norm_drift_aborts():
    gen = cv.full_generator(cv.benchmark_params(1, n_ph=2))
    y0 = np.eye(gen.dim)[:, :1]
    with pytest.raises(ql.NormDriftError):
        cv.propagate(gen, y0, [0.0, 1.0], dt=5e-3, max_drift=1e-16)


def test_qubit_embedding():
    psi = cv.embed_qubit_state([0, 0, 1, 0], 3)
    # |b, a, 0>
    assert psi[(cv.LEVEL_B * 3 + cv.LEVEL_A) * 3] == 1
    with pytest.raises(ValueError):
        cv.embed_qubit_state([1, 0], 3)


def test_zero_coupling_gives_constant_curves():
    p = CavityParams(0, 0, 0, 0, DA, DB, DDA, DDB, n_ph=2)
    for step in StepId:
        init = cv.benchmark_initial_state(step)
        s = cv.simulate_comparison(p, step, init, 10.0, 11)
        assert np.allclose(s.full_values, s.full_values[0], atol=1e-12)
        assert np.allclose(s.effective_values, s.full_values, atol=1e-12)
        assert s.max_deviation < 1e-12


def test_comparison_series_shape_and_range():
    p = cv.tune_delta1(cv.benchmark_params(3, n_ph=2), 3)[1]
    s = cv.simulate_comparison(p, 3, cv.benchmark_initial_state(3), 40.0, 41)
    assert s.observable == "sigma_x"
    assert len(s.times) == len(s.full_values) == len(s.effective_values) == 41
    assert np.all(np.abs(s.full_values) <= 1 + 1e-6)
    assert np.all(np.abs(s.effective_values) <= 1 + 1e-6)
    assert s.full_values[0] == pytest.approx(1.0)
    assert s.max_deviation < 0.05


def test_comparison_validation():
    p = cv.benchmark_params(1, n_ph=2)
    with pytest.raises(ValueError):
        cv.simulate_comparison(p, 1, cv.benchmark_initial_state(1), 0.0, 3)
    with pytest.raises(ValueError):
        cv.simulate_comparison(p, 1, np.eye(4), 1.0, 3)


def test_effective_only_fidelity_is_exact():
    for step in StepId:
        rep = cv.full_gate_fidelity(cv.benchmark_params(step), step, effective_only=True)
        assert rep.fidelity == pytest.approx(1.0, abs=1e-10)
        assert rep.leakage == pytest.approx(0.0, abs=1e-12)


def test_strong_driving_is_flagged():
    p = quiet(cv.build_params, 1, g_a=1, omega_ra=3, delta_a=4, delta_b=6, Delta_a=5, Delta_b=3)
    rep = quiet(cv.full_gate_fidelity, p, 1)
    assert rep.outside_validity
    assert rep.leakage > cv.LEAKAGE_LIMIT


def test_count_oscillations():
    t = np.linspace(0, 10, 2001)
    assert cv.count_oscillations(np.cos(2 * np.pi * t / 4)) == pytest.approx(2.5)
    assert cv.count_oscillations(np.ones(5)) == 0.0
    # ripples inside the hysteresis band are ignored
    assert cv.count_oscillations(np.cos(np.pi * t / 10) + 0.01 * np.sin(40 * t)) == 0.5
