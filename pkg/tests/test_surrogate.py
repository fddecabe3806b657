"""Coefficient expansions against the brute-force penalized-objective oracle."""

import numpy as np
import pytest

from conftest import complex_normal, random_channels, random_instance, random_state
from rdars_isac.channel import ChannelSet, RdarsState, assemble_composites, initial_rdars_state
from rdars_isac.metrics import penalty_residuals, radar_snr
from rdars_isac.surrogate import (
    EchoAffineParts,
    PhiCoefficients,
    SurrogateState,
    build_block_coefficients,
    echo_affine_decomposition,
    evaluate_block_objective,
    penalized_objective_direct,
)


def stacked_columns(state):
    return state.a_cols.astype(float).T.reshape(-1)


def surrogate_state(ch, st, w, f, s, rho1, rho2, sa=1.0, s2=1.0):
    return SurrogateState(channels=ch, rdars_state=st, w=w, f=f, s=s,
                          rho1=rho1, rho2=rho2, sigma_alpha_sq=sa, sigma2_sq=s2)


# -- affine decomposition of the echo through-gain ---------------------------

def test_echo_identity_on_random_phases(rng):
    for _ in range(10):
        ch, st, w, f, s, _, _ = random_instance(rng, m=2, n=3, k=2, a=1)
        parts = echo_affine_decomposition(ch, st.a_vec, st.a_cols, w, f)
        for _ in range(50):
            phi = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
            probe = RdarsState(phi=phi, a_vec=st.a_vec, a_cols=st.a_cols)
            comps = assemble_composites(ch, probe)
            truth = np.conj(w) @ comps.h2 @ f
            scale = max(np.max(np.abs(truth)), 1e-30)
            assert np.max(np.abs(parts.value(phi) - truth)) <= 1e-10 * scale


def test_echo_identity_arbitrary_complex_argument(rng):
    ch, st, w, f, _, _, _ = random_instance(rng, m=3, n=4, k=2, a=2)
    parts = echo_affine_decomposition(ch, st.a_vec, st.a_cols, w, f)
    for _ in range(20):
        z = complex_normal(rng, 4) * rng.uniform(0.1, 3.0)
        probe = RdarsState(phi=z, a_vec=st.a_vec, a_cols=st.a_cols)
        comps = assemble_composites(ch, probe)
        truth = np.conj(w) @ comps.h2 @ f
        assert np.max(np.abs(parts.value(z) - truth)) <= 1e-10 * max(np.max(np.abs(truth)), 1e-30)


def test_echo_parts_all_connected(rng):
    m, n, k = 3, 4, 2
    ch = random_channels(rng, m, n, k)
    st = initial_rdars_state(n, n)
    w = complex_normal(rng, m)
    f = complex_normal(rng, m + n, k)
    parts = echo_affine_decomposition(ch, st.a_vec, st.a_cols, w, f)
    assert np.max(np.abs(parts.lin)) == 0.0
    assert np.max(np.abs(parts.quad_left)) == 0.0
    wh_bt = np.vdot(w, ch.h_bt)
    for kk in range(k):
        expected = wh_bt * (ch.h_bt @ f[:m, kk] + (st.a_cols.T @ ch.h_rt) @ f[m:, kk])
        assert parts.const[kk] == pytest.approx(expected, rel=1e-12)


def test_echo_parts_no_connected(rng):
    m, n, k = 3, 4, 2
    ch = random_channels(rng, m, n, k)
    st = initial_rdars_state(n, 0)
    w = complex_normal(rng, m)
    f = complex_normal(rng, m, k)
    parts = echo_affine_decomposition(ch, st.a_vec, st.a_cols, w, f)
    wh_bt = np.vdot(w, ch.h_bt)
    for kk in range(k):
        assert parts.const[kk] == pytest.approx(wh_bt * (ch.h_bt @ f[:, kk]), rel=1e-12)


# -- coefficient expansions vs the direct oracle -----------------------------

@pytest.mark.parametrize("aligned", [True, False])
def test_expansion_matches_direct_all_blocks(rng, aligned):
    for trial in range(30):
        m = int(rng.integers(2, 5))
        n = int(rng.integers(4, 7))
        k = int(rng.integers(1, 3))
        a = int(rng.integers(1, 3))
        ch, st, w, f, s, rho1, rho2 = random_instance(rng, m, n, k, a, aligned)
        sa, s2 = float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2))
        direct = penalized_objective_direct(ch, st, w, f, s, rho1, rho2, sa, s2)
        state = surrogate_state(ch, st, w, f, s, rho1, rho2, sa, s2)
        comps = assemble_composites(ch, st)
        sel_pen = penalty_residuals(st.a_vec, st.a_cols, s, comps.h1, f)["selection_residual"]
        sel_pen /= 2.0 * rho2

        val_phi = evaluate_block_objective("phi", st.phi, build_block_coefficients("phi", state))
        assert abs(val_phi + sel_pen - direct) <= 1e-8 * max(abs(direct), 1e-12)

        val_a = evaluate_block_objective("a", st.a_vec, build_block_coefficients("a", state))
        assert abs(val_a - direct) <= 1e-8 * max(abs(direct), 1e-12)

        val_aa = evaluate_block_objective("aa", stacked_columns(st),
                                          build_block_coefficients("aa", state))
        assert abs(val_aa - direct) <= 1e-8 * max(abs(direct), 1e-12)


def test_direct_equals_negative_radar_snr_when_feasible(rng):
    ch, st, w, f, _, rho1, rho2 = random_instance(rng, aligned=True)
    comps = assemble_composites(ch, st)
    s = comps.h1 @ f
    direct = penalized_objective_direct(ch, st, w, f, s, rho1, rho2, 1.3, 0.7)
    assert direct == pytest.approx(-radar_snr(w, comps.h2, f, 1.3, 0.7), rel=1e-12)


def test_direct_penalty_scales_linearly_in_inverse_weight(rng):
    ch, st, w, f, s, _, _ = random_instance(rng, aligned=False)
    base = penalized_objective_direct(ch, st, w, f, s, np.inf, np.inf, 1.0, 1.0)
    vals = [penalized_objective_direct(ch, st, w, f, s, rho, rho, 1.0, 1.0) - base
            for rho in (1.0, 2.0, 4.0, 8.0)]
    assert vals[0] > 0
    for first, second in zip(vals, vals[1:]):
        assert second == pytest.approx(first / 2.0, rel=1e-9)


def test_zero_channels_zero_radar_coefficients():
    n, m, k, a = 4, 3, 2, 2
    ch = ChannelSet(h_br=np.zeros((n, m), dtype=complex), h_bu=np.zeros((k, m), dtype=complex),
                    h_ru=np.zeros((k, n), dtype=complex), h_bt=np.zeros(m, dtype=complex),
                    h_rt=np.zeros(n, dtype=complex), gains={}, user_positions=np.zeros((k, 3)))
    st = initial_rdars_state(n, a)
    st.phi = np.exp(1j * np.linspace(0, 1, n))
    state = surrogate_state(ch, st, np.ones(m, dtype=complex),
                            np.zeros((m + a, k), dtype=complex), np.zeros((k, k), dtype=complex),
                            1.0, 1.0)
    coeffs = build_block_coefficients("a", state)
    assert coeffs.const == 0.0
    assert np.max(np.abs(coeffs.lin)) == 0.0
    assert np.max(np.abs(coeffs.quad)) == 0.0
    assert coeffs.pen_const == 0.0
    assert coeffs.sel_const == a
    marks = st.a_cols.sum(axis=1)
    assert np.array_equal(coeffs.sel_lin, 1.0 - 2.0 * marks)


def test_const_term_matches_hand_sum(rng):
    ch, st, w, f, s, rho1, rho2 = random_instance(rng, k=2)
    state = surrogate_state(ch, st, w, f, s, rho1, rho2)
    coeffs = build_block_coefficients("phi", state)
    parts = echo_affine_decomposition(ch, st.a_vec, st.a_cols, w, f)
    beta = 1.0 / np.real(np.vdot(w, w))
    hand = beta * sum(abs(x) ** 2 for x in parts.const)
    assert coeffs.const == pytest.approx(hand, rel=1e-12)


def test_evaluate_trivial_coefficients():
    n = 3
    zero = EchoAffineParts(const=np.zeros(1, dtype=complex), lin=np.zeros((1, n), dtype=complex),
                           quad_left=np.zeros((1, n), dtype=complex),
                           quad_right=np.zeros(n, dtype=complex))
    coeffs = PhiCoefficients(rho1=1.0, rho2=1.0, echo=zero, const=0.0,
                             lin=np.zeros(n, dtype=complex), quad=np.zeros((n, n), dtype=complex),
                             pen_const=0.0, pen_lin=np.zeros(n, dtype=complex),
                             pen_quad=np.zeros((n, n), dtype=complex))
    phi = np.exp(1j * np.array([0.1, 0.2, 0.3]))
    assert evaluate_block_objective("phi", phi, coeffs) == 0.0
    only_r1 = PhiCoefficients(rho1=1.0, rho2=1.0, echo=zero, const=2.0,
                              lin=np.zeros(n, dtype=complex), quad=np.zeros((n, n), dtype=complex),
                              pen_const=0.0, pen_lin=np.zeros(n, dtype=complex),
                              pen_quad=np.zeros((n, n), dtype=complex))
    assert evaluate_block_objective("phi", phi, only_r1) == -2.0


# -- structural properties of the coefficient matrices -----------------------

def test_lifted_block_matrix_psd(rng):
    for _ in range(100):
        m = int(rng.integers(2, 4))
        n = int(rng.integers(3, 6))
        k = int(rng.integers(1, 3))
        a = int(rng.integers(1, 3))
        ch, st, w, f, s, rho1, rho2 = random_instance(rng, m, n, k, a)
        state = surrogate_state(ch, st, w, f, s, rho1, rho2)
        coeffs = build_block_coefficients("phi", state, lifted=True)
        top = np.hstack([coeffs.quad, coeffs.cross.conj().T])
        bottom = np.hstack([coeffs.cross, coeffs.quad_lift])
        lifted = np.vstack([top, bottom])
        lifted = 0.5 * (lifted + lifted.conj().T)
        assert np.linalg.eigvalsh(lifted)[0] >= -1e-10


def test_gram_structure_of_quadratic_terms(rng):
    ch, st, w, f, s, rho1, rho2 = random_instance(rng)
    state = surrogate_state(ch, st, w, f, s, rho1, rho2)
    for block in ("phi", "a", "aa"):
        coeffs = build_block_coefficients(block, state)
        for mat in (coeffs.quad, coeffs.pen_quad):
            assert np.max(np.abs(mat - mat.conj().T)) <= 1e-12 * max(1.0, np.abs(mat).max())
            assert np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))[0] >= -1e-10
        assert coeffs.pen_const >= 0.0


def test_lifted_rows_match_factored_form(rng):
    ch, st, w, f, _, _, _ = random_instance(rng, m=2, n=4, k=2, a=1)
    parts = echo_affine_decomposition(ch, st.a_vec, st.a_cols, w, f)
    rows = parts.lifted_rows()
    for _ in range(10):
        phi = complex_normal(rng, 4)
        kron = np.kron(phi, phi)
        direct = rows @ kron
        factored = (parts.quad_left @ phi) * (parts.quad_right @ phi)
        assert np.max(np.abs(direct - factored)) <= 1e-12 * max(np.max(np.abs(direct)), 1e-30)
