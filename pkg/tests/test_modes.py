import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from zevol.errors import NotClosed, NotIntermediate, NotOpen, NotPropagating
from zevol.kspace import ChannelKind, Units, build_grid, classify_channel
from zevol.modes import (TwoComponentValue, metric_pairing, mode, mode_arrays, mode_closed, mode_ghost_pair,
                         mode_matrix, mode_matrix_inverse, mode_open, mode_time_kernels, mode_time_kernels_fd,
                         pairing_table, pseudo_adjoint, pseudo_hermiticity_defect, pseudo_unitarity_defect,
                         reduced_hamiltonian)
from zevol.observables import time_kernels

ZS = (-2.0, -0.7, 0.0, 0.4, 1.5)
OPEN_TABLE = np.diag([1.0, -1.0])
CROSS_TABLE = np.array([[0.0, 1.0], [1.0, 0.0]])


@pytest.mark.parametrize("z", ZS)
def test_orthonormality_tables(z):
    u = Units()
    op = classify_channel(0.5, 0, 0, u)
    cl = classify_channel(-0.5, 0, 0, u)
    th = classify_channel(0.0, 0, 0, u, eps_thr=1e-3)
    assert np.max(np.abs(pairing_table([mode("F", op, z), mode("B", op, z)]) - OPEN_TABLE)) <= 1e-12
    assert np.max(np.abs(pairing_table([mode("F", cl, z), mode("B", cl, z)]) - CROSS_TABLE)) <= 1e-12
    assert np.max(np.abs(pairing_table(mode_ghost_pair(th, z)) - CROSS_TABLE)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(kt=st.floats(0.01, 5), z=st.floats(-3, 3), hbar=st.floats(0.3, 3), mass=st.floats(0.3, 3),
       kx=st.floats(0, 1), rho=st.floats(0.2, 5))
def test_tables_hold_for_any_units(kt, z, hbar, mass, kx, rho):
    u = Units(hbar, mass)
    k_thr = hbar * kx**2 / (2 * mass)
    op = classify_channel(k_thr + kt, kx, 0, u)
    cl = classify_channel(k_thr - kt, kx, 0, u)
    th = classify_channel(k_thr, kx, 0, u, eps_thr=1e-9)
    assert np.allclose(pairing_table([mode("F", op, z, u), mode("B", op, z, u)], u), OPEN_TABLE, atol=1e-10)
    closed = [mode("F", cl, z, u), mode("B", cl, z, u)]
    # growing closed modes lose digits in proportion to their size
    scale = max(np.sum(np.abs(m.vector) ** 2) for m in closed) / hbar
    assert np.allclose(pairing_table(closed, u), CROSS_TABLE, atol=1e-14 * scale + 1e-12)
    assert np.allclose(pairing_table(mode_ghost_pair(th, z, rho, u), u), CROSS_TABLE, atol=1e-10)


@pytest.mark.parametrize("kt", [0.5, 1.7, -0.4, -2.0])
@pytest.mark.parametrize("z", ZS)
def test_time_kernels_match_finite_differences(kt, z):
    ch = classify_channel(kt, 0.2, 0.1)
    exact = mode_time_kernels(ch, z)
    fd = mode_time_kernels_fd(ch, z)
    scale = np.maximum(np.abs(exact), 1e-3)
    assert np.max(np.abs(exact - fd) / scale) <= 1e-6


def test_vectorized_kernels_agree_with_scalar():
    g = build_grid(-1.0, 1.0, 41, 0.3, 0.0)
    for z in (-1.0, 0.5):
        k = time_kernels(g, z)
        for i, ch in enumerate(g.channels):
            assert np.allclose(k[:, :, i], mode_time_kernels(ch, z), rtol=1e-13, atol=0)


def test_modes_solve_free_equation():
    # dX/dz = i H X with H the reduced generator
    for kt in (0.8, -0.8):
        ch = classify_channel(kt, 0, 0)
        h = reduced_hamiltonian(ch.discriminant)
        for zeta in ("F", "B"):
            z, dz = 0.3, 1e-6
            d = (mode(zeta, ch, z + dz).vector - mode(zeta, ch, z - dz).vector) / (2 * dz)
            assert np.allclose(d, 1j * h @ mode(zeta, ch, z).vector, rtol=1e-7, atol=1e-9)


def test_ghost_pair_is_jordan_chain():
    u = Units(0.7, 1.3)
    ch = classify_channel(0.0, 0, 0, u, eps_thr=1e-6)
    z, dz = 0.7, 1e-6
    x1, x2 = mode_ghost_pair(ch, z, 2.0, u)
    h = reduced_hamiltonian(0.0, units=u)
    assert np.allclose(h @ x1.vector, 0)
    # X2 solves the free equation and (i H) X2 is a multiple of X1
    lo, hi = mode_ghost_pair(ch, z - dz, 2.0, u)[1], mode_ghost_pair(ch, z + dz, 2.0, u)[1]
    v = 1j * h @ x2.vector
    assert np.allclose((hi.vector - lo.vector) / (2 * dz), v, atol=1e-8)
    assert v[1] == 0 and abs(v[0]) > 0


@settings(max_examples=40, deadline=None)
@given(d=st.floats(-4, 4), v=st.floats(-3, 3), z=st.floats(0.01, 3), hbar=st.floats(0.5, 2), mass=st.floats(0.5, 2))
def test_generator_is_pseudo_hermitian_and_flow_pseudo_unitary(d, v, z, hbar, mass):
    u = Units(hbar, mass)
    h = reduced_hamiltonian(d, v, u)
    assert pseudo_hermiticity_defect(h) <= 1e-12 * max(1.0, np.max(np.abs(h)))
    w = expm(1j * h * z)
    assert pseudo_unitarity_defect(w) <= 1e-9 * max(1.0, np.max(np.abs(w)) ** 2)


def test_pseudo_adjoint_involution():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    assert np.allclose(pseudo_adjoint(pseudo_adjoint(w)), w)


def test_pairing_is_hermitian_form():
    rng = np.random.default_rng(2)
    a, b = (TwoComponentValue(*(rng.normal(size=2) + 1j * rng.normal(size=2))) for _ in range(2))
    assert metric_pairing(a, b) == pytest.approx(np.conj(metric_pairing(b, a)))
    assert abs(metric_pairing(a, a).imag) < 1e-15
    c = 2.0 * a + b
    assert metric_pairing(c, c) == pytest.approx(
        4 * metric_pairing(a, a) + metric_pairing(b, b) + 4 * metric_pairing(a, b).real)


def test_grid_mode_matrices():
    g = build_grid(-0.6, 0.6, 13)
    psi_f, psi_b, p_f, p_b = mode_arrays(g, 0.4)
    for i, ch in enumerate(g.channels):
        mf, mb = mode("F", ch, 0.4), mode("B", ch, 0.4)
        assert np.allclose([psi_f[i], p_f[i], psi_b[i], p_b[i]], [mf.psi, mf.p, mb.psi, mb.p])
    p = mode_matrix(g, 0.4)
    assert np.allclose(mode_matrix_inverse(g, 0.4) @ p, np.eye(2 * g.n))


def test_wrong_kind_errors():
    op, cl = classify_channel(0.5, 0, 0), classify_channel(-0.5, 0, 0)
    th = classify_channel(0.0, 0, 0, eps_thr=1e-3)
    assert th.kind is ChannelKind.INTERMEDIATE
    with pytest.raises(NotOpen):
        mode_open("F", cl, 0.0)
    with pytest.raises(NotClosed):
        mode_closed("F", op, 0.0)
    with pytest.raises(NotIntermediate):
        mode_ghost_pair(op, 0.0)
    with pytest.raises(NotPropagating):
        mode("F", th, 0.0)
    with pytest.raises(NotPropagating):
        mode_time_kernels(th, 0.0)
    with pytest.raises(ValueError):
        mode("X", op, 0.0)
