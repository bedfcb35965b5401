import numpy as np
import pytest

from conftest import driven_barrier, square_barrier
from zevol.errors import ConfigError
from zevol.kspace import build_grid
from zevol.potential import PotentialModel
from zevol.smatrix import (BLOCKS, extract_smatrix, load_smatrix, off_diagonal_mass, open_smatrix,
                           quadratic_identity_defects, save_smatrix, split, unitarity_defect_left,
                           unitarity_defect_right)


def test_free_slab_is_identity_over_weights(free_case):
    g, _, _, s = free_case
    inv_w = np.diag(1.0 / g.weights)
    assert np.allclose(s.t_ff, inv_w, rtol=1e-12, atol=1e-12)
    assert np.allclose(s.t_bb, inv_w, rtol=1e-12, atol=1e-12)
    # plain blocks act on raw amplitudes, so they carry the dimensionless error
    assert np.max(np.abs(s.plain("r_fb"))) <= 1e-12 and np.max(np.abs(s.plain("r_bf"))) <= 1e-12
    assert unitarity_defect_left(s) <= 1e-12
    assert unitarity_defect_right(s) <= 1e-12
    assert max(quadratic_identity_defects(s)) <= 1e-12


def test_static_barrier_is_diagonal_and_unitary(barrier_case):
    _, _, _, s = barrier_case
    assert off_diagonal_mass(s) <= 1e-10
    assert unitarity_defect_left(s) <= 1e-8
    assert unitarity_defect_right(s) <= 1e-8
    e = quadratic_identity_defects(s)
    assert e[2] == pytest.approx(e[3], abs=1e-10)
    assert max(e) <= 1e-8


def test_identity_residuals_bound_left_defect(driven_case):
    s = driven_case[3]
    assert sum(quadratic_identity_defects(s)) >= unitarity_defect_left(s) - 1e-12


def test_split_partitions_rows_by_kind():
    g = build_grid(-0.3, 0.7, 41)
    s = extract_smatrix(g, square_barrier(), -1.0, 2.0, tol=1e-12)
    parts = split(s)
    for name in BLOCKS:
        assert parts.s_open[name].shape[0] + parts.s_closed[name].shape[0] == g.n
        assert parts.s_open[name].shape[0] == len(g.open_index)
        # a static potential cannot feed closed rows from open inputs
        assert np.all(parts.s_closed[name] == 0)
    assert open_smatrix(s).shape == (2 * len(g.open_index),) * 2


def test_split_without_closed_channels(free_case):
    parts = split(free_case[3])
    assert all(v.shape[0] == 0 for v in parts.s_closed.values())


def test_floquet_bands_follow_first_order():
    g = build_grid(0.2, 0.8, 61)
    offset = 4
    blocks = []
    for a in (0.01, 0.02):
        model = driven_barrier(a=a, omega=offset * g.spacing)
        blocks.append(extract_smatrix(g, model, -1.0, 2.0, tol=1e-12).t_ff)
    diff = g.lattice[:, None] - g.lattice[None, :]

    def band(b, n):
        return np.max(np.abs(b[np.abs(diff) == n]))

    for b in blocks:
        assert np.all(b[diff % offset != 0] == 0)
        assert band(b, 2 * offset) < 0.1 * band(b, offset)
    # first sideband is linear in the drive, second quadratic
    assert band(blocks[1], offset) / band(blocks[0], offset) == pytest.approx(2.0, rel=0.05)
    assert band(blocks[1], 2 * offset) / band(blocks[0], 2 * offset) == pytest.approx(4.0, rel=0.1)


def test_serialization_round_trip(tmp_path, driven_case):
    s = driven_case[3]
    path = tmp_path / "nested" / "s.json"
    save_smatrix(s, path)
    back = load_smatrix(path)
    assert np.array_equal(back.grid.k_t, s.grid.k_t)
    assert np.array_equal(back.grid.weights, s.grid.weights)
    assert (back.z1, back.z2) == (s.z1, s.z2)
    for name in BLOCKS:
        assert np.array_equal(back.block(name), s.block(name))


def test_support_outside_slab_is_config_error():
    g = build_grid(0.3, 0.7, 5)
    with pytest.raises(ConfigError):
        extract_smatrix(g, square_barrier(), 0.2, 2.0)
    # V = 0 has no support to check
    extract_smatrix(g, PotentialModel(), 0.2, 0.3)
