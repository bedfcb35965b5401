"""Full-slab S-matrix and its unitarity identities.

Discrete convention (used by every serialized file): with quadrature
weights w,

    f_out(i) = sum_j w_j * block(i, j) * f_in(j)

so the continuum identity kernel on open channels becomes delta_ij / w_j.
Blocks have rows over all channels and columns over open channels only.
Superscripts read output <- input: T^FF (F in at z1 -> F out at z2),
R^BF (F in at z1 -> B out at z1), R^FB (B in at z2 -> F out at z2),
T^BB (B in at z2 -> B out at z1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kspace import ChannelGrid, Units, build_grid
from .potential import PotentialModel
from .propagator import DEFAULT_KAPPA_CAP, DEFAULT_TOL, SlabSolution

BLOCKS = ("t_ff", "r_fb", "r_bf", "t_bb")
SCHEMA = "zevol.smatrix/1"


@dataclass(frozen=True, eq=False)
class SMatrix:
    grid: ChannelGrid
    t_ff: np.ndarray
    r_fb: np.ndarray
    r_bf: np.ndarray
    t_bb: np.ndarray
    z1: float
    z2: float
    meta: dict = field(default_factory=dict)

    def block(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def plain(self, name: str) -> np.ndarray:
        """Block times the input weights: the matrix acting on raw amplitude vectors."""
        return self.block(name) * self.grid.weights[self.grid.open_index][None, :]

    def apply(self, f_in: np.ndarray, b_in: np.ndarray):
        """(F out at z2, B out at z1) on all channels; inputs are open-channel vectors."""
        return (self.plain("t_ff") @ f_in + self.plain("r_fb") @ b_in,
                self.plain("r_bf") @ f_in + self.plain("t_bb") @ b_in)


@dataclass(frozen=True, eq=False)
class SplitSMatrix:
    """S blocks split by output-row kind; each maps name -> rows x open-columns."""

    s_open: dict
    s_closed: dict


def extract_smatrix(grid: ChannelGrid, model: PotentialModel, z1: float, z2: float,
                    tol: float = DEFAULT_TOL, kappa_cap: float = DEFAULT_KAPPA_CAP,
                    solution: SlabSolution | None = None) -> SMatrix:
    s_model, s_slab = model.support
    if model.max_potential() > 0 and (s_model < z1 - 1e-12 or s_slab > z2 + 1e-12):
        raise ConfigError(f"potential support {model.support} is not inside the slab [{z1}, {z2}]")
    if solution is None:
        solution = SlabSolution.solve(grid, model, z1, z2, tol, kappa_cap)
    dense = solution.dense()
    cols = grid.open_index
    w = grid.weights[cols]
    blocks = {name: getattr(dense, name)[:, cols] / w[None, :] for name in BLOCKS}
    meta = {"max_transfer_defect": solution.max_defect, "max_rk4_steps": solution.max_steps,
            "n_segments": len(solution.edges), "tol": tol}
    return SMatrix(grid=grid, z1=z1, z2=z2, meta=meta, **blocks)


def split(s: SMatrix) -> SplitSMatrix:
    o, c = s.grid.open_index, s.grid.closed_index
    return SplitSMatrix({n: s.block(n)[o] for n in BLOCKS}, {n: s.block(n)[c] for n in BLOCKS})


def _open_blocks(s: SMatrix):
    o = s.grid.open_index
    return {n: s.block(n)[o] for n in BLOCKS}, s.grid.weights[o]


def open_smatrix(s: SMatrix) -> np.ndarray:
    """S_o as a (2 No) x (2 No) matrix: rows [F out; B out], columns [F in; B in]."""
    b, _ = _open_blocks(s)
    return np.block([[b["t_ff"], b["r_fb"]], [b["r_bf"], b["t_bb"]]])


def _col_mask(s: SMatrix, columns):
    no = len(s.grid.open_index)
    if columns is None:
        return np.arange(no)
    return np.asarray(columns)


def quadratic_identity_defects(s: SMatrix, columns=None) -> tuple[float, float, float, float]:
    """Max-norm residuals of the four open-channel flux identities.

    ``columns`` optionally restricts the open input columns considered.
    """
    b, w = _open_blocks(s)
    c = _col_mask(s, columns)
    tf, rfb, rbf, tb = (b[n][:, c] for n in BLOCKS)
    inv_w = np.diag(1.0 / w[c])

    def gram(x, y):
        return np.conj(x).T @ (w[:, None] * y)

    e1 = gram(tf, tf) + gram(rbf, rbf) - inv_w
    e2 = gram(rfb, rfb) + gram(tb, tb) - inv_w
    e3 = gram(rfb, tf) + gram(tb, rbf)
    e4 = gram(rbf, tb) + gram(tf, rfb)
    return tuple(float(np.max(np.abs(e))) if e.size else 0.0 for e in (e1, e2, e3, e4))


def unitarity_defect_left(s: SMatrix, columns=None) -> float:
    so = open_smatrix(s)
    _, w = _open_blocks(s)
    no = len(w)
    c = _col_mask(s, columns)
    cc = np.concatenate([c, c + no])
    ww = np.concatenate([w, w])
    g = np.conj(so[:, cc]).T @ (ww[:, None] * so[:, cc]) - np.diag(1.0 / ww[cc])
    return float(np.max(np.abs(g))) if g.size else 0.0


def unitarity_defect_right(s: SMatrix, rows=None) -> float:
    so = open_smatrix(s)
    _, w = _open_blocks(s)
    no = len(w)
    r = _col_mask(s, rows)
    rr = np.concatenate([r, r + no])
    ww = np.concatenate([w, w])
    g = so[rr] @ (ww[:, None] * np.conj(so[rr]).T) - np.diag(1.0 / ww[rr])
    return float(np.max(np.abs(g))) if g.size else 0.0


def off_diagonal_mass(s: SMatrix) -> float:
    """Largest |entry| of any block away from its own k_t (zero for static V)."""
    cols = s.grid.open_index
    rows = np.arange(s.grid.n)
    mask = rows[:, None] != cols[None, :]
    return max(float(np.max(np.abs(s.block(n)[mask]), initial=0.0)) for n in BLOCKS)


# ----------------------------------------------------------------------------
# serialization

def _pack(a: np.ndarray) -> list:
    """Row-major, real/imag interleaved."""
    out = np.empty(a.shape + (2,))
    out[..., 0] = a.real
    out[..., 1] = a.imag
    return out.reshape(a.shape[0], -1).tolist()


def _unpack(rows, shape) -> np.ndarray:
    a = np.asarray(rows, dtype=float).reshape(shape + (2,))
    return a[..., 0] + 1j * a[..., 1]


def smatrix_to_dict(s: SMatrix) -> dict:
    g = s.grid
    return {
        "schema": SCHEMA,
        "convention": "f_out[i] = sum_j weights[open_index[j]] * block[i][j] * f_in[j]; "
                      "rows over all channels, columns over open channels; "
                      "entries row-major with real/imag interleaved",
        "grid": g.metadata(),
        "k_t": g.k_t.tolist(),
        "lattice": g.lattice.tolist(),
        "weights": g.weights.tolist(),
        "open_index": g.open_index.tolist(),
        "slab": {"z1": s.z1, "z2": s.z2},
        "meta": s.meta,
        "blocks": {n: _pack(s.block(n)) for n in BLOCKS},
    }


def smatrix_from_dict(d: dict) -> SMatrix:
    gm = d["grid"]
    units = Units(gm["hbar"], gm["mass"])
    lattice = np.asarray(d["lattice"])
    n_full = int(gm["lattice_size"])
    grid = build_grid(gm["lattice_origin"], gm["lattice_origin"] + gm["spacing"] * (n_full - 1),
                      n_full, gm["k_x"], gm["k_y"], units, gm["threshold_window"])
    if grid.n != len(lattice) or not np.array_equal(grid.lattice, lattice):
        raise ValueError("serialized grid metadata does not reproduce the stored lattice")
    shape = (grid.n, len(grid.open_index))
    blocks = {n: _unpack(d["blocks"][n], shape) for n in BLOCKS}
    return SMatrix(grid=grid, z1=d["slab"]["z1"], z2=d["slab"]["z2"], meta=d.get("meta", {}), **blocks)


def save_smatrix(s: SMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(smatrix_to_dict(s), sort_keys=True, indent=1))


def load_smatrix(path) -> SMatrix:
    return smatrix_from_dict(json.loads(Path(path).read_text()))
