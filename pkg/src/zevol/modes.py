"""Two-component state algebra: metric, pseudo-adjoint and free modes.

A state at one channel and one plane is the pair (psi, p) with
p = -(hbar^2 / 2m) dpsi/dz.  The metric ``M = [[0, i], [-i, 0]]`` turns
``hbar^-1 a^H M b`` into the z-component of the probability current, which
is indefinite: forward modes have norm +1 and backward modes -1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotClosed, NotIntermediate, NotOpen, NotPropagating
from .kspace import Channel, ChannelGrid, ChannelKind, Units, classify_channel

METRIC = np.array([[0.0, 1.0j], [-1.0j, 0.0]])

SIGMA = {"F": 1, "B": -1}
ZETAS = ("F", "B")


@dataclass(frozen=True)
class TwoComponentValue:
    psi: complex
    p: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.psi, self.p], dtype=complex)

    @classmethod
    def from_vector(cls, v) -> "TwoComponentValue":
        return cls(complex(v[0]), complex(v[1]))

    def __add__(self, other):
        return TwoComponentValue(self.psi + other.psi, self.p + other.p)

    def __mul__(self, c):
        return TwoComponentValue(c * self.psi, c * self.p)

    __rmul__ = __mul__


def _vec(a):
    return a.vector if isinstance(a, TwoComponentValue) else np.asarray(a, dtype=complex)


def metric_pairing(a, b, units: Units = Units()) -> complex:
    """hbar^-1 a^H M b for two-component values (or length-2 arrays)."""
    va, vb = _vec(a), _vec(b)
    return complex(np.conj(va) @ METRIC @ vb) / units.hbar


def pairing_table(modes, units: Units = Units()) -> np.ndarray:
    """Matrix of pairings <modes[i], modes[j]>."""
    return np.array([[metric_pairing(a, b, units) for b in modes] for a in modes])


def _check_zeta(zeta):
    if zeta not in SIGMA:
        raise ValueError(f"zeta must be 'F' or 'B', got {zeta!r}")
    return SIGMA[zeta]


def mode_open(zeta: str, channel: Channel, z: float, units: Units = Units()) -> TwoComponentValue:
    if channel.kind is not ChannelKind.OPEN:
        raise NotOpen(f"channel at k_t={channel.k_t} is {channel.kind.value}")
    s = _check_zeta(zeta)
    h, m, kz = units.hbar, units.mass, channel.kz
    phase = np.exp(s * 1j * kz * z)
    return TwoComponentValue(np.sqrt(m / (h * kz)) * phase,
                             -s * 0.5j * np.sqrt(h**3 * kz / m) * phase)


def mode_closed(zeta: str, channel: Channel, z: float, units: Units = Units()) -> TwoComponentValue:
    if channel.kind is not ChannelKind.CLOSED:
        raise NotClosed(f"channel at k_t={channel.k_t} is {channel.kind.value}")
    s = _check_zeta(zeta)
    h, m, kap = units.hbar, units.mass, channel.kappa
    e = np.exp(-s * (0.25j * np.pi + kap * z))
    return TwoComponentValue(np.sqrt(m / (h * kap)) * e, s * 0.5 * np.sqrt(h**3 * kap / m) * e)


def mode(zeta: str, channel: Channel, z: float, units: Units = Units()) -> TwoComponentValue:
    if channel.kind is ChannelKind.OPEN:
        return mode_open(zeta, channel, z, units)
    if channel.kind is ChannelKind.CLOSED:
        return mode_closed(zeta, channel, z, units)
    raise NotPropagating("intermediate channels have no F/B modes")


def mode_ghost_pair(channel: Channel, z: float, rho: float = 1.0,
                    units: Units = Units()) -> tuple[TwoComponentValue, TwoComponentValue]:
    """The eigenvector / dipole-ghost pair at the open-closed threshold."""
    if channel.kind is not ChannelKind.INTERMEDIATE:
        raise NotIntermediate(f"channel at k_t={channel.k_t} is {channel.kind.value}")
    if rho <= 0:
        raise ValueError("ghost scale rho must be positive")
    h, m = units.hbar, units.mass
    x1 = TwoComponentValue(np.sqrt(m * rho / h), 0.0)
    x2 = TwoComponentValue(np.sqrt(m / (rho * h)) * 2j * z, -1j * np.sqrt(h**3 / (m * rho)))
    return x1, x2


def reduced_hamiltonian(discriminant: float, potential: float = 0.0,
                        units: Units = Units()) -> np.ndarray:
    """2x2 z-evolution generator for one channel with a z-only potential.

    ``-i dX/dz = H X``; ``discriminant`` is 2 m k_t / hbar - k_x^2 - k_y^2.
    """
    h, m = units.hbar, units.mass
    return np.array([
        [0.0, 2j * m / h**2],
        [(h**2 / (2j * m)) * (discriminant - 2 * m * potential / h**2), 0.0],
    ])


def pseudo_adjoint(w) -> np.ndarray:
    """M W^H M; with a 2n x 2n argument the block metric M (x) I_n is used."""
    w = np.asarray(w, dtype=complex)
    mm = block_metric(w.shape[-1] // 2)
    return mm @ np.conj(np.swapaxes(w, -1, -2)) @ mm


def block_metric(n: int) -> np.ndarray:
    """M (x) I_n for the layout [psi_1..psi_n, p_1..p_n]."""
    eye = np.eye(n)
    return np.block([[np.zeros((n, n)), 1j * eye], [-1j * eye, np.zeros((n, n))]])


def pseudo_hermiticity_defect(w) -> float:
    w = np.asarray(w, dtype=complex)
    return float(np.max(np.abs(pseudo_adjoint(w) - w)))


def pseudo_unitarity_defect(w) -> float:
    w = np.asarray(w, dtype=complex)
    return float(np.max(np.abs(pseudo_adjoint(w) @ w - np.eye(w.shape[-1]))))


def mode_time_kernels(channel: Channel, z: float, units: Units = Units()) -> np.ndarray:
    """Pairings hbar^-1 X^zeta^H M (-i dX^zeta'/dk_t), as a 2x2 array.

    Rows index zeta, columns zeta', both in the order (F, B).
    """
    h, m = units.hbar, units.mass
    out = np.empty((2, 2), dtype=complex)
    if channel.kind is ChannelKind.OPEN:
        kz = channel.kz
        for a, za in enumerate(ZETAS):
            s = SIGMA[za]
            out[a, a] = m * z / (h * kz)
            out[a, 1 - a] = s * 1j * m / (2 * h * kz**2) * np.exp(-s * 2j * kz * z)
        return out
    if channel.kind is ChannelKind.CLOSED:
        kap = channel.kappa
        for a, za in enumerate(ZETAS):
            s = SIGMA[za]
            out[a, a] = -s * m / (2 * h * kap**2) * np.exp(-s * 2 * kap * z)
            out[a, 1 - a] = s * 1j * m * z / (h * kap)
        return out
    raise NotPropagating("time kernels are undefined on the threshold")


def mode_arrays(grid: ChannelGrid, z: float, index=None):
    """Vectorized free modes on (a subset of) a grid.

    Returns ``(psi_F, psi_B, p_F, p_B)`` arrays; closed channels use the
    decaying-mode convention (F decays toward +z, B toward -z).
    """
    idx = slice(None) if index is None else index
    h, m = grid.units.hbar, grid.units.mass
    q = grid.wavenumber[idx]
    om = grid.open_mask[idx]
    amp_psi = np.sqrt(m / (h * q))
    amp_p = 0.5 * np.sqrt(h**3 * q / m)
    out = []
    for s in (1, -1):
        e_open = np.exp(s * 1j * q * z)
        e_closed = np.exp(-s * (0.25j * np.pi + q * z))
        e = np.where(om, e_open, e_closed)
        psi = amp_psi * e
        p = np.where(om, -s * 1j * amp_p, s * amp_p + 0j) * e
        out.append((psi, p))
    (psi_f, p_f), (psi_b, p_b) = out
    return psi_f, psi_b, p_f, p_b


def mode_matrix(grid: ChannelGrid, z: float, index=None) -> np.ndarray:
    """2n x 2n matrix P with component vector = P @ [f_F; f_B].

    Component layout is [psi_1..psi_n, p_1..p_n].
    """
    psi_f, psi_b, p_f, p_b = mode_arrays(grid, z, index)
    return np.block([[np.diag(psi_f), np.diag(psi_b)], [np.diag(p_f), np.diag(p_b)]])


def mode_matrix_inverse(grid: ChannelGrid, z: float, index=None) -> np.ndarray:
    psi_f, psi_b, p_f, p_b = mode_arrays(grid, z, index)
    det = psi_f * p_b - psi_b * p_f
    return np.block([[np.diag(p_b / det), np.diag(-psi_b / det)],
                     [np.diag(-p_f / det), np.diag(psi_f / det)]])


def mode_time_kernels_fd(channel: Channel, z: float, units: Units = Units(), dk: float = 1e-5) -> np.ndarray:
    """Finite-difference counterpart of ``mode_time_kernels``.

    Differentiates the modes in k_t with a central stencil at fixed (k_x, k_y).
    """
    def at(kt):
        ch = classify_channel(kt, channel.k_x, channel.k_y, units)
        if ch.kind is not channel.kind:
            raise NotPropagating("finite-difference step crosses the threshold")
        return ch

    lo, hi = at(channel.k_t - dk), at(channel.k_t + dk)
    out = np.empty((2, 2), dtype=complex)
    for a, za in enumerate(ZETAS):
        x = mode(za, channel, z, units)
        for b, zb in enumerate(ZETAS):
            dx = (mode(zb, hi, z, units).vector - mode(zb, lo, z, units).vector) / (2 * dk)
            out[a, b] = metric_pairing(x, -1j * dx, units)
    return out
