"""Physical units and the discretized channel grid over k_t.

The transverse wavenumbers (k_x, k_y) are conserved parameters for
potentials of the form V(t, z), so a grid is one-dimensional in k_t with a
single shared transverse pair.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid


@dataclass(frozen=True)
class Units:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError(f"hbar and mass must be positive, got {self.hbar}, {self.mass}")


class ChannelKind(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class Channel:
    k_t: float
    k_x: float
    k_y: float
    kind: ChannelKind
    discriminant: float
    kz: float | None = None
    kappa: float | None = None


def discriminant(k_t, k_x, k_y, units: Units):
    """2 m k_t / hbar - k_x^2 - k_y^2 (scalar or array)."""
    return 2.0 * units.mass * np.asarray(k_t) / units.hbar - (k_x * k_x + k_y * k_y)


def threshold_kt(k_x: float, k_y: float, units: Units) -> float:
    """k_t at the open/closed boundary."""
    return units.hbar * (k_x * k_x + k_y * k_y) / (2.0 * units.mass)


def classify_channel(k_t: float, k_x: float, k_y: float, units: Units = Units(),
                     eps_thr: float = 0.0) -> Channel:
    if eps_thr < 0:
        raise ValueError("eps_thr must be non-negative")
    d = float(discriminant(k_t, k_x, k_y, units))
    if abs(d) <= eps_thr:
        return Channel(k_t, k_x, k_y, ChannelKind.INTERMEDIATE, d)
    if d > 0:
        return Channel(k_t, k_x, k_y, ChannelKind.OPEN, d, kz=float(np.sqrt(d)))
    return Channel(k_t, k_x, k_y, ChannelKind.CLOSED, d, kappa=float(np.sqrt(-d)))


@dataclass(frozen=True, eq=False)
class ChannelGrid:
    """Uniform k_t lattice with the threshold window excised.

    ``lattice`` holds each channel's integer position on the uniform lattice
    ``k_t = k_t_min + lattice * spacing``; excised points leave gaps in it.
    Weights are composite-trapezoid weights of the full lattice, so the
    total weight is the interval length minus the excised measure.
    """

    channels: tuple[Channel, ...]
    weights: np.ndarray
    spacing: float
    transverse: tuple[float, float]
    threshold_window: float
    units: Units
    lattice: np.ndarray
    k_t_min: float
    excluded_measure: float = 0.0
    lattice_size: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.channels)

    @property
    def n(self) -> int:
        return len(self.channels)

    @property
    def k_t(self) -> np.ndarray:
        return self._arr("k_t", lambda: np.array([c.k_t for c in self.channels]))

    @property
    def disc(self) -> np.ndarray:
        return self._arr("disc", lambda: np.array([c.discriminant for c in self.channels]))

    @property
    def open_mask(self) -> np.ndarray:
        return self._arr("open", lambda: np.array([c.kind is ChannelKind.OPEN for c in self.channels]))

    @property
    def closed_mask(self) -> np.ndarray:
        return ~self.open_mask

    @property
    def open_index(self) -> np.ndarray:
        return np.flatnonzero(self.open_mask)

    @property
    def closed_index(self) -> np.ndarray:
        return np.flatnonzero(self.closed_mask)

    @property
    def kz(self) -> np.ndarray:
        """k_z on open channels, NaN elsewhere."""
        return self._arr("kz", lambda: np.array([np.nan if c.kz is None else c.kz for c in self.channels]))

    @property
    def kappa(self) -> np.ndarray:
        """kappa_z on closed channels, NaN elsewhere."""
        return self._arr("kappa", lambda: np.array([np.nan if c.kappa is None else c.kappa for c in self.channels]))

    @property
    def wavenumber(self) -> np.ndarray:
        """k_z on open channels and kappa_z on closed ones."""
        return np.sqrt(np.abs(self.disc))

    def runs(self) -> list[np.ndarray]:
        """Maximal index ranges that are contiguous on the lattice and of one kind.

        Finite differences in k_t never straddle a gap or the threshold.
        """
        def build():
            out, start = [], 0
            lat, om = self.lattice, self.open_mask
            for i in range(1, self.n + 1):
                if i == self.n or lat[i] != lat[i - 1] + 1 or om[i] != om[i - 1]:
                    out.append(np.arange(start, i))
                    start = i
            return out
        return self._arr("runs", build)

    def metadata(self) -> dict:
        return {
            "n_channels": self.n,
            "n_open": int(self.open_mask.sum()),
            "n_closed": int(self.closed_mask.sum()),
            "k_t_min": float(self.k_t[0]),
            "k_t_max": float(self.k_t[-1]),
            "lattice_origin": self.k_t_min,
            "lattice_size": self.lattice_size,
            "spacing": self.spacing,
            "k_x": self.transverse[0],
            "k_y": self.transverse[1],
            "threshold_window": self.threshold_window,
            "excluded_measure": self.excluded_measure,
            "total_weight": float(self.weights.sum()),
            "weights_checksum": float(np.sum(self.weights * np.arange(1, self.n + 1))),
            "hbar": self.units.hbar,
            "mass": self.units.mass,
        }

    def _arr(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def build_grid(k_t_min: float, k_t_max: float, n_points: int, k_x: float = 0.0,
               k_y: float = 0.0, units: Units = Units(), eps_thr: float = 1e-3) -> ChannelGrid:
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    if not k_t_min < k_t_max:
        raise ValueError("k_t_min must be below k_t_max")
    k = np.linspace(k_t_min, k_t_max, n_points)
    spacing = (k_t_max - k_t_min) / (n_points - 1)
    w = np.full(n_points, spacing)
    w[0] = w[-1] = 0.5 * spacing

    kept, keep_idx = [], []
    excluded = 0.0
    for i, kt in enumerate(k):
        ch = classify_channel(float(kt), k_x, k_y, units, eps_thr)
        if ch.kind is ChannelKind.INTERMEDIATE:
            excluded += w[i]
            continue
        kept.append(ch)
        keep_idx.append(i)
    if not kept:
        raise EmptyGrid("every grid point lies inside the threshold window")
    keep_idx = np.array(keep_idx)
    return ChannelGrid(
        channels=tuple(kept),
        weights=w[keep_idx],
        spacing=spacing,
        transverse=(k_x, k_y),
        threshold_window=eps_thr,
        units=units,
        lattice=keep_idx,
        k_t_min=k_t_min,
        excluded_measure=excluded,
        lattice_size=n_points,
    )
