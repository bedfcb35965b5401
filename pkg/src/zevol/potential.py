"""Potentials V(t, z) with compact support and their k_t coupling matrices.

Time dependence is a finite Fourier series::

    V(t, z) = static(z) + sum_n 2 a_n(z) cos(n Omega t + phase_n)

With basis functions exp(-i k_t t), the term a_n exp(-i phase_n)
exp(-i n Omega t) moves amplitude from k_t to k_t + n Omega, so on a grid
whose spacing divides Omega the coupling is an exact banded matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridMismatch
from .kspace import ChannelGrid

PROFILE_KINDS = ("square", "gaussian", "smoothed_step", "tabulated")


@dataclass(frozen=True, eq=False)
class Profile:
    """A real z-profile, identically zero outside ``support``.

    ``square``: amplitude on the whole support.
    ``gaussian``: amplitude * exp(-(z - center)^2 / (2 width^2)), cut at the support.
    ``smoothed_step``: a plateau on the support with tanh edges of the given
    width, shifted so it vanishes at both support ends.
    ``tabulated``: linear interpolation of ``table`` (z, V) samples.
    """

    kind: str
    amplitude: float = 0.0
    support: tuple[float, float] = (0.0, 1.0)
    center: float = 0.0
    width: float = 1.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        z1, z2 = self.support
        if not z1 < z2:
            raise ConfigError(f"profile support must satisfy z1 < z2, got {self.support}")
        if self.kind in ("gaussian", "smoothed_step") and self.width <= 0:
            raise ConfigError("profile width must be positive")
        if self.kind == "tabulated":
            t = np.asarray(self.table, dtype=float)
            if t.ndim != 2 or t.shape[1] != 2 or len(t) < 2:
                raise ConfigError("tabulated profile needs an (n, 2) table with n >= 2")
            if np.any(np.diff(t[:, 0]) <= 0):
                raise ConfigError("tabulated profile z values must be strictly increasing")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        z1, z2 = self.support
        inside = (z >= z1) & (z <= z2)
        if self.kind == "square":
            v = np.full_like(z, self.amplitude)
        elif self.kind == "gaussian":
            v = self.amplitude * np.exp(-((z - self.center) ** 2) / (2 * self.width**2))
        elif self.kind == "smoothed_step":
            def edge(x):
                return 0.5 * (np.tanh((x - z1) / self.width) - np.tanh((x - z2) / self.width))
            floor = edge(np.array(z1))
            v = self.amplitude * (edge(z) - floor) / (edge(np.array(0.5 * (z1 + z2))) - floor)
        else:
            t = np.asarray(self.table, dtype=float)
            v = np.interp(z, t[:, 0], t[:, 1], left=0.0, right=0.0)
        return np.where(inside, v, 0.0)

    def is_constant_on(self, za: float, zb: float) -> bool:
        """True if the profile takes a single value on the open interval (za, zb)."""
        z1, z2 = self.support
        if zb <= z1 or za >= z2:
            return True
        if self.kind == "square":
            return za >= z1 and zb <= z2
        return False

    def breakpoints(self) -> list[float]:
        pts = list(self.support)
        if self.kind == "tabulated":
            pts.extend(float(x) for x in np.asarray(self.table)[:, 0])
        return pts

    def max_abs(self) -> float:
        if self.kind in ("square", "gaussian", "smoothed_step"):
            return abs(self.amplitude)
        return float(np.max(np.abs(np.asarray(self.table)[:, 1])))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "support": list(self.support)}
        if self.kind == "tabulated":
            d["table"] = np.asarray(self.table).tolist()
        else:
            d["amplitude"] = self.amplitude
        if self.kind == "gaussian":
            d["center"] = self.center
        if self.kind in ("gaussian", "smoothed_step"):
            d["width"] = self.width
        return d


def zero_profile() -> Profile:
    return Profile("square", 0.0, (0.0, 1.0))


def load_profile_table(path, support=None) -> Profile:
    """Read a two-column (z, V) text file into a tabulated profile.

    Values are clamped to zero at the support edges.
    """
    try:
        table = np.loadtxt(Path(path), dtype=float, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read profile table {path}: {exc}") from exc
    if table.shape[1] != 2:
        raise ConfigError(f"profile table {path} must have exactly two columns")
    if support is None:
        support = (float(table[0, 0]), float(table[-1, 0]))
    table = table[(table[:, 0] >= support[0]) & (table[:, 0] <= support[1])]
    table = np.vstack([[support[0], 0.0], table, [support[1], 0.0]])
    # drop duplicated edge nodes, keeping the clamped zero
    _, first = np.unique(table[:, 0], return_index=True)
    keep = np.sort(first)
    table = table[keep]
    table[0, 1] = table[-1, 1] = 0.0
    return Profile("tabulated", support=tuple(support), table=table)


@dataclass(frozen=True)
class Harmonic:
    n: int
    profile: Profile
    phase: float = 0.0

    def __post_init__(self):
        if self.n == 0 or int(self.n) != self.n:
            raise ConfigError(f"harmonic order must be a nonzero integer, got {self.n}")


@dataclass(frozen=True)
class PotentialModel:
    static: Profile = field(default_factory=zero_profile)
    harmonics: tuple[Harmonic, ...] = ()
    omega: float = 0.0

    def __post_init__(self):
        if self.harmonics and not self.omega > 0:
            raise ConfigError("a driven model needs omega > 0")

    @property
    def is_static(self) -> bool:
        return not self.harmonics

    def profiles(self):
        return [self.static] + [h.profile for h in self.harmonics]

    @property
    def support(self) -> tuple[float, float]:
        live = [p for p in self.profiles() if p.max_abs() > 0] or [self.static]
        return min(p.support[0] for p in live), max(p.support[1] for p in live)

    def breakpoints(self) -> list[float]:
        return sorted({b for p in self.profiles() for b in p.breakpoints()})

    def is_constant_on(self, za: float, zb: float) -> bool:
        return all(p.is_constant_on(za, zb) for p in self.profiles())

    def max_potential(self) -> float:
        """Upper bound of V(t, z) over all t and z."""
        return self.static.max_abs() + sum(2 * h.profile.max_abs() for h in self.harmonics)

    def band_offsets(self, grid: ChannelGrid) -> list[tuple[int, Harmonic]]:
        """Lattice offset n * Omega / spacing for each harmonic."""
        out = []
        for h in self.harmonics:
            ratio = h.n * self.omega / grid.spacing
            r = int(round(ratio))
            if r == 0 or abs(ratio - r) > 1e-8 * max(1.0, abs(ratio)):
                raise GridMismatch(
                    f"n*Omega = {h.n * self.omega} is not an integer multiple of the grid spacing {grid.spacing}")
            out.append((r, h))
        return out

    def to_dict(self) -> dict:
        return {
            "static": self.static.to_dict(),
            "harmonics": [{"n": h.n, "phase": h.phase, "profile": h.profile.to_dict()} for h in self.harmonics],
            "omega": self.omega,
        }


def evaluate_potential(model: PotentialModel, t, z):
    v = model.static(z)
    for h in model.harmonics:
        v = v + 2.0 * h.profile(z) * np.cos(h.n * model.omega * np.asarray(t) + h.phase)
    return v


def coupling_matrix(model: PotentialModel, grid: ChannelGrid, z: float, index=None) -> np.ndarray:
    """Dense coupling V_ij(z) between grid channels (optionally a subset).

    Entry (i, j) with k_t(i) - k_t(j) = n Omega is a_n(z) exp(-i phase_n);
    the mirrored entry is its conjugate.
    """
    idx = np.arange(grid.n) if index is None else np.asarray(index)
    offsets = model.band_offsets(grid)
    lat = grid.lattice[idx]
    v = np.diag(np.full(len(idx), float(model.static(z)), dtype=complex))
    if offsets:
        diff = lat[:, None] - lat[None, :]
        for r, h in offsets:
            a = float(h.profile(z))
            if a == 0.0:
                continue
            c = a * np.exp(-1j * h.phase)
            v = v + np.where(diff == r, c, 0.0) + np.where(diff == -r, np.conj(c), 0.0)
    return v
