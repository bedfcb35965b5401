from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from zevol.kspace import build_grid
from zevol.potential import Harmonic, PotentialModel, Profile
from zevol.propagator import SlabSolution
from zevol.smatrix import extract_smatrix

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def barrier_plane_wave(e, v0, length, hbar=1.0, mass=1.0):
    """Transmission and reflection amplitudes of a square barrier on [0, L].

    Independent oracle: plane waves matched in (psi, psi') at both edges.
    Amplitudes are for exp(i k z) waves referenced to z = 0, so t carries
    the free phase exp(-i k L) relative to the mode convention.
    """
    k = np.sqrt(2 * mass * e + 0j) / hbar
    q = np.sqrt(2 * mass * (e - v0) + 0j) / hbar

    def m(kk, z):
        return np.array([[np.exp(1j * kk * z), np.exp(-1j * kk * z)],
                         [1j * kk * np.exp(1j * kk * z), -1j * kk * np.exp(-1j * kk * z)]])

    # coefficients: left (1, r), inside (a, b), right (t, 0)
    total = np.linalg.solve(m(k, length), m(q, length)) @ np.linalg.solve(m(q, 0.0), m(k, 0.0))
    # total maps left (A, B) to right (C, D); with D = 0
    r = -total[1, 0] / total[1, 1]
    t = total[0, 0] + total[0, 1] * r
    return t, r


def barrier_transmission(e, v0, length, mass=1.0, hbar=1.0):
    """Closed form |T|^2 below the barrier top."""
    kappa = np.sqrt(2 * mass * (v0 - e)) / hbar
    return 1.0 / (1.0 + np.sinh(kappa * length) ** 2 * v0**2 / (4 * e * (v0 - e)))


def square_barrier(v0=1.0, support=(0.0, 1.0)):
    return PotentialModel(Profile("square", v0, support))


def driven_barrier(v0=1.0, a=0.05, omega=0.02, phase=0.3):
    return PotentialModel(Profile("square", v0, (0.0, 1.0)),
                          (Harmonic(1, Profile("square", a, (0.0, 1.0)), phase),), omega)


@lru_cache(maxsize=None)
def _cached(kind, lo, hi, n, tol):
    grid = build_grid(lo, hi, n)
    model = {"free": PotentialModel(), "barrier": square_barrier(), "driven": driven_barrier()}[kind]
    sol = SlabSolution.solve(grid, model, -1.0, 2.0, tol)
    return grid, model, sol, extract_smatrix(grid, model, -1.0, 2.0, tol, solution=sol)


@pytest.fixture(scope="session")
def free_case():
    return _cached("free", 0.3, 0.7, 161, 1e-12)


@pytest.fixture(scope="session")
def barrier_case():
    return _cached("barrier", 0.3, 0.7, 161, 1e-12)


@pytest.fixture(scope="session")
def driven_case():
    return _cached("driven", 0.05, 0.95, 181, 1e-11)


def cached_case(kind, lo, hi, n, tol):
    return _cached(kind, lo, hi, n, tol)
