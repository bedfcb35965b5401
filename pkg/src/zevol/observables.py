"""Wave packets, presence norms, crossing times, dwell and delay times.

All quadratures use the grid weights: an amplitude function f(k_t) is the
vector of its values on the grid channels, and integrals over k_t become
weighted sums.  Derivatives in k_t never cross the threshold or a lattice
gap (see ``kt_derivative``).
"""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GridMismatch, RouteMismatch, SupportViolation, ThresholdDivergence, ZeroCurrent
from .kspace import ChannelGrid, threshold_kt
from .potential import PotentialModel
from .propagator import DEFAULT_KAPPA_CAP, DEFAULT_TOL, SlabSolution
from .smatrix import SMatrix

ZERO_CURRENT = 1e-12
ROUTE_TOL = 1e-9
THRESHOLD_BOUND = 1e-6


class Role(str, enum.Enum):
    INPUT_PAIR = "InputPair"
    FULL_PLANE = "FullPlane"


@dataclass(frozen=True, eq=False)
class AmplitudeSet:
    """Mode amplitudes on every grid channel.

    For ``InputPair`` the arrays are f^F_in (at z1) and f^B_in (at z2) and
    ``plane`` is None; for ``FullPlane`` both refer to the plane ``plane``.
    """

    grid: ChannelGrid
    f_F: np.ndarray
    f_B: np.ndarray
    plane: float | None
    role: Role

    def __post_init__(self):
        for a in (self.f_F, self.f_B):
            if np.shape(a) != (self.grid.n,):
                raise GridMismatch(f"amplitude length {np.shape(a)} does not match {self.grid.n} channels")
        if self.role is Role.INPUT_PAIR:
            closed = self.grid.closed_mask
            if np.any(self.f_F[closed] != 0) or np.any(self.f_B[closed] != 0):
                raise SupportViolation("input amplitudes must vanish on closed channels")

    @property
    def norm(self) -> float:
        w = self.grid.weights
        return float(np.sum(w * (np.abs(self.f_F) ** 2 + np.abs(self.f_B) ** 2)))

    def phase_shifted(self, c: float) -> "AmplitudeSet":
        """Multiply every amplitude by exp(-i k_t c)."""
        ph = np.exp(-1j * self.grid.k_t * c)
        return AmplitudeSet(self.grid, self.f_F * ph, self.f_B * ph, self.plane, self.role)


@dataclass(frozen=True)
class PacketSpec:
    """Gaussian packet in k_t.

    ``width`` is sigma_k, the standard deviation of |f|^2.  The packet is
    exp(-(k - center)^2 / (4 width^2)) exp(i k t0) times a smooth window that
    vanishes on the threshold window and ramps to one over ``ramp`` (default
    2 width).  With this phase a free F packet crosses z = 0 at time t0.
    """

    center: float
    width: float
    t0: float = 0.0
    side: str = "F"
    ramp: float | None = None
    support_sigmas: float = 6.0

    def __post_init__(self):
        if self.side not in ("F", "B"):
            raise ValueError(f"packet side must be 'F' or 'B', got {self.side!r}")
        if not self.width > 0:
            raise ValueError("packet width must be positive")


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def packet_window(spec: PacketSpec, grid: ChannelGrid) -> np.ndarray:
    kx, ky = grid.transverse
    k_thr = threshold_kt(kx, ky, grid.units)
    gap = grid.threshold_window * grid.units.hbar / (2 * grid.units.mass)
    ramp = 2 * spec.width if spec.ramp is None else spec.ramp
    win = _smoothstep((grid.k_t - k_thr - gap) / ramp)
    return np.where(grid.open_mask, win, 0.0)


def build_packet(spec: PacketSpec, grid: ChannelGrid) -> AmplitudeSet:
    kx, ky = grid.transverse
    k_thr = threshold_kt(kx, ky, grid.units)
    s = spec.width
    if spec.center - k_thr < 4 * s:
        raise SupportViolation(
            f"packet center {spec.center} is closer than 4 sigma_k = {4 * s} to the threshold {k_thr}")
    reach = spec.support_sigmas * s
    k_lo, k_hi = grid.k_t_min, grid.k_t_min + grid.spacing * (grid.lattice_size - 1)
    if k_hi < spec.center + reach or (k_lo > k_thr and k_lo > spec.center - reach):
        raise SupportViolation(
            f"grid [{k_lo}, {k_hi}] does not cover the packet support {spec.center} +- {reach}")
    k = grid.k_t
    f = packet_window(spec, grid) * np.exp(-((k - spec.center) ** 2) / (4 * s * s)) * np.exp(1j * k * spec.t0)
    norm = np.sqrt(np.sum(grid.weights * np.abs(f) ** 2))
    if norm == 0:
        raise SupportViolation("packet has no weight on open channels")
    f = f / norm
    zero = np.zeros(grid.n, dtype=complex)
    if spec.side == "F":
        return AmplitudeSet(grid, f, zero, None, Role.INPUT_PAIR)
    return AmplitudeSet(grid, zero, f, None, Role.INPUT_PAIR)


# ----------------------------------------------------------------------------
# k_t derivative

def kt_derivative(grid: ChannelGrid, u: np.ndarray, log_limit: float = 0.5) -> np.ndarray:
    """d u / d k_t on every channel, second order, never across a run boundary.

    On each run the derivative of log u is taken by central differences
    (one-sided second order at the run ends) and multiplied back by u.  This
    is exact for Gaussians times linear phases, and it commutes with
    multiplication by exp(-i k_t c).  Where |u| vanishes or neighbouring
    values differ too much in log (zeros between nodes) the plain stencil on
    u itself is used instead.
    """
    u = np.asarray(u, dtype=complex)
    h = grid.spacing
    out = np.zeros_like(u)
    for run in grid.runs():
        v = u[run]
        n = len(v)
        if n == 1:
            continue
        if n == 2:
            d = (v[1] - v[0]) / h
            out[run] = d
            continue
        plain = np.empty(n, dtype=complex)
        plain[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        plain[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        plain[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)

        nz = v != 0
        ok_link = nz[1:] & nz[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            link = np.where(ok_link, np.log(np.where(ok_link, v[1:], 1) / np.where(ok_link, v[:-1], 1)), 0)
        good = ok_link & (np.abs(link) <= log_limit)
        logd = np.empty(n, dtype=complex)
        usable = np.zeros(n, dtype=bool)
        logd[1:-1] = (link[1:] + link[:-1]) / (2 * h)
        usable[1:-1] = good[1:] & good[:-1]
        logd[0] = (3 * link[0] - link[1]) / (2 * h)
        usable[0] = good[0] & good[1]
        logd[-1] = (3 * link[-1] - link[-2]) / (2 * h)
        usable[-1] = good[-1] & good[-2]
        out[run] = np.where(usable, v * logd, plain)
    return out


def _minus_i_d(grid, u):
    return -1j * kt_derivative(grid, u)


# ----------------------------------------------------------------------------
# norms and kernels

def _pairing_diag(grid):
    """(G_FF, G_FB) per channel: open diag(1, -1), closed antidiag(1, 1)."""
    om = grid.open_mask
    return np.where(om, 1.0, 0.0), np.where(om, 0.0, 1.0)


def presence_norm(a: AmplitudeSet) -> float:
    g = a.grid
    w, om = g.weights, g.open_mask
    open_part = np.abs(a.f_F) ** 2 - np.abs(a.f_B) ** 2
    closed_part = 2 * np.real(np.conj(a.f_F) * a.f_B)
    return float(np.sum(w * np.where(om, open_part, closed_part)))


def time_kernels(grid: ChannelGrid, z: float) -> np.ndarray:
    """Vectorized mode time kernels, shape (2, 2, N) with (F, B) ordering."""
    h, m = grid.units.hbar, grid.units.mass
    q = grid.wavenumber
    om = grid.open_mask
    k = np.empty((2, 2, grid.n), dtype=complex)
    with np.errstate(over="ignore"):
        # open
        ko = np.empty((2, 2, grid.n), dtype=complex)
        ko[0, 0] = ko[1, 1] = m * z / (h * q)
        ko[0, 1] = 1j * m / (2 * h * q**2) * np.exp(-2j * q * z)
        ko[1, 0] = -1j * m / (2 * h * q**2) * np.exp(2j * q * z)
        # closed
        kc = np.empty((2, 2, grid.n), dtype=complex)
        kc[0, 0] = -m / (2 * h * q**2) * np.exp(np.where(om, 0.0, -2 * q * z))
        kc[1, 1] = m / (2 * h * q**2) * np.exp(np.where(om, 0.0, 2 * q * z))
        kc[0, 1] = 1j * m * z / (h * q)
        kc[1, 0] = -1j * m * z / (h * q)
    k[:] = np.where(om[None, None, :], ko, kc)
    return k


def _check_threshold(a: AmplitudeSet, bound: float):
    """Raise if too much amplitude sits within two lattice steps of the threshold window."""
    g = a.grid
    guard = g.threshold_window + 2 * (2 * g.units.mass / g.units.hbar) * g.spacing
    near = np.abs(g.disc) <= guard
    if not np.any(near):
        return
    mass = np.sum(g.weights[near] * (np.abs(a.f_F[near]) ** 2 + np.abs(a.f_B[near]) ** 2))
    total = a.norm
    if total > 0 and mass > bound * total:
        raise ThresholdDivergence(
            f"fraction {mass / total:.3g} of the amplitude sits next to the threshold (bound {bound})")


def crossing_time(a: AmplitudeSet, threshold_bound: float = THRESHOLD_BOUND) -> float:
    """Expectation of the crossing time at the plane of ``a``.

    Normalized by nothing: for a unit-presence packet it is the mean arrival
    time, otherwise it is the time current through the plane.
    """
    if a.role is not Role.FULL_PLANE:
        raise ValueError("crossing_time needs a FullPlane amplitude set")
    _check_threshold(a, threshold_bound)
    g = a.grid
    k = time_kernels(g, a.plane)
    f = np.stack([a.f_F, a.f_B])
    df = np.stack([_minus_i_d(g, a.f_F), _minus_i_d(g, a.f_B)])
    gd, go = _pairing_diag(g)
    quad = np.einsum("an,abn,bn->n", np.conj(f), k, f)
    deriv = (gd * (np.conj(f[0]) * df[0] - np.conj(f[1]) * df[1])
             + go * (np.conj(f[0]) * df[1] + np.conj(f[1]) * df[0]))
    return float(np.real(np.sum(g.weights * (quad + deriv))))


# ----------------------------------------------------------------------------
# scattering of packets

def _check_same_grid(s: SMatrix, a: AmplitudeSet):
    if a.grid is not s.grid and (a.grid.n != s.grid.n or not np.allclose(a.grid.k_t, s.grid.k_t)):
        raise GridMismatch("amplitudes and S-matrix live on different grids")


def output_amplitudes(s: SMatrix, inp: AmplitudeSet) -> tuple[AmplitudeSet, AmplitudeSet]:
    """Full plane sets at z1 (F in, B out) and at z2 (F out, B in)."""
    if inp.role is not Role.INPUT_PAIR:
        raise ValueError("output_amplitudes needs an InputPair amplitude set")
    _check_same_grid(s, inp)
    o = s.grid.open_index
    f_in, b_in = inp.f_F[o], inp.f_B[o]
    f_out, b_out = s.apply(f_in, b_in)
    return (AmplitudeSet(s.grid, inp.f_F, b_out, s.z1, Role.FULL_PLANE),
            AmplitudeSet(s.grid, f_out, inp.f_B, s.z2, Role.FULL_PLANE))


@dataclass(frozen=True, eq=False)
class TimeKernel:
    """Constituents of the dwell-time quadratic form on open channels.

    ``d1`` and ``d3`` hold the diagonal parts for (F, B) rows; the
    derivative part is sign * (-i d/dk_t) with signs ``d1_sign`` and
    ``d3_sign``.  ``d2`` and ``d4`` are purely diagonal.
    """

    d1: np.ndarray
    d1_sign: tuple[int, int]
    d2: np.ndarray
    d3: np.ndarray
    d3_sign: tuple[int, int]
    d4: np.ndarray
    z1: float
    z2: float


def time_kernel(s: SMatrix) -> TimeKernel:
    g = s.grid
    h, m = g.units.hbar, g.units.mass
    o, c = g.open_index, g.closed_index
    kz = g.kz[o]
    kap = g.kappa[c]
    z1, z2 = s.z1, s.z2
    d1 = np.array([-m * z1 / (h * kz), m * z2 / (h * kz)])
    d2 = np.array([m / (2 * h * kz**2) * np.exp(2j * kz * z2), -m / (2 * h * kz**2) * np.exp(-2j * kz * z1)])
    d3 = np.array([m * z2 / (h * kz), -m * z1 / (h * kz)])
    d4 = np.array([-m / (2 * h * kap**2) * np.exp(-2 * kap * z2), -m / (2 * h * kap**2) * np.exp(2 * kap * z1)])
    return TimeKernel(d1, (-1, -1), d2, d3, (1, 1), d4, z1, z2)


def _embed(grid, idx, v):
    out = np.zeros(grid.n, dtype=complex)
    out[idx] = v
    return out


def _kernel_route(s: SMatrix, inp: AmplitudeSet) -> float:
    g = s.grid
    tk = time_kernel(s)
    o, c = g.open_index, g.closed_index
    wo, wc = g.weights[o], g.weights[c]
    f_out, b_out = s.apply(inp.f_F[o], inp.f_B[o])
    fin = [inp.f_F[o], inp.f_B[o]]
    out = [f_out[o], b_out[o]]
    total = 0.0
    for r in range(2):
        v = fin[r]
        dv = _minus_i_d(g, _embed(g, o, v))[o]
        total += np.sum(wo * np.conj(v) * (tk.d1_sign[r] * dv + tk.d1[r] * v))
        u = out[r]
        du = _minus_i_d(g, _embed(g, o, u))[o]
        total += np.sum(wo * np.conj(u) * (tk.d3_sign[r] * du + tk.d3[r] * u))
    # f^H W M D2 S_o f with M = [[0, i], [-i, 0]]
    cross = np.sum(wo * (np.conj(fin[0]) * 1j * tk.d2[1] * out[1] - np.conj(fin[1]) * 1j * tk.d2[0] * out[0]))
    total += 2 * np.real(cross)
    closed = [f_out[c], b_out[c]]
    for r in range(2):
        total += np.sum(wc * tk.d4[r] * np.abs(closed[r]) ** 2)
    return float(np.real(total))


def dwell_time_routes(s: SMatrix, inp: AmplitudeSet,
                      threshold_bound: float = THRESHOLD_BOUND) -> tuple[float, float]:
    """(crossing-time difference, kernel quadratic form)."""
    p1, p2 = output_amplitudes(s, inp)
    route_a = crossing_time(p2, threshold_bound) - crossing_time(p1, threshold_bound)
    return route_a, _kernel_route(s, inp)


def dwell_time_surface(s: SMatrix, inp: AmplitudeSet, route_tol: float = ROUTE_TOL,
                       threshold_bound: float = THRESHOLD_BOUND) -> float:
    a, b = dwell_time_routes(s, inp, threshold_bound)
    if abs(a - b) > route_tol * max(abs(a), abs(b), 1e-300):
        raise RouteMismatch(f"crossing-difference route {a} and kernel route {b} disagree", a, b)
    return a


def dwell_time_volume(grid: ChannelGrid, model: PotentialModel, inp: AmplitudeSet, z_step: float,
                      z1: float, z2: float, tol: float = DEFAULT_TOL,
                      kappa_cap: float = DEFAULT_KAPPA_CAP, solution: SlabSolution | None = None) -> float:
    """Sum over channels of w_i times the integral of |psi_i(z)|^2 over the slab."""
    if inp.role is not Role.INPUT_PAIR:
        raise ValueError("dwell_time_volume needs an InputPair amplitude set")
    if not z_step > 0:
        raise ValueError("z_step must be positive")
    if solution is None:
        solution = SlabSolution.solve(grid, model, z1, z2, tol, kappa_cap)
    dens = solution.sample_density(inp.f_F, inp.f_B, z_step)
    return float(np.sum(grid.weights * dens))


# ----------------------------------------------------------------------------
# currents and delays

def _side(inp: AmplitudeSet) -> str:
    has_f, has_b = np.any(inp.f_F != 0), np.any(inp.f_B != 0)
    if has_f and not has_b:
        return "F"
    if has_b and not has_f:
        return "B"
    raise ValueError("currents and delays need single-sided input (F only or B only)")


def _open_outputs(s: SMatrix, inp: AmplitudeSet, side: str):
    """(reflected, transmitted) open-channel output vectors, embedded in N."""
    g = s.grid
    o = g.open_index
    f = (inp.f_F if side == "F" else inp.f_B)[o]
    if side == "F":
        refl, trans = s.plain("r_bf") @ f, s.plain("t_ff") @ f
    else:
        refl, trans = s.plain("r_fb") @ f, s.plain("t_bb") @ f
    mask = g.open_mask
    return np.where(mask, refl, 0), np.where(mask, trans, 0)


def out_currents(s: SMatrix, inp: AmplitudeSet) -> tuple[float, float]:
    """(R_current, T_current) with the printed signs: B-type outputs count negative."""
    _check_same_grid(s, inp)
    side = _side(inp)
    w = s.grid.weights
    refl, trans = _open_outputs(s, inp, side)
    r = float(np.sum(w * np.abs(refl) ** 2))
    t = float(np.sum(w * np.abs(trans) ** 2))
    return (-r, t) if side == "F" else (r, -t)


def _time_current(grid, u, sign, z):
    """sum w u^* [sign (-i d/dk_t) + m z / (hbar k_z)] u over open channels."""
    o = grid.open_mask
    h, m = grid.units.hbar, grid.units.mass
    kz = np.where(o, grid.wavenumber, 1.0)
    val = np.conj(u) * (sign * _minus_i_d(grid, u) + np.where(o, m * z / (h * kz), 0.0) * u)
    return float(np.real(np.sum(grid.weights * np.where(o, val, 0.0))))


@dataclass
class TimeStatistics:
    side: str
    tau_in: float
    tau_out_reflect: float
    tau_out_transmit: float
    R_current: float
    T_current: float
    tau_dwell_surface: float | None = None
    tau_dwell_volume: float | None = None
    delay_transmit: float | None = None
    delay_reflect: float | None = None

    @property
    def dwell_gap(self) -> float | None:
        if self.tau_dwell_surface is None or self.tau_dwell_volume is None:
            return None
        return abs(self.tau_dwell_surface - self.tau_dwell_volume) / max(abs(self.tau_dwell_volume), 1e-300)


TIME_COLUMNS = ("side", "tau_in", "tau_out_reflect", "tau_out_transmit", "R_current", "T_current",
                "tau_dwell_surface", "tau_dwell_volume", "dwell_gap", "delay_transmit", "delay_reflect")


def delay_times(s: SMatrix, inp: AmplitudeSet, strict: bool = False) -> TimeStatistics:
    """Entry/exit time currents and the two delay times for one-sided input.

    A delay whose particle current is below 1e-12 in magnitude is None, or
    raises ZeroCurrent with ``strict``.
    """
    _check_same_grid(s, inp)
    side = _side(inp)
    g = s.grid
    r_cur, t_cur = out_currents(s, inp)
    refl, trans = _open_outputs(s, inp, side)
    if side == "F":
        tau_in = _time_current(g, inp.f_F, 1, s.z1)
        tau_r = _time_current(g, refl, -1, s.z1)
        tau_t = _time_current(g, trans, 1, s.z2)
        sgn = -1
    else:
        tau_in = _time_current(g, inp.f_B, -1, s.z2)
        tau_r = _time_current(g, refl, 1, s.z2)
        tau_t = _time_current(g, trans, -1, s.z1)
        sgn = 1

    def delay(tau_out, current, what):
        if abs(current) < ZERO_CURRENT:
            if strict:
                raise ZeroCurrent(f"{what} current {current} is too small to define a delay")
            return None
        return tau_out / current + sgn * tau_in

    return TimeStatistics(side, tau_in, tau_r, tau_t, r_cur, t_cur,
                          delay_transmit=delay(tau_t, t_cur, "transmitted"),
                          delay_reflect=delay(tau_r, r_cur, "reflected"))


def time_statistics(s: SMatrix, inp: AmplitudeSet, model: PotentialModel, z_step: float,
                    route_tol: float = ROUTE_TOL, solution: SlabSolution | None = None,
                    tol: float = DEFAULT_TOL, threshold_bound: float = THRESHOLD_BOUND) -> TimeStatistics:
    st = delay_times(s, inp)
    st.tau_dwell_surface = dwell_time_surface(s, inp, route_tol, threshold_bound)
    st.tau_dwell_volume = dwell_time_volume(s.grid, model, inp, z_step, s.z1, s.z2, tol, solution=solution)
    return st


def statistics_row(st: TimeStatistics) -> dict:
    d = asdict(st)
    d["dwell_gap"] = st.dwell_gap
    return {k: d[k] for k in TIME_COLUMNS}


def statistics_csv(rows: list[dict], extra: tuple[str, ...] = ()) -> str:
    """CSV text with ``extra`` columns first, then the fixed TIME_COLUMNS."""
    buf = io.StringIO()
    cols = list(extra) + list(TIME_COLUMNS)
    wr = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                     for k in cols})
    return buf.getvalue()


def statistics_json(rows: list[dict]) -> str:
    return json.dumps(rows, sort_keys=True, indent=1)
