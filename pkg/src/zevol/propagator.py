"""Integration of the coupled z-evolution equations.

For each channel i the state is (psi_i, p_i) and

    dpsi_i/dz = -(2m/hbar^2) p_i
    dp_i/dz   = (hbar^2/2m) d_i psi_i - sum_j V_ij(z) psi_j

with d_i = 2 m k_t,i / hbar - k_x^2 - k_y^2.  Vectors use the layout
[psi_1..psi_N, p_1..p_N].

Channels only couple through the harmonic band offsets, so the grid splits
into independent ladders (single channels for a static potential).  All
heavy lifting is done per ladder, batched over ladders of equal length, and
dense full-grid objects are assembled only at the public boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GridMismatch, IllConditioned, NoConvergence, SegmentTooLong, SingularConversion
from .kspace import ChannelGrid
from .modes import mode_arrays, TwoComponentValue
from .potential import PotentialModel

DEFAULT_TOL = 1e-10
DEFAULT_KAPPA_CAP = 5.0
MAX_STEPS = 2**20
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class PlaneState:
    z: float
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values) // 2

    @property
    def psi(self) -> np.ndarray:
        return self.values[: self.n]

    @property
    def p(self) -> np.ndarray:
        return self.values[self.n:]

    def value(self, i: int) -> TwoComponentValue:
        return TwoComponentValue(complex(self.psi[i]), complex(self.p[i]))


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    matrix: np.ndarray
    z_a: float
    z_b: float
    n_steps: int = 0
    defect: float = 0.0
    richardson: float = 0.0


@dataclass(frozen=True, eq=False)
class SegmentScattering:
    """Mode-basis scattering of a z-segment, on all channels.

    Inputs are F amplitudes at z_a and B amplitudes at z_b; outputs are F at
    z_b and B at z_a.  Arrays may carry leading batch axes.
    """

    t_ff: np.ndarray
    r_fb: np.ndarray
    r_bf: np.ndarray
    t_bb: np.ndarray
    z_a: float
    z_b: float

    @classmethod
    def identity(cls, n: int, z: float, batch=()) -> "SegmentScattering":
        eye = np.broadcast_to(np.eye(n, dtype=complex), tuple(batch) + (n, n)).copy()
        zero = np.zeros_like(eye)
        return cls(eye, zero, zero.copy(), eye.copy(), z, z)

    def apply(self, f_in, b_in):
        """(F out at z_b, B out at z_a) for given inputs."""
        return self.t_ff @ f_in + self.r_fb @ b_in, self.r_bf @ f_in + self.t_bb @ b_in


# ----------------------------------------------------------------------------
# channel ladders

def channel_components(grid: ChannelGrid, model: PotentialModel) -> list[np.ndarray]:
    """Groups of grid indices that the potential couples, ordered by k_t."""
    offsets = [r for r, _ in model.band_offsets(grid)]
    n = grid.n
    if not offsets:
        return [np.array([i]) for i in range(n)]
    pos = {int(l): i for i, l in enumerate(grid.lattice)}
    rows, cols = [], []
    for i, l in enumerate(grid.lattice):
        for r in offsets:
            j = pos.get(int(l) + r)
            if j is not None:
                rows.append(i)
                cols.append(j)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    comps = {}
    for i, lab in enumerate(labels):
        comps.setdefault(lab, []).append(i)
    return [np.array(sorted(c)) for c in sorted(comps.values(), key=lambda c: c[0])]


def component_batches(grid: ChannelGrid, model: PotentialModel) -> list[np.ndarray]:
    """Ladders grouped by length into (batch, length) index arrays."""
    by_len = {}
    for c in channel_components(grid, model):
        by_len.setdefault(len(c), []).append(c)
    return [np.array(v) for _, v in sorted(by_len.items())]


def _coupling_batch(model: PotentialModel, grid: ChannelGrid, z: float, idx: np.ndarray) -> np.ndarray:
    b, n = idx.shape
    v = np.zeros((b, n, n), dtype=complex)
    v[:, np.arange(n), np.arange(n)] = float(model.static(z))
    offsets = model.band_offsets(grid)
    if offsets:
        lat = grid.lattice[idx]
        diff = lat[:, :, None] - lat[:, None, :]
        for r, h in offsets:
            a = float(h.profile(z))
            if a == 0.0:
                continue
            c = a * np.exp(-1j * h.phase)
            v += np.where(diff == r, c, 0.0) + np.where(diff == -r, np.conj(c), 0.0)
    return v


def generator(grid: ChannelGrid, model: PotentialModel, z: float, idx: np.ndarray) -> np.ndarray:
    """Batched real-form generator A with dY/dz = A Y, shape (b, 2n, 2n)."""
    h, m = grid.units.hbar, grid.units.mass
    b, n = idx.shape
    a = np.zeros((b, 2 * n, 2 * n), dtype=complex)
    ar = np.arange(n)
    a[:, ar, n + ar] = -2.0 * m / h**2
    low = -_coupling_batch(model, grid, z, idx)
    low[:, ar, ar] += (h**2 / (2 * m)) * grid.disc[idx]
    a[:, n:, :n] = low
    return a


def rhs(grid: ChannelGrid, model: PotentialModel, z: float, state: PlaneState) -> PlaneState:
    if len(state.values) != 2 * grid.n:
        raise GridMismatch(f"state has {len(state.values) // 2} channels, grid has {grid.n}")
    a = generator(grid, model, z, np.arange(grid.n)[None, :])[0]
    return PlaneState(z, a @ state.values)


# ----------------------------------------------------------------------------
# fixed-step RK4

def _rk4_step_matrix(a: np.ndarray, h: float) -> np.ndarray:
    eye = np.eye(a.shape[-1])
    ha = h * a
    ha2 = ha @ ha
    return eye + ha + ha2 / 2 + ha2 @ ha / 6 + ha2 @ ha2 / 24


def _nudged(z, za, zb):
    d = 1e-12 * (zb - za)
    return min(max(z, za + d), zb - d)


def rk4_transfer(grid, model, idx, za, zb, n_steps, constant=None) -> np.ndarray:
    """Accumulated RK4 map over [za, zb] for a batch of ladders."""
    if constant is None:
        constant = model.is_constant_on(za, zb)
    h = (zb - za) / n_steps
    if constant:
        a = generator(grid, model, 0.5 * (za + zb), idx)
        return np.linalg.matrix_power(_rk4_step_matrix(a, h), n_steps)
    gens = {}

    def gen(z):
        if z not in gens:
            gens[z] = generator(grid, model, _nudged(z, za, zb), idx)
        return gens[z]

    u = np.broadcast_to(np.eye(2 * idx.shape[1], dtype=complex), (idx.shape[0],) + (2 * idx.shape[1],) * 2).copy()
    for i in range(n_steps):
        z0 = za + i * h
        a0, am, a1 = gen(z0), gen(z0 + 0.5 * h), gen(z0 + h)
        k1 = a0 @ u
        k2 = am @ (u + 0.5 * h * k1)
        k3 = am @ (u + 0.5 * h * k2)
        k4 = a1 @ (u + h * k3)
        u = u + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        gens.pop(z0, None)
    return u


def _block_metric_batch(n):
    eye = np.eye(n)
    z = np.zeros((n, n))
    return np.block([[z, 1j * eye], [-1j * eye, z]])


def batch_pseudo_unitarity_defect(u: np.ndarray) -> float:
    mm = _block_metric_batch(u.shape[-1] // 2)
    uh = np.conj(np.swapaxes(u, -1, -2))
    return float(np.max(np.abs(mm @ uh @ mm @ u - np.eye(u.shape[-1]))))


def local_rate(grid: ChannelGrid, model: PotentialModel) -> tuple[float, float]:
    """(max oscillation wavenumber, max decay constant) anywhere in the slab."""
    h, m = grid.units.hbar, grid.units.mass
    vmax = 2 * m * model.max_potential() / h**2
    d = grid.disc
    k_osc = float(np.sqrt(max(0.0, d.max() + vmax)))
    kappa = float(np.sqrt(max(0.0, -(d.min() - vmax))))
    return k_osc, kappa


def converged_transfer(grid, model, idx, za, zb, tol=DEFAULT_TOL, max_steps=MAX_STEPS):
    """RK4 with step halving until the defect and Richardson estimate pass.

    Returns ``(U, n_steps, defect, richardson)``.  Pieces where V does not
    depend on z have a constant generator and are exponentiated exactly
    (reported as one step with a zero Richardson estimate).
    """
    if model.is_constant_on(za, zb):
        u = expm(generator(grid, model, 0.5 * (za + zb), idx) * (zb - za))
        return u, 1, batch_pseudo_unitarity_defect(u), 0.0
    k_osc, kappa = local_rate(grid, model)
    rate = max(k_osc, kappa, 1.0)
    n = max(8, int(np.ceil(rate * (zb - za) / 0.25)))
    u = rk4_transfer(grid, model, idx, za, zb, n, False)
    while True:
        if 2 * n > max_steps:
            raise NoConvergence(f"RK4 did not reach tol={tol} within {max_steps} steps on [{za}, {zb}]")
        u2 = rk4_transfer(grid, model, idx, za, zb, 2 * n, False)
        rich = float(np.max(np.abs(u2 - u))) / 15.0
        defect = batch_pseudo_unitarity_defect(u2)
        n *= 2
        if rich <= tol and defect <= tol:
            return u2, n, defect, rich
        u = u2


def _pieces(model: PotentialModel, za: float, zb: float) -> list[tuple[float, float]]:
    pts = sorted({za, zb} | {b for b in model.breakpoints() if za < b < zb})
    return list(zip(pts[:-1], pts[1:]))


def piecewise_transfer(grid, model, idx, za, zb, tol=DEFAULT_TOL):
    """Converged transfer over [za, zb], split at profile breakpoints.

    RK4 drops to first order across a jump in V, so each smooth piece is
    integrated on its own and the maps are multiplied.
    """
    u, steps, defect, rich = None, 0, 0.0, 0.0
    for a, b in _pieces(model, za, zb):
        v, s, d, r = converged_transfer(grid, model, idx, a, b, tol)
        u = v if u is None else v @ u
        steps, defect, rich = steps + s, max(defect, d), max(rich, r)
    return u, steps, defect, rich


def _assemble(batches, blocks, n_total):
    """Scatter per-ladder (b, k, k) arrays into a dense (N, N) matrix."""
    out = np.zeros((n_total, n_total), dtype=complex)
    for idx, blk in zip(batches, blocks):
        out[idx[:, :, None], idx[:, None, :]] = blk
    return out


def transfer_matrix(grid: ChannelGrid, model: PotentialModel, z_a: float, z_b: float,
                    tol: float = DEFAULT_TOL, kappa_cap: float = DEFAULT_KAPPA_CAP) -> TransferMatrix:
    if not z_a < z_b:
        raise ValueError("transfer_matrix needs z_a < z_b")
    _, kappa = local_rate(grid, model)
    if kappa * (z_b - z_a) > kappa_cap:
        raise SegmentTooLong(f"kappa*dz = {kappa * (z_b - z_a):.3g} exceeds the cap {kappa_cap}")
    n = grid.n
    full = np.zeros((2 * n, 2 * n), dtype=complex)
    steps, defect, rich = 0, 0.0, 0.0
    for idx in component_batches(grid, model):
        u, s, d, r = piecewise_transfer(grid, model, idx, z_a, z_b, tol)
        pos = np.concatenate([idx, idx + n], axis=1)
        full[pos[:, :, None], pos[:, None, :]] = u
        steps, defect, rich = max(steps, s), max(defect, d), max(rich, r)
    return TransferMatrix(full, z_a, z_b, steps, defect, rich)


def propagate(grid: ChannelGrid, model: PotentialModel, z_a: float, z_b: float, state: PlaneState,
              tol: float = DEFAULT_TOL, n_steps: int | None = None) -> PlaneState:
    """Carry a plane state from z_a to z_b.

    With ``n_steps`` given, a single fixed-step pass is made (used for
    convergence studies); otherwise steps are halved until converged.
    """
    if not z_a < z_b:
        raise ValueError("propagate needs z_a < z_b")
    if len(state.values) != 2 * grid.n:
        raise GridMismatch(f"state has {len(state.values) // 2} channels, grid has {grid.n}")
    n = grid.n
    out = np.zeros(2 * n, dtype=complex)
    for idx in component_batches(grid, model):
        if n_steps is None:
            u = piecewise_transfer(grid, model, idx, z_a, z_b, tol)[0]
        else:
            u = rk4_transfer(grid, model, idx, z_a, z_b, n_steps)
        pos = np.concatenate([idx, idx + n], axis=1)
        out[pos] = np.einsum("bij,bj->bi", u, state.values[pos])
    return PlaneState(z_b, out)


# ----------------------------------------------------------------------------
# mode-basis scattering

def mode_matrices(grid: ChannelGrid, idx: np.ndarray, z: float, inverse: bool = False) -> np.ndarray:
    """Batched P(z) (component = P @ [f_F; f_B]) or its inverse."""
    psi_f, psi_b, p_f, p_b = mode_arrays(grid, z, idx)
    b, n = idx.shape
    if inverse:
        det = psi_f * p_b - psi_b * p_f
        psi_f, psi_b, p_f, p_b = p_b / det, -psi_b / det, -p_f / det, psi_f / det
    out = np.zeros((b, 2 * n, 2 * n), dtype=complex)
    ar = np.arange(n)
    out[:, ar, ar] = psi_f
    out[:, ar, n + ar] = psi_b
    out[:, n + ar, ar] = p_f
    out[:, n + ar, n + ar] = p_b
    return out


def _check_cond(mats: np.ndarray):
    cond = np.linalg.cond(mats)
    worst = float(np.max(cond))
    if not np.isfinite(worst) or worst > COND_LIMIT:
        return worst
    return None


def scattering_from_mode_transfer(q: np.ndarray, z_a: float, z_b: float) -> SegmentScattering:
    """Solve b = Q a (mode amplitudes at z_b from those at z_a) for outputs."""
    n = q.shape[-1] // 2
    q_ff, q_fb = q[..., :n, :n], q[..., :n, n:]
    q_bf, q_bb = q[..., n:, :n], q[..., n:, n:]
    worst = _check_cond(q_bb)
    if worst is not None:
        raise SingularConversion(f"backward block of the mode transfer is singular (cond={worst:.3g})")
    eye = np.broadcast_to(np.eye(n), q_bb.shape)
    t_bb = np.linalg.solve(q_bb, eye)
    r_bf = -t_bb @ q_bf
    return SegmentScattering(
        t_ff=q_ff + q_fb @ r_bf,
        r_fb=q_fb @ t_bb,
        r_bf=r_bf,
        t_bb=t_bb,
        z_a=z_a,
        z_b=z_b,
    )


def segment_to_scattering(u: TransferMatrix, grid: ChannelGrid) -> SegmentScattering:
    n = grid.n
    idx = np.arange(n)[None, :]
    q = mode_matrices(grid, idx, u.z_b, inverse=True)[0] @ u.matrix @ mode_matrices(grid, idx, u.z_a)[0]
    return scattering_from_mode_transfer(q, u.z_a, u.z_b)


def star_compose(s1: SegmentScattering, s2: SegmentScattering) -> SegmentScattering:
    """Redheffer star product of adjacent segments (s1 left of s2)."""
    if abs(s1.z_b - s2.z_a) > 1e-12 * max(1.0, abs(s1.z_b)):
        raise ValueError(f"segments are not adjacent: {s1.z_b} != {s2.z_a}")
    n = s1.t_ff.shape[-1]
    eye = np.eye(n)
    x = eye - s1.r_fb @ s2.r_bf
    y = eye - s2.r_bf @ s1.r_fb
    worst = _check_cond(x)
    if worst is not None:
        raise IllConditioned(f"star product inverse is ill-conditioned (cond={worst:.3g})", worst)
    xi_t = np.linalg.solve(x, s1.t_ff)
    xi_r = np.linalg.solve(x, s1.r_fb @ s2.t_bb)
    yi_r = np.linalg.solve(y, s2.r_bf @ s1.t_ff)
    yi_t = np.linalg.solve(y, s2.t_bb)
    return SegmentScattering(
        t_ff=s2.t_ff @ xi_t,
        r_fb=s2.r_fb + s2.t_ff @ xi_r,
        r_bf=s1.r_bf + s1.t_bb @ yi_r,
        t_bb=s1.t_bb @ yi_t,
        z_a=s1.z_a,
        z_b=s2.z_b,
    )


def slab_segments(grid: ChannelGrid, model: PotentialModel, z1: float, z2: float,
                  kappa_cap: float = DEFAULT_KAPPA_CAP, max_length: float | None = None) -> list[tuple[float, float]]:
    """Split [z1, z2] at profile breakpoints and so that kappa * length <= kappa_cap."""
    pts = sorted({z1, z2} | {b for b in model.breakpoints() if z1 < b < z2})
    _, kappa = local_rate(grid, model)
    limit = kappa_cap / kappa if kappa > 0 else np.inf
    if max_length is not None:
        limit = min(limit, max_length)
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(np.ceil((b - a) / limit - 1e-12)))
        edges = np.linspace(a, b, k + 1)
        segs.extend((float(edges[i]), float(edges[i + 1])) for i in range(k))
    return segs


@dataclass(eq=False)
class SlabSolution:
    """Segment scattering matrices of a slab, per ladder batch.

    ``segments[g][s]`` is the batched scattering of segment s for batch g.
    """

    grid: ChannelGrid
    model: PotentialModel
    z1: float
    z2: float
    tol: float
    batches: list
    edges: list
    segments: list
    max_defect: float = 0.0
    max_steps: int = 0
    _composite: list | None = field(default=None, repr=False)

    @classmethod
    def solve(cls, grid, model, z1, z2, tol=DEFAULT_TOL, kappa_cap=DEFAULT_KAPPA_CAP):
        if not z1 < z2:
            raise ValueError("slab needs z1 < z2")
        edges = slab_segments(grid, model, z1, z2, kappa_cap)
        batches = component_batches(grid, model)
        segments, worst, steps = [], 0.0, 0
        for idx in batches:
            per = []
            for za, zb in edges:
                u, s, d, _ = converged_transfer(grid, model, idx, za, zb, tol)
                q = mode_matrices(grid, idx, zb, inverse=True) @ u @ mode_matrices(grid, idx, za)
                per.append(scattering_from_mode_transfer(q, za, zb))
                worst, steps = max(worst, d), max(steps, s)
            segments.append(per)
        return cls(grid, model, z1, z2, tol, batches, edges, segments, worst, steps)

    def composite(self) -> list[SegmentScattering]:
        if self._composite is None:
            out = []
            for per in self.segments:
                acc = per[0]
                for s in per[1:]:
                    acc = star_compose(acc, s)
                out.append(acc)
            self._composite = out
        return self._composite

    def dense(self) -> SegmentScattering:
        """Full-grid plain scattering blocks over [z1, z2]."""
        n = self.grid.n
        blocks = {}
        for name in ("t_ff", "r_fb", "r_bf", "t_bb"):
            blocks[name] = _assemble(self.batches, [getattr(c, name) for c in self.composite()], n)
        return SegmentScattering(z_a=self.z1, z_b=self.z2, **blocks)

    def plane_amplitudes(self, f_in: np.ndarray, b_in: np.ndarray):
        """Mode amplitudes (F, B) at every segment edge, per batch.

        Returns a list over batches of arrays of shape (n_edges, b, 2, n).
        """
        out = []
        for idx, per in zip(self.batches, self.segments):
            fa, bb = f_in[idx], b_in[idx]
            k = len(per)
            prefix = [SegmentScattering.identity(idx.shape[1], self.z1, (idx.shape[0],))]
            for s in per:
                prefix.append(star_compose(prefix[-1], s))
            suffix = [None] * (k + 1)
            suffix[k] = SegmentScattering.identity(idx.shape[1], self.z2, (idx.shape[0],))
            for i in range(k - 1, -1, -1):
                suffix[i] = star_compose(per[i], suffix[i + 1])
            planes = []
            n = idx.shape[1]
            eye = np.eye(n)
            for i in range(k + 1):
                left, right = prefix[i], suffix[i]
                x = eye - left.r_fb @ right.r_bf
                rhs_ = np.einsum("bij,bj->bi", left.t_ff, fa) + np.einsum(
                    "bij,bj->bi", left.r_fb @ right.t_bb, bb)
                f = np.linalg.solve(x, rhs_[..., None])[..., 0]
                b = np.einsum("bij,bj->bi", right.r_bf, f) + np.einsum("bij,bj->bi", right.t_bb, bb)
                planes.append(np.stack([f, b], axis=1))
            out.append(np.array(planes))
        return out

    def sample_density(self, f_in: np.ndarray, b_in: np.ndarray, z_step: float):
        """Per-channel |psi_i(z)|^2 integrated over the slab with Simpson's rule.

        Returns an array of length N.
        """
        n_total = self.grid.n
        result = np.zeros(n_total)
        planes = self.plane_amplitudes(f_in, b_in)
        for idx, per_planes in zip(self.batches, planes):
            b, n = idx.shape
            acc = np.zeros((b, n))
            for s, (za, zb) in enumerate(self.edges):
                steps = max(2, int(np.ceil((zb - za) / z_step)))
                steps += steps % 2
                amps = per_planes[s]
                y = np.einsum("bij,bj->bi", mode_matrices(self.grid, idx, za),
                              np.concatenate([amps[:, 0], amps[:, 1]], axis=1))
                dens = _sample_psi2(self.grid, self.model, idx, za, zb, steps, y)
                h = (zb - za) / steps
                wts = np.ones(steps + 1)
                wts[1:-1:2] = 4
                wts[2:-1:2] = 2
                acc += (h / 3) * np.einsum("s,sbn->bn", wts, dens)
            result[idx] = acc
        return result


def _sample_psi2(grid, model, idx, za, zb, steps, y0):
    """|psi|^2 at the RK4 nodes of a segment, shape (steps + 1, b, n)."""
    n = idx.shape[1]
    h = (zb - za) / steps
    out = [np.abs(y0[:, :n]) ** 2]
    y = y0
    if model.is_constant_on(za, zb):
        p = _rk4_step_matrix(generator(grid, model, 0.5 * (za + zb), idx), h)
        for _ in range(steps):
            y = np.einsum("bij,bj->bi", p, y)
            out.append(np.abs(y[:, :n]) ** 2)
        return np.array(out)

    def ap(z, v):
        return np.einsum("bij,bj->bi", generator(grid, model, _nudged(z, za, zb), idx), v)

    for i in range(steps):
        z0 = za + i * h
        k1 = ap(z0, y)
        k2 = ap(z0 + 0.5 * h, y + 0.5 * h * k1)
        k3 = ap(z0 + 0.5 * h, y + 0.5 * h * k2)
        k4 = ap(z0 + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(np.abs(y[:, :n]) ** 2)
    return np.array(out)
