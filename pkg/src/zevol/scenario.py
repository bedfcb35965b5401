"""JSON scenario files: parsing, validation and overrides.

A scenario is a JSON object::

    {
      "name": "square_barrier",
      "units": {"hbar": 1.0, "mass": 1.0},
      "grid": {"k_t_min": 0.2, "k_t_max": 0.8, "n_points": 241, "k_x": 0.0, "k_y": 0.0},
      "potential": {
        "static": {"kind": "square", "amplitude": 1.0, "support": [0.0, 1.0]},
        "harmonics": [{"n": 1, "phase": 0.0, "profile": {...}}],
        "omega": 0.02
      },
      "packets": [{"center": 0.5, "width": 0.05, "t0": 0.0, "side": "F"}],
      "slab": {"z1": -1.0, "z2": 2.0},
      "z_step": 0.01,
      "mode_z": [-1.0, -0.5, 0.0, 0.5, 1.0],
      "tolerances": {"integrator": 1e-10, ...}
    }

Tabulated profiles give either ``"table": [[z, V], ...]`` or ``"file"``, a
two-column text file resolved relative to the scenario file.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kspace import ChannelGrid, Units, build_grid
from .observables import PacketSpec
from .potential import Harmonic, PotentialModel, Profile, load_profile_table, zero_profile

DEFAULT_TOLERANCES = {
    "integrator": 1e-10,
    "threshold_window": 1e-3,
    "route_match": 1e-9,
    "dwell_gap": 1e-4,
    "unitarity": 1e-8,
    "presence": 1e-8,
    "sum_rule": 1e-8,
    "pseudo_unitarity": 1e-8,
    "threshold_bound": 1e-6,
    "kappa_cap": 5.0,
}

DEFAULT_MODE_Z = (-1.0, -0.5, 0.0, 0.5, 1.0)


@dataclass
class Scenario:
    name: str
    units: Units
    grid_spec: dict
    model: PotentialModel
    packets: list[PacketSpec]
    z1: float
    z2: float
    z_step: float
    mode_z: tuple[float, ...]
    tolerances: dict
    source: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def grid(self) -> ChannelGrid:
        g = self.grid_spec
        return build_grid(g["k_t_min"], g["k_t_max"], g["n_points"], g["k_x"], g["k_y"],
                          self.units, self.tolerances["threshold_window"])


def _where(src, path):
    return f"{src}: field '{path}'" if src else f"field '{path}'"


def _get(d, key, path, src, kind=float, default=...):
    if not isinstance(d, dict):
        raise ConfigError(f"{_where(src, path)} must be an object")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{_where(src, f'{path}.{key}' if path else key)} is missing")
        return default
    v = d[key]
    full = f"{path}.{key}" if path else key
    try:
        if kind is int:
            if isinstance(v, bool) or int(v) != v:
                raise ValueError
            return int(v)
        if kind is float:
            if isinstance(v, bool):
                raise ValueError
            return float(v)
        if kind is str:
            if not isinstance(v, str):
                raise ValueError
            return v
        if kind in (list, dict) and not isinstance(v, kind):
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{_where(src, full)} has invalid value {v!r} (expected {kind.__name__})") from None
    return v


def _profile(d, path, src, base: Path | None) -> Profile:
    kind = _get(d, "kind", path, src, str)
    sup = _get(d, "support", path, src, list)
    if not (isinstance(sup, list) and len(sup) == 2):
        raise ConfigError(f"{_where(src, path + '.support')} must be a two-element list")
    try:
        support = (float(sup[0]), float(sup[1]))
    except (TypeError, ValueError):
        raise ConfigError(f"{_where(src, path + '.support')} must hold numbers") from None
    if kind == "tabulated":
        if "file" in d:
            fp = Path(_get(d, "file", path, src, str))
            if base is not None and not fp.is_absolute():
                fp = base / fp
            try:
                return load_profile_table(fp, support)
            except ConfigError as exc:
                raise ConfigError(f"{_where(src, path + '.file')}: {exc}") from None
        args = dict(table=np.asarray(_get(d, "table", path, src, list), dtype=object))
    else:
        args = dict(amplitude=_get(d, "amplitude", path, src),
                    center=_get(d, "center", path, src, default=0.5 * (support[0] + support[1])),
                    width=_get(d, "width", path, src, default=1.0))
    try:
        if "table" in args:
            args["table"] = args["table"].astype(float)
        return Profile(kind, support=support, **args)
    except (ConfigError, ValueError, TypeError) as exc:
        raise ConfigError(f"{_where(src, path)}: {exc}") from None


def parse_scenario(data: dict, source: str = "", base: Path | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: scenario must be a JSON object")
    src = source
    name = _get(data, "name", "", src, str, default=Path(source).stem if source else "scenario")

    u = data.get("units", {})
    try:
        units = Units(_get(u, "hbar", "units", src, default=1.0), _get(u, "mass", "units", src, default=1.0))
    except ValueError as exc:
        raise ConfigError(f"{_where(src, 'units')}: {exc}") from None

    g = _get(data, "grid", "", src, dict)
    grid_spec = {
        "k_t_min": _get(g, "k_t_min", "grid", src),
        "k_t_max": _get(g, "k_t_max", "grid", src),
        "n_points": _get(g, "n_points", "grid", src, int),
        "k_x": _get(g, "k_x", "grid", src, default=0.0),
        "k_y": _get(g, "k_y", "grid", src, default=0.0),
    }
    if grid_spec["n_points"] < 2 or not grid_spec["k_t_min"] < grid_spec["k_t_max"]:
        raise ConfigError(f"{_where(src, 'grid')} needs n_points >= 2 and k_t_min < k_t_max")

    p = data.get("potential", {})
    static = _profile(p["static"], "potential.static", src, base) if "static" in p else zero_profile()
    harmonics = []
    for i, h in enumerate(_get(p, "harmonics", "potential", src, list, default=[])):
        hp = f"potential.harmonics[{i}]"
        try:
            harmonics.append(Harmonic(_get(h, "n", hp, src, int),
                                      _profile(_get(h, "profile", hp, src, dict), hp + ".profile", src, base),
                                      _get(h, "phase", hp, src, default=0.0)))
        except ConfigError as exc:
            if hp in str(exc):
                raise
            raise ConfigError(f"{_where(src, hp)}: {exc}") from None
    try:
        model = PotentialModel(static, tuple(harmonics), _get(p, "omega", "potential", src, default=0.0))
    except ConfigError as exc:
        raise ConfigError(f"{_where(src, 'potential.omega')}: {exc}") from None

    packets = []
    for i, pk in enumerate(_get(data, "packets", "", src, list, default=[])):
        pp = f"packets[{i}]"
        try:
            packets.append(PacketSpec(_get(pk, "center", pp, src), _get(pk, "width", pp, src),
                                      _get(pk, "t0", pp, src, default=0.0),
                                      _get(pk, "side", pp, src, str, default="F"),
                                      None if pk.get("ramp") is None else _get(pk, "ramp", pp, src),
                                      _get(pk, "support_sigmas", pp, src, default=6.0)))
        except ValueError as exc:
            raise ConfigError(f"{_where(src, pp)}: {exc}") from None

    slab = _get(data, "slab", "", src, dict)
    z1, z2 = _get(slab, "z1", "slab", src), _get(slab, "z2", "slab", src)
    if not z1 < z2:
        raise ConfigError(f"{_where(src, 'slab')} needs z1 < z2")
    lo, hi = model.support
    if model.max_potential() > 0 and (lo < z1 or hi > z2):
        raise ConfigError(f"{_where(src, 'slab')}: potential support [{lo}, {hi}] is not inside [{z1}, {z2}]")

    tols = dict(DEFAULT_TOLERANCES)
    for k, v in _get(data, "tolerances", "", src, dict, default={}).items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"{_where(src, 'tolerances.' + k)} is not a known tolerance "
                              f"({', '.join(sorted(DEFAULT_TOLERANCES))})")
        tols[k] = _get(data["tolerances"], k, "tolerances", src)
    for k, v in tols.items():
        if not v > 0:
            raise ConfigError(f"{_where(src, 'tolerances.' + k)} must be positive")

    z_step = _get(data, "z_step", "", src, default=0.01)
    if not z_step > 0:
        raise ConfigError(f"{_where(src, 'z_step')} must be positive")
    mz = _get(data, "mode_z", "", src, list, default=list(DEFAULT_MODE_Z))
    try:
        mode_z = tuple(float(z) for z in mz)
    except (TypeError, ValueError):
        raise ConfigError(f"{_where(src, 'mode_z')} must be a list of numbers") from None

    return Scenario(name, units, grid_spec, model, packets, z1, z2, z_step, mode_z, tols, source, data)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_scenario(data, str(path), path.parent)


def apply_tolerance_overrides(data: dict, overrides: list[str]) -> dict:
    data = copy.deepcopy(data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--tol-override expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            val = float(v)
        except ValueError:
            raise ConfigError(f"--tol-override {k}: {v!r} is not a number") from None
        data.setdefault("tolerances", {})[k.strip()] = val
    return data


def parse_sweep(text: str) -> tuple[str, list]:
    """'grid.n_points:181,361' -> ('grid.n_points', [181, 361])."""
    if ":" not in text:
        raise ConfigError(f"--sweep expects param:v1,v2,..., got {text!r}")
    key, vals = text.split(":", 1)
    out = []
    for v in vals.split(","):
        try:
            out.append(json.loads(v))
        except json.JSONDecodeError:
            raise ConfigError(f"--sweep value {v!r} is not a number") from None
    if not key or not out:
        raise ConfigError(f"--sweep expects param:v1,v2,..., got {text!r}")
    return key, out


def set_path(data: dict, key: str, value) -> dict:
    """Set a dotted path; ``packet.X`` sets X on every packet."""
    data = copy.deepcopy(data)
    parts = key.split(".")
    if parts[0] == "packet":
        if len(parts) != 2:
            raise ConfigError(f"sweep path {key!r} must look like packet.<field>")
        for pk in data.get("packets", []):
            pk[parts[1]] = value
        return data
    node = data
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"sweep path {key!r}: '{p}' is not an object in the scenario")
        node = node[p]
    node[parts[-1]] = value
    return data
