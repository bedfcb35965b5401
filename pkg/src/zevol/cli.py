"""Command-line front end: ``zevol {modes,scatter,times,validate}``.

Every command takes one or more ``--scenario`` JSON files and writes its
results under ``--out``.  Exit codes: 0 success, 2 configuration error,
3 numerical failure (including a failed validation), 4 precondition
violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import observables as obs
from .errors import NumericalError, PreconditionError, RouteMismatch, ZevolError
from .kspace import ChannelKind, classify_channel, threshold_kt
from .modes import mode, mode_ghost_pair, mode_time_kernels, mode_time_kernels_fd, pairing_table
from .propagator import SlabSolution
from .scenario import Scenario, apply_tolerance_overrides, load_scenario, parse_scenario, parse_sweep, set_path
from .smatrix import (extract_smatrix, off_diagonal_mass, quadratic_identity_defects, save_smatrix,
                      unitarity_defect_left, unitarity_defect_right)

SUPPORT_FLOOR = 1e-6


@dataclass
class Case:
    label: str
    scenario: Scenario
    sweep: tuple[str, object] | None = None


def _cases(paths, overrides, sweep) -> list[Case]:
    out = []
    for p in paths:
        base = load_scenario(p)
        raw = apply_tolerance_overrides(base.raw, overrides)
        if sweep is None:
            out.append(Case(base.name, parse_scenario(raw, str(p), Path(p).parent)))
            continue
        key, values = sweep
        for v in values:
            sc = parse_scenario(set_path(raw, key, v), str(p), Path(p).parent)
            out.append(Case(f"{base.name}__{key}={v}", sc, (key, v)))
    return out


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _cplx(a):
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


# ----------------------------------------------------------------------------
# modes

def _mode_report(sc: Scenario) -> dict:
    grid = sc.grid()
    kx, ky = grid.transverse
    u = sc.units
    k_thr = threshold_kt(kx, ky, u)
    if sc.packets:
        k_open = sc.packets[0].center
    elif len(grid.open_index):
        k_open = float(grid.k_t[grid.open_index[len(grid.open_index) // 2]])
    else:
        k_open = k_thr + 1.0
    open_ch = classify_channel(k_open, kx, ky, u)
    if open_ch.kind is not ChannelKind.OPEN:
        open_ch = classify_channel(k_thr + 1.0, kx, ky, u)
    closed_ch = classify_channel(2 * k_thr - open_ch.k_t, kx, ky, u)
    ghost_ch = classify_channel(k_thr, kx, ky, u, eps_thr=sc.tolerances["threshold_window"])
    expected = {"open": np.diag([1.0, -1.0]), "closed": np.array([[0.0, 1.0], [1.0, 0.0]]),
                "ghost": np.array([[0.0, 1.0], [1.0, 0.0]])}
    rep = {"channels": {"open": open_ch.k_t, "closed": closed_ch.k_t, "ghost": ghost_ch.k_t}, "z": list(sc.mode_z)}
    worst = {"open": 0.0, "closed": 0.0, "ghost": 0.0, "kernel_fd": 0.0}
    tables = {"open": [], "closed": [], "ghost": []}
    for z in sc.mode_z:
        for name, ch in (("open", open_ch), ("closed", closed_ch)):
            t = pairing_table([mode("F", ch, z, u), mode("B", ch, z, u)], u)
            tables[name].append(_cplx(t))
            worst[name] = max(worst[name], float(np.max(np.abs(t - expected[name]))))
            k = mode_time_kernels(ch, z, u)
            fd = mode_time_kernels_fd(ch, z, u)
            err = np.abs(k - fd) / np.maximum(np.abs(k), 1e-3)
            worst["kernel_fd"] = max(worst["kernel_fd"], float(np.max(err)))
        t = pairing_table(mode_ghost_pair(ghost_ch, z, units=u), u)
        tables["ghost"].append(_cplx(t))
        worst["ghost"] = max(worst["ghost"], float(np.max(np.abs(t - expected["ghost"]))))
    rep["tables"] = tables
    rep["max_defect"] = worst
    return rep


def cmd_modes(cases: list[Case], out: Path) -> int:
    report = {}
    for c in cases:
        report[c.label] = _mode_report(c.scenario)
        d = report[c.label]["max_defect"]
        print(f"{c.label}: open {d['open']:.2e}  closed {d['closed']:.2e}  ghost {d['ghost']:.2e}  "
              f"kernel-fd {d['kernel_fd']:.2e}")
    _write(out / "modes.json", _dump(report))
    return 0


# ----------------------------------------------------------------------------
# scatter

def _solve(sc: Scenario):
    grid = sc.grid()
    sol = SlabSolution.solve(grid, sc.model, sc.z1, sc.z2, sc.tolerances["integrator"], sc.tolerances["kappa_cap"])
    s = extract_smatrix(grid, sc.model, sc.z1, sc.z2, sc.tolerances["integrator"], solution=sol)
    return grid, sol, s


def _support_columns(sc: Scenario, grid):
    """Open-column indices where some packet has non-negligible amplitude."""
    if not sc.packets:
        return None
    o = grid.open_index
    mask = np.zeros(len(o), dtype=bool)
    for spec in sc.packets:
        a = obs.build_packet(spec, grid)
        f = np.abs(a.f_F + a.f_B)[o]
        mask |= f > SUPPORT_FLOOR * f.max()
    return np.flatnonzero(mask)


def _scatter_report(sc: Scenario, grid, sol, s) -> dict:
    cols = _support_columns(sc, grid)
    rep = {
        "grid": grid.metadata(),
        "slab": {"z1": sc.z1, "z2": sc.z2},
        "static": sc.model.is_static,
        "max_transfer_defect": sol.max_defect,
        "max_rk4_steps": sol.max_steps,
        "defect_left": unitarity_defect_left(s),
        "defect_right": unitarity_defect_right(s),
        "quadratic_residuals": list(quadratic_identity_defects(s)),
    }
    if cols is not None:
        rep["support_columns"] = [int(i) for i in cols]
        rep["defect_left_support"] = unitarity_defect_left(s, cols)
        rep["defect_right_support"] = unitarity_defect_right(s, cols)
        rep["quadratic_residuals_support"] = list(quadratic_identity_defects(s, cols))
    if sc.model.is_static:
        o = grid.open_index
        rep["off_diagonal_mass"] = off_diagonal_mass(s)
        rep["transmission_probability"] = (np.abs(s.plain("t_ff")[o, np.arange(len(o))]) ** 2).tolist()
    return rep


def cmd_scatter(cases: list[Case], out: Path) -> int:
    report = {}
    for c in cases:
        grid, sol, s = _solve(c.scenario)
        save_smatrix(s, out / c.label / "smatrix.json")
        rep = _scatter_report(c.scenario, grid, sol, s)
        report[c.label] = rep
        print(f"{c.label}: defect_left {rep['defect_left']:.2e}  defect_right {rep['defect_right']:.2e}  "
              f"residuals {max(rep['quadratic_residuals']):.2e}")
    _write(out / "scatter_report.json", _dump(report))
    return 0


# ----------------------------------------------------------------------------
# times

def _time_rows(c: Case):
    sc = c.scenario
    grid, sol, s = _solve(sc)
    rows = []
    for i, spec in enumerate(sc.packets):
        inp = obs.build_packet(spec, grid)
        st = obs.time_statistics(s, inp, sc.model, sc.z_step, sc.tolerances["route_match"], sol,
                                 sc.tolerances["integrator"], sc.tolerances["threshold_bound"])
        row = obs.statistics_row(st)
        row.update(scenario=c.label, packet=i,
                   sweep_param="" if c.sweep is None else c.sweep[0],
                   sweep_value="" if c.sweep is None else c.sweep[1])
        rows.append(row)
    return rows


EXTRA_COLUMNS = ("scenario", "packet", "sweep_param", "sweep_value")


def cmd_times(cases: list[Case], out: Path) -> int:
    rows = []
    for c in cases:
        if not c.scenario.packets:
            raise PreconditionError(f"scenario {c.label} defines no packets")
        for r in _time_rows(c):
            rows.append(r)
            print(f"{c.label}[{r['packet']}]: dwell {r['tau_dwell_surface']:.10g} (gap {r['dwell_gap']:.2e})  "
                  f"delay_T {r['delay_transmit']}  delay_R {r['delay_reflect']}")
    _write(out / "times.csv", obs.statistics_csv(rows, EXTRA_COLUMNS))
    _write(out / "times.json", obs.statistics_json(rows))
    return 0


# ----------------------------------------------------------------------------
# validate

def _check(name, value, limit, error=None):
    ok = value is not None and bool(value <= limit)
    return {"check": name, "value": value, "limit": limit, "passed": ok,
            "error": None if ok else (error or "ToleranceExceeded")}


def _validate_case(c: Case) -> list[dict]:
    sc = c.scenario
    tol = sc.tolerances
    checks = []
    try:
        grid, sol, s = _solve(sc)
    except (NumericalError, PreconditionError) as exc:
        return [{"check": "solve", "passed": False, "error": type(exc).__name__, "detail": str(exc)}]
    cols = _support_columns(sc, grid)
    checks.append(_check("pseudo_unitarity", sol.max_defect, tol["pseudo_unitarity"]))
    checks.append(_check("unitarity_left", unitarity_defect_left(s, cols), tol["unitarity"]))
    checks.append(_check("quadratic_identities", max(quadratic_identity_defects(s, cols)), tol["unitarity"]))
    if sc.model.is_static:
        checks.append(_check("unitarity_right", unitarity_defect_right(s, cols), tol["unitarity"]))
    for i, spec in enumerate(sc.packets):
        tag = f"packet[{i}]."
        try:
            inp = obs.build_packet(spec, grid)
            p1, p2 = obs.output_amplitudes(s, inp)
            checks.append(_check(tag + "presence_conservation",
                                 abs(obs.presence_norm(p1) - obs.presence_norm(p2)), tol["presence"]))
            r, t = obs.out_currents(s, inp)
            rule = t - r if spec.side == "F" else r - t
            checks.append(_check(tag + "sum_rule", abs(rule - 1.0), tol["sum_rule"]))
            try:
                surf = obs.dwell_time_surface(s, inp, tol["route_match"], tol["threshold_bound"])
                vol = obs.dwell_time_volume(grid, sc.model, inp, sc.z_step, sc.z1, sc.z2, solution=sol)
                gap = abs(surf - vol) / max(abs(vol), 1e-300)
                checks.append(_check(tag + "dual_route_dwell", gap, tol["dwell_gap"], "RouteMismatch"))
            except RouteMismatch as exc:
                checks.append({"check": tag + "dual_route_dwell", "passed": False, "error": "RouteMismatch",
                               "detail": str(exc)})
        except ZevolError as exc:
            checks.append({"check": tag + "packet", "passed": False, "error": type(exc).__name__,
                           "detail": str(exc)})
    return checks


def cmd_validate(cases: list[Case], out: Path) -> int:
    report = {}
    all_ok = True
    for c in cases:
        checks = _validate_case(c)
        ok = all(ch["passed"] for ch in checks)
        all_ok &= ok
        report[c.label] = {"passed": ok, "checks": checks}
        for ch in checks:
            status = "PASS" if ch["passed"] else f"FAIL ({ch['error']})"
            val = ch.get("value")
            val = "" if val is None else f" {val:.3e} <= {ch['limit']:.1e}"
            print(f"{c.label}: {ch['check']}{val} {status}")
    _write(out / "validation.json", _dump({"passed": all_ok, "scenarios": report}))
    return 0 if all_ok else NumericalError.exit_code


# ----------------------------------------------------------------------------

COMMANDS = {"modes": cmd_modes, "scatter": cmd_scatter, "times": cmd_times, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zevol", description="Scattering, dwell and delay times by z-evolution.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", action="append", required=True, metavar="PATH",
                       help="scenario JSON file (repeatable)")
        p.add_argument("--out", default="out", metavar="DIR", help="output directory (default: out)")
        p.add_argument("--sweep", metavar="PARAM:LIST",
                       help="run once per value, e.g. packet.center:0.4,0.5 or grid.n_points:181,361")
        p.add_argument("--tol-override", action="append", default=[], metavar="NAME=VALUE",
                       help="override one entry of the scenario tolerances (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sweep = parse_sweep(args.sweep) if args.sweep else None
        cases = _cases(args.scenario, args.tol_override, sweep)
        return COMMANDS[args.command](cases, Path(args.out))
    except ZevolError as exc:
        print(f"zevol: error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
