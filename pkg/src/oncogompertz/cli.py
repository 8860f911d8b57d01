"""Command-line front end.

Every subcommand reads one JSON config (``--config``) with optional
``--set dotted.key=value`` overrides, writes CSV files plus a
``manifest.json`` into the output directory, and exits with 0 on success,
2 on a configuration error and 3 on a numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import enum
import json
import math
import sys
import time
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .continuation import (ContinuationError, classify_hopf, continue_equilibrium,
                           eradication_branch_stability, hopf_locus,
                           locate_generalized_hopf, track_cycles, write_cycles_csv,
                           write_points_csv)
from .integrator import (IntegrationError, IntegratorConfig, classify_trajectory, integrate,
                         write_rows)
from .model import (DimensionalParams, ModelDomainError, ModelParams, equilibria,
                    nondimensionalize)
from .protocol import (InjectionSchedule, SweepError, basin_slice, dosage_sweep,
                       kappa_sweep, run_protocol, write_basin_csv)
from .stability import (eradication_probe, scan_region, threshold_contour,
                        write_contour_csv, write_region_csv)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

TOP_KEYS = {"params", "dimensional_params", "initial", "integrator", "horizon", "output",
            "schedule", "region", "contour", "branch", "hopf_curve", "cycles", "protocol",
            "dosage", "basin", "probe", "n_jobs"}


class ConfigError(ValueError):
    pass


# config handling

def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {key}: {part} is not a mapping")
        node = nxt
    node[parts[-1]] = _parse_value(raw)


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        if "command" in cfg and isinstance(cfg.get("config"), dict):
            cfg = cfg["config"]  # a manifest from an earlier run
    for item in overrides:
        apply_override(cfg, item)
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    return sec


def resolve_params(cfg: dict) -> ModelParams:
    has_p, has_d = "params" in cfg, "dimensional_params" in cfg
    if has_p == has_d:
        raise ConfigError("exactly one of 'params' or 'dimensional_params' is required")
    try:
        if has_p:
            return ModelParams(**_section(cfg, "params"))
        d = dict(_section(cfg, "dimensional_params"))
        rescale = bool(d.pop("rescale_by_K", False))
        return nondimensionalize(DimensionalParams(**d), rescale_by_K=rescale)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc


def resolve_integrator(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(**_section(cfg, "integrator"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid integrator settings: {exc}") from exc


def resolve_initial(cfg: dict, p: ModelParams) -> tuple[float, float, float]:
    s = cfg.get("initial", [0.5 * p.K, 0.1 * p.K, 0.1 * p.K])
    if isinstance(s, dict):
        s = [s.get("U"), s.get("I"), s.get("V")]
    try:
        U, I, V = (float(x) for x in s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"initial must be [U, I, V]: {exc}") from exc
    if min(U, I, V) < 0 or not all(map(math.isfinite, (U, I, V))):
        raise ConfigError("initial populations must be finite and non-negative")
    return U, I, V


def _positive(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be a positive number, got {value!r}")
    return v


def resolve_horizon(cfg: dict, default: float = 3000.0) -> float:
    if "horizon" in cfg and cfg["horizon"] in (None, ""):
        raise ConfigError("horizon must not be empty")
    return _positive(cfg.get("horizon", default), "horizon")


def grid(value, name: str) -> list[float]:
    """A number, a list, or ``{"start", "stop", "num", "log"}``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, list) and value:
        return [float(x) for x in value]
    if isinstance(value, dict):
        try:
            a, b, n = float(value["start"]), float(value["stop"]), int(value["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: grid needs start, stop and num") from exc
        if n < 1:
            raise ConfigError(f"{name}: num must be at least 1")
        if value.get("log"):
            if a <= 0 or b <= 0:
                raise ConfigError(f"{name}: log grid needs positive bounds")
            return [float(x) for x in np.geomspace(a, b, n)]
        return [float(x) for x in np.linspace(a, b, n)]
    raise ConfigError(f"{name}: expected a number, list or grid object")


def _pair(value, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be [lo, hi]") from exc
    if not lo < hi:
        raise ConfigError(f"{name} must satisfy lo < hi")
    return lo, hi


def _jsonable(x):
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if is_dataclass(x):
        return asdict(x)
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _point_dict(b) -> dict:
    return {"kind": b.kind.value, "location": {k: v for k, v in b.location},
            "criticality": b.criticality.value,
            "state": list(b.state) if b.state is not None else None}


# commands; each returns (files written, results for the manifest)

def cmd_simulate(cfg: dict, out: Path):
    p = resolve_params(cfg)
    s0 = resolve_initial(cfg, p)
    horizon = resolve_horizon(cfg)
    icfg = resolve_integrator(cfg)
    sched = _schedule(cfg, horizon)
    traj = integrate(p, s0, horizon, icfg, sched)
    start = sched.t_last if sched else 0.0
    rep = classify_trajectory(p, traj, horizon, analysis_start=start)
    traj.to_csv(out / "trajectory.csv")
    files = ["trajectory.csv"]
    if traj.events:
        traj.events_to_csv(out / "events.csv")
        files.append("events.csv")
    summary = _report_dict(rep)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_jsonable) + "\n")
    return files + ["summary.json"], summary


def _report_dict(rep) -> dict:
    d = {"outcome": rep.outcome.value, "final_state": list(rep.final_state),
         "U_max": rep.U_max, "U_min": rep.U_min}
    if rep.cycle is not None:
        d["cycle"] = {"period": rep.cycle.period, "U_max": rep.cycle.U_max,
                      "U_min": rep.cycle.U_min}
    return d


def _schedule(cfg: dict, horizon: float) -> InjectionSchedule | None:
    if "schedule" not in cfg or cfg["schedule"] is None:
        return None
    try:
        sched = InjectionSchedule(**_section(cfg, "schedule"))
        sched.validate(horizon)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc
    return sched


def cmd_equilibria(cfg: dict, out: Path):
    p = resolve_params(cfg)
    eqs = equilibria(p)
    probe_cfg = cfg.get("probe", True)
    probe = None
    if probe_cfg:
        probe = eradication_probe(p, cfg=resolve_integrator(cfg))
    rows = []
    for e in eqs:
        cls = e.classification.value
        if e.kind.value == "eradication" and probe is not None:
            cls = probe.verdict.value
        ev = [x for z in e.eigenvalues for x in (z.real, z.imag)]
        rows.append([e.kind, *e.values, e.physical, cls, *ev])
    write_rows(out / "equilibria.csv",
               ["kind", "U", "I", "V", "physical", "class",
                "re1", "im1", "re2", "im2", "re3", "im3"], rows)
    res = {"equilibria": [{"kind": e.kind.value, "values": list(e.values),
                           "physical": e.physical, "class": r[5], "notes": e.notes}
                          for e, r in zip(eqs, rows)]}
    if probe is not None:
        res["eradication_probe"] = {"verdict": probe.verdict.value,
                                    "eigenvalues": list(probe.eigenvalues),
                                    "fates": list(probe.fates)}
    return ["equilibria.csv"], res


def cmd_region(cfg: dict, out: Path):
    sec = _section(cfg, "region")
    K = float(sec.get("K", 100.0))
    ms = grid(sec.get("m", 0.1), "region.m")
    xis = grid(sec.get("xi", {"start": 0.001, "stop": 0.2, "num": 50}), "region.xi")
    gs = grid(sec.get("gamma", {"start": 0.01, "stop": 0.99, "num": 50}), "region.gamma")
    if min(ms + xis + gs) <= 0:
        raise ConfigError("region grids must be positive")
    samples = scan_region(ms, xis, gs, K, n_jobs=int(cfg.get("n_jobs", 1)))
    write_region_csv(out / "region.csv", samples)
    files = ["region.csv"]
    res = {"samples": len(samples), "stable": sum(s.stable for s in samples if s.physical)}
    if "contour" in cfg:
        c = _section(cfg, "contour")
        U_T = _positive(c.get("U_T", 1.0), "contour.U_T")
        rows = []
        for m in grid(c.get("m", ms), "contour.m"):
            for g in grid(c.get("gamma", gs), "contour.gamma"):
                try:
                    rows.append((m, g, U_T, threshold_contour(m, g, K, U_T)))
                except ValueError as exc:
                    raise ConfigError(f"contour: {exc}") from exc
        write_contour_csv(out / "contour.csv", rows)
        files.append("contour.csv")
    return files, res


def cmd_branch(cfg: dict, out: Path):
    p = resolve_params(cfg)
    sec = _section(cfg, "branch")
    param = sec.get("param", "xi")
    kinds = sec.get("kinds", ["coexistence", "failed_treatment"])
    lo, hi = _pair(sec.get("range", [0.001, 0.2]), "branch.range")
    files, points = [], []
    for kind in kinds:
        try:
            br, pts = continue_equilibrium(p, kind, param, (lo, hi),
                                           ds=float(sec.get("ds", 1e-3)))
        except ValueError as exc:
            raise ConfigError(f"branch: {exc}") from exc
        name = f"branch_{kind}.csv"
        br.to_csv(out / name)
        files.append(name)
        if sec.get("classify_hopf", True):
            pts = [classify_hopf(b, param) if b.kind.value == "hopf" else b for b in pts]
        points += pts
    if sec.get("eradication", True):
        erange = _pair(sec.get("eradication_range", [lo, hi]), "branch.eradication_range")
        br, folds = eradication_branch_stability(p, param, erange,
                                                 n=int(sec.get("probe_points", 21)),
                                                 cfg=resolve_integrator(cfg))
        br.to_csv(out / "branch_eradication.csv")
        files.append("branch_eradication.csv")
        points += folds
    write_points_csv(out / "points.csv", points)
    return files + ["points.csv"], {"points": [_point_dict(b) for b in points]}


def cmd_hopf_curve(cfg: dict, out: Path):
    sec = _section(cfg, "hopf_curve")
    fixed = sec.get("fixed", "gamma")
    value = _positive(sec.get("value", 0.1), "hopf_curve.value")
    sweep = grid(sec.get("sweep", {"start": 0.01, "stop": 1.0, "num": 100}), "hopf_curve.sweep")
    search = _pair(sec.get("search", [1e-6, 1.0]), "hopf_curve.search")
    try:
        pts = hopf_locus(fixed, value, sweep, search, K=float(sec.get("K", 100.0)))
    except ValueError as exc:
        raise ConfigError(f"hopf_curve: {exc}") from exc
    res: dict = {"n_points": len(pts)}
    if sec.get("generalized_hopf") and fixed == "gamma":
        m_range = _pair(sec.get("gh_range", [0.1, 0.5]), "hopf_curve.gh_range")
        gh = locate_generalized_hopf(value, m_range)
        if gh is not None:
            pts.append(gh)
            res["generalized_hopf"] = _point_dict(gh)
    write_points_csv(out / "hopf_curve.csv", pts)
    return ["hopf_curve.csv"], res


def cmd_cycles(cfg: dict, out: Path):
    p = resolve_params(cfg)
    sec = _section(cfg, "cycles")
    param = sec.get("param", "xi")
    values = grid(sec.get("values", [getattr(p, param)]), "cycles.values")
    ic = resolve_initial(cfg, p)
    cycles = track_cycles(p, param, values, ic=ic, horizon=resolve_horizon(cfg),
                          max_horizon=float(sec.get("max_horizon", 256000.0)),
                          cfg=resolve_integrator(cfg), n_jobs=int(cfg.get("n_jobs", 1)))
    write_cycles_csv(out / "cycles.csv", cycles)
    return ["cycles.csv"], {"measured": len(cycles),
                            "unconverged": [c.value for c in cycles if not c.converged]}


def cmd_protocol(cfg: dict, out: Path):
    p = resolve_params(cfg)
    sec = _section(cfg, "protocol")
    if "kappa" in sec:
        D0 = _positive(sec.get("D0", 20.0), "protocol.D0")
        sw = kappa_sweep(p, D0, grid(sec["kappa"], "protocol.kappa"), int(sec.get("n", 2)),
                         ic=resolve_initial(cfg, p), cfg=resolve_integrator(cfg),
                         n_jobs=int(cfg.get("n_jobs", 1)))
        sw.to_csv(out / "kappa_sweep.csv")
        near = sw.nearest_to_min()
        return ["kappa_sweep.csv"], {
            "period": sw.baseline.period, "t_to_min": sw.t_to_min,
            "outcomes": sorted({r.outcome.value for r in sw.records}),
            "nearest_to_min": near.kappa,
            "lowest_min_kappa": min(sw.records, key=lambda r: r.U_min).kappa,
            "highest_max_kappa": max(sw.records, key=lambda r: r.U_max).kappa}
    horizon = resolve_horizon(cfg)
    sched = _schedule(cfg, horizon)
    rep, traj = run_protocol(p, resolve_initial(cfg, p), sched, horizon,
                             resolve_integrator(cfg))
    traj.to_csv(out / "trajectory.csv")
    traj.events_to_csv(out / "events.csv")
    return ["trajectory.csv", "events.csv"], _report_dict(rep)


def cmd_dosage_sweep(cfg: dict, out: Path):
    p = resolve_params(cfg)
    sec = _section(cfg, "dosage")
    sw = dosage_sweep(p, float(sec.get("U0", 50.0)), float(sec.get("I0", 10.0)),
                      _pair(sec.get("V0_range", [20.0, 120.0]), "dosage.V0_range"),
                      int(sec.get("steps", 11)), horizon=resolve_horizon(cfg),
                      cfg=resolve_integrator(cfg), n_jobs=int(cfg.get("n_jobs", 1)))
    sw.to_csv(out / "dosage_sweep.csv")
    return ["dosage_sweep.csv"], {"intervals": [[o.value, a, b] for o, a, b in sw.intervals()]}


def cmd_basin(cfg: dict, out: Path):
    p = resolve_params(cfg)
    sec = _section(cfg, "basin")
    cells = basin_slice(p, grid(sec.get("U0", [40.0, 60.0]), "basin.U0"),
                        grid(sec.get("V0", [5.0, 40.0]), "basin.V0"),
                        float(sec.get("I0", 10.0)), horizon=resolve_horizon(cfg),
                        cfg=resolve_integrator(cfg), n_jobs=int(cfg.get("n_jobs", 1)))
    write_basin_csv(out / "basin.csv", cells)
    counts: dict[str, int] = {}
    for c in cells:
        counts[c.outcome.value] = counts.get(c.outcome.value, 0) + 1
    return ["basin.csv"], {"counts": counts}


def repro_suite() -> dict[str, tuple[str, dict]]:
    """Configs for the full set of standard analyses, keyed by output subdirectory."""
    base = {"m": 0.1, "xi": 0.01, "gamma": 0.1, "K": 100.0}
    suite: dict[str, tuple[str, dict]] = {}
    for xi, H in ((0.01, 3000), (0.06, 3000), (0.097, 40000), (0.12, 3000)):
        suite[f"regimes_xi{xi}"] = ("simulate", {"params": {**base, "xi": xi},
                                                 "initial": [50, 10, 10], "horizon": H})
    suite["region"] = ("region", {
        "region": {"m": [0.05, 0.1, 0.5], "xi": {"start": 0.002, "stop": 0.2, "num": 100},
                   "gamma": {"start": 0.01, "stop": 0.99, "num": 99}},
        "contour": {"U_T": 1.0, "m": [0.05, 0.1, 0.5],
                    "gamma": {"start": 0.01, "stop": 0.99, "num": 99}}})
    suite["branch_xi"] = ("branch", {"params": base, "branch": {
        "param": "xi", "range": [0.001, 0.2], "eradication_range": [0.05, 0.15]}})
    suite["branch_gamma"] = ("branch", {"params": base, "branch": {
        "param": "gamma", "range": [0.005, 1.5], "eradication_range": [0.002, 0.03],
        "classify_hopf": False}})
    suite["bistable"] = ("branch", {"params": {**base, "m": 0.5, "xi": 0.1}, "branch": {
        "param": "xi", "range": [0.001, 0.3], "eradication_range": [0.1, 0.2]}})
    suite["hopf_curve"] = ("hopf-curve", {"hopf_curve": {
        "fixed": "gamma", "value": 0.1,
        "sweep": {"start": 0.001, "stop": 1.0, "num": 200, "log": True},
        "generalized_hopf": True}})
    suite["cycles_xi"] = ("cycles", {"params": base, "cycles": {
        "param": "xi", "values": {"start": 0.044, "stop": 0.1, "num": 29}}})
    suite["cycles_gamma"] = ("cycles", {"params": base, "cycles": {
        "param": "gamma", "values": {"start": 0.0105, "stop": 0.023, "num": 26}}})
    for xi in (0.06915, 0.06993):
        suite[f"kappa_xi{xi}"] = ("protocol", {
            "params": {"m": 0.2, "xi": xi, "gamma": 0.1, "K": 100.0},
            "protocol": {"D0": 20.0, "n": 2,
                         "kappa": {"start": 5.0, "stop": 110.0, "num": 22}}})
    for U0 in (100.0, 50.0):
        suite[f"dosage_U{int(U0)}"] = ("dosage-sweep", {
            "params": {"m": 0.5, "xi": 0.138, "gamma": 0.1, "K": 100.0},
            "dosage": {"U0": U0, "I0": 10.0, "V0_range": [20.0, 120.0], "steps": 11}})
    suite["basin"] = ("basin", {"params": {"m": 0.5, "xi": 0.136, "gamma": 0.1, "K": 100.0},
                                "basin": {"U0": {"start": 10, "stop": 100, "num": 10},
                                          "V0": {"start": 5, "stop": 120, "num": 12}}})
    return suite


def cmd_repro(cfg: dict, out: Path):
    results, files = {}, []
    for name, (command, sub) in repro_suite().items():
        sub = copy.deepcopy(sub)
        if "n_jobs" in cfg:
            sub["n_jobs"] = cfg["n_jobs"]
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        written, res = run_command(command, sub, d)
        files += [f"{name}/{f}" for f in written]
        results[name] = {"command": command, "results": res}
    return files, results


COMMANDS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "region": cmd_region,
    "branch": cmd_branch,
    "hopf-curve": cmd_hopf_curve,
    "cycles": cmd_cycles,
    "protocol": cmd_protocol,
    "dosage-sweep": cmd_dosage_sweep,
    "basin": cmd_basin,
    "repro": cmd_repro,
}


def run_command(command: str, cfg: dict, out: Path) -> tuple[list[str], dict]:
    """Run one subcommand and write its manifest next to the outputs."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files, results = COMMANDS[command](cfg, out)
    manifest = {"command": command, "version": __version__, "config": cfg,
                "outputs": files, "results": results,
                "wall_time_s": time.perf_counter() - t0}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return files + ["manifest.json"], results


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oncogompertz", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file (or an earlier manifest.json)")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a dotted config key")
        sp.add_argument("--out", help="output directory (overrides config 'output')")
        sp.add_argument("--error-json", action="store_true",
                        help="print failures as a JSON object on stdout")
    return ap


def _fail(args, code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, IntegrationError):
        err["t"] = exc.t
    if isinstance(exc, ContinuationError) and exc.last_point is not None:
        err["last_point"] = list(exc.last_point)
    if args.error_json:
        print(json.dumps(err, default=_jsonable))
    else:
        print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        out = Path(args.out or cfg.get("output", "."))
        cfg_saved = {**cfg, "output": str(out)}
        run_command(args.command, cfg_saved, out)
    except ConfigError as exc:
        return _fail(args, EXIT_CONFIG, exc)
    except (IntegrationError, ContinuationError, SweepError, ModelDomainError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(args, EXIT_NUMERIC, exc)
    except (TypeError, ValueError) as exc:
        # remaining argument checks inside the library
        return _fail(args, EXIT_CONFIG, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
