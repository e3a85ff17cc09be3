"""Scenario-driven command line: validate a JSON config, certify the
hypotheses, run the solver, and write series/reports.

Exit codes: 0 success, 2 configuration error, 3 integration failure,
4 assertion (experiment) failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .daughter import DaughterSpec, ProbSpec
from .diagnostics import (check_apriori_bounds, check_mass_conservation,
                          contraction_experiment, detect_gelation, e_sweep,
                          moment_series)
from .dlvp import build_phi, verify_dlvp
from .errors import ConfigError, DataError, IntegrationError
from .grid import Grid, InitialCondition, make_grid, moment, \
    read_tabulated_csv, sample_initial
from .hypotheses import check_scenario
from .kernels import KernelSpec
from .solver import StepControl, build_tables, integrate

_EXPERIMENTS = ("run", "verify", "contraction", "gel", "sweep", "dlvp")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: constructed specs plus the raw dictionary."""

    grid: Grid
    kernel: KernelSpec
    daughter: DaughterSpec
    prob: ProbSpec
    initial: InitialCondition
    control: StepControl
    experiments: tuple
    options: dict
    raw: dict
    config_hash: str


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing required key {key!r} in {context}")
    return mapping[key]


def _check_keys(mapping: dict, allowed, context: str):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")


def _build_kernel(cfg: dict) -> KernelSpec:
    family = _require(cfg, "family", "kernel")
    if family == "smoluchowski":
        _check_keys(cfg, {"family"}, "kernel")
        return KernelSpec.smoluchowski()
    if family == "sum_product":
        _check_keys(cfg, {"family", "zeta", "eta"}, "kernel")
        return KernelSpec.sum_product(_require(cfg, "zeta", "kernel"),
                                      _require(cfg, "eta", "kernel"))
    if family == "bg_ratio":
        _check_keys(cfg, {"family", "sigma", "eta"}, "kernel")
        return KernelSpec.bg_ratio(_require(cfg, "sigma", "kernel"),
                                   _require(cfg, "eta", "kernel"))
    if family == "product":
        _check_keys(cfg, {"family"}, "kernel")
        return KernelSpec.product()
    if family == "additive":
        _check_keys(cfg, {"family"}, "kernel")
        return KernelSpec.additive()
    if family == "constant":
        _check_keys(cfg, {"family", "c"}, "kernel")
        return KernelSpec.constant(cfg.get("c", 1.0))
    if family == "table":
        _check_keys(cfg, {"family", "path", "declared_alpha", "declared_k1"},
                    "kernel")
        x, y, K = _read_kernel_csv(_require(cfg, "path", "kernel"))
        return KernelSpec.table(x, y, K,
                                declared_alpha=cfg.get("declared_alpha", 0.0),
                                declared_k1=cfg.get("declared_k1"))
    raise ConfigError(f"unknown kernel family {family!r}")


def _read_kernel_csv(path):
    """CSV columns x,y,K over a rectangular grid of (x, y) pairs."""
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read kernel table {path}: {exc}")
    if rows.shape[1] != 3:
        raise DataError("kernel table needs columns x,y,K")
    x = np.unique(rows[:, 0])
    y = np.unique(rows[:, 1])
    if rows.shape[0] != x.size * y.size:
        raise DataError("kernel table must cover a full rectangular grid")
    K = np.full((x.size, y.size), np.nan)
    ix = np.searchsorted(x, rows[:, 0])
    iy = np.searchsorted(y, rows[:, 1])
    K[ix, iy] = rows[:, 2]
    if np.any(np.isnan(K)):
        raise DataError("kernel table has duplicate or missing grid entries")
    return x, y, K


def _build_daughter(cfg: dict) -> DaughterSpec:
    family = _require(cfg, "family", "daughter")
    if family == "uniform":
        _check_keys(cfg, {"family"}, "daughter")
        return DaughterSpec.uniform()
    _check_keys(cfg, {"family", "nu"}, "daughter")
    nu = _require(cfg, "nu", "daughter")
    if family == "power_total":
        return DaughterSpec.power_total(nu)
    if family == "power_each":
        return DaughterSpec.power_each(nu)
    raise ConfigError(f"unknown daughter family {family!r}")


def _build_prob(cfg: dict) -> ProbSpec:
    form = _require(cfg, "form", "prob")
    if form == "constant":
        _check_keys(cfg, {"form", "value"}, "prob")
        return ProbSpec.constant(_require(cfg, "value", "prob"))
    if form == "small_volume_floor":
        _check_keys(cfg, {"form", "E_small", "E_large", "cut"}, "prob")
        return ProbSpec.small_volume_floor(
            _require(cfg, "E_small", "prob"), _require(cfg, "E_large", "prob"),
            cfg.get("cut", 1.0))
    raise ConfigError(f"unknown probability form {form!r}")


def _build_initial(cfg: dict) -> InitialCondition:
    family = _require(cfg, "family", "initial")
    mass = cfg.get("mass", 1.0)
    if family == "exponential":
        _check_keys(cfg, {"family", "rate", "mass"}, "initial")
        return InitialCondition.exponential(cfg.get("rate", 1.0), mass)
    if family == "power_cutoff":
        _check_keys(cfg, {"family", "p", "x_c", "mass"}, "initial")
        return InitialCondition.power_cutoff(_require(cfg, "p", "initial"),
                                             _require(cfg, "x_c", "initial"),
                                             mass)
    if family == "point_mass":
        _check_keys(cfg, {"family", "x0", "w", "mass"}, "initial")
        return InitialCondition.point_mass(_require(cfg, "x0", "initial"),
                                           _require(cfg, "w", "initial"), mass)
    if family == "tabulated":
        _check_keys(cfg, {"family", "path", "mass"}, "initial")
        x, f = read_tabulated_csv(_require(cfg, "path", "initial"))
        return InitialCondition.tabulated(x, f, mass)
    raise ConfigError(f"unknown initial family {family!r}")


def _build_control(cfg: dict) -> StepControl:
    _check_keys(cfg, {"method", "dt", "rtol", "atol", "dt_min", "dt_max",
                      "t_end", "output_times", "outputs"}, "control")
    t_end = float(_require(cfg, "t_end", "control"))
    if "output_times" in cfg:
        out = tuple(float(s) for s in cfg["output_times"])
    else:
        out = tuple(np.linspace(0.0, t_end, int(cfg.get("outputs", 51))))
    kwargs = {}
    for key in ("method", "dt", "rtol", "atol", "dt_min", "dt_max"):
        if key in cfg:
            kwargs[key] = cfg[key]
    try:
        return StepControl(t_end=t_end, output_times=out, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _apply_override(raw: dict, spec: str):
    if "=" not in spec:
        raise ConfigError(f"override must look like key=value, got {spec!r}")
    dotted, value = spec.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-object {key!r}")
    node[keys[-1]] = parsed


def parse_config(path, overrides=()) -> ScenarioConfig:
    """Load, validate, and freeze a scenario configuration."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for spec in overrides:
        _apply_override(raw, spec)

    _check_keys(raw, {"grid", "kernel", "daughter", "prob", "initial",
                      "control", "experiments", "options"}, "config")
    gcfg = _require(raw, "grid", "config")
    _check_keys(gcfg, {"x_min", "x_max", "cells"}, "grid")
    grid = make_grid(_require(gcfg, "x_min", "grid"),
                     _require(gcfg, "x_max", "grid"),
                     _require(gcfg, "cells", "grid"))
    kernel = _build_kernel(_require(raw, "kernel", "config"))
    daughter = _build_daughter(_require(raw, "daughter", "config"))
    prob = _build_prob(_require(raw, "prob", "config"))
    initial = _build_initial(_require(raw, "initial", "config"))
    control = _build_control(_require(raw, "control", "config"))

    experiments = tuple(raw.get("experiments", ["run", "verify"]))
    for e in experiments:
        if e not in _EXPERIMENTS:
            raise ConfigError(f"unknown experiment {e!r}")
    options = dict(raw.get("options", {}))
    _check_keys(options, {"n_trunc", "offgrid_loss", "mass_tol",
                          "moment_orders", "gel_threshold", "theta",
                          "perturbation", "sweep_E"}, "options")
    if daughter.per_parent and kernel.declared_alpha > 0.0:
        raise ConfigError("per-parent daughter distributions require a "
                          "non-singular kernel (alpha = 0)")
    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]
    return ScenarioConfig(grid=grid, kernel=kernel, daughter=daughter,
                          prob=prob, initial=initial, control=control,
                          experiments=experiments, options=options,
                          raw=raw, config_hash=digest)


# ---------------------------------------------------------------------------
# output writers (deterministic, hash-stamped)
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header: list, rows, config_hash: str):
    with path.open("w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _write_json(path: Path, payload, config_hash: str):
    path.write_text(json.dumps({"config_hash": config_hash, **payload},
                               indent=2, sort_keys=True, default=_jsonify)
                    + "\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if obj is None or obj != obj:
        return None
    return str(obj)


def run_scenario(config: ScenarioConfig, out_dir) -> int:
    """Execute the requested experiments; returns the process exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = config.config_hash
    failures = []

    report = check_scenario(config.kernel, config.daughter, config.prob,
                            config.initial)
    _write_json(out / "hypothesis_report.json", report.to_dict(), h)

    needs_traj = any(e in config.experiments
                     for e in ("run", "gel", "contraction"))
    trajectory = None
    n_trunc = float(config.options.get("n_trunc") or config.grid.x_max)
    if needs_traj:
        tables = build_tables(config.grid, config.kernel, n_trunc,
                              config.daughter, config.prob,
                              offgrid_loss=bool(
                                  config.options.get("offgrid_loss", False)))
        state0 = sample_initial(config.initial, config.grid)
        trajectory = integrate(tables, state0, config.control)

        alpha = config.kernel.declared_alpha
        orders = config.options.get("moment_orders",
                                    [-2.0 * alpha, -alpha, 0.0, 1.0, 2.0])
        orders = sorted(set(float(m) for m in orders) | {0.0, 1.0})
        series = moment_series(trajectory, orders)
        _write_csv(out / "moments.csv",
                   ["t"] + [f"M_{m:g}" for m in series.orders],
                   np.column_stack([series.times, series.values]), h)
        for k in range(len(trajectory)):
            _write_csv(out / f"trajectory_{k:04d}.csv", ["x_center", "dx", "f"],
                       np.column_stack([config.grid.centers,
                                        config.grid.widths,
                                        trajectory.densities[k]]), h)

    results = {}
    if "run" in config.experiments:
        tol = float(config.options.get("mass_tol", 1e-8))
        mass = check_mass_conservation(trajectory, tol)
        conserving = (report.checks["p2"].status == "pass"
                      or report.checks["p400"].status == "pass")
        results["mass_conservation"] = {
            "max_drift": mass["max_drift"], "tol": tol,
            "asserted": bool(conserving), "ok": mass["ok"]}
        if conserving and not mass["ok"]:
            failures.append(f"mass drift {mass['max_drift']:.3e} > {tol:g}")
        apriori = check_apriori_bounds(series, report, moment(state0, 1.0),
                                       config.kernel.declared_k1)
        results["apriori_bounds"] = apriori
        for name, row in apriori.items():
            if row.get("status") == "fail":
                failures.append(f"a priori bound {name} violated")

    if "gel" in config.experiments:
        threshold = float(config.options.get("gel_threshold", 0.01))
        onset = detect_gelation(series, threshold)
        results["gelation"] = {"threshold": threshold, "onset": onset}

    if "contraction" in config.experiments:
        try:
            factor = float(config.options.get("perturbation", 1.01))
            ic_g = _scaled_initial(config.initial, factor)
            res = contraction_experiment(tables, config.control,
                                         config.initial, ic_g, report,
                                         config.kernel.declared_k1)
        except ConfigError as exc:
            raise ConfigError(f"contraction experiment rejected: {exc}")
        results["contraction"] = {
            "rate": res.rate, "mass_bound": res.mass_bound, "ok": res.ok,
            "distance": res.distance}
        if not res.ok:
            failures.append("contraction envelope violated")

    if "sweep" in config.experiments:
        values = config.options.get("sweep_E", [0.0, 0.25, 0.5, 0.75, 1.0])
        results["e_sweep"] = e_sweep(
            config.grid, config.kernel, n_trunc, config.daughter,
            config.initial, config.control, values,
            config.kernel.declared_alpha)

    if "dlvp" in config.experiments:
        theta = float(config.options.get("theta", 0.5))
        xs = np.geomspace(config.grid.x_min, config.grid.x_max, 4000)
        hs = sample_initial(config.initial,
                            make_grid(config.grid.x_min, config.grid.x_max,
                                      3999)).density
        pc = build_phi(np.sqrt(xs[:-1] * xs[1:]), hs, theta, extrapolate=True)
        rep = verify_dlvp(pc, np.sqrt(xs[:-1] * xs[1:]), hs)
        results["dlvp"] = {"j_seq": pc.j_seq, "ok": rep["ok"]}
        if not rep["ok"]:
            failures.append("dlvp construction checks failed")

    results["failures"] = failures
    _write_json(out / "experiments.json", results, h)
    return 4 if failures else 0


def _scaled_initial(ic: InitialCondition, factor: float) -> InitialCondition:
    if ic.mass is None:
        raise ConfigError("contraction perturbation needs a configured mass")
    return InitialCondition(ic.family, dict(ic.params), ic.mass * factor)


def verify_only(config: ScenarioConfig, out_dir=None) -> int:
    report = check_scenario(config.kernel, config.daughter, config.prob,
                            config.initial)
    payload = report.to_dict()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "hypothesis_report.json", payload,
                    config.config_hash)
    print(json.dumps(payload, indent=2, sort_keys=True, default=_jsonify))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="breakcoag",
        description="Simulator and verification suite for coagulation with "
                    "collision-induced breakage.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--out", default="results")
        sp.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE")
    args = parser.parse_args(argv)

    try:
        config = parse_config(args.config, args.override)
        if args.command == "verify":
            code = verify_only(config, args.out)
        else:
            code = run_scenario(config, args.out)
    except (ConfigError, DataError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"integration failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return 3
    if code == 0:
        print("ok")
    else:
        print("experiment assertions failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
