"""Command-line interface.

Every subcommand reads one YAML (or JSON) configuration document; the only
flags are the config path, a seed override, an output override and
verbosity. Exit codes: 0 success, 1 internal error, 2 input or data error.

    covshift test run.yaml
    covshift simulate sim.yaml --seed 7 --output out/
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import rng as rngmod
from .depmeasure import SamplingPoints, tau_hat, tau_partial
from .experiments import replicate_model
from .geom import PointPattern, Window
from .models import get_model, simulate_model
from .raster import ScalarField, read_ascii_grid, write_ascii_grid
from .select import backward_select
from .shifttest import ShiftTestConfig, run_shift_test

__all__ = ["main", "InputError", "load_schema", "validate_report"]

log = logging.getLogger("covshift")

COMMANDS = ("test", "corr", "select", "simulate", "replicate")


class InputError(Exception):
    """Bad configuration or input data (exit code 2)."""


def load_schema(name: str) -> dict:
    text = resources.files("covshift").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate_report(command: str, report: dict) -> None:
    jsonschema.validate(report, load_schema(f"report_{command}"))


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise InputError(f"config {path} is not valid YAML: {exc}") from None
    if cfg is None:
        cfg = {}
    try:
        jsonschema.validate(cfg, load_schema(f"config_{command}"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"config {path}: {where}: {exc.message}") from None
    return cfg


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


# --------------------------------------------------------------- loaders


def _window_from(spec) -> Window:
    if isinstance(spec, dict):
        return Window.polygon([tuple(v) for v in spec["polygon"]])
    x0, y0, x1, y1 = spec
    if not (x1 > x0 and y1 > y0):
        raise InputError(f"window {spec} is empty")
    return Window.rectangle(x0, y0, x1, y1)


def _load_covariates(paths: dict, base: Path, window: Window | None) -> tuple[dict, Window]:
    fields: dict[str, ScalarField] = {}
    first_name = None
    for name, p in paths.items():
        path = _resolve(base, p)
        try:
            f = read_ascii_grid(path, window)
        except OSError as exc:
            raise InputError(f"covariate {name!r}: cannot read {path}: {exc.strerror}") from None
        except ValueError as exc:
            raise InputError(f"covariate {name!r} ({path}): {exc}") from None
        if window is None:
            window = f.grid.window
            f = read_ascii_grid(path, window)
        if first_name is None:
            first_name = name
        elif not fields[first_name].grid.same_geometry(f.grid):
            raise InputError(f"covariate {name!r} ({path}) is not aligned with {first_name!r}: grid geometry differs")
        _check_coverage(f, window, name, path)
        fields[name] = f
    return fields, window


def _check_coverage(field: ScalarField, window: Window, name: str, path) -> None:
    g = field.grid
    x0, y0, x1, y1 = window.bounds
    gx1, gy1 = g.x0 + g.ncols * g.cellsize, g.y0 + g.nrows * g.cellsize
    tol = 1e-9 * max(1.0, abs(gx1), abs(gy1))
    if x0 < g.x0 - tol or y0 < g.y0 - tol or x1 > gx1 + tol or y1 > gy1 + tol:
        raise InputError(f"covariate {name!r} ({path}) does not cover the observation window")
    if not g.mask.any():
        raise InputError(f"covariate {name!r} ({path}): no grid cell centre lies in the window")
    if not np.all(np.isfinite(field.values[g.mask])):
        raise InputError(f"covariate {name!r} ({path}) has missing values inside the window")


def _load_inputs(cfg: dict, base: Path):
    window = _window_from(cfg["pattern"]["window"]) if "window" in cfg["pattern"] else None
    covs, window = _load_covariates(cfg["covariates"], base, window)
    csv = _resolve(base, cfg["pattern"]["csv"])
    try:
        pattern = PointPattern.from_csv(csv, window)
    except OSError as exc:
        raise InputError(f"cannot read pattern {csv}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise InputError(f"pattern {csv}: {exc}") from None
    return pattern, covs


def _test_config(block: dict | None, seed: int) -> ShiftTestConfig:
    block = dict(block or {})
    if block.get("candidates") is not None:
        block["candidates"] = tuple(block["candidates"])
    return ShiftTestConfig(seed=seed, **block)


# -------------------------------------------------------------- commands


def cmd_test(cfg: dict, base: Path) -> dict:
    pattern, covs = _load_inputs(cfg, base)
    interest = cfg["interest"]
    nuisance = cfg.get("nuisance", [n for n in covs if n != interest])
    for n in [interest, *nuisance]:
        if n not in covs:
            raise InputError(f"unknown covariate {n!r}; available: {', '.join(covs)}")
    if interest in nuisance:
        raise InputError(f"{interest!r} cannot be both interest and nuisance")
    seed = cfg.get("seed", 0)
    config = _test_config(cfg.get("test"), seed)
    res = run_shift_test(pattern, [covs[n] for n in nuisance], covs[interest], config)
    report = res.to_dict()
    report.update({"interest": interest, "nuisance": list(nuisance), "seed": seed})
    return report


def cmd_corr(cfg: dict, base: Path) -> dict:
    pattern, covs = _load_inputs(cfg, base)
    seed = cfg.get("seed", 0)
    n_sampling = cfg.get("n_sampling", 100)
    bw = cfg.get("bandwidth", 0.5 * min(pattern.window.side_lengths))
    pbw = cfg.get("partial_bandwidth", "adaptive")
    residuals = cfg.get("residuals", "nonparametric")
    sampling = SamplingPoints.uniform(pattern.window, n_sampling, rngmod.stream(seed, "sampling"))
    rows = []
    for name, field in covs.items():
        plain = tau_hat(pattern, field, bw, sampling)
        others = [n for n in covs if n != name]
        row = {"name": name, "tau": plain.value, "tau_bandwidth": plain.bandwidth, "nuisance": others}
        if others:
            part = tau_partial(
                pattern, [covs[o] for o in others], field, pbw, sampling,
                residuals=residuals, candidates=cfg.get("candidates"),
            )
            row.update(tau_partial=part.value, tau_partial_bandwidth=part.bandwidth)
        else:
            row.update(tau_partial=None, tau_partial_bandwidth=None)
        rows.append(row)
    return {"covariates": rows, "n_sampling": n_sampling, "seed": seed, "residuals": residuals}


def cmd_select(cfg: dict, base: Path):
    pattern, covs = _load_inputs(cfg, base)
    seed = cfg.get("seed", 0)
    trace = backward_select(pattern, covs, _test_config(cfg.get("test"), seed), cfg.get("alpha", 0.05), seed=seed)
    report = trace.to_dict()
    report["seed"] = seed
    return report, trace.table()


def cmd_simulate(cfg: dict, base: Path) -> dict:
    try:
        spec = get_model(cfg["model"], **cfg.get("params", {}))
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    if "mh_steps" in cfg:
        spec = replace(spec, mh_steps=cfg["mh_steps"])
    seed = cfg.get("seed", 0)
    rep = cfg.get("replicate", 0)
    real = simulate_model(spec, seed, rep)
    out = _resolve(base, cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    files = {"pattern": "pattern.csv"}
    real.pattern.to_csv(out / "pattern.csv")
    for name, f in real.covariates.items():
        files[name] = f"{name}.asc"
        write_ascii_grid(f, out / files[name])
    if cfg.get("write_fields", True):
        for name, f in real.latent.items():
            files[name] = f"{name}.asc"
            write_ascii_grid(f, out / files[name])
        files["intensity"] = "intensity.asc"
        write_ascii_grid(real.intensity, out / "intensity.asc")
    return {
        "model": spec.name,
        "params": dict(spec.params),
        "seed": seed,
        "replicate": rep,
        "n_points": real.pattern.n,
        "files": files,
    }


def cmd_replicate(cfg: dict, base: Path) -> dict:
    seed = cfg.get("seed", 0)
    try:
        table = replicate_model(
            cfg["model"],
            cfg["tests"],
            cfg["reps"],
            alpha=cfg.get("alpha", 0.05),
            seed=seed,
            n_shifts=cfg.get("n_shifts", 999),
            radius=cfg.get("radius"),
            workers=cfg.get("workers", 1),
            params=cfg.get("params"),
        )
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    if "csv" in cfg:
        _resolve(base, cfg["csv"]).write_text(table.to_csv())
    report = table.to_dict()
    report.update(seed=seed, n_shifts=cfg.get("n_shifts", 999))
    return report


# ------------------------------------------------------------------ main


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covshift", description="Covariate dependence tests for spatial point patterns.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "test": "random-shift test of one covariate given nuisance covariates",
        "corr": "plain and partial Kendall correlations for every covariate",
        "select": "backward covariate selection",
        "simulate": "simulate a catalogue model to CSV and ASCII grids",
        "replicate": "rejection rates over replicated simulations",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("config", help="YAML or JSON configuration file")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("-o", "--output", help="override the output path (directory for simulate)")
        s.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = _load_config(args.config, args.command)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.output is not None:
            cfg["output_dir" if args.command == "simulate" else "output"] = args.output
        base = Path(args.config).resolve().parent
        table = None
        if args.command == "test":
            report = cmd_test(cfg, base)
        elif args.command == "corr":
            report = cmd_corr(cfg, base)
        elif args.command == "select":
            report, table = cmd_select(cfg, base)
        elif args.command == "simulate":
            report = cmd_simulate(cfg, base)
        else:
            report = cmd_replicate(cfg, base)
        validate_report(args.command, report)
        text = json.dumps(report, indent=2) + "\n"
        out = cfg.get("output")
        _emit(text, str(_resolve(base, out)) if out and args.output is None else out)
        if table is not None:
            if "table_output" in cfg:
                _resolve(base, cfg["table_output"]).write_text(table + "\n")
            else:
                sys.stderr.write(table + "\n")
        return 0
    except InputError as exc:
        log.error("%s", exc)
        return 2
    except (ValueError, KeyError) as exc:
        log.error("data error: %s", exc)
        return 2
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
