"""Command-line front end.

Subcommands: validate, fit, estimate, predict, simulate. Settings come from
an optional JSON file (``--config``); command-line flags override it.

Exit codes: 0 success, 1 input error, 2 computation infeasible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_ingest import (
    FormatError,
    GeometryError,
    RowError,
    SchemaError,
    locate_pixel,
    parse_plot_table,
    read_raster,
    write_raster,
)
from .estimation import EstimationError
from .map_prediction import ACCOUNTING, predict_map
from .regression import InsufficientDataError
from .simulation import SimConfig, SimConfigError, monte_carlo, replicates_csv
from .subset_selection import ModelFit, SelectionInfeasibleError
from .workflow import candidate_terms, fit_model, run_estimate

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2

DEFAULTS = {
    "mode": "bi_temporal",
    "k_max": 5,
    "m": 50,
    "accounting": "population_mean",
    "seed": 20140519,
    "workers": 1,
    "n": 200,
    "replicates": 1000,
}


class InputError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _emit(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError("E-SCHEMA", f"cannot read config {args.config}: {exc}") from None
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        if key == "stack":
            cfg["stacks"] = dict(_parse_stack_flag(s) for s in value)
        else:
            cfg[key] = value
    return cfg


def _parse_stack_flag(text: str) -> tuple[str, str]:
    label, sep, path = text.partition("=")
    if not sep or not label or not path:
        raise InputError("E-SCHEMA", f"--stack expects EPOCH=PATH, got {text!r}")
    return label, path


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, {}, "")]
    if missing:
        raise InputError("E-SCHEMA", f"missing setting(s): {', '.join(missing)}")


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError("E-SCHEMA", f"cannot read {path}: {exc.strerror}") from None


def _load_plots(cfg):
    try:
        return parse_plot_table(_read_bytes(cfg["plots"]).decode("utf-8"))
    except (SchemaError, RowError, UnicodeDecodeError) as exc:
        raise InputError("E-SCHEMA", f"{cfg['plots']}: {exc}") from None


def _load_raster(path: str, label: str):
    try:
        return read_raster(_read_bytes(path), label)
    except FormatError as exc:
        raise InputError("E-SCHEMA", f"{path}: {exc}") from None


def _load_stacks(cfg) -> dict:
    return {label: _load_raster(path, label) for label, path in sorted(cfg["stacks"].items())}


def _load_model(cfg) -> ModelFit:
    try:
        return ModelFit.from_json(_read_bytes(cfg["model"]).decode("utf-8"))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError("E-SCHEMA", f"{cfg['model']}: bad model JSON ({exc})") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _write_manifest(output: str, cfg: dict, inputs: list[str]) -> None:
    def digest(p):
        return hashlib.sha256(Path(p).read_bytes()).hexdigest()

    settings = {k: v for k, v in sorted(cfg.items())}
    manifest = {
        "version": __version__,
        "seed": cfg.get("seed"),
        "config_sha256": hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest(),
        "config": settings,
        "inputs": {p: digest(p) for p in inputs if p and Path(p).is_file()},
    }
    Path(str(output) + ".manifest.json").write_text(_dump(manifest))


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(cfg: dict) -> int:
    errors: list[str] = []
    warnings_: list[str] = []

    plots = stacks = mask = None
    if cfg.get("plots"):
        try:
            plots = _load_plots(cfg)
        except InputError as exc:
            errors.append(str(exc))
    stacks = {}
    for label, path in sorted((cfg.get("stacks") or {}).items()):
        try:
            stacks[label] = _load_raster(path, label)
        except InputError as exc:
            errors.append(str(exc))
    if cfg.get("mask"):
        try:
            mask = _load_raster(cfg["mask"], "mask")
        except InputError as exc:
            errors.append(str(exc))
    if cfg.get("model"):
        try:
            model = _load_model(cfg)
            for t in model.terms:
                if t.epoch not in stacks or any(b not in stacks[t.epoch].bands for b in t.bands):
                    errors.append(f"E-SCHEMA: model term {t.name} has no matching raster band")
        except InputError as exc:
            errors.append(str(exc))

    grids = list(stacks.values()) + ([mask] if mask is not None else [])
    for g in grids[1:]:
        if g.geometry != grids[0].geometry:
            errors.append(
                f"E-GEOM: {g.epoch_label} grid {g.geometry} differs from {grids[0].epoch_label} grid {grids[0].geometry}"
            )
    if mask is not None:
        if list(mask.bands) != ["mask"]:
            errors.append(f"E-SCHEMA: mask must have one band named 'mask', got {list(mask.bands)}")
        else:
            v = mask.bands["mask"]
            bad = ~mask.nodata_mask("mask") & (v != 0) & (v != 1)
            if np.any(bad):
                errors.append(f"E-RANGE: mask holds {int(bad.sum())} values outside {{0, 1, nodata}}")
    area = cfg.get("area")
    if area is not None and not (isinstance(area, (int, float)) and math.isfinite(area) and area > 0):
        errors.append(f"E-RANGE: area must be > 0 ha, got {area}")
    if plots is not None and grids:
        for p in plots:
            if locate_pixel(grids[0], p.x, p.y) is None:
                warnings_.append(f"W-OOB: plot {p.plot_id} at ({p.x}, {p.y}) lies outside the raster extent")

    for w in warnings_:
        _emit(w)
    for e in errors:
        _emit(e)
    print(_dump({"errors": errors, "warnings": warnings_, "ok": not errors}), end="")
    return EXIT_INPUT if errors else EXIT_OK


# ---------------------------------------------------------------------------
# fit / estimate / predict
# ---------------------------------------------------------------------------


def cmd_fit(cfg: dict) -> int:
    _require(cfg, "plots", "stacks", "output")
    plots = _load_plots(cfg)
    stacks = _load_stacks(cfg)
    pool = len(candidate_terms(stacks, cfg["mode"]))
    print(f"candidate pool size: {pool}")
    try:
        model, fm = fit_model(plots, stacks, cfg["mode"], k_max=int(cfg["k_max"]), m=int(cfg["m"]))
    except GeometryError as exc:
        raise InputError("E-GEOM", str(exc)) from None
    Path(cfg["output"]).write_text(model.to_json())
    report = {
        "terms": model.term_names,
        "n": model.n,
        "adj_r2": model.adj_r2,
        "bic": model.bic,
        "max_vif": model.max_vif,
        "candidate_pool_size": pool,
        "plots_excluded": fm.dropped,
    }
    if cfg.get("report"):
        Path(cfg["report"]).write_text(_dump(report))
    print(_dump(report), end="")
    _write_manifest(cfg["output"], cfg, [cfg["plots"], *cfg["stacks"].values()])
    return EXIT_OK


def cmd_estimate(cfg: dict) -> int:
    _require(cfg, "plots", "stacks", "mask", "model", "area", "output")
    if cfg["accounting"] not in ACCOUNTING:
        raise InputError("E-SCHEMA", f"accounting must be one of {ACCOUNTING}")
    area = cfg["area"]
    if not (isinstance(area, (int, float)) and math.isfinite(area) and area > 0):
        raise InputError("E-RANGE", f"area must be > 0 ha, got {area}")
    plots = _load_plots(cfg)
    stacks = _load_stacks(cfg)
    mask = _load_raster(cfg["mask"], "mask")
    model = _load_model(cfg)
    try:
        report, dmap, stats, synthetic = run_estimate(
            plots, stacks, mask, model, float(area), cfg["accounting"], int(cfg["workers"])
        )
    except GeometryError as exc:
        raise InputError("E-GEOM", str(exc)) from None
    except KeyError as exc:
        raise InputError("E-SCHEMA", str(exc.args[0])) from None
    out = report.to_dict()
    out["accounting"] = cfg["accounting"]
    out["synthetic_mean_t_ha"] = synthetic
    out["model_terms"] = model.term_names
    out["map_stats"] = stats.to_dict()
    Path(cfg["output"]).write_text(_dump(out))
    inputs = [cfg["plots"], *cfg["stacks"].values(), cfg["mask"], cfg["model"]]
    if cfg.get("map"):
        Path(cfg["map"]).write_bytes(write_raster(dmap))
    _write_manifest(cfg["output"], cfg, inputs)
    print(_dump(out), end="")
    return EXIT_OK


def cmd_predict(cfg: dict) -> int:
    _require(cfg, "stacks", "mask", "model", "map")
    stacks = _load_stacks(cfg)
    mask = _load_raster(cfg["mask"], "mask")
    model = _load_model(cfg)
    try:
        dmap, stats = predict_map(model, stacks, mask, workers=int(cfg["workers"]))
    except GeometryError as exc:
        raise InputError("E-GEOM", str(exc)) from None
    except KeyError as exc:
        raise InputError("E-SCHEMA", str(exc.args[0])) from None
    Path(cfg["map"]).write_bytes(write_raster(dmap))
    if cfg.get("output"):
        Path(cfg["output"]).write_text(_dump(stats.to_dict()))
    _write_manifest(cfg["map"], cfg, [*cfg["stacks"].values(), cfg["mask"], cfg["model"]])
    print(_dump(stats.to_dict()), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    _require(cfg, "output")
    sim = dict(cfg.get("simulation") or {})
    sim.setdefault("seed", cfg["seed"])
    problems = []
    if not isinstance(cfg["replicates"], int) or cfg["replicates"] < 100:
        problems.append(f"replicates must be an integer >= 100, got {cfg['replicates']}")
    try:
        config = SimConfig.from_dict(sim)
        config.validate()
    except SimConfigError as exc:
        problems.extend(exc.fields)
    except TypeError as exc:
        problems.append(str(exc))
    if not isinstance(cfg["n"], int) or cfg["n"] < 2:
        problems.append(f"n must be an integer >= 2, got {cfg['n']}")
    if problems:
        for p in problems:
            _emit(f"E-CONFIG: {p}")
        return EXIT_INFEASIBLE
    if cfg["n"] > config.n_pixels:
        _emit(f"E-CONFIG: n={cfg['n']} exceeds n_pixels={config.n_pixels}")
        return EXIT_INFEASIBLE

    report, reps = monte_carlo(
        config,
        cfg["n"],
        cfg["replicates"],
        mode=cfg["mode"],
        k_max=int(cfg.get("sim_k_max", 3)),
        m=int(cfg.get("sim_m", 10)),
        return_replicates=True,
    )
    d = report.to_dict()
    d["config"] = {k: v for k, v in vars(config).items()}
    Path(cfg["output"]).write_text(_dump(d))
    if cfg.get("replicates_csv"):
        Path(cfg["replicates_csv"]).write_text(replicates_csv(reps))
    _write_manifest(cfg["output"], cfg, [cfg["config"]] if cfg.get("config") else [])
    print(_dump({k: d[k] for k in ("R", "n", "n_failed", "bias_be", "bias_ma", "empirical_re", "coverage_be")}), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agbchange", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, stacks=True, mask=False, model=False):
        p.add_argument("--config", help="JSON settings file; flags override its values")
        if stacks:
            p.add_argument("--stack", action="append", metavar="EPOCH=PATH", help="BGRID stack, e.g. t2=s2_2019.bgrid")
        if mask:
            p.add_argument("--mask", help="forest mask (BGRID, band 'mask')")
        if model:
            p.add_argument("--model", help="model JSON written by 'fit'")

    p = sub.add_parser("validate", help="check inputs for format and geometry problems")
    common(p, mask=True, model=True)
    p.add_argument("--plots")
    p.add_argument("--area", type=float)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", help="select and fit a ΔAGB model")
    common(p)
    p.add_argument("--plots")
    p.add_argument("--mode", choices=["bi_temporal", "uni_temporal"])
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--m", type=int, help="subsets kept per size")
    p.add_argument("--output", help="model JSON path")
    p.add_argument("--report", help="optional fit report JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("estimate", help="BE and MA totals with a ΔAGB map")
    common(p, mask=True, model=True)
    p.add_argument("--plots")
    p.add_argument("--area", type=float, help="total land area (ha)")
    p.add_argument("--accounting", choices=list(ACCOUNTING))
    p.add_argument("--workers", type=int)
    p.add_argument("--output", help="report JSON path")
    p.add_argument("--map", help="optional ΔAGB map (BGRID) path")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("predict", help="ΔAGB map only")
    common(p, mask=True, model=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--map", help="output BGRID path")
    p.add_argument("--output", help="optional map statistics JSON path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="Monte Carlo check on a synthetic population")
    common(p, stacks=False)
    p.add_argument("--n", type=int, help="plots per replicate")
    p.add_argument("--replicates", type=int)
    p.add_argument("--mode", choices=["bi_temporal", "uni_temporal"])
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="MC report JSON path")
    p.add_argument("--replicates-csv", dest="replicates_csv")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return args.func(cfg)
    except InputError as exc:
        _emit(str(exc))
        return EXIT_INPUT
    except (SelectionInfeasibleError, InsufficientDataError, EstimationError) as exc:
        _emit(f"E-INFEASIBLE: {exc}")
        return EXIT_INFEASIBLE
    except (FormatError, ValueError) as exc:
        _emit(f"E-SCHEMA: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
