"""Command-line driver: ``hetsr {simulate,estimate,crb,sweep}``.

Every run reads one JSON config (see ``CONFIG_SCHEMA``), applies ``--seed``,
``--out`` and ``--set dotted.key=value`` overrides, validates the result and
writes its artifacts plus a ``manifest.json`` into the output directory. A
manifest can be passed back as ``--config`` to rerun the same job.

Exit status: 0 on success, 2 for configuration errors (nothing written),
1 for failures during the run (``error.json`` written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .estimator import SearchConfig, estimate
from .evaluation import (
    DEFAULT_BOOTSTRAPS,
    precision_record,
    resample_variances,
    run_sweep,
    sweep_curves,
    sweep_points,
    write_records_csv,
    _separations,
)
from .fisher import Scheme, fisher_curve
from .model import SourceKind, SourceParams
from .traces import GridSpec, load_batch, save_batch, synthesize_batch

MODES = ("simulate", "estimate", "crb", "sweep")

_number = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "mode": {"enum": list(MODES)},
    "seed": {"type": "integer", "minimum": 0},
    "source": _obj({
        "epsilon": {"type": "number", "minimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "t_c": _number,
        "omega_c": _number,
        "n_bar": {"type": "number", "minimum": 0},
        "kind": {"enum": [k.value for k in SourceKind]},
    }),
    "grid": _obj({"n_samples": {"type": "integer", "minimum": 2}, "t_min": _number, "t_max": _number}),
    "search": _obj({
        "t_center": {"type": ["number", "null"]},
        "omega_center": {"type": ["number", "null"]},
        "t_halfwidth": {"type": "number", "exclusiveMinimum": 0},
        "omega_halfwidth": {"type": "number", "exclusiveMinimum": 0},
        "coarse_points": {"type": "integer", "minimum": 3},
        "xatol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": _pos_int,
    }),
    "simulate": _obj({
        "n_signal": _pos_int,
        "n_noise": {"type": ["integer", "null"], "minimum": 1},
        "shot_noise": {"type": "boolean"},
        "write_traces": {"type": "boolean"},
    }),
    "estimate": _obj({
        "input": {"type": ["string", "null"]},
        "n_signal": _pos_int,
        "n_noise": {"type": ["integer", "null"], "minimum": 1},
        "bootstraps": {"type": "integer", "minimum": 0},
    }),
    "crb": _obj({
        "scheme": {"enum": [s.value for s in Scheme]},
        "epsilons": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "n_bar": {"type": "number", "minimum": 0},
    }),
    "sweep": _obj({
        "kind": {"enum": [k.value for k in SourceKind]},
        "epsilons": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "snrs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "n_signal": {"type": "integer", "minimum": 100},
        "n_noise": {"type": ["integer", "null"], "minimum": 100},
        "bootstraps": {"type": "integer", "minimum": 2},
        "workers": _pos_int,
    }),
    "output": _obj({"dir": {"type": "string"}}),
})


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


@dataclass
class SimulateConfig:
    n_signal: int = 10_000
    n_noise: int | None = None
    shot_noise: bool = True
    write_traces: bool = True


@dataclass
class EstimateConfig:
    input: str | None = None
    n_signal: int = 100_000
    n_noise: int | None = None
    bootstraps: int = DEFAULT_BOOTSTRAPS


@dataclass
class CrbConfig:
    scheme: str = Scheme.HETERODYNE_THERMAL.value
    epsilons: list = field(default_factory=lambda: [round(0.05 * i, 2) for i in range(1, 31)])
    n_bar: float = 10.0


@dataclass
class SweepConfig:
    kind: str = SourceKind.THERMAL.value
    epsilons: list = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 1.25, 1.5])
    snrs: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 50.0, 100.0, 200.0])
    n_signal: int = 100_000
    n_noise: int | None = None
    bootstraps: int = DEFAULT_BOOTSTRAPS
    workers: int = 1


@dataclass
class RunConfig:
    mode: str
    seed: int
    source: SourceParams
    grid: GridSpec
    search: SearchConfig
    simulate: SimulateConfig
    estimate: EstimateConfig
    crb: CrbConfig
    sweep: SweepConfig
    out: Path

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "source": self.source.to_dict(),
            "grid": self.grid.to_dict(),
            "search": asdict(self.search),
            "simulate": asdict(self.simulate),
            "estimate": asdict(self.estimate),
            "crb": asdict(self.crb),
            "sweep": asdict(self.sweep),
            "output": {"dir": str(self.out)},
        }


def _build(path, factory, values):
    try:
        return factory(**values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(raw: dict) -> RunConfig:
    """Validate a config mapping against the schema and its invariants."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = [str(p) for p in exc.absolute_path]
        if exc.validator == "additionalProperties":
            path.append(sorted(set(exc.instance) - set(exc.schema["properties"]))[0])
        raise ConfigError(".".join(path), exc.message) from None
    if "mode" not in raw:
        raise ConfigError("mode", "no mode given (config 'mode' key or subcommand)")
    source = _build("source", SourceParams, {"epsilon": 0.5, "n_bar": 50.0, **raw.get("source", {})})
    grid_raw = raw.get("grid")
    grid = _build("grid", GridSpec, grid_raw) if grid_raw is not None else GridSpec.around(source)
    cfg = RunConfig(
        mode=raw["mode"],
        seed=raw.get("seed", 0),
        source=source,
        grid=grid,
        search=_build("search", SearchConfig, raw.get("search", {})),
        simulate=_build("simulate", SimulateConfig, raw.get("simulate", {})),
        estimate=_build("estimate", EstimateConfig, raw.get("estimate", {})),
        crb=_build("crb", CrbConfig, raw.get("crb", {})),
        sweep=_build("sweep", SweepConfig, raw.get("sweep", {})),
        out=Path(raw.get("output", {}).get("dir", "out")),
    )
    if cfg.mode in ("simulate", "estimate"):
        try:
            grid.check_covers(source)
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None
    return cfg


def _set_dotted(d: dict, key: str, value):
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ConfigError(key, f"'{p}' is not a section")
    d[parts[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_raw_config(path) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    if isinstance(raw, dict) and raw.get("tool") == "hetsr" and "config" in raw:
        raw = raw["config"]  # a manifest from a previous run
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    return raw


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

PLOT_COLUMNS = ["panel", "epsilon", "precision", "precision_err", "bias", "fi_het", "fi_ds"]


def _fmt(v) -> str:
    return repr(float(v))


def emit_plot_data(records, curves, path) -> list[Path]:
    """Tidy plot table, one row per record, panels in ascending SNR order.

    ``curves`` maps each panel (nominal SNR) to its ``(heterodyne, direct)``
    Fisher curves; their epsilon grids must match the panel's records.
    Besides ``path``, one ``panel_S<value>.csv`` per panel is written next to it.
    """
    path = Path(path)
    panels: dict[float, list] = {}
    for r in records:
        panels.setdefault(r.n_bar_nominal, []).append(r)
    rows = []
    for panel in sorted(panels):
        recs = sorted(panels[panel], key=lambda r: r.epsilon_true)
        if panel not in curves:
            raise ValueError(f"no Fisher curves for panel {panel}")
        het, ds = curves[panel]
        eps = [r.epsilon_true for r in recs]
        for curve in (het, ds):
            if sorted(curve.epsilons.tolist()) != eps:
                raise ValueError(f"panel {panel}: {curve.scheme.value} curve grid does not match the records")
        fi_het = dict(zip(het.epsilons.tolist(), het.values.tolist()))
        fi_ds = dict(zip(ds.epsilons.tolist(), ds.values.tolist()))
        for r in recs:
            rows.append([panel, r.epsilon_true, r.precision, r.precision_err, r.bias,
                         fi_het[r.epsilon_true], fi_ds[r.epsilon_true]])

    written = [path]
    _write_rows(path, rows)
    for panel in sorted(panels):
        p = path.with_name(f"panel_S{panel:g}.csv")
        _write_rows(p, [row for row in rows if row[0] == panel])
        written.append(p)
    return written


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLOT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, artifacts, seeds: dict) -> Path:
    manifest = {
        "tool": "hetsr",
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
        "artifacts": {Path(a).name: _sha256(a) for a in artifacts},
    }
    path = cfg.out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def _json_clean(d):
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def run_simulate(cfg: RunConfig) -> list[Path]:
    s = cfg.simulate
    batch = synthesize_batch(cfg.source, cfg.grid, s.n_signal, s.n_noise, cfg.seed, s.shot_noise)
    out = []
    if s.write_traces:
        out.append(save_batch(batch, cfg.out / "traces.hsr"))
    report = estimate(batch, cfg.search)
    summary = cfg.out / "estimate.json"
    summary.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    out.append(summary)
    return out


def run_estimate(cfg: RunConfig) -> list[Path]:
    e = cfg.estimate
    if e.input:
        batch = load_batch(e.input)
    else:
        batch = synthesize_batch(cfg.source, cfg.grid, e.n_signal, e.n_noise, cfg.seed)
    report, proj = estimate(batch, cfg.search, full_output=True)
    result = {"report": report.to_dict()}
    csv_row = report.to_dict()
    if e.bootstraps >= 2 and proj is not None:
        values, degenerate = _separations(resample_variances(proj, e.bootstraps, cfg.seed))
        rec = precision_record(values, report.snr, batch.n_signal, batch.params.epsilon,
                               degenerate_count=int(degenerate.sum()))
        result["bootstrap"] = _json_clean(asdict(rec))
        csv_row.update({f"bootstrap_{k}": rec.__dict__[k] for k in
                        ("epsilon_hat_mean", "variance_of_estimator", "precision", "precision_err")})
    js = cfg.out / "estimate.json"
    js.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    table = cfg.out / "estimate.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(csv_row))
        writer.writerow([_cell(v) for v in csv_row.values()])
    return [js, table]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def run_crb(cfg: RunConfig) -> list[Path]:
    c = cfg.crb
    curve = fisher_curve(c.scheme, c.epsilons, c.n_bar)
    path = cfg.out / "fisher_curve.csv"
    curve.to_csv(path)
    return [path]


def run_sweep_mode(cfg: RunConfig) -> list[Path]:
    s = cfg.sweep
    points = sweep_points(s.epsilons, s.snrs, s.n_signal, s.n_noise, cfg.seed, s.kind)
    records = run_sweep(points, cfg.grid, cfg.search, s.bootstraps, s.workers)
    rec_path = cfg.out / "records.csv"
    write_records_csv(records, rec_path)
    ok = [r for r in records if r.status == "ok"]
    plot = emit_plot_data(ok, sweep_curves(ok), cfg.out / "plot_data.csv") if ok else []
    return [rec_path, *plot]


PIPELINES = {"simulate": run_simulate, "estimate": run_estimate, "crb": run_crb, "sweep": run_sweep_mode}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetsr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", type=Path, help="JSON config or a previous run's manifest")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path, value parsed as JSON")
    return parser


def _fail(record: dict, code: int, out_dir: Path | None = None) -> int:
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None and out_dir.is_dir():
        (out_dir / "error.json").write_text(text + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_raw_config(args.config) if args.config else {}
        raw = json.loads(json.dumps(raw))
        raw["mode"] = args.mode
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw.setdefault("output", {})["dir"] = str(args.out)
        for item in args.overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(item, "override must look like key=value")
            _set_dotted(raw, key, _parse_value(value))
        cfg = parse_config(raw)
    except ConfigError as exc:
        return _fail({"error": "config", "path": exc.path, "message": exc.message}, 2)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail({"error": "config", "path": str(args.config), "message": str(exc)}, 2)

    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        artifacts = PIPELINES[cfg.mode](cfg)
    except Exception as exc:
        module = type(exc).__module__.split(".")[-1] if type(exc).__module__.startswith("hetsr") else None
        return _fail({"error": type(exc).__name__, "module": module or _origin(exc),
                      "message": str(exc)}, 1, cfg.out)
    write_manifest(cfg, artifacts, {"seed": cfg.seed})
    return 0


def _origin(exc: BaseException) -> str:
    tb = exc.__traceback__
    origin = "cli"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("hetsr."):
            origin = name.split(".", 1)[1]
        tb = tb.tb_next
    return origin


if __name__ == "__main__":
    sys.exit(main())
