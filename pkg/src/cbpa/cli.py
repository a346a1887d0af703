"""Command line entry point: run, sweep, export, validate."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, RunConfig, dump_config, load_config, parse_config, set_key
from .simworld import MissionError, TraceBundle, run_mission

OUTPUT_ROOT_ENV = "CBPA_OUTPUT_ROOT"
EXPORT_KINDS = {
    "battery-by-option": ["t", "vehicle", "kappa", "option"],
    "opinion-trajectories": ["t", "vehicle", "option", "z"],
}
EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


# -- outputs -------------------------------------------------------------------

def write_atomic(dest: Path, files: dict) -> Path:
    """Write ``files`` (name -> text) into a temp dir next to ``dest``, then rename it into place."""
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{dest.name}.", dir=dest.parent))
    try:
        for name, text in files.items():
            (tmp / name).write_text(text)
        if dest.exists():
            shutil.rmtree(dest)
        os.replace(tmp, dest)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return dest


def default_out(cfg: RunConfig, out: str | None, stem: str | None = None) -> Path:
    if out:
        return Path(out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "cbpa-out"))
    return root / (stem or f"{cfg.scenario}-seed{cfg.seed}")


def bundle_files(cfg: RunConfig, bundle: TraceBundle) -> dict:
    return {
        "trace.csv": bundle.trace_csv(),
        "events.jsonl": bundle.events_jsonl(),
        "metrics.json": bundle.metrics_json(),
        "config.yaml": dump_config(cfg),
        "digest.txt": bundle.digest() + "\n",
    }


def execute(cfg: RunConfig) -> TraceBundle:
    return run_mission(cfg.world, cfg.build_pack(), cfg.seed, record_every=cfg.record_every)


def run_to_dir(cfg: RunConfig, dest: Path) -> tuple[int, dict]:
    """Run one mission and write its artifacts; on failure write a diagnostic record instead."""
    try:
        bundle = execute(cfg)
    except MissionError as exc:
        diag = {"status": "failed", "scenario": cfg.scenario, "seed": cfg.seed, **exc.record()}
        write_atomic(dest, {"diagnostic.json": json.dumps(diag, sort_keys=True, indent=2) + "\n",
                            "config.yaml": dump_config(cfg)})
        return EXIT_FAILED, diag
    write_atomic(dest, bundle_files(cfg, bundle))
    return EXIT_OK, bundle.metrics


# -- sweep ---------------------------------------------------------------------

def parse_grid(items) -> list[tuple[str, list]]:
    grid = []
    for item in items or []:
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise ConfigError("--grid", f"expected KEY=v1,v2,..., got {item!r}")
        grid.append((key, [yaml.safe_load(v) for v in values.split(",")]))
    return grid


def grid_points(doc: dict, grid) -> list[tuple[dict, dict]]:
    """Cartesian product of the grid as (assignment, config document) pairs."""
    keys = [k for k, _ in grid]
    points = []
    for combo in itertools.product(*(vals for _, vals in grid)):
        d = doc
        for k, v in zip(keys, combo):
            d = set_key(d, k, v)
        points.append((dict(zip(keys, combo)), d))
    return points


def _sweep_point(args) -> dict:
    index, assignment, doc, seeds, out_dir = args
    row = {"point": index, **assignment, "seeds": " ".join(map(str, seeds))}
    try:
        values = []
        for s in seeds:
            cfg = parse_config({**doc, "seed": s})
            status, metrics = run_to_dir(cfg, Path(out_dir) / f"point-{index:03d}" / f"seed-{s}")
            if status != EXIT_OK:
                raise MissionError(metrics["step"], metrics["check"], metrics["detail"])
            values.append(float(metrics[cfg.spec.primary_metric]))
        row.update(metric=cfg.spec.primary_metric, value=float(np.mean(values)), status="ok", error="")
    except (ConfigError, MissionError) as exc:
        row.update(metric="", value=float("nan"), status="failed", error=str(exc))
    return row


def sweep(doc: dict, grid, seeds, out_dir: Path, jobs: int = 1) -> list[dict]:
    """One metrics row per grid point (mean over ``seeds``), best first, failures last."""
    base = parse_config(doc)
    tasks = [(i, a, d, list(seeds), str(out_dir)) for i, (a, d) in enumerate(grid_points(doc, grid))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    sign = 1.0 if base.spec.lower_is_better else -1.0
    rows.sort(key=lambda r: (r["status"] != "ok", sign * r["value"] if r["status"] == "ok" else 0.0, r["point"]))
    return rows


def rows_csv(rows) -> str:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# -- export --------------------------------------------------------------------

def export_rows(trace_text: str, kind: str) -> list[list[str]]:
    """Long-format table for ``kind`` from trace CSV text; cell strings are copied verbatim."""
    if kind not in EXPORT_KINDS:
        raise ValueError(f"unknown export kind {kind!r}; expected one of {sorted(EXPORT_KINDS)}")
    reader = csv.reader(io.StringIO(trace_text))
    header = next(reader)
    col = {name: j for j, name in enumerate(header)}
    rows = [EXPORT_KINDS[kind]]
    z_cols = [(name[2:], j) for name, j in col.items() if name.startswith("z_")]
    for r in reader:
        if kind == "battery-by-option":
            rows.append([r[col["t"]], r[col["id"]], r[col["kappa"]], r[col["option"]]])
        else:
            for option, j in z_cols:
                rows.append([r[col["t"]], r[col["id"]], option, r[j]])
    return rows


def export_trace(trace_path, kind: str) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(export_rows(Path(trace_path).read_text(), kind))
    return buf.getvalue()


# -- entry point -----------------------------------------------------------------

def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = parse_config({**cfg.effective(), "seed": args.seed})
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    dest = default_out(cfg, args.out)
    status, result = run_to_dir(cfg, dest)
    if status != EXIT_OK:
        print(json.dumps(result, sort_keys=True), file=sys.stderr)
        return status
    print(f"wrote {dest}")
    print(json.dumps({k: v for k, v in result.items() if not isinstance(v, (list, dict))}, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    grid = parse_grid(args.grid)
    doc = cfg.effective()
    seeds = range(cfg.seed, cfg.seed + args.replicates)
    dest = default_out(cfg, args.out, stem=f"{cfg.scenario}-sweep")
    rows = sweep(doc, grid, seeds, dest / "points", args.jobs)
    text = rows_csv(rows)
    (dest).mkdir(parents=True, exist_ok=True)
    write_atomic(dest / "summary", {"summary.csv": text, "config.yaml": dump_config(cfg)})
    sys.stdout.write(text)
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_FAILED


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    text = export_trace(run_dir / "trace.csv", args.kind)
    dest = Path(args.out) if args.out else run_dir / f"{args.kind}.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_name(f".{dest.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, dest)
    print(f"wrote {dest}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbpa", description="Opinion-driven team allocation missions.")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one mission and write trace, events, metrics and config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<scenario>-seed<N>)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a parameter grid and write a summary table")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", action="append", metavar="KEY=v1,v2,...",
                   help="dotted config key and values; repeat for a product grid")
    s.add_argument("--seed", type=int, help="first seed (default: the config seed)")
    s.add_argument("--replicates", type=int, default=1, help="seeds per grid point")
    s.add_argument("--jobs", type=int, default=1, help="grid points run in parallel")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("export", help="write a long-format table from a run's trace")
    e.add_argument("run_dir")
    e.add_argument("--kind", required=True, choices=sorted(EXPORT_KINDS))
    e.add_argument("--out", help="output file (default <run_dir>/<kind>.csv)")
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("validate", help="check a config and print the effective config")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"status": "invalid_config", "path": exc.path, "message": exc.message}), file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(json.dumps({"status": "error", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
