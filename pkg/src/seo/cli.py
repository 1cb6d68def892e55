"""Command-line entry point: ``seo-sim run | table build | report``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .config import Mode, RunConfig, config_from_dict, config_to_dict
from .harness import BatchResult, Status, aggregate_reports, run_episode, summarize, table_for
from .ledger import GainReport, write_summary


def parse_seeds(text: str) -> list[int]:
    """Parse ``"a..b"`` (inclusive) or a comma separated list of ints."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _raw(path) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _with_overrides(data: dict, args) -> RunConfig:
    data = dict(data)
    if args.tau_ms is not None:
        data["tau"] = args.tau_ms / 1e3
    if args.mode is not None:
        data["mode"] = args.mode
    if args.filtered is not None:
        data["filtered"] = args.filtered
    if args.obstacles is not None:
        data["obstacle_count"] = args.obstacles
    if args.seeds is not None:
        data["seeds"] = parse_seeds(args.seeds)
    if args.out is not None:
        data["output_dir"] = args.out
    return config_from_dict(data)


def batch_name(cfg: RunConfig) -> str:
    filt = "filtered" if cfg.filtered else "unfiltered"
    return f"batch_{cfg.mode.value}_{filt}_{cfg.obstacle_count}obs"


def cmd_run(args) -> int:
    cfg = _with_overrides(_raw(args.config), args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = batch_name(cfg)
    table = table_for(cfg)
    runs = []
    for seed in cfg.seeds:
        trace, ledger = run_episode(cfg, seed, table, keep_records=False)
        summary = summarize(cfg, trace, ledger)
        runs.append(summary)
        stem = out / f"{name}_seed{seed}"
        ledger.write_csv(f"{stem}.csv")
        meta = dict(seed=seed, status=summary.status.value, periods=summary.periods,
                    min_clearance=_finite(summary.min_clearance),
                    staleness_violations=summary.staleness_violations)
        if summary.report is not None:
            write_summary(f"{stem}.json", summary.report, **meta)
        else:
            Path(f"{stem}.json").write_text(json.dumps(meta, indent=2))
    done = [r.report for r in runs if r.status is Status.COMPLETED and r.report is not None]
    if not done:
        raise RuntimeError("no episode completed the route")
    batch = BatchResult(aggregate_reports(done), runs)
    payload = {
        "mode": cfg.mode.value,
        "filtered": cfg.filtered,
        "obstacle_count": cfg.obstacle_count,
        "tau": cfg.tau,
        "seeds": list(cfg.seeds),
        "statuses": {str(r.seed): r.status.value for r in batch.runs},
        "collisions": sum(r.status.value == "collided" for r in batch.runs),
        "min_clearance": _finite(min(r.min_clearance for r in batch.runs)),
        "staleness_violations": sum(r.staleness_violations for r in batch.runs),
        "config": config_to_dict(cfg),
        "report": batch.report.to_dict(),
    }
    (out / f"{name}.json").write_text(json.dumps(payload, indent=2))
    print(f"{name}: {len(batch.completed)}/{len(batch.runs)} completed")
    print(batch.report.format())
    return 0


def _finite(v: float):
    # no obstacles means no clearance; JSON has no infinity
    return v if math.isfinite(v) else None


def cmd_table_build(args) -> int:
    data = _raw(args.config)
    data["table"] = {**data.get("table", {}), "path": None}
    table = table_for(config_from_dict(data))
    table.save(args.out)
    finite = float((table.values < table.horizon_cap).mean())
    print(f"wrote {args.out}: shape {list(table.values.shape)}, {100 * finite:.1f}% of cells below the horizon cap")
    return 0


def cmd_report(args) -> int:
    root = Path(args.dir)
    batches = sorted(root.glob("batch_*obs.json"))
    if not batches:
        raise FileNotFoundError(f"no batch_*obs.json files in {root}")
    rows = []
    hist_rows = []
    for path in batches:
        data = json.loads(path.read_text())
        report = GainReport.from_dict(data["report"])
        filt = "filtered" if data["filtered"] else "unfiltered"
        print(f"== {data['mode']} {filt} {data['obstacle_count']} obstacles ({path.name})")
        print(report.format())
        row = {"mode": data["mode"], "filtered": data["filtered"], "obstacles": data["obstacle_count"],
               "combined_gain": report.combined_gain, "mean_delta_max": report.mean_delta_max}
        row.update({f"gain_{k}": v for k, v in report.gains.items()})
        rows.append(row)
        for k, v in sorted(report.delta_histogram.items()):
            hist_rows.append({"mode": data["mode"], "filtered": data["filtered"],
                              "obstacles": data["obstacle_count"], "delta_max": k, "count": v})
    rows.sort(key=lambda r: (r["mode"], r["filtered"], r["obstacles"]))
    fields = list(dict.fromkeys(k for r in rows for k in r))
    with open(root / "gain_vs_obstacles.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    with open(root / "delta_histogram.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["mode", "filtered", "obstacles", "delta_max", "count"])
        w.writeheader()
        w.writerows(hist_rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seo-sim", description="Safety-aware energy optimization simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded batch and write ledgers and summaries")
    run.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    run.add_argument("--mode", choices=[m.value for m in Mode])
    g = run.add_mutually_exclusive_group()
    g.add_argument("--filtered", dest="filtered", action="store_true", default=None)
    g.add_argument("--unfiltered", dest="filtered", action="store_false")
    run.add_argument("--obstacles", type=int)
    run.add_argument("--tau-ms", type=float)
    run.add_argument("--seeds", help="inclusive range a..b or comma list")
    run.add_argument("--out", help="output directory")
    run.set_defaults(func=cmd_run)

    table = sub.add_parser("table", help="deadline table utilities")
    tsub = table.add_subparsers(dest="table_command", required=True)
    build = tsub.add_parser("build", help="precompute and save the deadline table")
    build.add_argument("--config")
    build.add_argument("--out", required=True)
    build.set_defaults(func=cmd_table_build)

    rep = sub.add_parser("report", help="summarize batch results in a directory")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError, TypeError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
