"""Command-line interface: ``ureval scores|eval|ure|diagram|robustness``.

Exit codes: 0 success, 2 input or configuration error, 3 internal invariant
violation. Error lines on stderr start with ``error:``.

Every command writes a run manifest (resolved configuration, input digests,
tool version, seed) next to its primary output. Thread count is not part of
the manifest because it never changes results.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from . import metrics as M
from .raster_io import extract_records, load_pairs, read_records, write_records
from .records import InputError
from .region import (
    DEFAULT_CI_PERCENTILE,
    DEFAULT_REPLICATES,
    BootstrapConfig,
    Statistic,
    TiePolicy,
    set_threads,
    trace_to_csv,
    ure,
    usability_diagram,
)
from .reporting import ComparisonTable, ModelSummary, diagram_to_csv, render_diagram, render_summary
from .robustness import RobustnessConfig, estimate_and_test

EVAL_METRICS = ("ccrc", "ece", "ece-binned", "brier", "nll")
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"error: {message}\n")


def parse_grid(text: str) -> list[float]:
    """``start:stop:step``, stop included within 1e-9."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise InputError(f"requirement grid {text!r} must look like start:stop:step") from None
    if step <= 0 or stop < start:
        raise InputError(f"requirement grid {text!r} needs step > 0 and stop >= start")
    grid = []
    i = 0
    while start + i * step <= stop + 1e-9:
        grid.append(round(start + i * step, 10))
        i += 1
    return grid


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_digests(paths: dict[str, str | None]) -> dict:
    out = {}
    for name, p in paths.items():
        if p is None:
            continue
        path = Path(p)
        if path.is_dir():
            out[name] = {f.name: _digest(f) for f in sorted(path.iterdir()) if f.is_file()}
        elif path.is_file():
            out[name] = _digest(path)
    return out


def _write_manifest(args, command: str, config: dict, inputs: dict, default_out: str | None) -> None:
    target = args.manifest or (f"{default_out}.manifest.json" if default_out else None)
    if target is None:
        return
    manifest = {
        "command": command,
        "config": config,
        "inputs": _input_digests(inputs),
        "tool_version": __version__,
        "seed": config.get("seed"),
    }
    Path(target).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _threads(args) -> int:
    value = args.threads if args.threads is not None else os.environ.get("URE_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise InputError(f"thread count {value!r} is not an integer") from None
    if n < 1:
        raise InputError(f"thread count must be >= 1, got {n}")
    set_threads(n)
    return n


def _bootstrap(args, seed: int | None = None) -> BootstrapConfig:
    return BootstrapConfig(
        replicates=args.replicates,
        ci_percentile=args.ci_percentile,
        statistic=Statistic.parse(args.statistic),
        seed=args.seed if seed is None else seed,
    )


def cmd_scores(args) -> int:
    threads = _threads(args)
    metric = M.MetricKind.parse(args.metric)
    records, report = extract_records(args.pred_dir, args.gt_dir, metric, args.threshold, threads)
    write_records(records, args.out)
    _write_text(f"{args.out}.skips.txt", report.to_text())
    for name, reason in report.skipped:
        print(f"warning: skipped {name}: {reason}", file=sys.stderr)
    config = {"metric": metric.value, "threshold": args.threshold, "seed": None}
    _write_manifest(args, "scores", config, {"pred_dir": args.pred_dir, "gt_dir": args.gt_dir}, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _metric_list(text: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    bad = [n for n in names if n not in EVAL_METRICS]
    if bad or not names:
        raise InputError(f"unknown metrics {bad}; valid: {','.join(EVAL_METRICS)}")
    return names


def cmd_eval(args) -> int:
    threads = _threads(args)
    names = _metric_list(args.metrics)
    need_rasters = [n for n in names if n in ("brier", "nll")]
    if need_rasters and not (args.pred_dir and args.gt_dir):
        raise InputError(f"metrics {','.join(need_rasters)} need --pred-dir and --gt-dir")
    records = read_records(args.records)
    values: dict[str, float] = {}
    if "ccrc" in names:
        values["ccrc"] = M.ccrc(records)
    if "ece" in names:
        values["ece"] = M.ece_per_sample(records)
    if "ece-binned" in names:
        values["ece_binned"] = M.ece_binned(records, args.bins)
    if need_rasters:
        loaded, report = load_pairs(args.pred_dir, args.gt_dir, threads)
        for name, reason in report.skipped:
            print(f"warning: skipped {name}: {reason}", file=sys.stderr)
        pairs = [p for _, p in loaded]
        if "brier" in names:
            values["brier"] = M.brier(pairs)
        if "nll" in names:
            res = M.nll(pairs, args.epsilon)
            values["nll"] = res.per_pixel
            values["nll_total"] = res.total

    regions, grid = [], []
    config = {"metrics": names, "bins": args.bins, "epsilon": args.epsilon, "format": args.format,
              "seed": args.seed}
    if args.requirements:
        grid = parse_grid(args.requirements)
        boot = _bootstrap(args)
        regions = [r for _, r in usability_diagram(records, grid, boot).rows]
        config.update(requirements=grid, bootstrap=boot.to_dict())
    label = args.label or Path(args.records).stem
    table = ComparisonTable(
        [ModelSummary(label, len(records), M.overall_score(records), values, regions)], grid
    )
    render_summary(table, args.out, args.format)
    inputs = {"records": args.records, "pred_dir": args.pred_dir, "gt_dir": args.gt_dir}
    _write_manifest(args, "eval", config, inputs, args.out)
    for k, v in values.items():
        print(f"{k}={v!r}")
    return 0


def cmd_ure(args) -> int:
    _threads(args)
    records = read_records(args.records)
    boot = _bootstrap(args)
    policy = TiePolicy(args.tie_policy)
    region, trace = ure(records, args.requirement, boot, policy)
    assert region.empty or region.n_usable == round(region.p_star * len(records)), "p* does not match n_usable"
    if args.trace_out:
        _write_text(args.trace_out, trace_to_csv(trace))
    result = {"tau_star": region.tau_star, "p_star": region.p_star, "n_usable": region.n_usable,
              "empty": region.empty, "requirement": region.requirement}
    if args.out:
        _write_text(args.out, json.dumps(result, indent=2) + "\n")
    config = {"requirement": args.requirement, "bootstrap": boot.to_dict(), "tie_policy": policy.value,
              "seed": args.seed}
    _write_manifest(args, "ure", config, {"records": args.records}, args.out or args.trace_out)
    print(f"tau_star={region.tau_star!r} p_star={region.p_star!r} n_usable={region.n_usable} "
          f"empty={'true' if region.empty else 'false'}")
    return 0


def cmd_diagram(args) -> int:
    _threads(args)
    paths = args.records
    labels = args.label or []
    if labels and len(labels) != len(paths):
        raise InputError(f"{len(labels)} --label values for {len(paths)} --records files")
    labels = labels or [Path(p).stem for p in paths]
    if len(set(labels)) != len(labels):
        raise InputError(f"duplicate model labels: {labels}")
    grid = parse_grid(args.requirements)
    boot = _bootstrap(args)
    policy = TiePolicy(args.tie_policy)
    diagrams = [usability_diagram(read_records(p), grid, boot, label, policy) for p, label in zip(paths, labels)]
    _write_text(args.out_csv, diagram_to_csv(diagrams))
    if args.out_svg:
        render_diagram(diagrams, args.out_svg)
    config = {"labels": labels, "requirements": grid, "bootstrap": boot.to_dict(), "tie_policy": policy.value,
              "seed": args.seed}
    _write_manifest(args, "diagram", config, {f"records[{i}]": p for i, p in enumerate(paths)}, args.out_csv)
    print(f"wrote {len(grid) * len(diagrams)} rows to {args.out_csv}")
    return 0


def cmd_robustness(args) -> int:
    threads = _threads(args)
    records = read_records(args.records)
    config = RobustnessConfig(
        requirement=args.requirement,
        splits_per_round=args.splits,
        rounds=args.rounds,
        use_bootstrap=not args.no_bootstrap,
        bootstrap=_bootstrap(args),  # per-split bootstrap seeds are derived from --seed
        seed=args.seed,
    )
    report = estimate_and_test(records, config, threads)
    _write_text(args.out, report.to_json())
    if args.out_csv:
        _write_text(args.out_csv, report.to_csv())
    _write_manifest(args, "robustness", config.to_dict(), {"records": args.records}, args.out)
    print(f"violation_mean={report.violation_mean!r} violation_std={report.violation_std!r}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $URE_THREADS or 1); never changes output")
    p.add_argument("--manifest", default=None, help="manifest path (default: <output>.manifest.json)")


def _add_bootstrap(p: argparse.ArgumentParser) -> None:
    p.add_argument("--replicates", type=int, default=DEFAULT_REPLICATES)
    p.add_argument("--ci-percentile", type=float, default=DEFAULT_CI_PERCENTILE)
    p.add_argument("--statistic", default="mean", help="mean, p2, p5 or p<q>")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ureval", description="Evaluate model usability from per-sample correctness and confidence.")
    parser.add_argument("--version", action="version", version=f"ureval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scores", help="per-sample records from prediction/ground-truth tensors")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--metric", default="f1", help="f1, dice or pixel-accuracy")
    p.add_argument("--threshold", type=float, default=M.DEFAULT_THRESHOLD)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("eval", help="CCRC / ECE / Brier / NLL summary")
    p.add_argument("--records", required=True)
    p.add_argument("--metrics", default="ccrc,ece,ece-binned")
    p.add_argument("--bins", type=int, default=M.DEFAULT_BINS)
    p.add_argument("--epsilon", type=float, default=M.DEFAULT_EPSILON)
    p.add_argument("--pred-dir")
    p.add_argument("--gt-dir")
    p.add_argument("--requirements", help="optional start:stop:step grid of usable regions to include")
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_bootstrap(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ure", help="usable region for one requirement")
    p.add_argument("--records", required=True)
    p.add_argument("--requirement", type=float, default=0.9)
    p.add_argument("--tie-policy", choices=[t.value for t in TiePolicy], default="prefix")
    p.add_argument("--trace-out")
    p.add_argument("--out", help="region as JSON")
    _add_bootstrap(p)
    _add_common(p)
    p.set_defaults(func=cmd_ure)

    p = sub.add_parser("diagram", help="usability diagram over a requirement grid")
    p.add_argument("--records", action="append", required=True)
    p.add_argument("--label", action="append")
    p.add_argument("--requirements", default="0.6:0.95:0.05")
    p.add_argument("--tie-policy", choices=[t.value for t in TiePolicy], default="prefix")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-svg")
    _add_bootstrap(p)
    _add_common(p)
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("robustness", help="estimate-and-test on repeated half splits")
    p.add_argument("--records", required=True)
    p.add_argument("--requirement", type=float, default=0.9)
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--out-csv")
    _add_bootstrap(p)
    _add_common(p)
    p.set_defaults(func=cmd_robustness)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"error: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
