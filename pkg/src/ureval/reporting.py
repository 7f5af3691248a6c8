"""Summaries, diagram tables and the usability-diagram chart."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

from .records import InputError
from .region import UsabilityDiagram, UsableRegion

SCHEMA_VERSION = 1
# fixed column/key order for metric values
METRIC_ORDER = ("ccrc", "ece", "ece_binned", "brier", "nll", "nll_total")
BRIER_CONVENTION = (
    "single-channel maps: mean of (p - y)^2; multi-channel maps: mean over pixels of "
    "the squared error summed over channels against one-hot labels"
)
DIAGRAM_FIELDS = ("requirement", "model", "tau_star", "p_star", "n_usable", "empty")


@dataclass
class ModelSummary:
    label: str
    n: int
    mean_score: float
    metrics: dict[str, float] = field(default_factory=dict)
    regions: list[UsableRegion] = field(default_factory=list)


@dataclass
class ComparisonTable:
    models: list[ModelSummary]
    requirements: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        labels = [m.label for m in self.models]
        if len(set(labels)) != len(labels):
            raise InputError("duplicate model labels in comparison table")
        for m in self.models:
            unknown = set(m.metrics) - set(METRIC_ORDER)
            if unknown:
                raise InputError(f"{m.label}: unknown metrics {sorted(unknown)}")
            if [r.requirement for r in m.regions] != list(self.requirements):
                raise InputError(f"{m.label}: regions do not follow the table's requirement grid")


def _region_dict(r: UsableRegion) -> dict:
    return {"requirement": r.requirement, "tau_star": r.tau_star, "p_star": r.p_star,
            "n_usable": r.n_usable, "empty": r.empty}


def summary_to_json(table: ComparisonTable) -> str:
    table.validate()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "requirements": list(table.requirements),
        "metadata": dict(table.metadata, brier_convention=BRIER_CONVENTION),
        "models": [
            {
                "label": m.label,
                "n": m.n,
                "mean_score": m.mean_score,
                "metrics": {k: m.metrics[k] for k in METRIC_ORDER if k in m.metrics},
                "regions": [_region_dict(r) for r in m.regions],
            }
            for m in table.models
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def summary_from_json(text: str) -> ComparisonTable:
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"unsupported summary schema_version {doc.get('schema_version')!r}")
    models = [
        ModelSummary(m["label"], m["n"], m["mean_score"], dict(m["metrics"]),
                     [UsableRegion(**r) for r in m["regions"]])
        for m in doc["models"]
    ]
    meta = {k: v for k, v in doc["metadata"].items() if k != "brier_convention"}
    return ComparisonTable(models, list(doc["requirements"]), meta)


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def summary_columns(table: ComparisonTable) -> list[str]:
    cols = ["label", "n", "mean_score", *METRIC_ORDER]
    for r in table.requirements:
        cols += [f"tau_star@{r!r}", f"p_star@{r!r}"]
    return cols


def summary_to_csv(table: ComparisonTable) -> str:
    """One row per model: label, n, mean_score, metrics, then (tau*, p*) per requirement."""
    table.validate()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(summary_columns(table))
    for m in table.models:
        row = [m.label, m.n, _num(m.mean_score)] + [_num(m.metrics.get(k)) for k in METRIC_ORDER]
        for reg in m.regions:
            row += [_num(reg.tau_star), _num(reg.p_star)]
        w.writerow(row)
    return buf.getvalue()


def summary_from_csv(text: str) -> ComparisonTable:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    fixed = 3 + len(METRIC_ORDER)
    reqs = [float(h.split("@", 1)[1]) for h in header[fixed::2]]
    models = []
    for row in body:
        n = int(row[1])
        metrics = {k: float(v) for k, v in zip(METRIC_ORDER, row[3:fixed]) if v != ""}
        regions = []
        for i, req in enumerate(reqs):
            tau, p = float(row[fixed + 2 * i]), float(row[fixed + 2 * i + 1])
            regions.append(UsableRegion(tau, p, req, round(p * n), p == 0.0))
        models.append(ModelSummary(row[0], n, float(row[2]), metrics, regions))
    return ComparisonTable(models, reqs)


def _check_shared_grid(diagrams: Sequence[UsabilityDiagram]) -> list[float]:
    if not diagrams:
        raise InputError("no diagrams to render")
    grid = diagrams[0].requirements
    for d in diagrams[1:]:
        if d.requirements != grid:
            raise InputError(f"diagram {d.model_label!r} uses a different requirement grid")
    labels = [d.model_label for d in diagrams]
    if len(set(labels)) != len(labels):
        raise InputError("duplicate model labels")
    return grid


def diagram_to_csv(diagrams: Sequence[UsabilityDiagram]) -> str:
    """Rows ordered by requirement, then by model in input order."""
    grid = _check_shared_grid(diagrams)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAGRAM_FIELDS)
    for i, req in enumerate(grid):
        for d in diagrams:
            r = d.rows[i][1]
            w.writerow([repr(req), d.model_label, repr(r.tau_star), repr(r.p_star), r.n_usable,
                        "true" if r.empty else "false"])
    return buf.getvalue()


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def diagram_svg(diagrams: Sequence[UsabilityDiagram], title: str = "Usability diagram") -> str:
    """Line chart of p* (y) against the correctness requirement (x), one polyline per model."""
    grid = _check_shared_grid(diagrams)
    width, height = 720, 440
    left, right, top, bottom = 70, 180, 50, 60
    pw, ph = width - left - right, height - top - bottom
    x_lo, x_hi = grid[0], grid[-1]
    if math.isclose(x_lo, x_hi):
        x_lo, x_hi = x_lo - 0.05, x_hi + 0.05

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y: float) -> float:
        return top + (1.0 - y) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.2f}" y="28" text-anchor="middle" font-size="15">{escape(title)}</text>',
    ]
    for i in range(6):
        y = i / 5
        out.append(f'<line x1="{left}" y1="{py(y):.2f}" x2="{left + pw}" y2="{py(y):.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 8}" y="{py(y) + 4:.2f}" text-anchor="end">{y:.1f}</text>')
    for x in grid:
        out.append(f'<line x1="{px(x):.2f}" y1="{top + ph}" x2="{px(x):.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(x):.2f}" y="{top + ph + 19}" text-anchor="middle">{x:.2f}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15}" text-anchor="middle">Correctness requirement</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.2f})">Usable fraction p*</text>')
    for i, d in enumerate(diagrams):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(req):.2f},{py(r.p_star):.2f}" for req, r in d.rows)
        out.append(f'<polyline class="series" data-model="{escape(d.model_label, {chr(34): "&quot;"})}" '
                   f'points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for req, r in d.rows:
            out.append(f'<circle cx="{px(req):.2f}" cy="{py(r.p_star):.2f}" r="3" fill="{color}"/>')
        ly = top + 10 + 20 * i
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 40}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 46}" y="{ly + 4}">{escape(d.model_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_diagram(diagrams: Sequence[UsabilityDiagram], out_path, title: str = "Usability diagram") -> None:
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(diagram_svg(diagrams, title))


def render_summary(table: ComparisonTable, out_path, fmt: str = "json") -> None:
    if fmt == "json":
        text = summary_to_json(table)
    elif fmt == "csv":
        text = summary_to_csv(table)
    else:
        raise InputError(f"unknown summary format {fmt!r}; use json or csv")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
