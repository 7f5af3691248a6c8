"""Per-sample evaluation records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class InputError(ValueError):
    """Invalid user-supplied input (bad values, shapes, empty sets)."""


@dataclass(frozen=True)
class EvaluationRecord:
    """One test sample: its id, correctness score and confidence."""

    id: str
    score: float
    confidence: float

    def __post_init__(self) -> None:
        for name in ("score", "confidence"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InputError(f"record {self.id!r}: {name}={value!r} outside [0, 1]")


def check_unique(records: Iterable[EvaluationRecord]) -> None:
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise InputError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)


def as_arrays(records: Sequence[EvaluationRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(scores, confidences)`` as float64 arrays."""
    scores = np.fromiter((r.score for r in records), dtype=np.float64, count=len(records))
    conf = np.fromiter((r.confidence for r in records), dtype=np.float64, count=len(records))
    return scores, conf


def from_arrays(scores, confidences, ids: Sequence[str] | None = None) -> list[EvaluationRecord]:
    scores = np.asarray(scores, dtype=np.float64)
    confidences = np.asarray(confidences, dtype=np.float64)
    if scores.shape != confidences.shape or scores.ndim != 1:
        raise InputError("scores and confidences must be 1-D arrays of equal length")
    if ids is None:
        width = max(4, len(str(len(scores))))
        ids = [f"s{i:0{width}d}" for i in range(len(scores))]
    records = [EvaluationRecord(i, float(s), float(c)) for i, s, c in zip(ids, scores, confidences)]
    check_unique(records)
    return records
