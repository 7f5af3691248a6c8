"""On-disk formats: tensor files and per-sample record CSVs.

Tensor file layout: one line of UTF-8 JSON ``{"byte_order": "little",
"dtype": "f32" | "u8", "shape": [H, W] | [H, W, C]}`` terminated by ``\\n``,
immediately followed by the raw row-major little-endian payload. Probability
maps are ``f32``; masks are ``u8``.

Records CSV: header ``id,score,confidence``, one row per sample. Values are
written as the shortest decimal that round-trips the double exactly, which
is at least as precise as the 9 significant digits readers must honour.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import DEFAULT_THRESHOLD, MetricKind, RasterPair, confidence_estimate, correctness_detail
from .records import EvaluationRecord, InputError

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
RECORD_FIELDS = ("id", "score", "confidence")


class TensorFormatError(InputError):
    """Malformed tensor header or payload."""


class RecordsFileError(InputError):
    """Unparseable or out-of-range row in a records CSV."""


def encode_tensor(array: np.ndarray, dtype: str) -> bytes:
    if dtype not in _DTYPES:
        raise TensorFormatError(f"unsupported dtype {dtype!r}; use f32 or u8")
    arr = np.asarray(array)
    if arr.ndim not in (2, 3):
        raise TensorFormatError(f"tensor must be 2-D or 3-D, got {arr.ndim}-D")
    header = {"byte_order": "little", "dtype": dtype, "shape": [int(d) for d in arr.shape]}
    line = json.dumps(header, sort_keys=True, separators=(", ", ": ")) + "\n"
    return line.encode("utf-8") + np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()


def decode_tensor(data: bytes) -> tuple[np.ndarray, str]:
    """Parse tensor bytes into ``(array, dtype_name)``."""
    nl = data.find(b"\n")
    if nl < 0:
        raise TensorFormatError("missing header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise TensorFormatError("header must be a JSON object")
    dtype = header.get("dtype")
    shape = header.get("shape")
    if dtype not in _DTYPES:
        raise TensorFormatError(f"header dtype {dtype!r} not one of f32, u8")
    if header.get("byte_order", "little") != "little":
        raise TensorFormatError(f"unsupported byte_order {header.get('byte_order')!r}")
    if (not isinstance(shape, list) or len(shape) not in (2, 3)
            or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape)):
        raise TensorFormatError(f"header shape {shape!r} must be [H, W] or [H, W, C]")
    payload = data[nl + 1:]
    expected = math.prod(shape) * _DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise TensorFormatError(f"payload has {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(shape), dtype


def write_tensor(path: str | Path, array: np.ndarray, dtype: str) -> None:
    Path(path).write_bytes(encode_tensor(array, dtype))


def read_tensor(path: str | Path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())[0]


def load_pair(prob_path: str | Path, mask_path: str | Path) -> RasterPair:
    prob, pdt = decode_tensor(Path(prob_path).read_bytes())
    mask, mdt = decode_tensor(Path(mask_path).read_bytes())
    if pdt != "f32":
        raise TensorFormatError(f"{prob_path}: probability map must be f32, got {pdt}")
    if mdt != "u8":
        raise TensorFormatError(f"{mask_path}: mask must be u8, got {mdt}")
    if mask.ndim != 2:
        raise TensorFormatError(f"{mask_path}: mask must be [H, W], got shape {list(mask.shape)}")
    return RasterPair(prob.astype(np.float64), mask)


@dataclass
class SkipReport:
    """Files not turned into records, and samples flagged during extraction."""

    skipped: list[tuple[str, str]] = field(default_factory=list)  # (file, reason)
    empty_masks: list[str] = field(default_factory=list)  # ids scored 1.0 by convention

    def to_text(self) -> str:
        lines = [f"skip\t{name}\t{reason}" for name, reason in self.skipped]
        lines += [f"empty-mask\t{sid}\tprediction and ground truth both empty; score set to 1.0"
                  for sid in self.empty_masks]
        return "".join(line + "\n" for line in lines)


def _index_dir(directory: Path, side: str, report: SkipReport) -> dict[str, Path]:
    by_stem: dict[str, list[Path]] = {}
    for p in directory.iterdir():
        if p.is_file() and not p.name.startswith("."):
            by_stem.setdefault(p.stem, []).append(p)
    out = {}
    for stem, paths in by_stem.items():
        if len(paths) > 1:
            for p in paths:
                report.skipped.append((str(p), f"ambiguous: several {side} files share base name {stem!r}"))
        else:
            out[stem] = paths[0]
    return out


def match_pairs(pred_dir: str | Path, gt_dir: str | Path, report: SkipReport) -> list[tuple[str, Path, Path]]:
    """Pair prediction and ground-truth files by base filename, sorted by id."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise InputError(f"not a directory: {d}")
    preds = _index_dir(pred_dir, "prediction", report)
    gts = _index_dir(gt_dir, "ground-truth", report)
    for stem in sorted(preds.keys() - gts.keys()):
        report.skipped.append((str(preds[stem]), "no matching ground-truth file"))
    for stem in sorted(gts.keys() - preds.keys()):
        report.skipped.append((str(gts[stem]), "no matching prediction file"))
    return [(stem, preds[stem], gts[stem]) for stem in sorted(preds.keys() & gts.keys())]


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def load_pairs(pred_dir, gt_dir, threads: int = 1) -> tuple[list[tuple[str, RasterPair]], SkipReport]:
    """Load every matched pair; unreadable ones go to the skip report."""
    report = SkipReport()
    matched = match_pairs(pred_dir, gt_dir, report)

    def load(item):
        stem, pp, gp = item
        try:
            return stem, load_pair(pp, gp), None
        except (InputError, OSError) as exc:
            return stem, None, f"{pp.name} / {gp.name}: {exc}"

    pairs = []
    for stem, pair, err in _map(load, matched, threads):
        if err is not None:
            report.skipped.append((stem, err))
        else:
            pairs.append((stem, pair))
    report.skipped.sort()
    if not pairs:
        raise InputError(f"zero matched pairs between {pred_dir} and {gt_dir}")
    return pairs, report


def extract_records(
    pred_dir: str | Path,
    gt_dir: str | Path,
    metric: MetricKind = MetricKind.F1,
    threshold: float = DEFAULT_THRESHOLD,
    threads: int = 1,
) -> tuple[list[EvaluationRecord], SkipReport]:
    """One record per matched pair: (base filename, correctness, confidence), sorted by id."""
    pairs, report = load_pairs(pred_dir, gt_dir, threads)

    def score(item):
        stem, pair = item
        detail = correctness_detail(pair, metric, threshold)
        return EvaluationRecord(stem, detail.score, confidence_estimate(pair)), detail.empty

    records = []
    for rec, empty in _map(score, pairs, threads):
        records.append(rec)
        if empty:
            report.empty_masks.append(rec.id)
    return records, report


def _fmt(x: float) -> str:
    return repr(float(x))


def write_records(records: Sequence[EvaluationRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([r.id, _fmt(r.score), _fmt(r.confidence)])


def read_records(path: str | Path) -> list[EvaluationRecord]:
    records: list[EvaluationRecord] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RecordsFileError(f"{path}: empty file, expected header id,score,confidence")
        if [h.strip() for h in header] != list(RECORD_FIELDS):
            raise RecordsFileError(f"{path}:1: header must be id,score,confidence, got {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise RecordsFileError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            sid = row[0].strip()
            try:
                score, conf = float(row[1]), float(row[2])
            except ValueError:
                raise RecordsFileError(f"{path}:{line}: non-numeric value in {row[1:]!r}") from None
            for name, v in (("score", score), ("confidence", conf)):
                if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                    raise RecordsFileError(f"{path}:{line}: {name}={row[1 if name == 'score' else 2].strip()} outside [0, 1]")
            if sid in seen:
                raise RecordsFileError(f"{path}:{line}: duplicate id {sid!r} (first at line {seen[sid]})")
            seen[sid] = line
            records.append(EvaluationRecord(sid, score, conf))
    return records
