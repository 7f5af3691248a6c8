"""Usable region estimation.

Records are ordered by confidence (descending, ties by ascending id). For
every prefix of that order a bootstrap lower confidence bound of the pooled
correctness statistic is computed; the usable region is the LARGEST prefix
whose bound meets the requirement, even if some shorter prefixes fail.

A prefix whose scores are all equal has that value as its bound (no
resampling), so constant pools are reproduced exactly.

Bootstrap draws follow the counter-based contract in :mod:`ureval.rng`, so
each prefix is evaluated independently of the others and the result does not
depend on evaluation order or thread count.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import os

import numba
import numpy as np

from . import rng
from .records import EvaluationRecord, InputError, check_unique

# TBB in this ecosystem is often too old and numba warns on every launch
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

DEFAULT_REPLICATES = 99
DEFAULT_CI_PERCENTILE = 2.5
# clear-failure margin for the early-exit scan; far above lerp rounding error
_SCAN_MARGIN = 1e-12


@dataclass(frozen=True)
class Statistic:
    """Pooled statistic: the mean, or the ``q``-th percentile of the pool."""

    q: float | None = None

    def __post_init__(self) -> None:
        if self.q is not None and not 0.0 < self.q < 100.0:
            raise InputError(f"percentile statistic needs 0 < q < 100, got {self.q}")

    @property
    def is_mean(self) -> bool:
        return self.q is None

    @property
    def name(self) -> str:
        return "mean" if self.q is None else f"p{self.q:g}"

    @classmethod
    def parse(cls, text: str) -> "Statistic":
        t = text.strip().lower()
        if t == "mean":
            return cls()
        if t.startswith("p"):
            try:
                return cls(float(t[1:]))
            except ValueError:
                pass
        raise InputError(f"unknown statistic {text!r}; use mean, p2, p5 or p<q>")


class TiePolicy(enum.Enum):
    PREFIX = "prefix"  # count exactly the satisfying prefix
    EXPAND = "expand"  # also admit records tied with tau* outside the prefix


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = DEFAULT_REPLICATES
    ci_percentile: float = DEFAULT_CI_PERCENTILE
    statistic: Statistic = field(default_factory=Statistic)
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.replicates, (int, np.integer)) or self.replicates < 1:
            raise InputError(f"replicates must be >= 1, got {self.replicates!r}")
        if not 0.0 < self.ci_percentile < 50.0:
            raise InputError(f"ci_percentile must be in (0, 50), got {self.ci_percentile}")
        if not 0 <= int(self.seed) <= rng.MASK64:
            raise InputError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "replicates": int(self.replicates),
            "ci_percentile": float(self.ci_percentile),
            "statistic": self.statistic.name,
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class PrefixEvaluation:
    prefix_size: int
    threshold: float
    mu: float
    ci_lower: float
    satisfied: bool


@dataclass(frozen=True)
class UsableRegion:
    tau_star: float
    p_star: float
    requirement: float
    n_usable: int
    empty: bool

    @classmethod
    def empty_region(cls, requirement: float) -> "UsableRegion":
        return cls(1.0, 0.0, requirement, 0, True)


# -- numba kernels -----------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _draw(key, counter):
    z = key + (counter + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _quantile_sorted(s, frac):
    # matches np.percentile(method="linear") bit for bit
    n = s.shape[0]
    h = (n - 1) * frac
    if h >= n - 1:
        return s[n - 1]
    lo = int(math.floor(h))
    t = h - lo
    a = s[lo]
    b = s[lo + 1]
    d = b - a
    if t >= 0.5:
        return b - d * (1.0 - t)
    return a + d * t


@numba.njit(cache=True)
def _replicate_stat(pool, k, key, b, stat_frac, buf):
    base = np.uint64(b) * np.uint64(k)
    kf = float(k)
    if stat_frac < 0.0:
        total = 0.0
        for j in range(k):
            u = _draw(key, base + np.uint64(j))
            total += pool[int(float(u >> np.uint64(11)) * 1.1102230246251565e-16 * kf)]
        return total / kf
    for j in range(k):
        u = _draw(key, base + np.uint64(j))
        buf[j] = pool[int(float(u >> np.uint64(11)) * 1.1102230246251565e-16 * kf)]
    return _quantile_sorted(np.sort(buf[:k]), stat_frac)


@numba.njit(cache=True)
def _is_constant(pool, k):
    for j in range(1, k):
        if pool[j] != pool[0]:
            return False
    return True


@numba.njit(cache=True)
def _prefix_lower(pool, k, key, replicates, ci_frac, stat_frac, buf, stats):
    if _is_constant(pool, k):
        return pool[0]
    for b in range(replicates):
        stats[b] = _replicate_stat(pool, k, key, b, stat_frac, buf)
    return _quantile_sorted(np.sort(stats), ci_frac)


@numba.njit(cache=True, parallel=True)
def _trace_kernel(pool, keys, replicates, ci_frac, stat_frac):
    n = pool.shape[0]
    out = np.empty(n)
    for i in numba.prange(n):
        buf = np.empty(n)
        stats = np.empty(replicates)
        out[i] = _prefix_lower(pool, i + 1, keys[i], replicates, ci_frac, stat_frac, buf, stats)
    return out


@numba.njit(cache=True, nogil=True)
def _scan_kernel(pool, keys, replicates, ci_frac, stat_frac, requirement, margin):
    # Largest k with lower(k) >= requirement, scanning k = n .. 1.  A prefix is
    # abandoned once enough replicates fall clearly below the requirement that
    # the order statistic bounding the lower quantile must be below it too.
    n = pool.shape[0]
    buf = np.empty(n)
    stats = np.empty(replicates)
    h = (replicates - 1) * ci_frac
    need_fail = int(math.floor(h)) + 2
    if need_fail > replicates:
        need_fail = replicates + 1
    for i in range(n - 1, -1, -1):
        k = i + 1
        if _is_constant(pool, k):
            if pool[0] >= requirement:
                return k
            continue
        fails = 0
        aborted = False
        for b in range(replicates):
            v = _replicate_stat(pool, k, keys[i], b, stat_frac, buf)
            stats[b] = v
            if v < requirement - margin:
                fails += 1
                if fails >= need_fail:
                    aborted = True
                    break
        if aborted:
            continue
        if _quantile_sorted(np.sort(stats), ci_frac) >= requirement:
            return k
    return 0


# -- public API --------------------------------------------------------------

def prefix_keys(seed: int, n: int) -> np.ndarray:
    """Stream keys for prefixes ``1..n``: ``derive_seed(seed, k)``."""
    # derive_seed(seed, k) == finalizer(mix64(seed) + (k + 1) * GAMMA)
    return rng.stream_u64(rng.mix64(seed), 1, n)


def _stat_frac(config: BootstrapConfig) -> float:
    return -1.0 if config.statistic.is_mean else config.statistic.q / 100.0


def bootstrap_ci_lower(pool: Sequence[float], config: BootstrapConfig, stream_key: int | None = None) -> float:
    """Lower bootstrap bound of the configured statistic over ``pool``.

    Draws ``config.replicates`` resamples of ``len(pool)`` with replacement
    from the counter stream ``stream_key`` (default: the key of prefix
    ``len(pool)`` under ``config.seed``) and returns the ``ci_percentile``-th
    percentile of the replicate statistics, linearly interpolated.
    """
    arr = np.ascontiguousarray(pool, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError("bootstrap pool must be a non-empty 1-D sequence")
    k = arr.size
    key = rng.derive_seed(config.seed, k) if stream_key is None else stream_key & rng.MASK64
    return float(
        _prefix_lower(arr, k, np.uint64(key), int(config.replicates), config.ci_percentile / 100.0,
                      _stat_frac(config), np.empty(k), np.empty(int(config.replicates)))
    )


def _validate(records: Sequence[EvaluationRecord], requirement: float | None = None) -> None:
    if not records:
        raise InputError("empty record set")
    check_unique(records)
    if requirement is not None and not (math.isfinite(requirement) and 0.0 <= requirement <= 1.0):
        raise InputError(f"requirement must be in [0, 1], got {requirement}")


def order_by_confidence(records: Sequence[EvaluationRecord]) -> list[EvaluationRecord]:
    """Confidence descending, ties broken by ascending id."""
    return sorted(records, key=lambda r: (-r.confidence, r.id))


def _region_from_prefix(ordered, k: int, requirement: float, tie_policy: TiePolicy) -> UsableRegion:
    n = len(ordered)
    if k == 0:
        return UsableRegion.empty_region(requirement)
    tau = ordered[k - 1].confidence
    if tie_policy is TiePolicy.EXPAND:
        while k < n and ordered[k].confidence == tau:
            k += 1
    return UsableRegion(tau, k / n, requirement, k, False)


def set_threads(threads: int | None) -> None:
    """Limit kernel parallelism; output never depends on it."""
    if threads is None:
        return
    if threads < 1:
        raise InputError(f"threads must be >= 1, got {threads}")
    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def prefix_lowers(ordered_scores: np.ndarray, config: BootstrapConfig) -> np.ndarray:
    """Bootstrap lower bound for every prefix of already-ordered scores."""
    pool = np.ascontiguousarray(ordered_scores, dtype=np.float64)
    return _trace_kernel(pool, prefix_keys(config.seed, pool.size), int(config.replicates),
                         config.ci_percentile / 100.0, _stat_frac(config))


def _trace(ordered, lowers: np.ndarray, requirement: float) -> list[PrefixEvaluation]:
    scores = np.array([r.score for r in ordered])
    mus = np.cumsum(scores) / np.arange(1, len(scores) + 1)
    return [
        PrefixEvaluation(k + 1, ordered[k].confidence, float(mus[k]), float(lowers[k]),
                         bool(lowers[k] >= requirement))
        for k in range(len(ordered))
    ]


def ure(
    records: Sequence[EvaluationRecord],
    requirement: float = 0.9,
    config: BootstrapConfig | None = None,
    tie_policy: TiePolicy = TiePolicy.PREFIX,
) -> tuple[UsableRegion, list[PrefixEvaluation]]:
    """Usable region for ``requirement`` plus the full per-prefix trace."""
    config = config or BootstrapConfig()
    _validate(records, requirement)
    ordered = order_by_confidence(records)
    lowers = prefix_lowers(np.array([r.score for r in ordered]), config)
    satisfied = np.flatnonzero(lowers >= requirement)
    k = int(satisfied[-1]) + 1 if satisfied.size else 0
    return _region_from_prefix(ordered, k, requirement, tie_policy), _trace(ordered, lowers, requirement)


def select_prefix(
    ordered_scores: np.ndarray, requirement: float, config: BootstrapConfig, use_bootstrap: bool = True
) -> int:
    """Size of the largest satisfying prefix of confidence-ordered scores (0 if none)."""
    scores = np.ascontiguousarray(ordered_scores, dtype=np.float64)
    if use_bootstrap:
        return int(_scan_kernel(scores, prefix_keys(config.seed, scores.size), int(config.replicates),
                                config.ci_percentile / 100.0, _stat_frac(config), float(requirement),
                                _SCAN_MARGIN))
    ok = np.flatnonzero(prefix_statistics(scores, config.statistic) >= requirement)
    return int(ok[-1]) + 1 if ok.size else 0


def ure_region(
    records: Sequence[EvaluationRecord],
    requirement: float = 0.9,
    config: BootstrapConfig | None = None,
    tie_policy: TiePolicy = TiePolicy.PREFIX,
    use_bootstrap: bool = True,
) -> UsableRegion:
    """Region only, without the trace; same answer as :func:`ure`.

    Scans from the longest prefix down and stops at the first that
    satisfies, abandoning clearly failing prefixes early. With
    ``use_bootstrap=False`` the bound is replaced by the plain prefix mean.
    """
    config = config or BootstrapConfig()
    _validate(records, requirement)
    ordered = order_by_confidence(records)
    k = select_prefix(np.array([r.score for r in ordered]), requirement, config, use_bootstrap)
    return _region_from_prefix(ordered, k, requirement, tie_policy)


def prefix_statistics(ordered_scores: np.ndarray, statistic: Statistic) -> np.ndarray:
    """Plain (non-bootstrapped) statistic of every prefix."""
    scores = np.asarray(ordered_scores, dtype=np.float64)
    if statistic.is_mean:
        return np.cumsum(scores) / np.arange(1, scores.size + 1)
    return np.array([np.percentile(scores[:k], statistic.q) for k in range(1, scores.size + 1)])


def trace_to_csv(trace: Sequence[PrefixEvaluation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prefix_size", "threshold", "mu", "ci_lower", "satisfied"])
    for p in trace:
        w.writerow([p.prefix_size, repr(p.threshold), repr(p.mu), repr(p.ci_lower),
                    "true" if p.satisfied else "false"])
    return buf.getvalue()


@dataclass(frozen=True)
class UsabilityDiagram:
    rows: tuple[tuple[float, UsableRegion], ...]
    model_label: str = "model"

    @property
    def requirements(self) -> list[float]:
        return [r for r, _ in self.rows]


def check_grid(requirements: Sequence[float]) -> list[float]:
    grid = [float(r) for r in requirements]
    if not grid:
        raise InputError("requirement grid is empty")
    for r in grid:
        if not (math.isfinite(r) and 0.0 <= r <= 1.0):
            raise InputError(f"requirement {r} outside [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("requirement grid must be strictly increasing")
    return grid


def usability_diagram(
    records: Sequence[EvaluationRecord],
    requirements: Sequence[float],
    config: BootstrapConfig | None = None,
    model_label: str = "model",
    tie_policy: TiePolicy = TiePolicy.PREFIX,
) -> UsabilityDiagram:
    """Usable region for each requirement, sharing one set of prefix bounds.

    Because the bounds are computed once, the satisfying prefixes for a
    higher requirement are a subset of those for a lower one, so p* never
    increases and tau* never decreases along the grid.
    """
    config = config or BootstrapConfig()
    grid = check_grid(requirements)
    _validate(records)
    ordered = order_by_confidence(records)
    lowers = prefix_lowers(np.array([r.score for r in ordered]), config)
    rows = []
    for req in grid:
        ok = np.flatnonzero(lowers >= req)
        k = int(ok[-1]) + 1 if ok.size else 0
        rows.append((req, _region_from_prefix(ordered, k, req, tie_policy)))
    return UsabilityDiagram(tuple(rows), model_label)
