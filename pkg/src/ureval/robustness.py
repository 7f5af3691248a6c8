"""Estimate-and-test robustness study and a synthetic record generator.

Each split shuffles the records, estimates the usable region on the first
half (which gets the extra record when n is odd) and checks the second half:
the split is a violation when the records of the second half with
confidence >= tau* have a pooled mean correctness below the requirement.
Splits with an empty estimated region, or with no qualifying second-half
record, are left out of the frequency and counted separately.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .records import EvaluationRecord, InputError, as_arrays, check_unique, from_arrays
from .region import BootstrapConfig, select_prefix


class DegenerateReport(InputError):
    """Every split of some round was excluded; no frequency can be formed."""


@dataclass(frozen=True)
class RobustnessConfig:
    requirement: float = 0.9
    splits_per_round: int = 100
    rounds: int = 20
    use_bootstrap: bool = True
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.splits_per_round < 1 or self.rounds < 1:
            raise InputError("splits_per_round and rounds must be >= 1")
        if not (math.isfinite(self.requirement) and 0.0 <= self.requirement <= 1.0):
            raise InputError(f"requirement must be in [0, 1], got {self.requirement}")

    def to_dict(self) -> dict:
        return {
            "requirement": self.requirement,
            "splits_per_round": self.splits_per_round,
            "rounds": self.rounds,
            "use_bootstrap": self.use_bootstrap,
            "bootstrap": self.bootstrap.to_dict(),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SplitOutcome:
    status: str  # "violation", "ok", "empty_region", "no_qualifying"
    per_sample_rate: float = float("nan")


@dataclass
class RoundSummary:
    frequency: float  # percent of counted splits that violated
    violations: int
    counted: int
    excluded_empty_region: int
    excluded_no_qualifying: int
    per_sample_violation_rate: float  # percent, averaged over counted splits


@dataclass
class RobustnessReport:
    violation_mean: float
    violation_std: float
    per_round_frequencies: list[float]
    rounds: list[RoundSummary]
    per_sample_violation_mean: float
    config: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RobustnessReport":
        data = json.loads(text)
        data["rounds"] = [RoundSummary(**r) for r in data["rounds"]]
        return cls(**data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "frequency", "violations", "counted", "excluded_empty_region",
                    "excluded_no_qualifying", "per_sample_violation_rate"])
        for i, r in enumerate(self.rounds):
            w.writerow([i, repr(r.frequency), r.violations, r.counted, r.excluded_empty_region,
                        r.excluded_no_qualifying, repr(r.per_sample_violation_rate)])
        return buf.getvalue()


def _run_split(scores, conf, rank, config: RobustnessConfig, rnd: int, split: int) -> SplitOutcome:
    n = scores.size
    perm = rng.permutation(n, rng.derive_seed(config.seed, 1, rnd, split))
    cut = (n + 1) // 2
    est, test = perm[:cut], perm[cut:]
    est = est[np.argsort(rank[est], kind="stable")]
    boot = BootstrapConfig(
        replicates=config.bootstrap.replicates,
        ci_percentile=config.bootstrap.ci_percentile,
        statistic=config.bootstrap.statistic,
        seed=rng.derive_seed(config.seed, 2, rnd, split),
    )
    k = select_prefix(scores[est], config.requirement, boot, config.use_bootstrap)
    if k == 0:
        return SplitOutcome("empty_region")
    tau = conf[est[k - 1]]
    qualifying = scores[test][conf[test] >= tau]
    if qualifying.size == 0:
        return SplitOutcome("no_qualifying")
    rate = float(np.count_nonzero(qualifying < config.requirement)) / qualifying.size
    violated = math.fsum(qualifying) / qualifying.size < config.requirement
    return SplitOutcome("violation" if violated else "ok", rate)


def estimate_and_test(
    records: Sequence[EvaluationRecord], config: RobustnessConfig, threads: int = 1
) -> RobustnessReport:
    """Repeated half-split validation of the estimated usable region."""
    if len(records) < 4:
        raise InputError(f"need at least 4 records for estimate-and-test, got {len(records)}")
    check_unique(records)
    scores, conf = as_arrays(records)
    order = sorted(range(len(records)), key=lambda i: (-records[i].confidence, records[i].id))
    rank = np.empty(len(records), dtype=np.int64)
    rank[order] = np.arange(len(records))

    jobs = [(r, s) for r in range(config.rounds) for s in range(config.splits_per_round)]
    run = lambda job: _run_split(scores, conf, rank, config, *job)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(j) for j in jobs]

    summaries = []
    for r in range(config.rounds):
        chunk = outcomes[r * config.splits_per_round:(r + 1) * config.splits_per_round]
        counts = {k: sum(o.status == k for o in chunk)
                  for k in ("violation", "ok", "empty_region", "no_qualifying")}
        counted = counts["violation"] + counts["ok"]
        if counted == 0:
            raise DegenerateReport(
                f"round {r}: all {len(chunk)} splits excluded "
                f"({counts['empty_region']} with an empty estimated region, "
                f"{counts['no_qualifying']} with no qualifying test record)"
            )
        rates = [o.per_sample_rate for o in chunk if o.status in ("violation", "ok")]
        summaries.append(RoundSummary(
            frequency=100.0 * counts["violation"] / counted,
            violations=counts["violation"],
            counted=counted,
            excluded_empty_region=counts["empty_region"],
            excluded_no_qualifying=counts["no_qualifying"],
            per_sample_violation_rate=100.0 * math.fsum(rates) / len(rates),
        ))
    freqs = np.array([s.frequency for s in summaries])
    return RobustnessReport(
        violation_mean=float(freqs.mean()),
        violation_std=float(freqs.std()),
        per_round_frequencies=[float(f) for f in freqs],
        rounds=summaries,
        per_sample_violation_mean=float(np.mean([s.per_sample_violation_rate for s in summaries])),
        config=config.to_dict(),
    )


@dataclass(frozen=True)
class SyntheticModelSpec:
    """Synthetic model outputs: confidence law, correctness link, noise.

    Confidence is drawn from a two-component uniform mixture: with
    probability ``high_weight`` from ``U(high_low, 1)``, otherwise from
    ``U(low_low, 1)``. Score is ``clip(link(confidence) + noise * N(0, 1), 0, 1)``
    where ``link`` is ``"logistic"`` (``1 / (1 + exp(-slope * (c - center)))``)
    or ``"identity"``.
    """

    n_samples: int = 1000
    link: str = "logistic"
    slope: float = 4.0
    center: float = 0.5
    noise: float = 0.08
    high_weight: float = 0.7
    high_low: float = 0.6
    low_low: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise InputError("n_samples must be >= 1")
        if self.link not in ("logistic", "identity"):
            raise InputError(f"unknown link {self.link!r}; use logistic or identity")
        if self.noise < 0 or self.slope <= 0:
            raise InputError("noise must be >= 0 and slope > 0")
        if not 0.0 <= self.high_weight <= 1.0:
            raise InputError("high_weight must be in [0, 1]")
        if not (0.0 <= self.high_low < 1.0 and 0.0 <= self.low_low < 1.0):
            raise InputError("mixture lower bounds must be in [0, 1)")

    def link_fn(self, c: np.ndarray) -> np.ndarray:
        if self.link == "identity":
            return c
        return 1.0 / (1.0 + np.exp(-self.slope * (c - self.center)))


def generate_synthetic(spec: SyntheticModelSpec) -> list[EvaluationRecord]:
    n = spec.n_samples
    pick = rng.stream_uniform(rng.derive_seed(spec.seed, 0), 0, n) < spec.high_weight
    u = rng.stream_uniform(rng.derive_seed(spec.seed, 1), 0, n)
    low = np.where(pick, spec.high_low, spec.low_low)
    conf = low + (1.0 - low) * u
    score = spec.link_fn(conf)
    if spec.noise > 0:
        score = score + spec.noise * rng.stream_normal(rng.derive_seed(spec.seed, 2), 0, n)
    return from_arrays(np.clip(score, 0.0, 1.0), np.clip(conf, 0.0, 1.0))
