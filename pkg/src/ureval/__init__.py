"""Usability evaluation of prediction models from per-sample correctness and confidence."""

from .metrics import (
    MetricKind,
    RasterPair,
    brier,
    ccrc,
    confidence_estimate,
    correctness_score,
    ece_binned,
    ece_per_sample,
    nll,
)
from .records import EvaluationRecord, InputError
from .region import (
    BootstrapConfig,
    PrefixEvaluation,
    Statistic,
    TiePolicy,
    UsabilityDiagram,
    UsableRegion,
    bootstrap_ci_lower,
    ure,
    usability_diagram,
)
from .robustness import RobustnessConfig, SyntheticModelSpec, estimate_and_test, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig", "EvaluationRecord", "InputError", "MetricKind", "PrefixEvaluation",
    "RasterPair", "RobustnessConfig", "Statistic", "SyntheticModelSpec", "TiePolicy",
    "UsabilityDiagram", "UsableRegion", "bootstrap_ci_lower", "brier", "ccrc",
    "confidence_estimate", "correctness_score", "ece_binned", "ece_per_sample",
    "estimate_and_test", "generate_synthetic", "nll", "ure", "usability_diagram",
]
