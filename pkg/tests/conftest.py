import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ureval.raster_io import write_tensor  # noqa: E402

# Four samples with dyadic probabilities (exact in float32) and their
# hand-evaluated metric values.
RASTER_FIXTURE = {
    "a": (np.array([[0.875, 0.75], [0.25, 0.125]]), np.array([[1, 1], [0, 0]])),
    "b": (np.array([[0.75, 0.25], [0.75, 0.25]]), np.array([[1, 1], [0, 0]])),
    "c": (np.array([[[0.375, 0.625], [0.5, 0.5]]]), np.array([[1, 0]])),
    "d": (np.array([[0.625, 0.25]]), np.array([[0, 1]])),
}
# a: pred == gt; b: TP=1 FP=1 FN=1; c: only pixel 0 predicted (0.5 is not > 0.5); d: disjoint
FIXTURE_SCORES = {"a": 1.0, "b": 2 * 1 / (2 * 1 + 1 + 1), "c": 1.0, "d": 0.0}
FIXTURE_CONF = {
    "a": (0.875 + 0.75 + 0.75 + 0.875) / 4,
    "b": 0.75,
    "c": (0.625 + 0.5) / 2,
    "d": (0.625 + 0.75) / 2,
}
FIXTURE_BRIER = (
    (0.125**2 + 0.25**2 + 0.25**2 + 0.125**2)
    + (0.25**2 + 0.75**2 + 0.75**2 + 0.25**2)
    + ((0.375**2 + 0.375**2) + (0.5**2 + 0.5**2))
    + (0.625**2 + 0.75**2)
) / 12
FIXTURE_TRUE_PROBS = [0.875, 0.75, 0.75, 0.875, 0.75, 0.25, 0.25, 0.75, 0.625, 0.5, 0.375, 0.25]
FIXTURE_NLL_TOTAL = sum(-math.log(p) for p in FIXTURE_TRUE_PROBS)
# ranks: scores (3.5, 2, 3.5, 1), confidences (4, 3, 1, 2)
FIXTURE_CCRC = 0.5 / math.sqrt(4.5 * 5.0)


@pytest.fixture
def raster_dirs(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    for name, (prob, mask) in RASTER_FIXTURE.items():
        write_tensor(pred / f"{name}.ten", prob, "f32")
        write_tensor(gt / f"{name}.ten", mask, "u8")
    return pred, gt


ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; its line is printed in the terminal summary."""
    name = request.node.name

    def report(ok: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
        assert ok, detail

    yield report
    if name not in ACCEPTANCE_RESULTS:
        ACCEPTANCE_RESULTS[name] = (False, "raised before reporting")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
