import numpy as np
import pytest

from ureval.metrics import ccrc, ece_per_sample
from ureval.records import InputError, as_arrays, from_arrays
from ureval.region import BootstrapConfig
from ureval.robustness import (
    DegenerateReport,
    RobustnessConfig,
    RobustnessReport,
    SyntheticModelSpec,
    estimate_and_test,
    generate_synthetic,
)


def test_generator_identity_noise_free():
    recs = generate_synthetic(SyntheticModelSpec(n_samples=200, link="identity", noise=0.0, seed=1))
    assert ece_per_sample(recs) == 0.0


def test_generator_monotone_link_rank_preserving():
    recs = generate_synthetic(SyntheticModelSpec(n_samples=300, noise=0.0, seed=2))
    assert ccrc(recs) == 1.0


def test_generator_deterministic_and_valid():
    spec = SyntheticModelSpec(n_samples=100, seed=5)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a == b
    assert generate_synthetic(SyntheticModelSpec(n_samples=100, seed=6)) != a
    s, c = as_arrays(a)
    assert s.min() >= 0 and s.max() <= 1 and c.min() >= 0 and c.max() <= 1


@pytest.mark.parametrize("kw", [dict(n_samples=0), dict(link="cubic"), dict(noise=-1), dict(high_weight=2)])
def test_generator_rejects_bad_params(kw):
    with pytest.raises(InputError):
        SyntheticModelSpec(**kw)


def test_all_ones_never_violate():
    recs = from_arrays(np.ones(30), np.linspace(0.2, 0.9, 30))
    rep = estimate_and_test(recs, RobustnessConfig(requirement=0.9, splits_per_round=10, rounds=3))
    assert rep.violation_mean == 0.0 and rep.per_round_frequencies == [0.0, 0.0, 0.0]


def test_too_few_records():
    with pytest.raises(InputError):
        estimate_and_test(from_arrays([1, 1, 1], [0.5, 0.6, 0.7]), RobustnessConfig())


def test_degenerate_when_every_region_empty():
    recs = from_arrays(np.zeros(10), np.linspace(0.1, 0.9, 10))
    with pytest.raises(DegenerateReport, match="empty estimated region"):
        estimate_and_test(recs, RobustnessConfig(requirement=0.5, splits_per_round=5, rounds=2))


def small_run(threads=1, **kw):
    recs = generate_synthetic(SyntheticModelSpec(n_samples=120, seed=3))
    s, _ = as_arrays(recs)
    cfg = RobustnessConfig(requirement=float(np.percentile(s, 70)), splits_per_round=12, rounds=4,
                           seed=9, **kw)
    return estimate_and_test(recs, cfg, threads=threads)


def test_accounting_and_determinism():
    rep = small_run()
    for r in rep.rounds:
        assert r.counted + r.excluded_empty_region + r.excluded_no_qualifying == 12
        assert 0 <= r.frequency <= 100
    assert len(rep.per_round_frequencies) == 4
    assert small_run(threads=4) == rep
    assert RobustnessReport.from_json(rep.to_json()) == rep
    assert rep.to_csv().splitlines()[0].startswith("round,frequency")


def test_ablation_and_statistic_options():
    no_boot = small_run(use_bootstrap=False)
    p5 = small_run(bootstrap=BootstrapConfig(statistic=__import__("ureval").Statistic(5.0)))
    assert no_boot.config["use_bootstrap"] is False
    assert p5.config["bootstrap"]["statistic"] == "p5"
