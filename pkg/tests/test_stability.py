import csv
import math

import numpy as np
import pytest

from znorm_lab.stability import (CSV_COLUMNS, ChainSpec, case_analysis, chain_gradient,
                                 convergence_blowup_demo, is_divergent, scalar_chain_autodiff,
                                 trained_chain_experiment)
from znorm_lab.transforms import TransformPipeline

GAINS = [i / 10 for i in range(10)]


def test_chain_examples():
    assert chain_gradient(ChainSpec(10, 0.5, False)) == 9.765625e-4
    assert chain_gradient(ChainSpec(10, 0.5, True)) == 57.6650390625
    for depth in (1, 7, 50):
        assert chain_gradient(ChainSpec(depth, 0.0, True)) == 1.0
    assert chain_gradient(ChainSpec(3, 0.5, False, terminal_error=-2.0)) == 0.25
    assert chain_gradient(ChainSpec(5000, 9.0, True)) == math.inf
    with pytest.raises(ValueError):
        ChainSpec(0, 0.5, True)


def test_chain_grid_properties():
    for g in GAINS:
        plain = [chain_gradient(ChainSpec(L, g, False)) for L in range(1, 51)]
        skip = [chain_gradient(ChainSpec(L, g, True)) for L in range(1, 51)]
        assert all(v <= g for v in plain)
        if g > 0:
            assert all(b < a for a, b in zip(plain, plain[1:]))
        assert all(v >= 1.0 for v in skip)


@pytest.mark.parametrize("skip", [False, True])
def test_closed_form_matches_backprop(skip):
    for g in GAINS[1:]:
        for L in (1, 2, 5, 10, 25, 50):
            spec = ChainSpec(L, g, skip)
            closed, auto = chain_gradient(spec), scalar_chain_autodiff(spec)
            assert abs(closed - auto) <= 1e-10 * abs(closed)


def test_case_analysis():
    amp = case_analysis(0.5, 1e-8)
    assert amp.regime == "amplifying" and amp.scale_factor > 1
    assert abs(amp.scale_factor - 2.0) < 1e-7
    att = case_analysis(2.0, 1e-8)
    assert att.regime == "attenuating" and att.scale_factor < 1
    assert abs(att.scale_factor - 0.5) < 1e-8
    neutral = case_analysis(1 - 1e-8, 1e-8)
    assert neutral.scale_factor == 1.0 and neutral.regime == "neutral"
    with pytest.raises(ValueError):
        case_analysis(-1.0)


def test_blowup_demo():
    table = convergence_blowup_demo([1e-1, 1e-3, 1e-6], 1e-8)
    scales = [f for _, f in table]
    np.testing.assert_allclose(scales, [1 / (1e-1 + 1e-8), 1 / (1e-3 + 1e-8), 1 / (1e-6 + 1e-8)], rtol=1e-15)
    assert scales[0] == pytest.approx(10, rel=1e-6) and scales[2] == pytest.approx(9.90099e5, rel=1e-5)
    assert all(b > a for a, b in zip(scales, scales[1:]))
    tiny = convergence_blowup_demo([1e-3, 1e-20], 1e-8)
    assert tiny[-1][1] == pytest.approx(1e8, rel=1e-11)  # 1e8 * (1 - 1e-12)
    with pytest.raises(ValueError):
        convergence_blowup_demo([0.1, 0.1])
    with pytest.raises(ValueError):
        convergence_blowup_demo([])


def test_divergence_rule():
    assert is_divergent(float("nan")) and is_divergent(float("inf")) and is_divergent(-2e12)
    assert not is_divergent(1e11)


@pytest.mark.slow
def test_deep_residual_znorm_trains_without_nan():
    pipe = TransformPipeline.from_config([{"name": "znorm"}])
    traj = trained_chain_experiment(16, True, pipe, steps=2000, seed=0)
    assert traj.nan_flags == []
    assert len(traj.losses) == 2000
    assert all(math.isfinite(v) for v in traj.losses)
    assert traj.losses[-1] < traj.losses[0]


def test_zero_init_identity_pipeline_keeps_zero_loss():
    traj = trained_chain_experiment(4, False, None, steps=25, zero_init=True, zero_targets=True)
    assert traj.losses == [0.0] * 25


def test_trajectory_determinism_and_csv(tmp_path):
    pipe = TransformPipeline.from_config([{"name": "znorm"}])
    a = trained_chain_experiment(4, True, pipe, steps=30, seed=3)
    b = trained_chain_experiment(4, True, pipe, steps=30, seed=3)
    assert a.losses == b.losses and a.rows == b.rows
    # one row per weight matrix per step: stem, 2 per block, head
    assert len(a.rows) == 30 * (2 + 2 * 4)
    path = tmp_path / "traj.csv"
    a.write_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == len(a.rows)
    assert float(rows[0]["scale_factor"]) == pytest.approx(1 / (float(rows[0]["grad_std"]) + 1e-8), rel=1e-12)


def test_trained_experiment_limits():
    with pytest.raises(ValueError):
        trained_chain_experiment(65, True)
    with pytest.raises(ValueError):
        trained_chain_experiment(4, True, steps=0)
