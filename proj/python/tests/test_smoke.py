import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest

import pyroed

ROOT = Path(__file__).resolve().parents[2]

SMALL = {
    "name": "py_small",
    "seed": 5,
    "mesh": {"nx": 8, "ny": 8},
    "sensors": {"points": [[0.5, 0.25], [0.5, 0.75]]},
    "noise": {"variant": "two_sensor_correlated", "sigma": [0.05, 0.15], "rho": [0.0, 0.99]},
    "inference": {"n_saa": 2},
    "optimizer": {"budget": 2, "ensemble": 4, "max_outer_iterations": 2, "max_policy_iterations": 5},
    "landscape": {"designs": ["10", "01", "11"], "points_per_axis": 2},
    "compare": {"count": 4},
}


@pytest.fixture(scope="module", autouse=True)
def quiet():
    pyroed.set_log_level("error")


def test_r_poly_and_info_gain():
    assert pyroed.r_poly(2, np.array([0.25, 1.0, 4.0])) == pytest.approx(5.25, rel=1e-15)
    assert pyroed.info_gain_low_rank(np.array([1.0])) == pytest.approx(0.5 * (math.log(2) - 0.5))


def test_conditional_bernoulli():
    dist = pyroed.ConditionalBernoulli(np.array([0.2, 0.5, 0.8]), 2)
    assert dist.pmf([1, 1, 0]) == pytest.approx(1.0 / 21.0)
    total = sum(dist.pmf(list(d)) for d in itertools.product([0, 1], repeat=3))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert dist.inclusion_probs.sum() == pytest.approx(2.0, abs=1e-12)
    for d in dist.sample(3, 50):
        assert sum(d) == 2
    with pytest.raises(pyroed.RoedError):
        pyroed.ConditionalBernoulli(np.array([1.0, 1.0, 0.5]), 1)


def test_config_errors():
    bad = dict(SMALL, optimizer=dict(SMALL["optimizer"], budget=3))
    with pytest.raises(pyroed.ConfigError):
        pyroed.parse_config(json.dumps(bad))
    cfg = pyroed.parse_config(json.dumps(SMALL))
    assert cfg.budget == 2 and cfg.num_sensors == 2
    assert pyroed.parse_config(json.dumps(SMALL), 9).hash() != cfg.hash()
    assert pyroed.load_config(ROOT / "configs" / "two_sensor.json").budget == 2


def test_problem_value_and_gradient():
    cfg = pyroed.parse_config(json.dumps(SMALL))
    problem = pyroed.Problem(cfg)
    theta = problem.box.midpoint()
    both = problem.value([1, 1], theta)
    assert both >= max(problem.value([1, 0], theta), problem.value([0, 1], theta))
    value, grad = problem.value_and_gradient([1, 1], theta)
    assert value == both
    h = 1e-6
    e = np.zeros(3)
    e[0] = h
    fd = (problem.value([1, 1], theta + e) - problem.value([1, 1], theta - e)) / (2 * h)
    assert fd == pytest.approx(grad[0], rel=1e-4)
    assert problem.forward_solves([1, 1], theta, True) > problem.forward_solves([1, 1], theta)
    rows = pyroed.landscape(cfg, problem)
    assert len(rows) == 3 * 8


def test_run_verify_compare(tmp_path):
    cfg = pyroed.parse_config(json.dumps(SMALL))
    summary = pyroed.run(cfg, tmp_path)
    assert summary["design"] == [1, 1]
    assert summary["infeasible_designs"] == 0
    assert Path(summary["results"]).exists()
    ok, lines = pyroed.verify(cfg, tmp_path)
    assert ok, lines
    report = pyroed.compare(cfg, tmp_path)
    assert report["count"] == 4
