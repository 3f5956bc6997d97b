import math

import numpy as np
import pytest

from logoattack.dct import FrequencyIndex, basis_direction
from logoattack.dct_attack import (CoefficientLedger, LogoDCTOptimizer, OptimizerConfig,
                                   area_ratio_root, coefficient_count, optimize,
                                   perturbation_norms)
from logoattack.goals import Goal
from logoattack.oracle import Oracle, OracleResponse, QueryBudget
from logoattack.video import RegionMask

MASK = RegionMask(2, 3, 1.0, 4, 4, 10, 10)


class ScriptedOracle:
    """Scores with a fixed linear functional; never flips the label."""

    def __init__(self, weights, label=0):
        self.w = weights
        self.label = label
        self.budget = QueryBudget()

    @property
    def used(self):
        return self.budget.used

    def query(self, video):
        self.budget.charge()
        return OracleResponse(self.label, float(1 / (1 + math.exp(np.sum(self.w * video)))))


def _video(seed=0, shape=(2, 10, 10, 3)):
    return (0.3 + 0.4 * np.random.default_rng(seed).random(shape)).astype(np.float64)


def test_rho_and_count():
    assert area_ratio_root(RegionMask(0, 0, 0.5, 32, 32, 64, 64)) == 0.25
    assert coefficient_count((2, 10, 10, 3), MASK) == 96
    assert coefficient_count((2, 10, 10, 3), MASK, "global") == 600


def test_ledger_matches_brute_force():
    led = CoefficientLedger((2, 4, 4, 3), 0.2, 0.0)
    dims = (2, 4, 4, 3)
    moves = [(FrequencyIndex(0, 1, 2, 3), 1), (FrequencyIndex(1, 0, 0, 0), -1),
             (FrequencyIndex(0, 1, 2, 3), -1), (FrequencyIndex(1, 2, 3, 1), 1)]
    for idx, b in moves:
        led.apply(idx, b)
    brute = sum(g * 0.2 * basis_direction(i, dims) for i, g in led.gamma.items())
    assert np.max(np.abs(brute - led.raw)) < 1e-12
    assert np.max(np.abs(led.resynthesize() - led.raw)) < 1e-12
    assert led.nonzero() == 2
    assert np.linalg.norm(led.raw) == pytest.approx(0.2 * math.sqrt(2))
    with pytest.raises(ValueError):
        led.apply(FrequencyIndex(1, 2, 3, 1), 1)
    back = CoefficientLedger.from_records((2, 4, 4, 3), 0.2, 0.0, led.to_records())
    assert np.array_equal(back.raw, led.raw)


def test_update_rules():
    x = _video()
    opt = LogoDCTOptimizer(x, MASK, OptimizerConfig(mode="l2"))
    idx = [FrequencyIndex(0, 0, 1, 1)]
    assert opt.update(idx, 0) is None
    cand = opt.update(idx, 1)
    assert np.array_equal(opt.current, x)
    opt.commit(idx, 1, cand)
    assert opt.update(idx, 1) is None  # would be +2
    cand = opt.update(idx, -1)
    opt.commit(idx, -1, cand)
    assert np.max(np.abs(opt.current - x)) < 1e-9
    assert opt.norms() == (0.0, 0.0)


def test_candidate_only_changes_mask():
    x = _video(1)
    opt = LogoDCTOptimizer(x, MASK, OptimizerConfig(mode="linf", eps=0.05))
    cand = opt.update([FrequencyIndex(1, 2, 0, 0)], 1)
    m = MASK.materialize(x.shape).astype(bool)
    assert np.array_equal(cand[~m], x[~m])
    d = cand - x
    assert np.abs(d).max() <= 0.05 + 1e-12
    assert np.count_nonzero(d) == 16


def test_already_adversarial_costs_one_query():
    o = ScriptedOracle(np.zeros((2, 10, 10, 3)), label=1)
    res = optimize(o, _video(), MASK, Goal.untargeted(0))
    assert res.success and res.queries == 1 and res.ledger.accepted == 0


@pytest.mark.parametrize("mode", ["l2", "linf"])
def test_episode_invariants(mode):
    w = np.random.default_rng(3).normal(size=(2, 10, 10, 3))
    o = ScriptedOracle(w)
    x = _video(2)
    opt = LogoDCTOptimizer(x, MASK, OptimizerConfig(mode=mode, max_rounds=2, seed=5))
    res = opt.optimize(o, Goal.untargeted(0))
    assert res.queries == o.used
    assert np.all(np.diff(res.scores) > 0)
    assert res.ledger.accepted <= 2 * 96
    accepted = [r for r in res.records if r["accepted"]]
    assert len(accepted) == res.ledger.accepted
    linf, l2 = opt.norms()
    d = coefficient_count(x.shape, MASK)
    K = res.ledger.accepted
    if mode == "l2":
        assert l2 == pytest.approx(0.2 * math.sqrt(res.ledger.nonzero()), abs=1e-9)
        assert l2 <= 0.2 * math.sqrt(min(K, d)) + 1e-9
        assert np.max(np.abs(res.ledger.resynthesize() - res.ledger.raw)) < 1e-9
    else:
        assert linf <= 0.1 + 1e-12
        assert perturbation_norms(res.video, x, MASK)[0] <= 0.1 + 1e-6


def test_round_touches_each_index_once():
    o = ScriptedOracle(np.random.default_rng(0).normal(size=(2, 10, 10, 3)))
    opt = LogoDCTOptimizer(_video(), MASK, OptimizerConfig(mode="l2", max_rounds=1))
    res = opt.optimize(o, Goal.untargeted(0))
    touched = [tuple(r["index"][0]) for r in res.records]
    # one or two queries per index, contiguous
    assert len(set(touched)) == 96


def test_group_frames():
    x = _video()
    opt = LogoDCTOptimizer(x, MASK, OptimizerConfig(mode="l2", group_frames=True))
    groups = list(opt.groups(1))
    assert len(groups) == 48 and all(len(g) == 2 for g in groups)
    cand = opt.update(groups[0], 1)
    assert np.count_nonzero(np.abs(cand - x) > 1e-12, axis=(1, 2, 3)).min() > 0


def test_global_basis_masked():
    x = _video()
    opt = LogoDCTOptimizer(x, MASK, OptimizerConfig(mode="l2", basis="global"))
    cand = opt.update([FrequencyIndex(0, 0, 3, 2)], 1)
    m = MASK.materialize(x.shape).astype(bool)
    assert np.array_equal(cand[~m], x[~m])
    assert np.any(cand[m] != x[m])


def test_real_oracle_episode(toy_model, eval_set):
    x = eval_set.videos[0].astype(np.float32)
    y0 = toy_model.predict(x)
    mask = RegionMask(20, 20, 0.75, 32, 32, 64, 64)
    o = Oracle(toy_model, QueryBudget(150))
    res = optimize(o, x, mask, Goal.untargeted(y0))
    assert res.queries == o.used <= 150
    assert res.success or res.exhausted
    assert np.all(np.diff(res.scores) > 0)
