import numpy as np
import pytest

from tsforge.evaluate import EvalResult, RunRecord
from tsforge.fidelity import FidelityLadder, default_ladder
from tsforge.optimizer import Clock, run_optimization, suggest
from tsforge.space import default_space
from tsforge.synthetic import branin_evaluator, branin_space


def record_of(space, config, loss, budget=1.0, cid=0):
    return RunRecord(config_id=cid, config=dict(config.values), space_hash=space.hash,
                     budget_type="vanilla", budget_value=budget, val_loss=loss,
                     train_seconds=0.0, eval_seconds=0.0, status="ok",
                     wall_clock=0.0, seed=0)


def test_suggest_cold_start_random_valid():
    space = default_space()
    c = suggest([], space, np.random.default_rng(0))
    space.validate(c)


def test_suggest_avoids_duplicates():
    space = branin_space()
    rng = np.random.default_rng(1)
    history = [record_of(space, space.sample(rng), float(i), cid=i) for i in range(12)]
    seen = {tuple(sorted(r.config.items())) for r in history}
    for idx in range(8):
        c = suggest(history, space, rng, suggest_index=idx)
        assert tuple(sorted(c.values.items())) not in seen


def test_suggest_prefers_good_region():
    # synthetic rung history: region x1 < 0.3 has loss 0.1, x1 > 0.7 has 0.9
    space = branin_space()
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        history = []
        for i in range(20):
            c = space.sample(rng)
            x = (c["x1"] + 5) / 15.0
            history.append(record_of(space, c, 0.1 if x < 0.3 else 0.9, cid=i))
        c = suggest(history, space, rng, suggest_index=0)  # even index: model-guided
        if (c["x1"] + 5) / 15.0 < 0.45:
            hits += 1
    assert hits >= 80


def test_run_optimization_promotion_arithmetic():
    space = branin_space()
    result = run_optimization(space, branin_evaluator, ladder=default_ladder(),
                              budget_type="num_epochs", wall_clock_limit=1e9,
                              seed=0, max_evals=13)
    budgets = [r.budget_value for r in result.records]
    assert budgets[:9] == [1 / 9] * 9
    assert budgets[9:12] == [1 / 3] * 3
    assert budgets[12:] == [1.0]


def test_promotion_picks_best_of_cohort():
    space = branin_space()
    result = run_optimization(space, branin_evaluator, ladder=default_ladder(),
                              budget_type="num_epochs", wall_clock_limit=1e9,
                              seed=1, max_evals=13)
    low = result.records[:9]
    mid = result.records[9:12]
    best3 = sorted(low, key=lambda r: (r.val_loss, low.index(r)))[:3]
    assert {r.config_id for r in mid} == {r.config_id for r in best3}
    top = result.records[12]
    best_mid = min(mid, key=lambda r: r.val_loss)
    assert top.config_id == best_mid.config_id


def test_vanilla_all_records_full_budget():
    space = branin_space()
    result = run_optimization(space, branin_evaluator, budget_type="vanilla",
                              wall_clock_limit=1e9, seed=0, max_evals=20)
    assert all(r.budget_value == 1.0 for r in result.records)
    assert all(r.budget_type == "vanilla" for r in result.records)
    assert result.incumbent.loss == min(r.val_loss for r in result.records)


def test_crashing_evaluator_records_penalty_and_continues():
    space = branin_space()
    calls = {"n": 0}

    def flaky(config, budget, seed):
        calls["n"] += 1
        if calls["n"] % 3 == 0:
            raise RuntimeError("boom")
        return branin_evaluator(config, budget, seed)

    with pytest.warns(UserWarning):
        result = run_optimization(space, flaky, budget_type="vanilla",
                                  wall_clock_limit=1e9, seed=0, max_evals=12,
                                  penalty_loss=500.0)
    failed = [r for r in result.records if r.status == "failed"]
    assert len(failed) == 4
    assert all(r.val_loss == 500.0 for r in failed)
    assert len(result.records) == 12


def test_incumbent_monotone_nonincreasing():
    space = branin_space()
    result = run_optimization(space, branin_evaluator, budget_type="vanilla",
                              wall_clock_limit=1e9, seed=3, max_evals=40)
    best = np.inf
    for r in result.records:
        best = min(best, r.val_loss)
    assert result.incumbent.loss == pytest.approx(best)


def test_deterministic_history_with_fixed_seed():
    space = branin_space()

    def run():
        clock = Clock(virtual=True)
        res = run_optimization(space, branin_evaluator, budget_type="vanilla",
                               wall_clock_limit=1e9, seed=7, max_evals=25, clock=clock)
        return [(r.config_id, r.config, r.val_loss, r.wall_clock) for r in res.records]

    assert run() == run()


def test_wall_clock_zero_runs_nothing():
    space = branin_space()
    result = run_optimization(space, branin_evaluator, budget_type="vanilla",
                              wall_clock_limit=0.0, seed=0)
    assert result.records == []
    assert result.incumbent is None


def test_bo_beats_random_on_branin():
    space = branin_space()
    wins = 0
    for seed in range(5):
        out = run_optimization(space, branin_evaluator, budget_type="vanilla",
                               wall_clock_limit=1e9, seed=seed, max_evals=60)
        rr = np.random.default_rng((seed, 777))
        rand_best = min(branin_evaluator(space.sample(rr), None, 0) for _ in range(60))
        wins += out.incumbent.loss < rand_best
    assert wins >= 4


def test_initial_design_used_first():
    space = default_space()
    seen = []

    def fake_eval(config, budget, seed):
        seen.append(config)
        return 1.0

    run_optimization(space, fake_eval, ladder=default_ladder(),
                     budget_type="num_epochs", wall_clock_limit=1e9,
                     seed=0, max_evals=7)
    assert len(seen) == 7
    rows = {(c["encoder"], c.get("decoder", "mlp"), bool(c.get("auto_regressive", False)))
            for c in seen}
    assert len(rows) == 7
