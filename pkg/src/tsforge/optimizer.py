"""SMAC-style suggest loop and the multi-fidelity successive-halving scheduler.

Suggestions interleave forest-guided expected-improvement picks with random
exploration. The scheduler fills the lowest rung in cohorts, promotes the top
fraction of each cohort up the ladder, and maintains the incumbent at the
highest completed rung. Everything is driven by one seeded RNG and an
injectable clock, so a single-worker run is reproducible end to end.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import TooFewPoints
from .evaluate import EvalResult, RunRecord
from .fidelity import FidelityBudget, FidelityLadder, default_ladder, vanilla_ladder
from .forest import expected_improvement, fit_forest, model_space_best, predict_forest_batch
from .space import Configuration, SearchSpace, initial_design

COHORT_SIZE = 9
RANDOM_CANDIDATES = 1000
NEIGHBOR_TOP = 3
NEIGHBOR_K = 20


class Clock:
    """Wall clock; the virtual variant advances one second per evaluation."""

    def __init__(self, virtual: bool = False):
        self.virtual = virtual
        self._virtual_now = 0.0
        self._t0 = time.monotonic()

    def now(self) -> float:
        return self._virtual_now if self.virtual else time.monotonic() - self._t0

    def tick(self) -> None:
        if self.virtual:
            self._virtual_now += 1.0


def suggest(history: list, space: SearchSpace, rng, suggest_index: Optional[int] = None,
            num_candidates: int = RANDOM_CANDIDATES) -> Configuration:
    """Next configuration for the rung whose records are passed in.

    Cold starts and every odd-indexed suggestion are random; otherwise a
    forest fitted on the rung's (vectorized config, loss) pairs is scanned
    with expected improvement over random candidates plus neighborhoods of
    the three best configurations seen.
    """
    ok = [r for r in history if np.isfinite(r.val_loss)]
    if suggest_index is None:
        suggest_index = len(history)
    d = len(space)
    seen = {Configuration(r.config, r.space_hash).key() for r in history}
    if len(ok) < 2 * d or suggest_index % 2 == 1:
        return _random_unseen(space, rng, seen)
    X = np.array([space.vectorize(Configuration(r.config, r.space_hash)) for r in ok])
    y = np.array([r.val_loss for r in ok])
    try:
        forest = fit_forest(X, y, rng=rng)
    except TooFewPoints:
        return _random_unseen(space, rng, seen)
    candidates = [space.sample(rng) for _ in range(num_candidates)]
    for i in np.argsort(y)[:NEIGHBOR_TOP]:
        candidates.extend(space.neighbors(Configuration(ok[i].config, ok[i].space_hash),
                                          rng, NEIGHBOR_K))
    Xc = np.array([space.vectorize(c) for c in candidates])
    # EI is scored in the forest's model space (log space for positive losses,
    # the SMAC convention); the back-transformed moments are far heavier-tailed.
    mean, var = predict_forest_batch(forest, Xc, transform=False)
    ei = expected_improvement(mean, var, model_space_best(forest, y))
    for idx in np.argsort(-ei):
        if candidates[idx].key() not in seen:
            return candidates[idx]
    return _random_unseen(space, rng, seen)


def _random_unseen(space: SearchSpace, rng, seen, tries: int = 100) -> Configuration:
    for _ in range(tries):
        c = space.sample(rng)
        if c.key() not in seen:
            return c
    return c


@dataclass
class Incumbent:
    config: Configuration
    loss: float
    budget_value: float
    config_id: int


@dataclass
class OptimizationResult:
    records: list
    incumbent: Optional[Incumbent]


def run_optimization(space: SearchSpace, evaluator: Callable,
                     ladder: Optional[FidelityLadder] = None,
                     budget_type: str = "num_epochs",
                     wall_clock_limit: float = 600.0,
                     seed: int = 0,
                     cohort_size: int = COHORT_SIZE,
                     initial: Optional[list] = None,
                     penalty_loss: float = float("inf"),
                     max_evals: Optional[int] = None,
                     clock: Optional[Clock] = None,
                     on_record: Optional[Callable] = None) -> OptimizationResult:
    """Drive the evaluator under the fidelity ladder until time or evals run out.

    ``budget_type="vanilla"`` evaluates everything at budget 1.0 on a single
    rung with no promotion. The evaluator maps (config, FidelityBudget, seed)
    to an :class:`EvalResult` or a bare loss; exceptions become failed records
    carrying ``penalty_loss``.
    """
    vanilla = budget_type == "vanilla"
    if ladder is None:
        ladder = vanilla_ladder() if vanilla else default_ladder()
    rungs = list(ladder.rungs)
    eta = ladder.eta
    eval_budget_type = "num_epochs" if vanilla else budget_type
    clock = clock if clock is not None else Clock()
    rng = np.random.default_rng((seed, 0x5EED))

    records: list = []
    by_rung: dict = {v: [] for v in rungs}
    incumbent: Optional[Incumbent] = None
    config_ids: dict = {}
    suggest_counter = 0
    if initial is not None:
        pending_initial = list(initial)
    elif "encoder" in space.by_name:
        pending_initial = initial_design(space)
    else:
        pending_initial = []

    def can_continue() -> bool:
        if max_evals is not None and len(records) >= max_evals:
            return False
        return clock.now() < wall_clock_limit

    def config_id_of(config: Configuration) -> int:
        k = config.key()
        if k not in config_ids:
            config_ids[k] = len(config_ids)
        return config_ids[k]

    def run_one(config: Configuration, rung_value: float, rung_index: int) -> RunRecord:
        nonlocal incumbent
        cid = config_id_of(config)
        eval_seed = int((seed * 1000003 + cid * 9176 + rung_index * 97) % (2 ** 31))
        budget = FidelityBudget(eval_budget_type, rung_value)
        try:
            result = evaluator(config, budget, eval_seed)
            if not isinstance(result, EvalResult):
                result = EvalResult(val_loss=float(result), train_seconds=0.0,
                                    eval_seconds=0.0)
        except Exception as exc:  # noqa: BLE001 - evaluator failures are data
            import warnings

            warnings.warn(f"evaluator raised ({exc}); recording penalty loss")
            result = EvalResult(val_loss=penalty_loss, train_seconds=0.0,
                                eval_seconds=0.0, status="failed")
        clock.tick()
        record = RunRecord(
            config_id=cid, config=dict(config.values), space_hash=config.space_hash,
            budget_type=budget_type, budget_value=rung_value,
            val_loss=float(result.val_loss),
            train_seconds=0.0 if clock.virtual else float(result.train_seconds),
            eval_seconds=0.0 if clock.virtual else float(result.eval_seconds),
            status=result.status, wall_clock=clock.now(), seed=eval_seed,
            forecasts=result.forecasts,
        )
        records.append(record)
        by_rung[rung_value].append(record)
        if on_record is not None:
            on_record(record)
        if rung_value == rungs[-1] and record.status == "ok":
            if incumbent is None or record.val_loss < incumbent.loss:
                incumbent = Incumbent(config=config, loss=record.val_loss,
                                      budget_value=rung_value, config_id=cid)
        return record

    while can_continue():
        # fill one cohort at the lowest rung
        cohort: list = []
        while len(cohort) < cohort_size and can_continue():
            if pending_initial:
                config = pending_initial.pop(0)
            else:
                config = suggest(by_rung[rungs[0]], space, rng,
                                 suggest_index=suggest_counter)
                suggest_counter += 1
            cohort.append(run_one(config, rungs[0], 0))
        if not cohort:
            break
        # promote through the ladder
        current = cohort
        for rung_index in range(1, len(rungs)):
            n_promote = int(np.ceil(len(current) / eta))
            ranked = sorted(range(len(current)),
                            key=lambda i: (current[i].val_loss, i))[:n_promote]
            promoted = []
            for i in ranked:
                if not can_continue():
                    break
                rec = current[i]
                config = Configuration(rec.config, rec.space_hash)
                promoted.append(run_one(config, rungs[rung_index], rung_index))
            current = promoted
            if not current:
                break

    return OptimizationResult(records=records, incumbent=incumbent)
