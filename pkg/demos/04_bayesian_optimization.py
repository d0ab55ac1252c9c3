"""Random-forest Bayesian optimization on the Branin function.

The suggest loop interleaves expected-improvement picks from a random-forest
surrogate with random exploration. Thirty evaluations in, the incumbent is
typically an order of magnitude better than random search with the same
budget (global minimum: 0.3979).
"""

import numpy as np

from tsforge.forest import expected_improvement, fit_forest, predict_forest
from tsforge.optimizer import run_optimization
from tsforge.synthetic import branin, branin_evaluator, branin_space

space = branin_space()

print("BO vs random search, 60 evaluations each:")
for seed in range(3):
    result = run_optimization(space, branin_evaluator, budget_type="vanilla",
                              wall_clock_limit=1e9, seed=seed, max_evals=60)
    rng = np.random.default_rng((seed, 1))
    rand = min(branin(c["x1"], c["x2"]) for c in (space.sample(rng) for _ in range(60)))
    inc = result.incumbent
    print(f"  seed {seed}: BO {inc.loss:8.4f} at "
          f"(x1={inc.config['x1']:6.3f}, x2={inc.config['x2']:6.3f})   random {rand:8.4f}")

# the surrogate itself: fit on 30 points, query mean/variance and EI
rng = np.random.default_rng(0)
configs = [space.sample(rng) for _ in range(30)]
X = np.array([space.vectorize(c) for c in configs])
y = np.array([branin(c["x1"], c["x2"]) for c in configs])
forest = fit_forest(X, y, rng=rng)
print(f"\nforest surrogate on 30 points (log-space={forest.log_space}):")
for c in configs[:3]:
    mean, var = predict_forest(forest, space.vectorize(c))
    truth = branin(c["x1"], c["x2"])
    print(f"  truth {truth:8.3f}  predicted {mean:8.3f}  sd {np.sqrt(var):7.3f}")
print(f"EI at a fresh random point: "
      f"{expected_improvement(*predict_forest(forest, space.vectorize(space.sample(rng))), y.min()):.4f}")
