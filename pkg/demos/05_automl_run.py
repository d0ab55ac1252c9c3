"""A complete in-process AutoML run on a small seasonal corpus.

Search under the epochs budget with the 1/9 -> 1/3 -> 1 ladder, then greedy
ensemble selection, refit on train+val, and test forecasting. The same flow is
available from the shell as

    tsforge run --data corpus.tsf --budget epochs --walltime 90 --out results/
"""

import numpy as np

from tsforge.data import seasonal_period, split
from tsforge.ensemble import forecast, refit, select
from tsforge.evaluate import dummy_val_loss, evaluate
from tsforge.metrics import aggregate, incumbent_auc
from tsforge.optimizer import run_optimization
from tsforge.space import default_space
from tsforge.synthetic import seasonal_corpus

ds = seasonal_corpus(n_series=15, length=96, horizon=12, seed=3)
sv = split(ds)
m = seasonal_period(ds.frequency)
space = default_space()
walltime = 90.0

def evaluator(config, budget, seed):
    return evaluate(config, budget, ds, sv, seed, max_epochs=30)

print(f"searching for {walltime:.0f}s under the epochs budget...")
result = run_optimization(space, evaluator, budget_type="num_epochs",
                          wall_clock_limit=walltime, seed=0,
                          penalty_loss=dummy_val_loss(ds, sv, m))
records = result.records
ok = [r for r in records if r.status == "ok"]
print(f"{len(records)} evaluations, {len(ok)} ok, "
      f"{len({r.config_id for r in records})} distinct configurations")
if result.incumbent:
    print(f"incumbent: config {result.incumbent.config_id} "
          f"val MASE {result.incumbent.loss:.3f} at budget {result.incumbent.budget_value:.3f}")
pts = [(r.wall_clock, r.val_loss) for r in records if np.isfinite(r.val_loss)]
print(f"normalized incumbent AUC over the run: {incumbent_auc(pts, walltime):.3f}")

top = max(r.budget_value for r in ok)
ens = select([r for r in ok if r.budget_value == top and r.forecasts], ds, sv,
             size=10, m=m)
print(f"\nensemble: {len(ens.members)} members, selection val MASE {ens.val_loss:.3f}")
ens = refit(ens, ds, run_seed=0, max_epochs=30)
fc = forecast(ens, ds)
rep = aggregate(ds, sv, fc, metric="mase", m=m, segment="test")
print(f"refit on train+val, test MASE {rep.aggregate:.3f} "
      f"(dummy benchmark {dummy_val_loss(ds, sv, m):.3f})")
