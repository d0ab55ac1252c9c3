"""Budget types, the fidelity ladder, and proxy validation plans.

The four budget types realize a fraction in (0,1] as cheaper training; the
proxy plan additionally makes *validation* cheaper on large datasets by
forecasting only a grid-selected subset of series and filling the rest with
the last-value dummy.
"""

import numpy as np

from tsforge.data import Series
from tsforge.evaluate import proxy_plan
from tsforge.fidelity import (
    apply_resolution,
    default_ladder,
    effective_batches,
    effective_epochs,
    shrink_window,
    subsample_series,
)
from tsforge.synthetic import seasonal_corpus

ladder = default_ladder()
print(f"fidelity ladder: rungs {[round(r, 4) for r in ladder.rungs]}, eta={ladder.eta}")
print(f"a cohort of 9 promotes 9 -> 3 -> 1 through the rungs\n")

print("budget value 1/3 under each type (base: 50 epochs, 20 batches, window 24):")
print(f"  num_epochs        -> {effective_epochs(50, 1/3)} epochs")
print(f"  samples_per_series-> {effective_batches(20, 1/3)} batches per epoch")
print(f"  resolution        -> window {shrink_window(24, 1/3, 'resolution')}, "
      "every 3rd point kept (anchored at the series end)")

s = Series(id="demo", targets=np.arange(12, dtype=float))
coarse = apply_resolution(s, 1 / 3)
print(f"  resolution on 0..11: kept {coarse.targets.astype(int).tolist()}")

ds = seasonal_corpus(n_series=9, length=60, horizon=6, seed=0)
sub = subsample_series(ds, 1 / 3)
print(f"  num_series        -> kept {[x.id for x in sub.series]} of {len(ds)}\n")

print("proxy plans (threshold 1000, minimum 1000 series):")
for n, b in [(500, 1 / 9), (5000, 1 / 9), (9000, 1 / 3), (9000, 1.0)]:
    plan = proxy_plan(n, b, min_proxy=1000, threshold=1000)
    print(f"  N={n:5d} budget={b:5.3f} -> {len(plan.evaluated_indices):5d} series "
          f"({100 * plan.covered_fraction:5.1f}% of the validation set)")
print("\nsame budget -> same plan, for every configuration: comparable losses.")
