"""AutoML for global time-series forecasting at desk scale.

A native model zoo (MLP / GRU / TCN encoders, flat and sequential decoders,
distribution / quantile / scalar heads) on a built-in reverse-mode gradient
engine, searched by random-forest Bayesian optimization with multi-fidelity
scheduling, proxy validation, greedy ensemble selection and fANOVA importance
analysis.
"""

from .data import (
    Frequency,
    Series,
    SplitView,
    TimeSeriesDataset,
    base_window_size,
    load_csv,
    load_tsf_subset,
    save_tsf_subset,
    seasonality_for_frequency,
    split,
)
from .fidelity import FidelityBudget, FidelityLadder, default_ladder
from .metrics import MetricReport, aggregate, incumbent_auc, mae, mape, mase, smape
from .sampling import SamplerConfig, WindowInstance, epoch_plan, fit_apply_scaler, materialize
from .zoo import (
    ArchitectureSpec,
    ForecastOutput,
    HeadSpec,
    InputDims,
    ModelState,
    OptimizerConfig,
    build,
    load_model,
    predict,
    receptive_field,
    save_model,
    train,
)

__version__ = "0.1.0"
