"""Hierarchical search space over pipeline and architecture hyperparameters.

A hyperparameter is active iff its single-parent condition chain is satisfied;
configurations store values for active names only. Structural choices gate
their children the same way the legal-architecture table does: ``decoder`` is
only a free choice for RNN encoders (flat/TCN encoders imply an MLP decoder)
and ``auto_regressive`` only for sequential encoders.

Vectorization maps every configuration to a fixed-length float vector:
numerics normalize to [0, 1] (log-space where flagged), categoricals to
index / (#choices - 1), and inactive dimensions to the -1 sentinel so
regression trees can isolate activity.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sampling import SamplerConfig
from .zoo import ArchitectureSpec, HeadSpec, OptimizerConfig

INACTIVE = -1.0


@dataclass(frozen=True)
class Condition:
    parent: str
    values: tuple


@dataclass(frozen=True)
class HyperparameterDef:
    name: str
    kind: str  # categorical | integer | real
    default: object
    choices: tuple = ()
    lo: float = 0.0
    hi: float = 1.0
    log: bool = False
    condition: Optional[Condition] = None


@dataclass(frozen=True)
class Configuration:
    values: dict
    space_hash: str

    def __getitem__(self, name):
        return self.values[name]

    def get(self, name, default=None):
        return self.values.get(name, default)

    def key(self) -> tuple:
        return tuple(sorted(self.values.items()))


class SearchSpace:
    def __init__(self, defs: list):
        self.defs = list(defs)
        self.by_name = {d.name: d for d in self.defs}
        for d in self.defs:
            if d.condition is not None and d.condition.parent not in self.by_name:
                raise ValueError(f"{d.name}: unknown parent '{d.condition.parent}'")
        self.hash = hashlib.sha256(self.definition_text().encode()).hexdigest()[:12]

    def __len__(self) -> int:
        return len(self.defs)

    def definition_text(self) -> str:
        lines = []
        for d in self.defs:
            if d.kind == "categorical":
                dom = "{" + ",".join(str(c) for c in d.choices) + "}"
            else:
                dom = f"[{d.lo!r},{d.hi!r}]" + (" log" if d.log else "")
            cond = ""
            if d.condition:
                cond = f" | {d.condition.parent} in {{{','.join(str(v) for v in d.condition.values)}}}"
            lines.append(f"{d.name}: {d.kind} {dom} default={d.default!r}{cond}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# space hash {self.hash}\n")
            fh.write(self.definition_text())

    # -- activity ----------------------------------------------------------
    def is_active(self, d: HyperparameterDef, values: dict) -> bool:
        c = d.condition
        if c is None:
            return True
        return c.parent in values and values[c.parent] in c.values

    def validate(self, config: Configuration) -> None:
        if config.space_hash != self.hash:
            raise ValueError("configuration belongs to a different space version")
        values = config.values
        for d in self.defs:
            active = self.is_active(d, values)
            if active and d.name not in values:
                raise ValueError(f"active hyperparameter '{d.name}' missing")
            if not active and d.name in values:
                raise ValueError(f"inactive hyperparameter '{d.name}' present")
            if not active:
                continue
            v = values[d.name]
            if d.kind == "categorical":
                if v not in d.choices:
                    raise ValueError(f"{d.name}: '{v}' not a choice")
            elif d.kind == "integer":
                if not (isinstance(v, (int, np.integer)) and d.lo <= v <= d.hi):
                    raise ValueError(f"{d.name}: {v} out of bounds")
            else:
                if not d.lo <= v <= d.hi:
                    raise ValueError(f"{d.name}: {v} out of bounds")
        extra = set(values) - {d.name for d in self.defs}
        if extra:
            raise ValueError(f"unknown hyperparameters {sorted(extra)}")

    def make_config(self, values: dict) -> Configuration:
        cfg = Configuration(values=dict(values), space_hash=self.hash)
        self.validate(cfg)
        return cfg

    # -- sampling ----------------------------------------------------------
    def _sample_value(self, d: HyperparameterDef, rng):
        if d.kind == "categorical":
            return d.choices[rng.integers(len(d.choices))]
        if d.log:
            u = rng.uniform(math.log(d.lo), math.log(d.hi))
            v = math.exp(u)
        else:
            v = rng.uniform(d.lo, d.hi)
        if d.kind == "integer":
            return int(min(d.hi, max(d.lo, round(v))))
        return float(min(d.hi, max(d.lo, v)))

    def sample(self, rng) -> Configuration:
        values: dict = {}
        for d in self.defs:  # definition order is topological
            if self.is_active(d, values):
                values[d.name] = self._sample_value(d, rng)
        return Configuration(values=values, space_hash=self.hash)

    def default_configuration(self, overrides: Optional[dict] = None) -> Configuration:
        """Defaults with structural overrides applied before activity resolution."""
        overrides = overrides or {}
        values: dict = {}
        for d in self.defs:
            if self.is_active(d, values):
                values[d.name] = overrides.get(d.name, d.default)
        for k in overrides:
            if k not in self.by_name:
                raise ValueError(f"unknown hyperparameter '{k}'")
        return self.make_config(values)

    # -- neighborhoods -----------------------------------------------------
    def neighbors(self, config: Configuration, rng, k: int) -> list:
        out = []
        active = [d for d in self.defs if d.name in config.values]
        mutable = [d for d in active if d.kind != "categorical" or len(d.choices) > 1]
        for _ in range(k):
            d = mutable[rng.integers(len(mutable))]
            values = dict(config.values)
            if d.kind == "categorical":
                others = [c for c in d.choices if c != values[d.name]]
                values[d.name] = others[rng.integers(len(others))]
            else:
                values[d.name] = self._numeric_step(d, values[d.name], rng)
            out.append(self._repair(values))
        return out

    def _numeric_step(self, d: HyperparameterDef, v, rng):
        if d.log:
            lo, hi = math.log(d.lo), math.log(d.hi)
            x = (math.log(v) - lo) / (hi - lo)
        else:
            lo, hi = d.lo, d.hi
            x = (v - lo) / (hi - lo)
        x = min(1.0, max(0.0, x + 0.2 * rng.standard_normal()))
        v_new = math.exp(lo + x * (hi - lo)) if d.log else lo + x * (hi - lo)
        if d.kind == "integer":
            return int(min(d.hi, max(d.lo, round(v_new))))
        return float(min(d.hi, max(d.lo, v_new)))

    def _repair(self, values: dict) -> Configuration:
        """Drop deactivated children, add newly-activated ones at defaults."""
        repaired: dict = {}
        for d in self.defs:
            if self.is_active(d, repaired):
                repaired[d.name] = values.get(d.name, d.default)
        return Configuration(values=repaired, space_hash=self.hash)

    # -- vectorization -----------------------------------------------------
    def vectorize(self, config: Configuration) -> np.ndarray:
        x = np.full(len(self.defs), INACTIVE, dtype=np.float64)
        for i, d in enumerate(self.defs):
            if d.name not in config.values:
                continue
            v = config.values[d.name]
            if d.kind == "categorical":
                x[i] = 0.0 if len(d.choices) == 1 else d.choices.index(v) / (len(d.choices) - 1)
            elif d.log:
                x[i] = (math.log(v) - math.log(d.lo)) / (math.log(d.hi) - math.log(d.lo))
            else:
                x[i] = (v - d.lo) / (d.hi - d.lo)
        return x


# ---------------------------------------------------------------------------
# the forecasting pipeline space


def default_space() -> SearchSpace:
    c = Condition
    defs = [
        HyperparameterDef("encoder", "categorical", "rnn", choices=("mlp", "rnn", "tcn")),
        HyperparameterDef("decoder", "categorical", "mlp", choices=("mlp", "rnn"),
                          condition=c("encoder", ("rnn",))),
        HyperparameterDef("auto_regressive", "categorical", False, choices=(False, True),
                          condition=c("encoder", ("rnn", "tcn"))),
        HyperparameterDef("head", "categorical", "distribution",
                          choices=("distribution", "quantile", "scalar")),
        HyperparameterDef("dist", "categorical", "gaussian", choices=("gaussian", "student_t"),
                          condition=c("head", ("distribution",))),
        HyperparameterDef("inference", "categorical", "dist_mean",
                          choices=("dist_mean", "sample_mean", "sample_median"),
                          condition=c("head", ("distribution",))),
        HyperparameterDef("q_lower", "real", 0.1, lo=0.01, hi=0.2,
                          condition=c("head", ("quantile",))),
        HyperparameterDef("q_upper", "real", 0.9, lo=0.8, hi=0.99,
                          condition=c("head", ("quantile",))),
        HyperparameterDef("scalar_loss", "categorical", "l2", choices=("l1", "l2", "mase"),
                          condition=c("head", ("scalar",))),
        HyperparameterDef("hidden_size", "integer", 32, lo=8, hi=128, log=True),
        HyperparameterDef("num_layers", "integer", 1, lo=1, hi=3),
        HyperparameterDef("dropout", "real", 0.1, lo=0.0, hi=0.5),
        HyperparameterDef("tcn_kernel", "integer", 2, lo=2, hi=4,
                          condition=c("encoder", ("tcn",))),
        HyperparameterDef("tcn_num_blocks", "integer", 2, lo=1, hi=4,
                          condition=c("encoder", ("tcn",))),
        HyperparameterDef("lr", "real", 1e-3, lo=1e-4, hi=1e-1, log=True),
        HyperparameterDef("optimizer", "categorical", "adam", choices=("adam", "sgd")),
        HyperparameterDef("weight_decay", "real", 1e-6, lo=1e-8, hi=1e-2, log=True),
        HyperparameterDef("batch_size", "integer", 32, lo=16, hi=128, log=True),
        HyperparameterDef("num_batches_per_epoch", "integer", 20, lo=10, hi=100),
        HyperparameterDef("window_multiplier", "real", 1.0, lo=1.0, hi=3.0),
        HyperparameterDef("target_scaler", "categorical", "mean_abs",
                          choices=("none", "mean_abs", "standard", "min_max")),
        HyperparameterDef("sample_strategy", "categorical", "uniform",
                          choices=("per_series", "uniform")),
        HyperparameterDef("num_samples", "integer", 100, lo=50, hi=200,
                          condition=c("inference", ("sample_mean", "sample_median"))),
    ]
    return SearchSpace(defs)


# One default per legal architecture row: structural values plus the head
# family the reference model of that row uses.
INITIAL_DESIGN_ROWS = [
    {"encoder": "mlp", "head": "scalar", "scalar_loss": "l2"},
    {"encoder": "rnn", "decoder": "rnn", "auto_regressive": True,
     "head": "scalar", "scalar_loss": "l2"},
    {"encoder": "rnn", "decoder": "rnn", "auto_regressive": False,
     "head": "scalar", "scalar_loss": "l2"},
    {"encoder": "rnn", "decoder": "mlp", "auto_regressive": True,
     "head": "distribution", "dist": "gaussian"},
    {"encoder": "rnn", "decoder": "mlp", "auto_regressive": False, "head": "quantile"},
    {"encoder": "tcn", "auto_regressive": True, "head": "distribution", "dist": "gaussian"},
    {"encoder": "tcn", "auto_regressive": False, "head": "quantile"},
]


def initial_design(space: SearchSpace) -> list:
    """Default configuration per implemented architecture row."""
    return [space.default_configuration(row) for row in INITIAL_DESIGN_ROWS]


# ---------------------------------------------------------------------------
# configuration -> pipeline pieces


def to_architecture(config: Configuration) -> ArchitectureSpec:
    v = config.values
    head = HeadSpec(
        kind=v["head"],
        dist=v.get("dist", "gaussian"),
        q_lower=v.get("q_lower", 0.1),
        q_upper=v.get("q_upper", 0.9),
        scalar_loss=v.get("scalar_loss", "l2"),
        inference=v.get("inference", "dist_mean"),
        num_samples=v.get("num_samples", 100),
    )
    return ArchitectureSpec(
        encoder=v["encoder"],
        decoder=v.get("decoder", "mlp"),
        auto_regressive=bool(v.get("auto_regressive", False)),
        head=head,
        hidden_size=v["hidden_size"],
        num_layers=v["num_layers"],
        dropout=v["dropout"],
        tcn_kernel=v.get("tcn_kernel", 2),
        tcn_num_blocks=v.get("tcn_num_blocks", 2),
    )


def to_sampler_config(config: Configuration, seed: int = 0) -> SamplerConfig:
    v = config.values
    return SamplerConfig(
        window_multiplier=v["window_multiplier"],
        batch_size=v["batch_size"],
        num_batches_per_epoch=v["num_batches_per_epoch"],
        strategy=v["sample_strategy"],
        seed=seed,
    )


def to_optimizer_config(config: Configuration) -> OptimizerConfig:
    v = config.values
    return OptimizerConfig(kind=v["optimizer"], lr=v["lr"], weight_decay=v["weight_decay"])
