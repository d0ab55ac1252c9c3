"""Neural forecasting model zoo on the native autodiff engine.

Every model decomposes into encoder -> decoder -> head. Flat encoders (MLP)
flatten the window; sequential encoders (GRU-style RNN, dilated causal TCN)
emit a latent per position. Three forecasting modes exist:

* non-autoregressive: the decoder turns the final latent into all H steps at
  once;
* sequential-decoder autoregressive: an RNN decoder steps through the horizon,
  fed the previous target (teacher forcing at training, its own point
  prediction at generation);
* flat-decoder autoregressive: an MLP decoder reads the encoder latent, and
  generated values are appended to the encoder input, which is re-run
  (incrementally for RNN, re-windowed for TCN). A distribution head in this
  mode can sample whole trajectories.

All arithmetic is float64. Activations are tanh throughout, which keeps the
finite-difference gradient checks tight. Generation feedback is never
differentiated through; training uses pure teacher forcing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .data import TimeSeriesDataset, base_window_size, seasonal_period
from .errors import (
    Diverged,
    IllegalArchitecture,
    NonFiniteGradient,
    NonFiniteLoss,
    NotTCN,
    ShapeMismatch,
)
from .fidelity import shrink_window
from .metrics import DENOM_FLOOR
from .sampling import SamplerConfig, WindowInstance, epoch_plan, materialize, scaler_stats

CHECKPOINT_VERSION = 1

ENCODERS = ("mlp", "rnn", "tcn")
DECODERS = ("mlp", "rnn")
HEAD_KINDS = ("distribution", "quantile", "scalar")
DISTRIBUTIONS = ("gaussian", "student_t")
SCALAR_LOSSES = ("l1", "l2", "mase")
INFERENCE_MODES = ("dist_mean", "sample_mean", "sample_median")

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class HeadSpec:
    kind: str = "scalar"
    dist: str = "gaussian"
    q_lower: float = 0.1
    q_upper: float = 0.9
    scalar_loss: str = "l2"
    inference: str = "dist_mean"
    num_samples: int = 100

    def channels(self) -> int:
        if self.kind == "distribution":
            return 2 if self.dist == "gaussian" else 3
        if self.kind == "quantile":
            return 3
        return 1


@dataclass(frozen=True)
class ArchitectureSpec:
    encoder: str = "mlp"
    decoder: str = "mlp"
    auto_regressive: bool = False
    head: HeadSpec = field(default_factory=HeadSpec)
    hidden_size: int = 32
    num_layers: int = 1
    dropout: float = 0.0
    tcn_kernel: int = 2
    tcn_num_blocks: int = 2


def validate_architecture(spec: ArchitectureSpec) -> None:
    """Reject combinations outside the legal encoder/decoder/mode table."""
    if spec.encoder not in ENCODERS or spec.decoder not in DECODERS:
        raise IllegalArchitecture(f"unknown component {spec.encoder}/{spec.decoder}")
    if spec.encoder == "mlp" and spec.auto_regressive:
        raise IllegalArchitecture("flat encoders cannot drive an auto-regressive model")
    if spec.encoder == "mlp" and spec.decoder != "mlp":
        raise IllegalArchitecture("a flat encoder requires a flat decoder")
    if spec.decoder == "rnn" and spec.encoder != "rnn":
        raise IllegalArchitecture("a sequential decoder requires an RNN encoder")
    if spec.head.kind not in HEAD_KINDS:
        raise IllegalArchitecture(f"unknown head kind '{spec.head.kind}'")
    if not 0.0 <= spec.dropout < 0.8:
        raise IllegalArchitecture("dropout must lie in [0, 0.8)")
    if spec.hidden_size < 1 or spec.num_layers < 1:
        raise IllegalArchitecture("hidden_size and num_layers must be positive")
    if spec.encoder == "tcn" and (spec.tcn_kernel < 2 or spec.tcn_num_blocks < 1):
        raise IllegalArchitecture("TCN needs kernel >= 2 and at least one block")


def legal_rows() -> list:
    """All (encoder, decoder, auto_regressive) combinations the table allows."""
    rows = []
    for enc in ENCODERS:
        for dec in DECODERS:
            for ar in (False, True):
                spec = ArchitectureSpec(encoder=enc, decoder=dec, auto_regressive=ar)
                try:
                    validate_architecture(spec)
                except IllegalArchitecture:
                    continue
                rows.append((enc, dec, ar))
    return rows


def receptive_field(spec: ArchitectureSpec) -> int:
    """Maximal lookback of the dilated causal stack (two convs per block)."""
    if spec.encoder != "tcn":
        raise NotTCN("receptive field is defined for TCN encoders only")
    k = spec.tcn_kernel
    return 1 + sum(2 * (k - 1) * 2 ** i for i in range(spec.tcn_num_blocks))


@dataclass(frozen=True)
class InputDims:
    window: int
    horizon: int
    past_cov: int = 0
    future_cov: int = 0


@dataclass
class LayoutEntry:
    name: str
    shape: tuple
    start: int
    stop: int
    bound: float  # uniform init half-width


def _glorot(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def build_layout(spec: ArchitectureSpec, dims: InputDims) -> list:
    entries: list = []
    offset = 0

    def put(name, shape, fan_in, fan_out):
        nonlocal offset
        size = int(np.prod(shape))
        entries.append(LayoutEntry(name, tuple(shape), offset, offset + size, _glorot(fan_in, fan_out)))
        offset += size

    h = spec.hidden_size
    enc_in = 1 + dims.past_cov

    if spec.encoder == "mlp":
        size_in = dims.window * enc_in
        for i in range(spec.num_layers):
            n_in = size_in if i == 0 else h
            put(f"enc_l{i}_W", (n_in, h), n_in, h)
            put(f"enc_l{i}_b", (h,), n_in, h)
    elif spec.encoder == "rnn":
        for i in range(spec.num_layers):
            n_in = enc_in if i == 0 else h
            put(f"enc_gru{i}_Wx", (n_in, 3 * h), n_in, 3 * h)
            put(f"enc_gru{i}_Wh", (h, 3 * h), h, 3 * h)
            put(f"enc_gru{i}_bx", (3 * h,), n_in, 3 * h)
            put(f"enc_gru{i}_bh", (3 * h,), h, 3 * h)
    else:  # tcn
        k = spec.tcn_kernel
        for i in range(spec.tcn_num_blocks):
            c_in = enc_in if i == 0 else h
            put(f"tcn{i}_conv1_W", (k, c_in, h), k * c_in, k * h)
            put(f"tcn{i}_conv1_b", (h,), k * c_in, k * h)
            put(f"tcn{i}_conv2_W", (k, h, h), k * h, k * h)
            put(f"tcn{i}_conv2_b", (h,), k * h, k * h)
            if c_in != h:
                put(f"tcn{i}_proj_W", (c_in, h), c_in, h)

    C = spec.head.channels()
    if spec.decoder == "rnn":
        dec_in = 1 + dims.future_cov
        for i in range(spec.num_layers):
            n_in = dec_in if i == 0 else h
            put(f"dec_gru{i}_Wx", (n_in, 3 * h), n_in, 3 * h)
            put(f"dec_gru{i}_Wh", (h, 3 * h), h, 3 * h)
            put(f"dec_gru{i}_bx", (3 * h,), n_in, 3 * h)
            put(f"dec_gru{i}_bh", (3 * h,), h, 3 * h)
        put("head_W", (h, C), h, C)
        put("head_b", (C,), h, C)
    else:
        if spec.auto_regressive:
            dec_in = h + dims.future_cov
            head_out = C
        else:
            dec_in = h + dims.horizon * dims.future_cov
            head_out = dims.horizon * C
        for i in range(spec.num_layers):
            n_in = dec_in if i == 0 else h
            put(f"dec_l{i}_W", (n_in, h), n_in, h)
            put(f"dec_l{i}_b", (h,), n_in, h)
        put("head_W", (h, head_out), h, head_out)
        put("head_b", (head_out,), h, head_out)

    return entries


@dataclass
class ModelState:
    spec: ArchitectureSpec
    dims: InputDims
    weights: np.ndarray
    scaler_method: str = "mean_abs"
    seed: int = 0
    layout: list = field(default_factory=list)

    def num_weights(self) -> int:
        return len(self.weights)


def build(spec: ArchitectureSpec, dims: InputDims, seed: int = 0,
          scaler_method: str = "mean_abs") -> ModelState:
    """Validate the architecture and initialize uniform(-a, a) Glorot weights."""
    validate_architecture(spec)
    layout = build_layout(spec, dims)
    total = layout[-1].stop if layout else 0
    rng = np.random.default_rng(seed)
    w = np.empty(total, dtype=np.float64)
    for e in layout:
        w[e.start:e.stop] = rng.uniform(-e.bound, e.bound, e.stop - e.start)
    return ModelState(spec=spec, dims=dims, weights=w, scaler_method=scaler_method,
                      seed=seed, layout=layout)


def resolve_window(spec: ArchitectureSpec, dataset: TimeSeriesDataset,
                   cfg: SamplerConfig, budget=None) -> int:
    """Window size: multiplier times base window, TCN forced to its receptive
    field, shrunk under a resolution budget."""
    if spec.encoder == "tcn":
        w = receptive_field(spec)
    else:
        w = max(1, int(round(cfg.window_multiplier * base_window_size(dataset))))
    if budget is not None:
        w = shrink_window(w, budget.value, budget.budget_type)
    return w


class _Params:
    """Per-forward leaf tensors viewing slices of the flat weight vector."""

    def __init__(self, state: ModelState):
        self._state = state
        self._leaves: dict = {}

    def __getitem__(self, name: str) -> Tensor:
        if name not in self._leaves:
            entry = next(e for e in self._state.layout if e.name == name)
            t = Tensor(self._state.weights[entry.start:entry.stop].reshape(entry.shape),
                       requires_grad=True)
            self._leaves[name] = (entry, t)
        return self._leaves[name][1]

    def flat_grad(self) -> np.ndarray:
        g = np.zeros_like(self._state.weights)
        for entry, t in self._leaves.values():
            if t.grad is not None:
                g[entry.start:entry.stop] = t.grad.ravel()
        return g


def _dropout(t: Tensor, rate: float, rng) -> Tensor:
    if rng is None or rate <= 0.0:
        return t
    keep = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return ad.mul(t, keep)


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    """Scaled, collated window instances ready for a forward pass."""

    past: np.ndarray                   # (B, w) scaled targets
    past_mask: np.ndarray              # (B, w)
    loc: np.ndarray                    # (B,)
    scale: np.ndarray                  # (B,)
    future: Optional[np.ndarray] = None        # (B, H) scaled training targets
    past_cov: Optional[np.ndarray] = None      # (B, w, P)
    future_cov: Optional[np.ndarray] = None    # (B, H, F)
    horizon_past_cov: Optional[np.ndarray] = None  # (B, H, P) rows for AR steps
    mase_denom: Optional[np.ndarray] = None    # (B,) scaled-unit denominators
    future_mask: Optional[np.ndarray] = None   # (B, H) loss mask

    @property
    def size(self) -> int:
        return self.past.shape[0]


def collate(dataset: TimeSeriesDataset, pairs, window: int, horizon: int,
            scaler_method: str, seasonal_m: int = 1,
            with_mase_denom: bool = False) -> Batch:
    """Materialize, scale and stack a list of (series, origin) pairs."""
    instances = [materialize(dataset, p, window, horizon) for p in pairs]
    B = len(instances)
    past = np.zeros((B, window))
    mask = np.zeros((B, window), dtype=bool)
    future = np.zeros((B, horizon))
    locs = np.zeros(B)
    scales = np.ones(B)
    denom = np.zeros(B) if with_mase_denom else None
    for i, inst in enumerate(instances):
        loc, scale = scaler_stats(inst.past_targets, inst.past_mask, scaler_method)
        p = (inst.past_targets - loc) / scale
        p[~inst.past_mask] = 0.0
        past[i] = p
        mask[i] = inst.past_mask
        future[i] = (inst.future_targets - loc) / scale
        locs[i] = loc
        scales[i] = scale
        if with_mase_denom:
            denom[i] = _instance_denominator(inst, seasonal_m) / scale

    P = dataset.series[0].past_covariates.shape[1] if dataset.series[0].past_covariates is not None else 0
    F = dataset.series[0].future_covariates.shape[1] if dataset.series[0].future_covariates is not None else 0
    past_cov = future_cov = horizon_past_cov = None
    if P:
        past_cov = np.stack([inst.past_covariates for inst in instances])
        horizon_past_cov = np.stack([
            dataset.series[inst.series_index].past_covariates[inst.origin:inst.origin + horizon]
            for inst in instances
        ])
    if F:
        future_cov = np.stack([inst.future_covariates for inst in instances])
    return Batch(past=past, past_mask=mask, loc=locs, scale=scales, future=future,
                 past_cov=past_cov, future_cov=future_cov,
                 horizon_past_cov=horizon_past_cov, mase_denom=denom)


def _instance_denominator(inst: WindowInstance, m: int) -> float:
    obs = inst.past_targets[inst.past_mask]
    if len(obs) <= m:
        m = 1
    if len(obs) <= m:
        return 1.0
    d = float(np.mean(np.abs(obs[m:] - obs[:-m])))
    return max(d, DENOM_FLOOR)


# ---------------------------------------------------------------------------
# encoder / decoder building blocks


def _encoder_channels(batch: Batch) -> np.ndarray:
    """(B, w, 1+P) input: scaled targets plus past covariates."""
    x = batch.past[:, :, None]
    if batch.past_cov is not None:
        x = np.concatenate([x, batch.past_cov], axis=2)
    return x


def _mlp_stack(x: Tensor, params: _Params, prefix: str, n_layers: int,
               rate: float, rng) -> Tensor:
    for i in range(n_layers):
        x = ad.add(ad.matmul(x, params[f"{prefix}{i}_W"]), params[f"{prefix}{i}_b"])
        x = ad.tanh(x)
        x = _dropout(x, rate, rng)
    return x


def _gru_cell(x: Tensor, h: Tensor, params: _Params, prefix: str) -> Tensor:
    hsz = h.shape[1]
    gx = ad.add(ad.matmul(x, params[f"{prefix}_Wx"]), params[f"{prefix}_bx"])
    gh = ad.add(ad.matmul(h, params[f"{prefix}_Wh"]), params[f"{prefix}_bh"])
    r = ad.sigmoid(ad.add(gx[:, :hsz], gh[:, :hsz]))
    z = ad.sigmoid(ad.add(gx[:, hsz:2 * hsz], gh[:, hsz:2 * hsz]))
    n = ad.tanh(ad.add(gx[:, 2 * hsz:], ad.mul(r, gh[:, 2 * hsz:])))
    return ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h))


def _gru_stack(steps: list, init: Optional[list], params: _Params, prefix: str,
               n_layers: int, hidden: int, rate: float, rng):
    """Run stacked GRU layers over a list of (B, C) step tensors.

    Returns (last-layer outputs per step, final hidden per layer).
    """
    B = steps[0].shape[0]
    finals = []
    for layer in range(n_layers):
        h = init[layer] if init is not None else Tensor(np.zeros((B, hidden)))
        outs = []
        for x in steps:
            h = _gru_cell(x, h, params, f"{prefix}{layer}")
            outs.append(h)
        finals.append(h)
        if layer < n_layers - 1:
            outs = [_dropout(o, rate, rng) for o in outs]
        steps = outs
    return steps, finals


def _rnn_encode(batch_x: np.ndarray, state: ModelState, params: _Params, rng):
    """(B, T, C) -> per-step last-layer latents and per-layer finals."""
    T = batch_x.shape[1]
    steps = [Tensor(batch_x[:, t, :]) for t in range(T)]
    return _gru_stack(steps, None, params, "enc_gru", state.spec.num_layers,
                      state.spec.hidden_size, state.spec.dropout, rng)


def _causal_conv(x: Tensor, W: Tensor, b: Tensor, dilation: int, k: int) -> Tensor:
    """Dilated causal convolution over (B, T, Cin) via shifted matmuls."""
    B, T, c_in = x.shape
    c_out = W.shape[2]
    padded = ad.pad_left(x, (k - 1) * dilation, axis=1)
    out = None
    for j in range(k):
        offset = j * dilation
        sl = padded[:, offset:offset + T, :]
        flat = ad.reshape(sl, (B * T, c_in))
        term = ad.matmul(flat, ad.reshape(W[j], (c_in, c_out)))
        out = term if out is None else ad.add(out, term)
    out = ad.add(out, b)
    return ad.reshape(out, (B, T, c_out))


def _tcn_encode(batch_x: np.ndarray, state: ModelState, params: _Params, rng):
    """(B, T, C) -> (B, T, hidden) through residual dilated causal blocks."""
    spec = state.spec
    x = Tensor(batch_x)
    k = spec.tcn_kernel
    h = spec.hidden_size
    for i in range(spec.tcn_num_blocks):
        dilation = 2 ** i
        c_in = x.shape[2]
        y = _causal_conv(x, params[f"tcn{i}_conv1_W"], params[f"tcn{i}_conv1_b"], dilation, k)
        y = _dropout(ad.tanh(y), spec.dropout, rng)
        y = _causal_conv(y, params[f"tcn{i}_conv2_W"], params[f"tcn{i}_conv2_b"], dilation, k)
        y = _dropout(ad.tanh(y), spec.dropout, rng)
        if c_in != h:
            B, T = x.shape[0], x.shape[1]
            res = ad.reshape(ad.matmul(ad.reshape(x, (B * T, c_in)), params[f"tcn{i}_proj_W"]),
                             (B, T, h))
        else:
            res = x
        x = ad.tanh(ad.add(y, res))
    return x


def _encode_sequence(batch_x: np.ndarray, state: ModelState, params: _Params, rng):
    """Returns (per-position latents as (B,T,h) tensor or step list, per-layer finals)."""
    if state.spec.encoder == "rnn":
        steps, finals = _rnn_encode(batch_x, state, params, rng)
        return steps, finals
    if state.spec.encoder == "tcn":
        seq = _tcn_encode(batch_x, state, params, rng)
        T = seq.shape[1]
        steps = [seq[:, t, :] for t in range(T)]
        return steps, None
    raise ShapeMismatch("flat encoders produce no sequence")


def _mlp_decode_step(latent: Tensor, fcov_row: Optional[np.ndarray], state: ModelState,
                     params: _Params, rng) -> Tensor:
    x = latent if fcov_row is None else ad.concat([latent, Tensor(fcov_row)], axis=1)
    x = _mlp_stack(x, params, "dec_l", state.spec.num_layers, state.spec.dropout, rng)
    return ad.add(ad.matmul(x, params["head_W"]), params["head_b"])


# ---------------------------------------------------------------------------
# forward passes (training / teacher forcing: differentiable)


def forward_non_ar(state: ModelState, batch: Batch, dropout_rng=None, params=None) -> Tensor:
    """One-shot H-step forward for non-autoregressive models -> (B, H, C)."""
    spec = state.spec
    if spec.auto_regressive:
        raise ShapeMismatch("model is auto-regressive")
    if batch.past.shape[1] != state.dims.window:
        raise ShapeMismatch(
            f"window {batch.past.shape[1]} != model window {state.dims.window}")
    if params is None:
        params = _Params(state)
    B = batch.size
    H = state.dims.horizon
    C = spec.head.channels()

    if spec.encoder == "mlp":
        x = Tensor(_encoder_channels(batch).reshape(B, -1))
        latent = _mlp_stack(x, params, "enc_l", spec.num_layers, spec.dropout, dropout_rng)
    else:
        steps, _finals = _encode_sequence(_encoder_channels(batch), state, params, dropout_rng)
        latent = steps[-1]
        if spec.decoder == "rnn":
            dec_steps = []
            for t in range(H):
                row = np.zeros((B, 1))
                if batch.future_cov is not None:
                    row = np.concatenate([row, batch.future_cov[:, t, :]], axis=1)
                dec_steps.append(Tensor(row))
            outs, _ = _gru_stack(dec_steps, _finals, params, "dec_gru", spec.num_layers,
                                 spec.hidden_size, spec.dropout, dropout_rng)
            per_step = [ad.add(ad.matmul(o, params["head_W"]), params["head_b"]) for o in outs]
            return ad.stack(per_step, axis=1)

    fcov = None
    if batch.future_cov is not None:
        fcov = batch.future_cov.reshape(B, -1)
    raw = _mlp_decode_step(latent, fcov, state, params, dropout_rng)
    return ad.reshape(raw, (B, H, C))


def forward_seq2seq(state: ModelState, batch: Batch, mode: str = "teacher_forcing",
                    dropout_rng=None, sample_rng=None, params=None):
    """Sequential-decoder AR model. Teacher forcing returns a (B, H, C) tensor;
    generate returns numpy raw outputs produced from the model's own point
    predictions."""
    spec = state.spec
    if not (spec.auto_regressive and spec.decoder == "rnn"):
        raise ShapeMismatch("not a sequential-decoder AR model")
    if mode == "generate":
        return _generate_seq2seq(state, batch, sample_rng)
    if params is None:
        params = _Params(state)
    B = batch.size
    H = state.dims.horizon
    _steps, finals = _encode_sequence(_encoder_channels(batch), state, params, dropout_rng)

    prev = batch.past[:, -1]  # last (possibly padded) scaled target
    dec_steps = []
    for t in range(H):
        row = prev[:, None] if t == 0 else batch.future[:, t - 1][:, None]
        if batch.future_cov is not None:
            row = np.concatenate([row, batch.future_cov[:, t, :]], axis=1)
        dec_steps.append(Tensor(row))
    outs, _ = _gru_stack(dec_steps, finals, params, "dec_gru", spec.num_layers,
                         spec.hidden_size, spec.dropout, dropout_rng)
    per_step = [ad.add(ad.matmul(o, params["head_W"]), params["head_b"]) for o in outs]
    return ad.stack(per_step, axis=1)


def forward_deepar(state: ModelState, batch: Batch, mode: str = "teacher_forcing",
                   dropout_rng=None, sample_rng=None, params=None):
    """Flat-decoder AR model: predictions feed back into the encoder input."""
    spec = state.spec
    if not (spec.auto_regressive and spec.decoder == "mlp" and spec.encoder in ("rnn", "tcn")):
        raise ShapeMismatch("not a flat-decoder AR model")
    if mode == "generate":
        return _generate_deepar(state, batch, sample_rng)
    if params is None:
        params = _Params(state)
    B = batch.size
    H = state.dims.horizon
    w = state.dims.window

    x = _encoder_channels(batch)
    if H > 1:
        ext = batch.future[:, : H - 1][:, :, None]
        if batch.past_cov is not None:
            ext = np.concatenate([ext, batch.horizon_past_cov[:, : H - 1, :]], axis=2)
        x = np.concatenate([x, ext], axis=1)
    steps, _ = _encode_sequence(x, state, params, dropout_rng)
    per_step = []
    for t in range(H):
        latent = steps[w - 1 + t]
        fcov = batch.future_cov[:, t, :] if batch.future_cov is not None else None
        per_step.append(_mlp_decode_step(latent, fcov, state, params, dropout_rng))
    return ad.stack(per_step, axis=1)


def forward_training(state: ModelState, batch: Batch, dropout_rng=None, params=None) -> Tensor:
    """Dispatch to the architecture's differentiable forward (teacher forcing)."""
    spec = state.spec
    if not spec.auto_regressive:
        return forward_non_ar(state, batch, dropout_rng, params=params)
    if spec.decoder == "rnn":
        return forward_seq2seq(state, batch, "teacher_forcing", dropout_rng, params=params)
    return forward_deepar(state, batch, "teacher_forcing", dropout_rng, params=params)


# ---------------------------------------------------------------------------
# heads: losses and point conversion


def _gaussian_params(out: Tensor):
    mu = out[:, :, 0]
    sigma = ad.add(ad.softplus(out[:, :, 1]), SIGMA_FLOOR)
    return mu, sigma


def _student_t_params(out: Tensor):
    mu = out[:, :, 0]
    sigma = ad.add(ad.softplus(out[:, :, 1]), SIGMA_FLOOR)
    nu = ad.add(ad.softplus(out[:, :, 2]), 2.0)
    return mu, sigma, nu


def compute_loss(out: Tensor, future: np.ndarray, head: HeadSpec,
                 mase_denom: Optional[np.ndarray] = None,
                 future_mask: Optional[np.ndarray] = None) -> Tensor:
    """Scalar training loss; masked mean over horizon steps.

    Distribution heads use the negative mean log density, quantile heads the
    pinball loss averaged over the three quantiles, scalar heads l1/l2 or
    l1 scaled by the per-instance seasonal-naive denominator.
    """
    if out.shape[:2] != future.shape:
        raise ShapeMismatch(f"outputs {out.shape} vs targets {future.shape}")
    y = future
    if head.kind == "distribution":
        if head.dist == "gaussian":
            mu, sigma = _gaussian_params(out)
            z = ad.div(ad.sub(y, mu), sigma)
            terms = ad.add(ad.add(ad.log(sigma), ad.mul(ad.square(z), 0.5)),
                           0.5 * np.log(2 * np.pi))
        else:
            mu, sigma, nu = _student_t_params(out)
            z = ad.div(ad.sub(y, mu), sigma)
            half = ad.mul(ad.add(nu, 1.0), 0.5)
            log_norm = ad.sub(ad.sub(ad.log_gamma(half), ad.log_gamma(ad.mul(nu, 0.5))),
                              ad.add(ad.mul(ad.log(ad.mul(nu, np.pi)), 0.5), ad.log(sigma)))
            log_kernel = ad.mul(half, ad.log(ad.add(ad.div(ad.square(z), nu), 1.0)))
            terms = ad.sub(log_kernel, log_norm)
    elif head.kind == "quantile":
        qs = (head.q_lower, 0.5, head.q_upper)
        terms = None
        for c, q in enumerate(qs):
            u = ad.sub(y, out[:, :, c])
            pin = ad.maximum(ad.mul(u, q), ad.mul(u, q - 1.0))
            terms = pin if terms is None else ad.add(terms, pin)
        terms = ad.mul(terms, 1.0 / len(qs))
    elif head.kind == "scalar":
        err = ad.sub(y, out[:, :, 0])
        if head.scalar_loss == "l1":
            terms = ad.absolute(err)
        elif head.scalar_loss == "l2":
            terms = ad.square(err)
        else:  # mase
            assert mase_denom is not None, "mase loss needs per-instance denominators"
            terms = ad.div(ad.absolute(err), mase_denom[:, None])
    else:
        raise ShapeMismatch(f"unknown head kind '{head.kind}'")

    if future_mask is not None:
        n_obs = float(future_mask.sum())
        if n_obs == 0:
            return ad.mul(ad.tsum(ad.mul(terms, 0.0)), 0.0)
        loss = ad.mul(ad.tsum(ad.mul(terms, future_mask.astype(np.float64))), 1.0 / n_obs)
    else:
        loss = ad.tmean(terms)
    if not np.isfinite(loss.data):
        raise NonFiniteLoss("training loss is not finite")
    return loss


def gradient(state: ModelState, batch: Batch, mode: str = "teacher_forcing",
             dropout_rng=None):
    """(loss value, d loss / d weights) for one batch under teacher forcing."""
    params = _Params(state)
    out = forward_training(state, batch, dropout_rng, params=params)
    loss = compute_loss(out, batch.future, state.spec.head, batch.mase_denom,
                        batch.future_mask)
    loss.backward()
    g = params.flat_grad()
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient is not finite")
    return float(loss.data), g


def point_from_raw(raw: np.ndarray, head: HeadSpec, rng=None) -> np.ndarray:
    """Per-step point prediction from raw head outputs (..., C), scaled units."""
    if head.kind == "scalar":
        return raw[..., 0]
    if head.kind == "quantile":
        return np.sort(raw, axis=-1)[..., 1]
    mu = raw[..., 0]
    sigma = np.logaddexp(0.0, raw[..., 1]) + SIGMA_FLOOR
    if head.inference == "dist_mean" or rng is None:
        return mu
    n = head.num_samples
    if head.dist == "gaussian":
        draws = mu[None] + sigma[None] * rng.standard_normal((n,) + mu.shape)
    else:
        nu = np.logaddexp(0.0, raw[..., 2]) + 2.0
        draws = mu[None] + sigma[None] * rng.standard_t(nu[None] * np.ones((n,) + mu.shape))
    if head.inference == "sample_mean":
        return draws.mean(axis=0)
    return np.median(draws, axis=0)


def sample_from_raw(raw: np.ndarray, head: HeadSpec, rng) -> np.ndarray:
    """One draw per element from a distribution head's raw outputs."""
    mu = raw[..., 0]
    sigma = np.logaddexp(0.0, raw[..., 1]) + SIGMA_FLOOR
    if head.dist == "gaussian":
        return mu + sigma * rng.standard_normal(mu.shape)
    nu = np.logaddexp(0.0, raw[..., 2]) + 2.0
    return mu + sigma * rng.standard_t(nu)


# ---------------------------------------------------------------------------
# generation


def _generate_seq2seq(state: ModelState, batch: Batch, sample_rng) -> np.ndarray:
    spec = state.spec
    B = batch.size
    H = state.dims.horizon
    rng = sample_rng if sample_rng is not None else np.random.default_rng(state.seed)
    with no_grad():
        params = _Params(state)
        _steps, finals = _encode_sequence(_encoder_channels(batch), state, params, None)
        hs = list(finals)
        prev = batch.past[:, -1]
        outs = np.zeros((B, H, spec.head.channels()))
        for t in range(H):
            row = prev[:, None]
            if batch.future_cov is not None:
                row = np.concatenate([row, batch.future_cov[:, t, :]], axis=1)
            x = Tensor(row)
            new_hs = []
            for layer in range(spec.num_layers):
                h = _gru_cell(x, hs[layer], params, f"dec_gru{layer}")
                new_hs.append(h)
                x = h
            hs = new_hs
            raw = ad.add(ad.matmul(x, params["head_W"]), params["head_b"]).data
            outs[:, t, :] = raw
            prev = point_from_raw(raw, spec.head, rng)
    return outs


def _generate_deepar(state: ModelState, batch: Batch, sample_rng) -> np.ndarray:
    """Greedy point feedback, or trajectory sampling for distribution heads
    with sampling inference. Returns per-step raw outputs (B, H, C); for
    sampled trajectories channel 0 carries the aggregated point path and the
    remaining channels the across-trajectory mean of the raw parameters."""
    spec = state.spec
    head = spec.head
    B = batch.size
    H = state.dims.horizon
    rng = sample_rng if sample_rng is not None else np.random.default_rng(state.seed)
    sampling = head.kind == "distribution" and head.inference in ("sample_mean", "sample_median")
    S = head.num_samples if sampling else 1

    past = np.repeat(batch.past, S, axis=0) if S > 1 else batch.past.copy()
    pcov = batch.past_cov
    hcov = batch.horizon_past_cov
    fcov = batch.future_cov
    if S > 1:
        pcov = None if pcov is None else np.repeat(pcov, S, axis=0)
        hcov = None if hcov is None else np.repeat(hcov, S, axis=0)
        fcov = None if fcov is None else np.repeat(fcov, S, axis=0)

    with no_grad():
        params = _Params(state)
        x = past[:, :, None]
        if pcov is not None:
            x = np.concatenate([x, pcov], axis=2)

        raws = np.zeros((B * S if S > 1 else B, H, head.channels()))
        feedback = np.zeros((x.shape[0], H))
        if spec.encoder == "rnn":
            steps, finals = _rnn_encode(x, state, params, None)
            hs = list(finals)
            latent = steps[-1]
            for t in range(H):
                f_row = fcov[:, t, :] if fcov is not None else None
                raw = _mlp_decode_step(latent, f_row, state, params, None).data
                raws[:, t, :] = raw
                val = sample_from_raw(raw, head, rng) if sampling else point_from_raw(raw, head, rng)
                feedback[:, t] = val
                if t + 1 < H:
                    row = val[:, None]
                    if hcov is not None:
                        row = np.concatenate([row, hcov[:, t, :]], axis=1)
                    xt = Tensor(row)
                    new_hs = []
                    for layer in range(spec.num_layers):
                        h = _gru_cell(xt, hs[layer], params, f"enc_gru{layer}")
                        new_hs.append(h)
                        xt = h
                    hs = new_hs
                    latent = xt
        else:  # tcn: re-run the rolling window each step
            window = x
            for t in range(H):
                seq = _tcn_encode(window, state, params, None)
                latent = seq[:, -1, :]
                f_row = fcov[:, t, :] if fcov is not None else None
                raw = _mlp_decode_step(latent, f_row, state, params, None).data
                raws[:, t, :] = raw
                val = sample_from_raw(raw, head, rng) if sampling else point_from_raw(raw, head, rng)
                feedback[:, t] = val
                if t + 1 < H:
                    row = val[:, None, None]
                    if hcov is not None:
                        row = np.concatenate([row, hcov[:, t:t + 1, :]], axis=2)
                    window = np.concatenate([window[:, 1:, :], row], axis=1)

    if S > 1:
        traj = feedback.reshape(B, S, H)
        agg = traj.mean(axis=1) if head.inference == "sample_mean" else np.median(traj, axis=1)
        mean_raw = raws.reshape(B, S, H, -1).mean(axis=1)
        out = mean_raw.copy()
        out[:, :, 0] = agg
        return out
    return raws


def generate(state: ModelState, batch: Batch, sample_rng=None) -> np.ndarray:
    """Raw head outputs (B, H, C) for any architecture at inference time."""
    spec = state.spec
    if not spec.auto_regressive:
        with no_grad():
            return forward_non_ar(state, batch).data
    if spec.decoder == "rnn":
        return forward_seq2seq(state, batch, "generate", sample_rng=sample_rng)
    return forward_deepar(state, batch, "generate", sample_rng=sample_rng)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class OptimizerConfig:
    kind: str = "adam"  # or "sgd"
    lr: float = 1e-3
    weight_decay: float = 0.0


GRAD_CLIP = 10.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
SGD_MOMENTUM = 0.9


def train(state: ModelState, dataset: TimeSeriesDataset, split_or_ends,
          cfg: SamplerConfig, opt: OptimizerConfig, epochs: int,
          seasonal_m: Optional[int] = None, num_batches: Optional[int] = None):
    """Teacher-forced minibatch training; returns (state, per-epoch mean loss).

    ``num_batches`` overrides the per-epoch batch count (samples-per-series
    budget); the sampler config's count is used otherwise. Raises
    :class:`Diverged` after 3 consecutive epochs without a finite batch loss.
    """
    if epochs < 1:
        raise ValueError("epochs must be positive")
    spec = state.spec
    H = state.dims.horizon
    window = state.dims.window
    m = seasonal_m if seasonal_m is not None else seasonal_period(dataset.frequency)
    if num_batches is not None:
        cfg = replace(cfg, num_batches_per_epoch=num_batches)

    adam_m = np.zeros_like(state.weights)
    adam_v = np.zeros_like(state.weights)
    momentum = np.zeros_like(state.weights)
    step = 0
    curve = []
    bad_epochs = 0
    with_denom = spec.head.kind == "scalar" and spec.head.scalar_loss == "mase"

    for epoch in range(epochs):
        plan = epoch_plan(dataset, split_or_ends, cfg, epoch)
        drop_rng = np.random.default_rng((state.seed, epoch, 1)) if spec.dropout > 0 else None
        losses = []
        for b in range(cfg.num_batches_per_epoch):
            pairs = plan[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if not pairs:
                continue
            batch = collate(dataset, pairs, window, H, state.scaler_method,
                            seasonal_m=m, with_mase_denom=with_denom)
            try:
                loss_val, g = gradient(state, batch, dropout_rng=drop_rng)
            except (NonFiniteLoss, NonFiniteGradient):
                continue
            losses.append(loss_val)
            step += 1
            if opt.weight_decay:
                g = g + opt.weight_decay * state.weights
            norm = float(np.linalg.norm(g))
            if norm > GRAD_CLIP:
                g = g * (GRAD_CLIP / norm)
            if opt.kind == "adam":
                b1, b2 = ADAM_BETAS
                adam_m = b1 * adam_m + (1 - b1) * g
                adam_v = b2 * adam_v + (1 - b2) * g * g
                m_hat = adam_m / (1 - b1 ** step)
                v_hat = adam_v / (1 - b2 ** step)
                new_w = state.weights - opt.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            else:
                momentum = SGD_MOMENTUM * momentum + g
                new_w = state.weights - opt.lr * momentum
            if np.all(np.isfinite(new_w)):
                state.weights = new_w
        if losses:
            curve.append(float(np.mean(losses)))
            bad_epochs = 0
        else:
            curve.append(float("nan"))
            bad_epochs += 1
            if bad_epochs >= 3:
                raise Diverged("3 consecutive epochs without a finite loss")
    return state, curve


# ---------------------------------------------------------------------------
# prediction


@dataclass
class ForecastOutput:
    series_id: str
    point: np.ndarray   # (H,) original units
    head_kind: str
    raw: np.ndarray     # (H, C) head outputs, original units

    def quantiles(self) -> Optional[np.ndarray]:
        if self.head_kind == "quantile":
            return np.sort(self.raw, axis=-1)
        return None


def _inverse_scale_raw(raw: np.ndarray, head: HeadSpec, loc, scale) -> np.ndarray:
    out = raw.copy()
    loc = np.asarray(loc)[:, None]
    scale = np.asarray(scale)[:, None]
    if head.kind == "distribution":
        out[:, :, 0] = raw[:, :, 0] * scale + loc
        sigma = np.logaddexp(0.0, raw[:, :, 1]) + SIGMA_FLOOR
        out[:, :, 1] = sigma * scale
        if head.dist == "student_t":
            out[:, :, 2] = np.logaddexp(0.0, raw[:, :, 2]) + 2.0
    else:
        out = raw * scale[:, :, None] + loc[:, :, None]
    return out


def predict(state: ModelState, dataset: TimeSeriesDataset, origins,
            sample_rng=None, series_indices=None, chunk: int = 256) -> list:
    """Forecast H steps per series from the given per-series origins.

    Point paths follow the head's inference strategy and are returned in
    original units along with inverse-scaled raw head outputs.
    """
    H = state.dims.horizon
    window = state.dims.window
    head = state.spec.head
    if series_indices is None:
        series_indices = range(len(dataset))
    series_indices = list(series_indices)
    origins = [int(o) for o in origins]
    if len(origins) != len(series_indices):
        raise ShapeMismatch("one origin per forecast series required")
    rng = sample_rng if sample_rng is not None else np.random.default_rng((state.seed, 0xF0))

    results = []
    for c0 in range(0, len(series_indices), chunk):
        idx = series_indices[c0:c0 + chunk]
        orig = origins[c0:c0 + chunk]
        pairs = list(zip(idx, orig))
        batch = _predict_batch(dataset, pairs, window, H, state.scaler_method)
        raw = generate(state, batch, sample_rng=rng)
        trajectory_sampled = (state.spec.auto_regressive and state.spec.decoder == "mlp"
                              and head.kind == "distribution"
                              and head.inference != "dist_mean")
        point_scaled = raw[:, :, 0] if trajectory_sampled else point_from_raw(raw, head, rng)
        point = point_scaled * batch.scale[:, None] + batch.loc[:, None]
        raw_units = _inverse_scale_raw(raw, head, batch.loc, batch.scale)
        for j, i in enumerate(idx):
            results.append(ForecastOutput(series_id=dataset.series[i].id,
                                          point=point[j], head_kind=head.kind,
                                          raw=raw_units[j]))
    return results


def _predict_batch(dataset, pairs, window, H, scaler_method) -> Batch:
    """Collate inference windows (future targets unknown)."""
    B = len(pairs)
    past = np.zeros((B, window))
    mask = np.zeros((B, window), dtype=bool)
    locs = np.zeros(B)
    scales = np.ones(B)
    pcovs = []
    fcovs = []
    hcovs = []
    for i, (si, origin) in enumerate(pairs):
        s = dataset.series[si]
        assert 1 <= origin <= len(s), "origin out of range"
        lo = origin - window
        pad = max(0, -lo)
        lo = max(0, lo)
        seg = s.targets[lo:origin]
        loc, scale = scaler_stats(np.concatenate([np.zeros(pad), seg]),
                                  np.concatenate([np.zeros(pad, dtype=bool),
                                                  np.ones(len(seg), dtype=bool)]),
                                  scaler_method)
        past[i, pad:] = (seg - loc) / scale
        mask[i, pad:] = True
        locs[i] = loc
        scales[i] = scale
        if s.past_covariates is not None:
            pc = np.zeros((window, s.past_covariates.shape[1]))
            pc[pad:] = s.past_covariates[lo:origin]
            pcovs.append(pc)
            hc = np.zeros((H, s.past_covariates.shape[1]))
            avail = s.past_covariates[origin:origin + H]
            hc[:len(avail)] = avail
            hcovs.append(hc)
        if s.future_covariates is not None:
            fc = np.zeros((H, s.future_covariates.shape[1]))
            avail = s.future_covariates[origin:origin + H]
            fc[:len(avail)] = avail
            fcovs.append(fc)
    return Batch(past=past, past_mask=mask, loc=locs, scale=scales,
                 past_cov=np.stack(pcovs) if pcovs else None,
                 future_cov=np.stack(fcovs) if fcovs else None,
                 horizon_past_cov=np.stack(hcovs) if hcovs else None)


# ---------------------------------------------------------------------------
# checkpoints


def save_model(state: ModelState, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": {
            "encoder": state.spec.encoder,
            "decoder": state.spec.decoder,
            "auto_regressive": state.spec.auto_regressive,
            "hidden_size": state.spec.hidden_size,
            "num_layers": state.spec.num_layers,
            "dropout": state.spec.dropout,
            "tcn_kernel": state.spec.tcn_kernel,
            "tcn_num_blocks": state.spec.tcn_num_blocks,
            "head": {
                "kind": state.spec.head.kind,
                "dist": state.spec.head.dist,
                "q_lower": state.spec.head.q_lower,
                "q_upper": state.spec.head.q_upper,
                "scalar_loss": state.spec.head.scalar_loss,
                "inference": state.spec.head.inference,
                "num_samples": state.spec.head.num_samples,
            },
        },
        "dims": {
            "window": state.dims.window,
            "horizon": state.dims.horizon,
            "past_cov": state.dims.past_cov,
            "future_cov": state.dims.future_cov,
        },
        "scaler_method": state.scaler_method,
        "seed": state.seed,
    }
    with open(path, "wb") as fh:
        np.savez(fh, weights=state.weights, meta=np.frombuffer(
            json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))


def load_model(path) -> ModelState:
    with np.load(path) as z:
        weights = z["weights"]
        meta = json.loads(bytes(z["meta"]).decode())
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    head = HeadSpec(**meta["spec"]["head"])
    spec_kwargs = {k: v for k, v in meta["spec"].items() if k != "head"}
    spec = ArchitectureSpec(head=head, **spec_kwargs)
    dims = InputDims(**meta["dims"])
    state = ModelState(spec=spec, dims=dims, weights=weights,
                       scaler_method=meta["scaler_method"], seed=meta["seed"],
                       layout=build_layout(spec, dims))
    return state
