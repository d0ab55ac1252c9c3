import numpy as np
import pytest

from tsforge import autodiff as ad
from tsforge.zoo import (
    ArchitectureSpec,
    Batch,
    HeadSpec,
    InputDims,
    build,
    compute_loss,
    forward_training,
    gradient,
    legal_rows,
)

HEADS = {
    "gaussian": HeadSpec(kind="distribution", dist="gaussian"),
    "student_t": HeadSpec(kind="distribution", dist="student_t"),
    "quantile": HeadSpec(kind="quantile", q_lower=0.1, q_upper=0.9),
    "l1": HeadSpec(kind="scalar", scalar_loss="l1"),
    "l2": HeadSpec(kind="scalar", scalar_loss="l2"),
    "mase": HeadSpec(kind="scalar", scalar_loss="mase"),
}


def random_batch(rng, B=3, w=5, H=3):
    past = rng.normal(size=(B, w))
    mask = np.ones((B, w), dtype=bool)
    mask[0, :2] = False
    past[0, :2] = 0.0
    return Batch(past=past, past_mask=mask, loc=np.zeros(B), scale=np.ones(B),
                 future=rng.normal(size=(B, H)),
                 mase_denom=np.abs(rng.normal(size=B)) + 0.5)


def loss_value(state, batch, w):
    old = state.weights
    state.weights = w
    try:
        with ad.no_grad():
            out = forward_training(state, batch)
        return compute_loss(out, batch.future, state.spec.head, batch.mase_denom,
                            batch.future_mask).item()
    finally:
        state.weights = old


def central_fd(state, batch, eps=1e-5):
    w0 = state.weights.copy()
    g = np.zeros_like(w0)
    for i in range(len(w0)):
        wp, wm = w0.copy(), w0.copy()
        wp[i] += eps
        wm[i] -= eps
        g[i] = (loss_value(state, batch, wp) - loss_value(state, batch, wm)) / (2 * eps)
    return g


def max_rel_err(analytic, fd):
    denom = np.maximum(np.abs(fd), 1e-6)
    return float(np.max(np.abs(analytic - fd) / denom))


@pytest.mark.parametrize("row", legal_rows(), ids=lambda r: f"{r[0]}-{r[1]}-{'ar' if r[2] else 'nonar'}")
@pytest.mark.parametrize("head_name", ["gaussian", "quantile", "l2"])
def test_gradient_matches_finite_differences(row, head_name):
    enc, dec, ar = row
    rng = np.random.default_rng(hash((row, head_name)) % 2 ** 31)
    spec = ArchitectureSpec(encoder=enc, decoder=dec, auto_regressive=ar,
                            head=HEADS[head_name], hidden_size=6, num_layers=1,
                            dropout=0.0, tcn_kernel=2, tcn_num_blocks=2)
    state = build(spec, InputDims(window=5, horizon=3), seed=0)
    batch = random_batch(rng)
    _, g = gradient(state, batch)
    assert max_rel_err(g, central_fd(state, batch)) < 1e-4


@pytest.mark.parametrize("head_name", ["student_t", "l1", "mase"])
def test_gradient_other_heads(head_name):
    rng = np.random.default_rng(11)
    spec = ArchitectureSpec(encoder="rnn", decoder="mlp", auto_regressive=True,
                            head=HEADS[head_name], hidden_size=6, num_layers=1)
    state = build(spec, InputDims(window=5, horizon=3), seed=1)
    batch = random_batch(rng)
    _, g = gradient(state, batch)
    assert max_rel_err(g, central_fd(state, batch)) < 1e-4


def test_gradient_with_dropout_layers_stacked():
    rng = np.random.default_rng(13)
    spec = ArchitectureSpec(encoder="rnn", decoder="rnn", auto_regressive=True,
                            head=HEADS["l2"], hidden_size=5, num_layers=2, dropout=0.0)
    state = build(spec, InputDims(window=4, horizon=2), seed=2)
    batch = random_batch(rng, w=4, H=2)
    _, g = gradient(state, batch)
    assert max_rel_err(g, central_fd(state, batch)) < 1e-4


def test_linear_model_analytic_gradient():
    # zero-weight single-layer MLP with identity-like path: for l2 loss the
    # head bias gradient is -2 * mean(y) and the head weight gradient is 0
    spec = ArchitectureSpec(encoder="mlp", decoder="mlp", auto_regressive=False,
                            head=HEADS["l2"], hidden_size=4, num_layers=1)
    state = build(spec, InputDims(window=3, horizon=2), seed=0)
    state.weights[:] = 0.0
    rng = np.random.default_rng(3)
    batch = random_batch(rng, B=5, w=3, H=2)
    _, g = gradient(state, batch)
    head_b = next(e for e in state.layout if e.name == "head_b")
    want_bias = -2.0 * batch.future.mean(axis=0) / batch.future.shape[1]
    np.testing.assert_allclose(g[head_b.start:head_b.stop], want_bias, rtol=1e-10)
    # every weight upstream of the (tanh(0)=0) hidden layer gets zero gradient
    enc_W = next(e for e in state.layout if e.name == "enc_l0_W")
    np.testing.assert_allclose(g[enc_W.start:enc_W.stop], 0.0, atol=1e-12)


def test_all_targets_masked_gives_zero_gradient():
    rng = np.random.default_rng(4)
    spec = ArchitectureSpec(encoder="mlp", decoder="mlp", auto_regressive=False,
                            head=HEADS["l2"], hidden_size=4, num_layers=1)
    state = build(spec, InputDims(window=3, horizon=2), seed=0)
    batch = random_batch(rng, B=3, w=3, H=2)
    batch.future_mask = np.zeros((3, 2), dtype=bool)
    loss, g = gradient(state, batch)
    assert loss == 0.0
    np.testing.assert_array_equal(g, np.zeros_like(g))
