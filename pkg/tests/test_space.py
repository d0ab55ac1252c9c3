import math

import numpy as np
import pytest

from tsforge.space import (
    Configuration,
    default_space,
    initial_design,
    to_architecture,
    to_optimizer_config,
    to_sampler_config,
)
from tsforge.zoo import validate_architecture


@pytest.fixture(scope="module")
def space():
    return default_space()


def test_space_has_23_definitions(space):
    # oracle: count the specified hyperparameter list
    names = [d.name for d in space.defs]
    assert names == [
        "encoder", "decoder", "auto_regressive", "head", "dist", "inference",
        "q_lower", "q_upper", "scalar_loss", "hidden_size", "num_layers", "dropout",
        "tcn_kernel", "tcn_num_blocks", "lr", "optimizer", "weight_decay",
        "batch_size", "num_batches_per_epoch", "window_multiplier", "target_scaler",
        "sample_strategy", "num_samples",
    ]
    assert len(space) == 23


def test_conditionality_rules(space):
    rng = np.random.default_rng(0)
    for _ in range(300):
        c = space.sample(rng)
        v = c.values
        assert ("decoder" in v) == (v["encoder"] == "rnn")
        assert ("auto_regressive" in v) == (v["encoder"] in ("rnn", "tcn"))
        assert ("dist" in v) == (v["head"] == "distribution")
        assert ("inference" in v) == (v["head"] == "distribution")
        assert ("q_lower" in v) == (v["head"] == "quantile")
        assert ("scalar_loss" in v) == (v["head"] == "scalar")
        assert ("tcn_kernel" in v) == (v["encoder"] == "tcn")
        assert ("num_samples" in v) == (
            v.get("inference") in ("sample_mean", "sample_median"))


def test_samples_validate_and_build(space):
    rng = np.random.default_rng(1)
    for _ in range(500):
        c = space.sample(rng)
        space.validate(c)
        validate_architecture(to_architecture(c))


def test_encoder_marginal_uniform(space):
    rng = np.random.default_rng(2)
    n = 3000
    counts = {"mlp": 0, "rnn": 0, "tcn": 0}
    for _ in range(n):
        counts[space.sample(rng)["encoder"]] += 1
    p = 1 / 3
    sd = math.sqrt(p * (1 - p) * n)
    for v in counts.values():
        assert abs(v - n * p) <= 3 * sd


def test_log_dims_sampled_in_log_space(space):
    # lr below the geometric midpoint should appear ~half the time
    rng = np.random.default_rng(3)
    mid = math.sqrt(1e-4 * 1e-1)
    n = 2000
    below = sum(space.sample(rng)["lr"] < mid for _ in range(n))
    sd = math.sqrt(0.25 * n)
    assert abs(below - n / 2) <= 3 * sd


def test_initial_design_covers_rows_once(space):
    designs = initial_design(space)
    assert len(designs) == 7
    rows = set()
    for c in designs:
        space.validate(c)
        arch = to_architecture(c)
        validate_architecture(arch)
        rows.add((arch.encoder, arch.decoder, arch.auto_regressive))
    assert len(rows) == 7


def test_initial_design_reference_heads(space):
    designs = initial_design(space)
    by_row = {}
    for c in designs:
        arch = to_architecture(c)
        by_row[(arch.encoder, arch.decoder, arch.auto_regressive)] = c
    deepar = by_row[("rnn", "mlp", True)]
    assert deepar["head"] == "distribution" and deepar["dist"] == "gaussian"
    mqrnn = by_row[("rnn", "mlp", False)]
    assert mqrnn["head"] == "quantile"
    ffn = by_row[("mlp", "mlp", False)]
    assert ffn["head"] == "scalar" and ffn["scalar_loss"] == "l2"
    seq2seq = by_row[("rnn", "rnn", True)]
    assert seq2seq["head"] == "scalar" and seq2seq["scalar_loss"] == "l2"


def test_neighbors_validate_and_differ(space):
    rng = np.random.default_rng(4)
    for _ in range(50):
        c = space.sample(rng)
        for nb in space.neighbors(c, rng, 5):
            space.validate(nb)


def test_neighbors_numeric_in_bounds(space):
    rng = np.random.default_rng(5)
    c = space.default_configuration()
    for _ in range(2000):
        for nb in space.neighbors(c, rng, 1):
            space.validate(nb)  # raises if any mutation leaves bounds


def test_neighbor_activation_inserts_children(space):
    rng = np.random.default_rng(6)
    base = space.default_configuration({"encoder": "mlp", "head": "scalar",
                                        "scalar_loss": "l2"})
    assert "auto_regressive" not in base.values
    found = False
    for _ in range(200):
        for nb in space.neighbors(base, rng, 1):
            if nb["encoder"] == "rnn":
                assert "auto_regressive" in nb.values
                assert "decoder" in nb.values
                found = True
    assert found


def test_neighbors_k_zero(space):
    rng = np.random.default_rng(7)
    assert space.neighbors(space.default_configuration(), rng, 0) == []


def test_vectorize_endpoints_and_log_midpoint(space):
    c = space.default_configuration()
    i_lr = [d.name for d in space.defs].index("lr")
    low = space.make_config({**c.values, "lr": 1e-4})
    high = space.make_config({**c.values, "lr": 1e-1})
    mid = space.make_config({**c.values, "lr": 10 ** -2.5})
    assert space.vectorize(low)[i_lr] == pytest.approx(0.0)
    assert space.vectorize(high)[i_lr] == pytest.approx(1.0)
    assert space.vectorize(mid)[i_lr] == pytest.approx(0.5)


def test_vectorize_inactive_sentinel(space):
    c = space.default_configuration({"head": "scalar", "scalar_loss": "l1"})
    x = space.vectorize(c)
    names = [d.name for d in space.defs]
    assert x[names.index("dist")] == -1.0
    assert x[names.index("q_lower")] == -1.0
    assert x[names.index("scalar_loss")] == 0.0  # first choice


def test_vectorize_fixed_length_and_injective(space):
    rng = np.random.default_rng(8)
    seen = {}
    for _ in range(300):
        c = space.sample(rng)
        x = space.vectorize(c)
        assert len(x) == 23
        key = tuple(np.round(x, 12))
        if key in seen:
            assert seen[key] == c.key()
        seen[key] = c.key()


def test_space_hash_stable_and_embedded(space):
    assert space.hash == default_space().hash
    c = space.default_configuration()
    assert c.space_hash == space.hash


def test_config_from_other_space_rejected(space):
    c = Configuration(values={"x": 1}, space_hash="deadbeef0000")
    with pytest.raises(ValueError):
        space.validate(c)


def test_space_serialization_roundtrip(space, tmp_path):
    p = tmp_path / "space.txt"
    space.save(p)
    text = p.read_text()
    assert f"# space hash {space.hash}" in text
    for d in space.defs:
        assert d.name in text


def test_pipeline_pieces_from_config(space):
    c = space.default_configuration()
    arch = to_architecture(c)
    assert arch.hidden_size == 32
    samp = to_sampler_config(c, seed=11)
    assert samp.seed == 11
    opt = to_optimizer_config(c)
    assert opt.kind == "adam" and opt.lr == pytest.approx(1e-3)
