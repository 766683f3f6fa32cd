import math

import numpy as np
import pytest

from tst.errors import ConfigError, DataError
from tst.model import (TSTConfig, TSTModel, cross_entropy, cross_entropy_from_logits,
                       load_checkpoint, save_checkpoint)
from tst.tensor import Tensor, backward
from tst.training import AdamState, adam_step

TINY = dict(L=32, ns=4, dim=8, dim_mlp=16, d_k=4, heads=2, depth=1, n_class=10,
            p_drop=0.0, batch_size=4, epochs=1)


def tiny_model(seed=0, **overrides):
    return TSTModel(TSTConfig(**{**TINY, **overrides}), seed=seed)


def test_default_config_is_stock():
    cfg = TSTConfig()
    assert (cfg.L, cfg.ns, cfg.sub_len, cfg.dim, cfg.dim_mlp) == (2048, 256, 8, 128, 256)
    assert (cfg.d_k, cfg.heads, cfg.depth, cfg.p_drop) == (64, 6, 6, 0.1)
    assert (cfg.pos_encoding, cfg.n_class) == ("1d", 10)
    assert (cfg.lr, cfg.lr_step, cfg.lr_gamma) == (3e-5, 10, 0.8)
    assert (cfg.batch_size, cfg.epochs) == (128, 50)


def test_config_validation_rejects_bad_combos():
    with pytest.raises(ConfigError):
        TSTConfig(ns=3).validate()          # 2048 % 3 != 0
    with pytest.raises(ConfigError):
        TSTConfig(p_drop=1.0).validate()
    with pytest.raises(ConfigError):
        TSTConfig(pos_encoding="2d").validate()
    with pytest.raises(ConfigError):
        TSTConfig.from_dict({"dim": 32, "bogus": 1})


def test_probs_rows_sum_to_one(rng):
    model = tiny_model()
    res = model.forward(rng.normal(size=(5, 32)))
    np.testing.assert_allclose(res.probs.data.sum(axis=1), 1.0, atol=1e-6)


def test_zero_head_gives_uniform_probs(rng):
    model = tiny_model()
    model.w_head = Tensor(np.zeros((8, 10), dtype=np.float32), requires_grad=True)
    model.b_head = Tensor(np.zeros(10, dtype=np.float32), requires_grad=True)
    res = model.forward(rng.normal(size=(3, 32)))
    np.testing.assert_allclose(res.probs.data, 0.1, atol=1e-7)
    # uniform probs tie-break to class 0
    np.testing.assert_array_equal(model.predict(rng.normal(size=(3, 32))), 0)


def test_argmax_probs_equals_argmax_logits(rng):
    res = tiny_model().forward(rng.normal(size=(6, 32)))
    np.testing.assert_array_equal(np.argmax(res.probs.data, axis=1),
                                  np.argmax(res.logits.data, axis=1))


def test_predict_matches_forward(rng):
    model = tiny_model(seed=4)
    x = rng.normal(size=(5, 32))
    np.testing.assert_array_equal(model.predict(x),
                                  np.argmax(model.forward(x).probs.data, axis=1))


def test_logit_shift_invariance(rng):
    logits = rng.normal(size=(4, 10))
    from tst.tensor import softmax
    p1 = softmax(Tensor(logits), axis=-1).data
    p2 = softmax(Tensor(logits + 37.5), axis=-1).data
    np.testing.assert_allclose(p1, p2, atol=1e-6)


def test_cross_entropy_perfect_and_uniform():
    one_hot = np.zeros((2, 10))
    one_hot[0, 3] = one_hot[1, 7] = 1.0
    assert cross_entropy(Tensor(one_hot), np.array([3, 7])).item() == 0.0
    uniform = np.full((4, 10), 0.1)
    assert abs(cross_entropy(Tensor(uniform), np.zeros(4, dtype=int)).item()
               - math.log(10)) < 1e-6


def test_cross_entropy_hand_case():
    probs = np.zeros((2, 10))
    probs[0, :2] = 0.5          # true class 0 -> -log 0.5
    probs[1, 4] = 0.25          # true class 4 -> -log 0.25
    probs[1, 5] = 0.75
    expected = -(math.log(0.5) + math.log(0.25)) / 2.0
    got = cross_entropy(Tensor(probs), np.array([0, 4])).item()
    assert abs(got - expected) < 1e-7


def test_cross_entropy_from_logits_agrees_and_is_stable(rng):
    logits = rng.normal(size=(5, 10)) * 3
    labels = rng.integers(0, 10, size=5)
    from tst.tensor import softmax
    a = cross_entropy(softmax(Tensor(logits), axis=-1), labels).item()
    b = cross_entropy_from_logits(Tensor(logits), labels).item()
    assert abs(a - b) < 1e-6
    huge = cross_entropy_from_logits(Tensor(logits * 1000), labels)
    assert math.isfinite(huge.item()) and huge.item() >= 0.0


def test_cross_entropy_nonnegative(rng):
    for _ in range(20):
        logits = rng.normal(size=(3, 10)) * rng.uniform(0.1, 10)
        labels = rng.integers(0, 10, size=3)
        assert cross_entropy_from_logits(Tensor(logits), labels).item() >= 0.0


def test_label_range_checked():
    with pytest.raises(DataError):
        cross_entropy_from_logits(Tensor(np.zeros((2, 10))), np.array([0, 10]))


def test_input_validation(rng):
    model = tiny_model()
    with pytest.raises(ConfigError):
        model.forward(rng.normal(size=(2, 31)))
    bad = rng.normal(size=(2, 32))
    bad[0, 0] = np.nan
    with pytest.raises(DataError):
        model.forward(bad)


def test_parameter_enumeration_is_deterministic():
    names_a = [n for n, _ in tiny_model(seed=1).parameters()]
    names_b = [n for n, _ in tiny_model(seed=9).parameters()]
    assert names_a == names_b
    assert names_a[0] == "tokenizer.w_embed" and names_a[-1] == "head.b"


def test_same_seed_same_init():
    pa = tiny_model(seed=5).parameters()
    pb = tiny_model(seed=5).parameters()
    for (_, a), (_, b) in zip(pa, pb):
        np.testing.assert_array_equal(a.data, b.data)


def test_single_adam_step_decreases_batch_loss(rng):
    model = tiny_model(seed=2)
    x = rng.normal(size=(4, 32)).astype(np.float32)
    labels = np.array([0, 1, 2, 3])
    params = [p for _, p in model.parameters()]
    before = cross_entropy_from_logits(model.forward(x).logits, labels)
    model.zero_grad()
    backward(before)
    adam_step(params, [p.grad for p in params], AdamState.init(params), lr=1e-6)
    after = cross_entropy_from_logits(model.forward(x).logits, labels)
    assert after.item() < before.item()


def test_checkpoint_roundtrip(tmp_path, rng):
    model = tiny_model(seed=7)
    path = tmp_path / "model.tst"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    for (na, a), (nb, b) in zip(model.parameters(), loaded.parameters()):
        assert na == nb
        np.testing.assert_array_equal(a.data, b.data)  # bit-exact
    x = rng.normal(size=(3, 32)).astype(np.float32)
    np.testing.assert_array_equal(model.forward(x).logits.data,
                                  loaded.forward(x).logits.data)


def test_checkpoint_mismatched_config(tmp_path):
    model = tiny_model(seed=1)
    path = tmp_path / "model.tst"
    save_checkpoint(model, path)
    wrong = TSTConfig(**{**TINY, "dim": 16})
    with pytest.raises(ConfigError):
        load_checkpoint(path, expected_config=wrong)


def test_checkpoint_truncated_and_bad_magic(tmp_path):
    model = tiny_model(seed=1)
    path = tmp_path / "model.tst"
    save_checkpoint(model, path)
    blob = path.read_bytes()
    (tmp_path / "cut.tst").write_bytes(blob[:len(blob) // 2])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(tmp_path / "cut.tst")
    (tmp_path / "junk.tst").write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "junk.tst")
