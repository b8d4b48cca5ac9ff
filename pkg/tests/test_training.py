import math
import struct

import numpy as np
import pytest

import oracles
from subword_attention.exceptions import ConfigError, CorruptCheckpoint, EmptyEvalSet, IoFailure
from subword_attention.nn import forward_batch, init_params
from subword_attention.pipeline import model_config_for
from subword_attention.seqprep import encode_batch
from subword_attention.training import (
    AdamState,
    EvalReport,
    TrainConfig,
    adam_step,
    confusion_matrix,
    evaluate,
    load_checkpoint,
    report_from_confusion,
    save_checkpoint,
    sgd_step,
    train,
    train_arrays,
    xent_loss,
)


@pytest.mark.parametrize(
    "probs, label, expected",
    [((1.0, 0.0, 0.0), 0, 0.0), ((1 / 3,) * 3, 1, math.log(3)), ((0.7, 0.2, 0.1), 2, -math.log(0.1))],
)
def test_xent(probs, label, expected):
    assert xent_loss(np.array(probs), label) == pytest.approx(expected, abs=1e-9)


def test_xent_clamps_zero():
    assert xent_loss(np.array([1.0, 0.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    assert TrainConfig.from_dict(TrainConfig(seed=3).to_dict()) == TrainConfig(seed=3)


def test_adam_zero_gradient_is_noop(tiny_config, tiny_params):
    before = tiny_params.copy()
    state = AdamState.zeros(tiny_params)
    adam_step(tiny_params, tiny_params.zeros_like(), state, TrainConfig())
    for (_, a), (_, b) in zip(before.items(), tiny_params.items()):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("scale", [1e-3, 1.0, 1e4])
def test_adam_first_step_is_lr_times_sign(tiny_config, tiny_params, scale):
    rng = np.random.default_rng(0)
    grads = tiny_params.zeros_like()
    for _, g in grads.items():
        g[...] = scale * rng.normal(size=g.shape)
    before = tiny_params.copy()
    cfg = TrainConfig(learning_rate=1e-3)
    adam_step(tiny_params, grads, AdamState.zeros(tiny_params), cfg)
    for (name, a), (_, b) in zip(before.items(), tiny_params.items()):
        g = getattr(grads, name)
        # at t = 1 the bias-corrected ratio is g / (|g| + eps), i.e. sign(g) up to eps
        np.testing.assert_allclose(a - b, 1e-3 * g / (np.abs(g) + cfg.epsilon), rtol=1e-9, atol=1e-15)
        np.testing.assert_allclose(np.abs(a - b), 1e-3, rtol=1e-2)


def test_optimizers_deterministic(tiny_config):
    def run(step):
        params = init_params(tiny_config, 0)
        state = AdamState.zeros(params)
        rng = np.random.default_rng(1)
        for _ in range(10):
            grads = params.zeros_like()
            for _, g in grads.items():
                g[...] = rng.normal(size=g.shape)
            step(params, grads, state)
        return params

    for step in (
        lambda p, g, s: adam_step(p, g, s, TrainConfig()),
        lambda p, g, s: sgd_step(p, g, TrainConfig(learning_rate=0.1)),
    ):
        a, b = run(step), run(step)
        for (_, x), (_, y) in zip(a.items(), b.items()):
            np.testing.assert_array_equal(x, y)


def test_sgd_step(tiny_params):
    grads = tiny_params.zeros_like()
    grads.out_b[:] = 2.0
    before = tiny_params.out_b.copy()
    sgd_step(tiny_params, grads, TrainConfig(learning_rate=0.5))
    np.testing.assert_allclose(tiny_params.out_b, before - 1.0)


def test_confusion_matrix():
    conf = confusion_matrix([0, 0, 1, 2, 1], [0, 1, 1, 2, 0])
    np.testing.assert_array_equal(conf, [[1, 1, 0], [1, 1, 0], [0, 0, 1]])


def test_perfect_predictions():
    report = report_from_confusion(np.diag([3, 4, 5]))
    assert (report.accuracy, report.weighted_precision, report.weighted_recall, report.weighted_f1) == (1, 1, 1, 1)


def test_hand_computed_report():
    report = report_from_confusion([[2, 0, 0], [1, 1, 0], [0, 0, 1]])
    assert report.accuracy == pytest.approx(0.8)
    assert report.weighted_precision == pytest.approx(0.4 * 2 / 3 + 0.4 + 0.2)
    assert report.weighted_recall == pytest.approx(0.8)
    f1 = [2 * (2 / 3) / (2 / 3 + 1), 2 * 0.5 / 1.5, 1.0]
    assert report.weighted_f1 == pytest.approx(0.4 * f1[0] + 0.4 * f1[1] + 0.2 * f1[2])


def test_metrics_match_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(200):
        conf = rng.integers(0, 6, size=(3, 3))
        if conf.sum() == 0:
            continue
        report = report_from_confusion(conf)
        assert report.weighted_recall == report.accuracy
        ref = oracles.metrics_bruteforce(*oracles.expand_confusion(conf))
        got = (report.accuracy, report.weighted_precision, report.weighted_recall, report.weighted_f1)
        np.testing.assert_allclose(got, ref, atol=1e-12)


def test_empty_eval():
    with pytest.raises(EmptyEvalSet):
        report_from_confusion(np.zeros((3, 3), dtype=int))


def test_report_render_and_parse():
    report = report_from_confusion([[120, 10, 3], [8, 170, 4], [5, 6, 20]])
    text = report.render()
    for column in ("Accuracy", "F1", "Precision", "Recall"):
        assert column in text.splitlines()[0]
    assert EvalReport.parse(text) == report
    assert report.headline().startswith("accuracy ")


def test_headline_format():
    report = EvalReport(0.8741, 0.862, 0.868, 0.851, ((1,),))
    assert report.headline() == "accuracy 87.41, F1 0.851"


def small_setup(toy_samples, toy_tokenizers, **overrides):
    bpe, uni = toy_tokenizers
    cfg = model_config_for(bpe, uni, max_len=16, d_model=16, n_heads=4, dense_units=32, **overrides)
    return cfg


def test_training_deterministic_and_decreasing(toy_samples, toy_tokenizers):
    cfg = small_setup(toy_samples, toy_tokenizers)
    tc = TrainConfig(epochs=4, batch_size=16, learning_rate=3e-3, seed=5)
    p1, l1 = train(toy_samples, toy_tokenizers, cfg, tc)
    p2, l2 = train(toy_samples, toy_tokenizers, cfg, tc)
    assert l1 == l2
    for (_, a), (_, b) in zip(p1.items(), p2.items()):
        np.testing.assert_array_equal(a, b)
    assert l1[-1] < l1[0]
    _, l3 = train(toy_samples, toy_tokenizers, cfg, TrainConfig(epochs=4, batch_size=16, learning_rate=3e-3, seed=6))
    assert l3 != l1


def test_train_arrays_callback(toy_tokenizers):
    bpe, uni = toy_tokenizers
    cfg = model_config_for(bpe, uni, max_len=8, d_model=8, n_heads=2, dense_units=8)
    b, u = encode_batch(["chai", "pagal", "groupx"], bpe, uni, 8)
    seen = []
    train_arrays(b, u, [0, 1, 2], cfg, TrainConfig(epochs=3), callback=lambda e, loss, p: seen.append(e))
    assert len(seen) == 3


def test_evaluate_and_empty(toy_samples, toy_tokenizers):
    cfg = small_setup(toy_samples, toy_tokenizers)
    params = init_params(cfg, 0)
    report = evaluate(toy_samples, toy_tokenizers, params, cfg)
    assert report.total == len(toy_samples)
    with pytest.raises(EmptyEvalSet):
        evaluate([], toy_tokenizers, params, cfg)


def test_checkpoint_round_trip(tmp_path, tiny_config, tiny_params):
    params = tiny_params.astype(np.float32)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, tiny_config, path, TrainConfig(seed=9))
    loaded, cfg, tc = load_checkpoint(path)
    assert cfg == tiny_config
    assert tc == TrainConfig(seed=9)
    for (_, a), (_, b) in zip(params.items(), loaded.items()):
        assert b.dtype == np.float32
        np.testing.assert_array_equal(a, b)
    ids = np.random.default_rng(0).integers(0, 9, size=(4, 6))
    np.testing.assert_array_equal(forward_batch(ids, ids, params, cfg), forward_batch(ids, ids, loaded, cfg))


def test_checkpoint_errors(tmp_path, tiny_config, tiny_params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(tiny_params, tiny_config, path)
    blob = path.read_bytes()

    path.write_bytes(blob[:-7])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)

    path.write_bytes(blob[:4] + struct.pack("<I", 7) + blob[8:])
    with pytest.raises(CorruptCheckpoint, match="version 7"):
        load_checkpoint(path)

    path.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(CorruptCheckpoint, match="magic"):
        load_checkpoint(path)

    path.write_bytes(blob + b"\0")
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)

    with pytest.raises(IoFailure):
        load_checkpoint(tmp_path / "missing.ckpt")
