import json
import math

import numpy as np
import pytest

from headgen import synthetic
from headgen.bpe import EOS, PAD, train_bpe
from headgen.checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from headgen.corpus import parse_lines
from headgen.model_ut import UniversalTransformer, UtConfig
from headgen.baselines import RnnConfig, RnnSeq2Seq
from headgen.tensor import ParameterError, Tensor, log_softmax
from headgen.training import (
    Example,
    OptimState,
    TrainConfig,
    TrainInputError,
    adam_step,
    evaluate_loss,
    make_examples,
    noam_lr,
    pad_batch,
    smoothed_nll,
    token_batches,
    train,
)


def closed_form(step, d, warmup):
    return d**-0.5 * min(step**-0.5, step * warmup**-1.5)


@pytest.mark.parametrize("step", [1, 100, 4000, 10**5])
def test_noam_matches_closed_form(step):
    assert abs(noam_lr(step, 512, 4000) - closed_form(step, 512, 4000)) <= 1e-12


def test_noam_examples():
    assert abs(noam_lr(4000, 512, 4000) - 6.988e-4) < 5e-8
    assert abs(noam_lr(1, 512, 4000) - 1.747e-7) < 5e-11
    assert noam_lr(3999, 512, 4000) < noam_lr(4000, 512, 4000) > noam_lr(4001, 512, 4000)
    assert noam_lr(10, 64, 400, scale=0.5) == 0.5 * noam_lr(10, 64, 400)
    with pytest.raises(ParameterError):
        noam_lr(0, 512, 4000)


def _log_probs(logits):
    return log_softmax(Tensor(logits), axis=-1)


def test_uniform_model_loss_is_log_vocab():
    lp = _log_probs(np.zeros((2, 3, 100)))
    loss = smoothed_nll(lp, np.full((2, 3), 7), eps=0.0).item()
    assert abs(loss - math.log(100)) < 1e-12


def test_smoothing_penalises_certainty():
    logits = np.full((1, 2, 10), -1e3)
    logits[0, 0, 4] = logits[0, 1, 5] = 0.0
    lp = _log_probs(logits)
    assert smoothed_nll(lp, [[4, 5]], eps=0.0).item() < 1e-12
    assert smoothed_nll(lp, [[4, 5]], eps=0.1).item() > 0


def test_zero_eps_is_plain_nll():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(3, 4, 9))
    targets = rng.integers(1, 9, size=(3, 4))
    lp = logits - np.log(np.exp(logits).sum(-1, keepdims=True))
    direct = -np.mean(np.take_along_axis(lp, targets[..., None], -1))
    assert abs(smoothed_nll(_log_probs(logits), targets, 0.0).item() - direct) < 1e-9


def test_smoothed_loss_hand_value():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(1, 1, 5))
    lp = logits - np.log(np.exp(logits).sum(-1, keepdims=True))
    eps, target = 0.2, 3
    # uniform part spreads over the 4 non-pad ids 1..4
    q = np.full(5, eps / 4)
    q[PAD] = 0.0
    q[target] += 1 - eps
    want = -(q * lp[0, 0]).sum()
    assert abs(smoothed_nll(_log_probs(logits), [[target]], eps).item() - want) < 1e-12


def test_padding_never_changes_loss():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(2, 3, 7))
    targets = rng.integers(1, 7, size=(2, 3))
    base = smoothed_nll(_log_probs(logits), targets, 0.1).item()
    padded_logits = np.concatenate([logits, rng.normal(size=(2, 4, 7))], axis=1)
    padded_targets = np.concatenate([targets, np.zeros((2, 4), dtype=int)], axis=1)
    assert abs(smoothed_nll(_log_probs(padded_logits), padded_targets, 0.1).item() - base) < 1e-9


def test_smoothing_rejects_bad_eps():
    with pytest.raises(ParameterError):
        smoothed_nll(_log_probs(np.zeros((1, 1, 3))), [[1]], eps=1.0)
    with pytest.raises(TrainInputError):
        smoothed_nll(_log_probs(np.zeros((1, 1, 3))), [[PAD]], eps=0.0)


def _params():
    return {"w": Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)}


def test_adam_zero_gradient_leaves_parameters():
    p, st = _params(), OptimState()
    before = p["w"].data.copy()
    for _ in range(3):
        adam_step(p, {"w": np.zeros(3)}, st, 0.1)
    assert np.array_equal(p["w"].data, before)


def test_adam_constant_gradient_moves_by_lr_against_sign():
    p, st = _params(), OptimState()
    g = np.array([0.3, -4.0, 1e-3])
    lr = 1e-3
    for _ in range(200):
        before = p["w"].data.copy()
        adam_step(p, {"w": g}, st, lr)
    assert np.allclose(p["w"].data - before, -np.sign(g) * lr, rtol=1e-6)


def test_adam_first_step_hand_value():
    p, st = _params(), OptimState()
    g = np.array([0.5, -0.25, 2.0])
    adam_step(p, {"w": g}, st, 0.01, (0.9, 0.98), 1e-9)
    # bias correction makes the first step lr * g / (|g| + eps)
    assert np.allclose(p["w"].data, np.array([1.0, -2.0, 0.5]) - 0.01 * g / (np.abs(g) + 1e-9), atol=1e-15)
    assert st.step == 1


def test_adam_rejects_nan_naming_parameter():
    with pytest.raises(FloatingPointError, match="'w'"):
        adam_step(_params(), {"w": np.array([0.0, np.nan, 1.0])}, OptimState(), 0.1)


def test_adam_is_deterministic():
    def run():
        p, st = _params(), OptimState()
        rng = np.random.default_rng(0)
        for _ in range(10):
            adam_step(p, {"w": rng.normal(size=3)}, st, 0.01)
        return p["w"].data

    assert np.array_equal(run(), run())


def test_make_examples_and_batches():
    ex = make_examples([([1] * 10, [2] * 5), ([], [3]), ([4, 5], [6] * 9)], 4, 3)
    assert [len(e.src) for e in ex] == [4, 2]
    assert [len(e.tgt) for e in ex] == [3, 3]
    src, mask, tgt_in, tgt_out = pad_batch(ex)
    assert src.shape == (2, 4) and mask.sum() == 6
    assert tgt_in[0, 0] == 1 and tgt_out[0, 3] == EOS
    examples = [Example([3] * n, [4] * (n % 5)) for n in range(1, 40)]
    batches = token_batches(examples, 60, range(len(examples)))
    assert sorted(i for b in batches for i in b) == list(range(len(examples)))
    for b in batches:
        longest = max(max(len(examples[i].src), len(examples[i].tgt) + 1) for i in b)
        assert len(b) == 1 or longest * len(b) <= 60


def _toy(n=32, seed=1):
    arts = list(parse_lines(json.dumps(r) for r in synthetic.make_corpus(n, seed)))
    bpe = train_bpe([a.title + " " + a.body for a in arts], 400)
    return bpe, make_examples([(bpe.encode(a.body), bpe.encode(a.title)) for a in arts], 48, 32)


@pytest.fixture(scope="module")
def toy():
    return _toy()


def _micro(vocab, seed=0):
    return UniversalTransformer(UtConfig(vocab, 32, 2, 2, dropout_p=0.1, max_src_len=48), rng=np.random.default_rng(seed))


def test_training_loss_halves_within_200_steps(toy):
    bpe, ex = toy
    model = _micro(bpe.vocab_size)
    cfg = TrainConfig(warmup_steps=100, batch_tokens=512, max_steps=200, eval_every=100, patience=10)
    res = train(model, ex, ex[:4], cfg, np.random.default_rng(0))
    first = np.mean(res.losses[:5])
    last = np.mean(res.losses[-5:])
    assert res.steps == 200
    assert last <= 0.5 * first


def test_patience_zero_stops_after_one_validation(toy):
    bpe, ex = toy
    cfg = TrainConfig(warmup_steps=10, batch_tokens=512, patience=0, max_epochs=5)
    res = train(_micro(bpe.vocab_size), ex[:8], ex[8:10], cfg, np.random.default_rng(0))
    assert len(res.val_losses) == 1


def test_same_seed_gives_identical_loss_curves(toy):
    bpe, ex = toy
    cfg = TrainConfig(warmup_steps=10, batch_tokens=256, max_steps=8, eval_every=4, patience=5)
    a = train(_micro(bpe.vocab_size, 3), ex[:10], ex[10:12], cfg, np.random.default_rng(1))
    b = train(_micro(bpe.vocab_size, 3), ex[:10], ex[10:12], cfg, np.random.default_rng(1))
    assert a.losses == b.losses and a.val_losses == b.val_losses


def test_learning_rates_follow_schedule(toy):
    bpe, ex = toy
    cfg = TrainConfig(warmup_steps=7, batch_tokens=256, max_steps=12, lr_scale=0.5, patience=5)
    res = train(_micro(bpe.vocab_size), ex[:6], ex[6:8], cfg, np.random.default_rng(0))
    assert res.lrs == [noam_lr(s, 32, 7, 0.5) for s in range(1, 13)]


def test_training_keeps_best_validation_weights(toy):
    bpe, ex = toy
    model = _micro(bpe.vocab_size)
    cfg = TrainConfig(warmup_steps=10, batch_tokens=256, max_steps=30, eval_every=10, patience=5)
    res = train(model, ex[:10], ex[10:12], cfg, np.random.default_rng(0))
    assert abs(evaluate_loss(model, ex[10:12], 256) - res.best_val_loss) < 1e-12
    assert res.best_val_loss == min(res.val_losses)


def test_empty_training_set_rejected():
    with pytest.raises(TrainInputError):
        train(_micro(20), [], [], TrainConfig())


def test_checkpoint_round_trip_preserves_validation_loss(tmp_path, toy):
    bpe, ex = toy
    model = _micro(bpe.vocab_size, 5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"seed": 5})
    back, extra = load_checkpoint(path)
    assert extra == {"seed": "5"}
    assert back.config == model.config
    assert evaluate_loss(back, ex[:6], 512) == evaluate_loss(model, ex[:6], 512)


def test_rnn_checkpoint_round_trip(tmp_path):
    model = RnnSeq2Seq(RnnConfig(13, 6, 5), rng=np.random.default_rng(0))
    path = tmp_path / "r.ckpt"
    save_checkpoint(path, model)
    kind, cfg, _, tensors = read_checkpoint(path)
    assert kind == "rnn" and set(tensors) == set(model.params)
    back, _ = load_checkpoint(path)
    ex = [Example([3, 4, 5], [6, 7])]
    assert evaluate_loss(back, ex, 64) == evaluate_loss(model, ex, 64)


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"hello\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
