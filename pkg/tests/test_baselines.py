import numpy as np
import pytest

from headgen.baselines import BaselineInputError, RnnConfig, RnnSeq2Seq, first_sentence, rnn_encode_decode
from headgen.bpe import BOS, EOS
from headgen.decoding import beam_decode, greedy_decode
from headgen.model_ut import ContractError
from headgen.training import Example, TrainConfig, pad_batch, smoothed_nll, train

from gradcheck import model_grad_error

V = 11


def micro(seed=0):
    return RnnSeq2Seq(RnnConfig(vocab_size=V, d_model=6, hidden=8), rng=np.random.default_rng(seed))


PAPER_LEAD = (
    "southwest airlines said yesterday that it would add 16 flights a day from chicago midway airport, "
    "moving to protect a valuable hub... southwest said that it would also add flights."
)


def test_first_sentence_examples():
    assert first_sentence(PAPER_LEAD) == PAPER_LEAD[: PAPER_LEAD.index("...") + 3]
    assert first_sentence("hello world") == "hello world"
    assert first_sentence("a. b. c.") == "a."
    assert first_sentence("  what now? later.  ") == "what now?"
    assert first_sentence("version 2.5 ships today. more soon.") == "version 2.5 ships today."


def test_first_sentence_is_deterministic_and_rejects_empty():
    assert first_sentence(PAPER_LEAD) == first_sentence(PAPER_LEAD)
    with pytest.raises(BaselineInputError):
        first_sentence("   ")


def test_rnn_gradient_check():
    model = micro(1)
    src, mask, tgt_in, tgt_out = pad_batch([Example([4, 5, 6, 7, 8], [9, 10, 3]), Example([5, 3, 9], [6, 4, 7, 8])])

    def loss_fn():
        return smoothed_nll(model.forward(src, mask, tgt_in), tgt_out, eps=0.1)

    assert model_grad_error(model, loss_fn) < 1e-3


def test_rnn_step_is_normalised_with_attention_distributions():
    model = micro(2)
    attn = []
    lp = rnn_encode_decode([4, 5, 6], [BOS, 7, 8], model, attn)
    assert lp.shape == (V,)
    assert abs(np.exp(lp.data).sum() - 1) < 1e-6
    assert len(attn) == 3
    for w in attn:
        assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-6)


def test_rnn_contracts():
    model = micro(3)
    with pytest.raises(BaselineInputError):
        rnn_encode_decode([], [BOS], model)
    with pytest.raises(ContractError):
        rnn_encode_decode([4], [5], model)


def test_rnn_incremental_matches_teacher_forcing():
    model = micro(4)
    src, tgt = [4, 5, 6, 7], [BOS, 9, 3, 8, EOS]
    lp = model.forward(np.array([src]), np.ones((1, 4), bool), np.array([tgt[:-1]])).data[0]
    state = model.start(src)
    for t in range(1, len(tgt)):
        assert np.allclose(model.next_log_probs(state, [tgt[:t]])[0], lp[t - 1], atol=1e-12)


def test_rnn_padding_does_not_change_final_state():
    model = micro(5)
    a = model.encode(np.array([[4, 5, 6]]), np.ones((1, 3), bool))
    b = model.encode(np.array([[4, 5, 6, 0, 0]]), np.array([[True, True, True, False, False]]))
    assert np.allclose(a[3].data, b[3].data, atol=1e-12)


def test_rnn_shares_training_and_decoding_paths():
    model = micro(6)
    data = [Example([4, 5, 6], [4, 5]), Example([7, 8], [7]), Example([9, 10, 4], [9, 10])]
    cfg = TrainConfig(warmup_steps=10, lr_scale=2.0, batch_tokens=64, max_steps=60, eval_every=20, patience=10)
    res = train(model, data, data, cfg, np.random.default_rng(0))
    assert res.losses[-1] < 0.5 * res.losses[0]
    assert greedy_decode(model, [4, 5, 6], 5) == beam_decode(model, [4, 5, 6], 1, 5)
    assert len(beam_decode(model, [7, 8], 3, 5)) <= 5
