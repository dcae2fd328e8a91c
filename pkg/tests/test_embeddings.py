import numpy as np
import pytest

from headgen.embeddings import (
    EmbeddingConfigError,
    EmbeddingInputError,
    EmbeddingTable,
    init_embeddings,
    sgns_loss,
    skipgram_pairs,
    train_sgns,
)

from gradcheck import numeric_grad, rel_err


def test_sgns_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    w_in = rng.normal(size=(5, 4))
    w_out = rng.normal(size=(5, 4))
    centers = np.array([0, 1, 2, 4, 0])
    contexts = np.array([1, 2, 3, 0, 4])
    negatives = rng.integers(0, 5, size=(5, 3))
    _, d_in, d_out = sgns_loss(w_in, w_out, centers, contexts, negatives)

    def f():
        return sgns_loss(w_in, w_out, centers, contexts, negatives)[0]

    n_in, n_out = numeric_grad(f, [w_in, w_out])
    assert rel_err(d_in, n_in) < 1e-4
    assert rel_err(d_out, n_out) < 1e-4


def test_sgns_loss_closed_form():
    # one pair, one negative, orthogonal-free toy numbers
    w_in = np.array([[1.0, 0.0], [0.0, 0.0]])
    w_out = np.array([[0.0, 0.0], [2.0, 0.0]])
    loss, _, _ = sgns_loss(w_in, w_out, np.array([0]), np.array([1]), np.array([[0]]))
    expected = np.log1p(np.exp(-2.0)) + np.log(2.0)
    assert abs(loss - expected) < 1e-12


def test_skipgram_pairs_match_brute_force():
    seqs = [[5, 6, 7, 8, 9, 10, 11], [1, 2], [3]]
    window = 2
    got = sorted(map(tuple, skipgram_pairs(seqs, window).tolist()))
    want = sorted(
        (s[i], s[j]) for s in seqs for i in range(len(s)) for j in range(len(s)) if 0 < abs(i - j) <= window
    )
    assert got == want


def test_zero_epochs_returns_initialisation():
    seqs = [[1, 2, 3, 4]]
    table = train_sgns(seqs, 6, 8, np.random.default_rng(3), epochs=0)
    init = np.random.default_rng(3).uniform(-0.5 / 8, 0.5 / 8, size=(6, 8))
    assert np.array_equal(table.matrix, init)


def _cooccurrence_corpus(rng, n=300):
    a, b, c, d = 0, 1, 2, 3
    seqs = []
    for _ in range(n):
        if rng.random() < 0.5:
            filler = list(rng.integers(4, 16, size=6))
            seqs.append([a] + filler[:2] + [b] + filler[2:])
        else:
            filler = list(rng.integers(16, 28, size=6))
            seqs.append([c] + filler[:2] + [d] + filler[2:])
    return seqs


def _cos(m, i, j):
    return m[i] @ m[j] / (np.linalg.norm(m[i]) * np.linalg.norm(m[j]))


def test_cooccurring_tokens_end_up_closer():
    rng = np.random.default_rng(0)
    seqs = _cooccurrence_corpus(rng)
    m = train_sgns(seqs, 28, 16, np.random.default_rng(1), window=3, epochs=5, batch_size=64).matrix
    assert _cos(m, 0, 1) > _cos(m, 0, 2)
    assert np.all(np.isfinite(m))


def test_loss_decreases_over_first_epochs():
    seqs = _cooccurrence_corpus(np.random.default_rng(2))
    history = []
    train_sgns(seqs, 28, 16, np.random.default_rng(4), window=3, epochs=3, batch_size=64, history=history)
    assert len(history) == 3
    assert history[0] > history[1] > history[2]


def test_training_is_deterministic():
    seqs = _cooccurrence_corpus(np.random.default_rng(2), 50)
    a = train_sgns(seqs, 28, 8, np.random.default_rng(7), epochs=2).matrix
    b = train_sgns(seqs, 28, 8, np.random.default_rng(7), epochs=2).matrix
    assert np.array_equal(a, b)


def test_empty_corpus_rejected():
    with pytest.raises(EmbeddingInputError):
        train_sgns([], 10, 4, np.random.default_rng(0))
    with pytest.raises(EmbeddingInputError):
        train_sgns([[], []], 10, 4, np.random.default_rng(0))


def test_file_round_trip(tmp_path):
    m = np.random.default_rng(0).normal(size=(7, 3))
    p = tmp_path / "e.bin"
    EmbeddingTable(m).save(p)
    raw = p.read_bytes()
    assert raw.startswith(b"emb-v1 7 3\n")
    assert len(raw) == len(b"emb-v1 7 3\n") + 7 * 3 * 8
    assert np.array_equal(EmbeddingTable.load(p).matrix, m)


def test_load_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"nonsense\n")
    with pytest.raises(EmbeddingInputError):
        EmbeddingTable.load(p)
    p.write_bytes(b"emb-v1 2 2\n" + b"\0" * 8)
    with pytest.raises(EmbeddingInputError):
        EmbeddingTable.load(p)


def test_init_embeddings_strategies():
    rng = np.random.default_rng(0)
    t = init_embeddings("random", 9, 4, rng)
    assert t.matrix.shape == (9, 4)
    pre = EmbeddingTable(np.ones((9, 4)))
    assert init_embeddings("pretrained", 9, 4, table=pre) is pre
    with pytest.raises(EmbeddingConfigError):
        init_embeddings("pretrained", 9, 5, table=pre)
    with pytest.raises(EmbeddingConfigError):
        init_embeddings("pretrained", 9, 4)
    with pytest.raises(EmbeddingConfigError):
        init_embeddings("glove", 9, 4, rng)
