import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctckws import ctc
from ctckws.ctc import (DEFAULT_ALPHABET, Alphabet, AlphabetError, collapse_path, ctc_grad,
                        ctc_log_likelihood, enumerate_paths_oracle, expand_with_blanks)

A = DEFAULT_ALPHABET
BLANK = A.blank_index


def enc(s):
    return A.encode(s)


def random_posteriors(rng, T, K):
    return rng.dirichlet(np.ones(K), size=T)


def test_alphabet_layout():
    assert len(A) == 30
    assert A.blank != A.boundary
    assert A.labels[:26] == tuple("abcdefghijklmnopqrstuvwxyz")
    assert A.decode(A.encode("it's a dog.")) == "it's_a_dog."
    assert Alphabet.from_string(A.to_string()) == A


def test_alphabet_rejects_unknown_symbols():
    with pytest.raises(AlphabetError):
        A.encode("café")
    with pytest.raises(AlphabetError):
        A.encode("a-b")


@pytest.mark.parametrize("text, n", [("cat", 7), ("aa", 5), ("", 1)])
def test_expand_with_blanks(text, n):
    ext = expand_with_blanks(enc(text), BLANK)
    assert len(ext) == n
    assert list(ext[::2]) == [BLANK] * (len(text) + 1)
    assert list(ext[1::2]) == enc(text)


def test_likelihood_one_hot_single_frame():
    y = np.zeros((1, 30))
    y[0, A.index("a")] = 1.0
    assert ctc_log_likelihood(y, enc("a")) == 0.0


def test_likelihood_uniform_three_labels():
    # labels {a, b, -}: valid paths aa, a-, -a each 1/9
    y = np.full((2, 3), 1 / 3)
    assert ctc_log_likelihood(y, [0], blank=2) == pytest.approx(np.log(1 / 3), abs=1e-12)


def test_likelihood_infeasible_repeat():
    y = np.full((2, 30), 1 / 30)
    assert ctc_log_likelihood(y, enc("aa")) == -np.inf
    assert ctc.min_frames(enc("aa")) == 3


def test_likelihood_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(100):
        T, K = int(rng.integers(1, 7)), int(rng.integers(2, 6))
        blank = K - 1
        L = int(rng.integers(0, 4))
        seq = list(rng.integers(0, K - 1, size=L))
        y = random_posteriors(rng, T, K)
        brute = enumerate_paths_oracle(y, seq, blank)
        got = ctc_log_likelihood(y, seq, blank)
        if brute == 0.0:
            assert got == -np.inf
        else:
            assert got == pytest.approx(np.log(brute), abs=1e-10)


def test_oracle_one_hot_path():
    # only path (0, blank, 1) has mass, and it collapses to "01"
    onehot = np.zeros((3, 4))
    onehot[[0, 1, 2], [0, 3, 1]] = 1.0
    assert enumerate_paths_oracle(onehot, [0, 1], 3) == 1.0
    assert enumerate_paths_oracle(onehot, [0], 3) == 0.0


def test_oracle_infeasible_and_guard():
    y = np.full((2, 3), 1 / 3)
    assert enumerate_paths_oracle(y, [0, 0], 2) == 0.0
    with pytest.raises(ValueError):
        enumerate_paths_oracle(np.full((11, 3), 1 / 3), [0], 2)


def test_total_probability_over_all_transcriptions():
    # sums over every label sequence that fits must give 1
    rng = np.random.default_rng(5)
    T, K, blank = 4, 3, 2
    y = random_posteriors(rng, T, K)
    total = 0.0
    for L in range(T + 1):
        for seq in itertools.product(range(K - 1), repeat=L):
            total += np.exp(ctc_log_likelihood(y, list(seq), blank))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_grad_one_hot_limit():
    logits = np.zeros((1, 30))
    logits[0, A.index("a")] = 50.0
    loss, grad = ctc_grad(logits, enc("a"))
    assert loss == pytest.approx(0.0, abs=1e-15)
    assert np.abs(grad).max() < 1e-15


def test_grad_loss_consistent_with_likelihood():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((7, 30))
    seq = enc("ab_")
    loss, _ = ctc_grad(logits, seq)
    assert loss == pytest.approx(-ctc_log_likelihood(ctc.softmax_rows(logits), seq), abs=1e-10)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    eps = 1e-6
    for _ in range(10):
        T = int(rng.integers(2, 13))
        L = int(rng.integers(1, 5))
        K = 6
        blank = 5
        seq = list(rng.integers(0, 5, size=L))
        if ctc.min_frames(seq) > T:
            continue
        logits = rng.standard_normal((T, K))
        _, grad = ctc_grad(logits, seq, blank)
        num = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            lp, lm = logits.copy(), logits.copy()
            lp[idx] += eps
            lm[idx] -= eps
            num[idx] = (ctc_grad(lp, seq, blank)[0] - ctc_grad(lm, seq, blank)[0]) / (2 * eps)
        rel = np.abs(grad - num) / np.maximum(np.maximum(np.abs(grad), np.abs(num)), 1e-7)
        assert rel.max() < 1e-4


def test_grad_rejects_infeasible():
    with pytest.raises(ctc.InfeasibleAlignmentError):
        ctc_grad(np.zeros((2, 30)), enc("aa"))


@pytest.mark.parametrize("path, out", [("--aa-b-", "ab"), ("a-a", "aa"), ("----", "")])
def test_collapse_examples(path, out):
    assert collapse_path([A.index(c) for c in path]) == enc(out)


@given(st.lists(st.integers(0, 4), max_size=30))
def test_collapse_fixed_points(path):
    once = collapse_path(path, blank=4)
    # idempotent unless the output repeats a label; blank-interleaving always round-trips
    if all(a != b for a, b in zip(once, once[1:])):
        assert collapse_path(once, blank=4) == once
    assert collapse_path(list(expand_with_blanks(once, 4)), blank=4) == once
