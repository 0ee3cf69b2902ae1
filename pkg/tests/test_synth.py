import numpy as np
import pytest

from ctckws.ctc import DEFAULT_ALPHABET, collapse_path
from ctckws.synth import (DEFAULT_VOCABULARY, FILLER_WORDS, MONO_KEYWORDS, MULTI_KEYWORDS,
                          SynthConfig, SynthError, build_corpus, concatenate_stream,
                          nearest_template_labels, synth_utterance, templates)

A = DEFAULT_ALPHABET


def test_frame_count_is_sum_of_durations():
    utt = synth_utterance("money into bond", SynthConfig())
    durations = [e - s for s, e in utt.spans]
    assert utt.num_frames == sum(durations)
    assert all(3 <= d <= 5 for d in durations)


def test_spans_tile_and_match_labels():
    utt = synth_utterance("honey moon", SynthConfig(seed=4))
    assert utt.spans[0][0] == 0 and utt.spans[-1][1] == utt.num_frames
    assert all(a[1] == b[0] for a, b in zip(utt.spans, utt.spans[1:]))
    assert utt.labels == A.encode("honey_moon")


def test_same_seed_bit_identical():
    a = synth_utterance("percent", SynthConfig(seed=9))
    b = synth_utterance("percent", SynthConfig(seed=9))
    assert np.array_equal(a.features, b.features) and a.spans == b.spans
    c = build_corpus(DEFAULT_VOCABULARY, 5, SynthConfig(), seed=3)
    d = build_corpus(DEFAULT_VOCABULARY, 5, SynthConfig(), seed=3)
    assert all(np.array_equal(u.features, v.features) for u, v in zip(c.utterances, d.utterances))


def test_rejects_unknown_characters():
    with pytest.raises(SynthError):
        synth_utterance("it's", SynthConfig())


@pytest.mark.parametrize("kw", [dict(mean_duration=1), dict(noise_std=-1.0), dict(jitter=4),
                                dict(separation=0.0)])
def test_config_validation(kw):
    with pytest.raises(SynthError):
        SynthConfig(**kw)


def test_templates_are_separated():
    tmpl = templates(SynthConfig(separation=3.0))
    mat = np.array(list(tmpl.values()))
    d = np.linalg.norm(mat[:, None] - mat[None], axis=-1)
    off = d[~np.eye(len(mat), dtype=bool)]
    np.testing.assert_allclose(off, 3.0, rtol=1e-12)


@pytest.mark.parametrize("sep", [1.0, 4.0])
def test_zero_noise_template_recovery(sep):
    sc = SynthConfig(noise_std=0.0, separation=sep, seed=2)
    utt = synth_utterance("the hundred honeymoon ", sc)
    frame_labels = np.repeat(utt.labels, [e - s for s, e in utt.spans])
    got = nearest_template_labels(utt.features, sc)
    assert np.array_equal(got, frame_labels)
    # no blanks in the frame labels, so collapse merges every within-label run
    assert collapse_path(list(got), A.blank_index) == [
        lab for i, lab in enumerate(utt.labels) if i == 0 or lab != utt.labels[i - 1]]


def test_occurrence_counts_match_transcriptions():
    corpus = build_corpus(DEFAULT_VOCABULARY, 50, SynthConfig(), seed=5)
    for w in DEFAULT_VOCABULARY:
        n_text = sum(u.text.split().count(w) for u in corpus.utterances)
        assert sum(o.keyword == w for o in corpus.occurrences) == n_text
    for u in corpus.utterances:
        assert 3 <= len(u.text.split()) <= 10 and u.text.endswith(" ")


def test_occurrence_end_frames_hit_last_letter():
    corpus = build_corpus(["stock", "rate"], 10, SynthConfig(noise_std=0.0), seed=6)
    for o in corpus.occurrences:
        utt = corpus.utterances[o.utterance]
        k = next(i for i, (s, e) in enumerate(utt.spans) if s <= o.end_frame < e)
        assert A.labels[utt.labels[k]] == o.keyword[-1]
        assert utt.spans[k][1] - 1 == o.end_frame
        assert A.labels[utt.labels[k + 1]] == "_"


def test_disjoint_seeds_give_different_streams():
    sc = SynthConfig()
    a = concatenate_stream(build_corpus(DEFAULT_VOCABULARY, 20, sc, seed=1), sc)
    b = concatenate_stream(build_corpus(DEFAULT_VOCABULARY, 20, sc, seed=2), sc)
    n = min(len(a.features), len(b.features))
    assert not np.array_equal(a.features[:n], b.features[:n])
    ta = [u for u in build_corpus(DEFAULT_VOCABULARY, 20, sc, seed=1).utterances]
    tb = [u for u in build_corpus(DEFAULT_VOCABULARY, 20, sc, seed=2).utterances]
    assert {u.text for u in ta} != {u.text for u in tb}


def test_stream_length_is_sum_of_utterances():
    sc = SynthConfig()
    corpus = build_corpus(DEFAULT_VOCABULARY, 15, sc, seed=8)
    stream = concatenate_stream(corpus, sc, seed=1)
    lead = stream.utterance_offsets[0]
    assert len(stream.features) == lead + corpus.num_frames
    assert len(stream.labels) == 1 + sum(len(u.labels) for u in corpus.utterances)
    for (w, end), o in zip(stream.occurrences, corpus.occurrences):
        assert end == stream.utterance_offsets[o.utterance] + o.end_frame


def test_keyword_sets():
    assert all(len(k) >= 6 for k in MULTI_KEYWORDS)
    assert all(len(k) <= 3 for k in MONO_KEYWORDS)
    others = [w for w in DEFAULT_VOCABULARY]
    for k in MONO_KEYWORDS:
        assert any(k in w and k != w for w in others), k
    assert "honey" in FILLER_WORDS and "honeymoon" in FILLER_WORDS
