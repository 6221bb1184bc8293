import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emctc.corpus import (CorpusFormatError, GenSpec, Renderer, Utterance, gen_confusable_pair, gen_corpus,
                          gen_utterance, is_entity, read_corpus, write_corpus)

SPEC = GenSpec()


@pytest.fixture
def vocab():
    return SPEC.make_vocab(np.random.default_rng(0))


class TestGenSpec:
    def test_word_ids(self):
        ids = GenSpec(vocab_size=12, n_entities=2).word_ids()
        assert ids[0] == "w00" and ids[-1] == "ent01"
        assert sum(is_entity(w) for w in ids) == 2

    @pytest.mark.parametrize("kw", [{"frames_per_word": (0, 2)}, {"confusable_fraction": 1.5},
                                    {"n_entities": 60}, {"gap_frames": (3, 1)}, {"noise_std": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            GenSpec(**kw)


class TestGenerate:
    def test_zero_noise_single_word_frames_identical(self, vocab):
        spec = GenSpec(noise_std=0.0, words_per_utt=(1, 1))
        u = gen_utterance(spec, vocab, np.random.default_rng(1))
        t0, d = u.starts_ms[0] // 40, u.durations_ms[0] // 40
        block = u.features[t0:t0 + d]
        assert np.all(block == block[0]) and np.any(block[0] != 0)
        assert not u.features[:t0].any()

    def test_durations_are_frame_multiples(self, vocab):
        r = Renderer(SPEC, vocab)
        for u in gen_corpus(SPEC, vocab, 30, np.random.default_rng(2)):
            for w, d in zip(u.words, u.durations_ms):
                assert d == 40 * r.lengths[vocab.index(w)]

    def test_segments_ordered_inside_utterance(self, vocab):
        for u in gen_corpus(SPEC, vocab, 50, np.random.default_rng(3)):
            ends = [s + d for s, d in zip(u.starts_ms, u.durations_ms)]
            assert all(e <= s for e, s in zip(ends, u.starts_ms[1:]))
            assert u.starts_ms[0] >= 0 and ends[-1] <= u.num_frames * 40
            assert min(u.durations_ms) > 0

    def test_deterministic(self, vocab):
        a = gen_corpus(SPEC, vocab, 5, np.random.default_rng(4))
        b = gen_corpus(SPEC, vocab, 5, np.random.default_rng(4))
        assert a == b

    def test_noise_std(self, vocab):
        spec = GenSpec(noise_std=0.3)
        r = Renderer(spec, vocab)
        resid = []
        for u in gen_corpus(spec, vocab, 500, np.random.default_rng(5)):
            clean = np.zeros_like(u.features)
            for w, s, d in zip(u.words, u.starts_ms, u.durations_ms):
                clean[s // 40:(s + d) // 40] = r.word_frames(vocab.index(w))
            resid.append(u.features - clean)
        resid = np.vstack(resid)
        assert resid.shape[0] >= 10_000
        assert abs(resid.std() / 0.3 - 1) < 0.05

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            Renderer(SPEC, GenSpec(dim=5).make_vocab(np.random.default_rng(0)))


class TestConfusablePair:
    spec = GenSpec(confusable_fraction=0.5)

    def test_identical_features_and_split_span(self, vocab):
        a, b = gen_confusable_pair(self.spec, vocab, np.random.default_rng(6))
        np.testing.assert_array_equal(a.features, b.features)
        wa, wb, ws = (vocab.word_ids[i] for i in self.spec.confusable_words)
        i = a.words.index(wa)
        assert b.words == a.words[:i] + [wb, ws] + a.words[i + 1:]
        assert b.starts_ms[i] == a.starts_ms[i]
        assert b.starts_ms[i + 1] == b.starts_ms[i] + b.durations_ms[i]
        assert b.durations_ms[i] + b.durations_ms[i + 1] == a.durations_ms[i]
        assert (a.id, b.id) == ("paira", "pairb")

    def test_compound_rendering(self, vocab):
        r = Renderer(self.spec, vocab)
        a, b, s = self.spec.confusable_words
        np.testing.assert_array_equal(r.word_frames(a), np.vstack([r.word_frames(b), r.word_frames(s)]))

    def test_needs_fraction(self, vocab):
        with pytest.raises(ValueError):
            gen_confusable_pair(SPEC, vocab, np.random.default_rng(0))

    def test_corpus_contains_pairs(self, vocab):
        c = gen_corpus(self.spec, vocab, 40, np.random.default_rng(7))
        assert len(c) == 40
        assert any(u.id.endswith("a") for u in c)


class TestFileFormat:
    def test_round_trip_100(self, tmp_path, vocab):
        c = gen_corpus(GenSpec(confusable_fraction=0.2), vocab, 100, np.random.default_rng(8))
        write_corpus(tmp_path / "c.jsonl", c)
        assert read_corpus(tmp_path / "c.jsonl") == c

    def test_empty(self, tmp_path):
        (tmp_path / "c.jsonl").write_text("")
        assert read_corpus(tmp_path / "c.jsonl") == []

    def test_truncated_record_names_line(self, tmp_path, vocab):
        write_corpus(tmp_path / "c.jsonl", gen_corpus(SPEC, vocab, 3, np.random.default_rng(9)))
        text = (tmp_path / "c.jsonl").read_text().splitlines()
        text[2] = text[2][:len(text[2]) // 2]
        (tmp_path / "c.jsonl").write_text("\n".join(text) + "\n")
        with pytest.raises(CorpusFormatError, match="line 3"):
            read_corpus(tmp_path / "c.jsonl")

    @pytest.mark.parametrize("mutate,field", [
        (lambda r: r.pop("words"), "words"),
        (lambda r: r.update(starts_ms=[1.5] * len(r["words"])), "starts_ms"),
        (lambda r: r.update(features=r["features"][:-1]), "features"),
        (lambda r: r.update(T="3"), "T"),
    ])
    def test_bad_field_names_field(self, tmp_path, vocab, mutate, field):
        u = gen_utterance(SPEC, vocab, np.random.default_rng(10))
        write_corpus(tmp_path / "c.jsonl", [u])
        rec = json.loads((tmp_path / "c.jsonl").read_text())
        mutate(rec)
        (tmp_path / "c.jsonl").write_text(json.dumps(rec) + "\n")
        with pytest.raises(CorpusFormatError, match=f"line 1.*{field}"):
            read_corpus(tmp_path / "c.jsonl")

    def test_label_sequence(self, vocab):
        u = Utterance("x", np.zeros((5, 2)), [vocab.word_ids[3]], [40], [120])
        seq = u.label_sequence(vocab)
        assert seq.labels == [4] and seq.timestamps == [(0.04, 0.12)]

    @given(st.lists(st.integers(0, 49), min_size=1, max_size=4), st.integers(0, 2**31))
    def test_round_trip_property(self, rows, seed):
        import tempfile
        import os
        vocab = SPEC.make_vocab(np.random.default_rng(0))
        u = Renderer(SPEC, vocab).render("u", rows, np.random.default_rng(seed))[0]
        with tempfile.TemporaryDirectory() as d:
            write_corpus(os.path.join(d, "c"), [u])
            assert read_corpus(os.path.join(d, "c")) == [u]
