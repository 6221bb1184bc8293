import numpy as np
import pytest
from scipy import stats

from emctc.ctc import LabelSequence
from emctc.sampler import MIN_DURATION, build_sample_vocab, perturb_timestamp
from emctc.scoring import EmbeddingMatrix, FrameOutput, timestamped_scores_single


@pytest.fixture
def base():
    return EmbeddingMatrix.random(50, 4, np.random.default_rng(7))


REFS = LabelSequence([5, 9, 5], [(0.1, 0.2), (0.4, 0.16), (0.7, 0.12)])


class TestPerturb:
    def test_tiny_sigma_returns_input(self, rng):
        a, b = perturb_timestamp((0.5, 0.3), rng, 1e-12)
        assert a == pytest.approx(0.5, abs=1e-9) and b == pytest.approx(0.3, abs=1e-9)

    def test_duration_clamped(self, rng):
        draws = [perturb_timestamp((0.0, 0.03), rng, 0.5)[1] for _ in range(2000)]
        assert min(draws) == MIN_DURATION

    def test_differs_from_input(self, rng):
        assert perturb_timestamp((0.5, 0.3), rng, 0.08) != (0.5, 0.3)

    def test_offset_std(self, rng):
        sigma = 0.08
        d = np.array([perturb_timestamp((1.0, 1.0), rng, sigma) for _ in range(10_000)]) - 1.0
        assert abs(d[:, 0].std() / sigma - 1) < 0.05
        assert abs(d[:, 1].std() / sigma - 1) < 0.05


class TestBuildSampleVocab:
    def test_counts(self, base, rng):
        refs = LabelSequence([1, 2, 3], [(0.0, 0.1), (0.2, 0.1), (0.4, 0.1)])
        tv = build_sample_vocab(refs, base, 12, rng)
        assert len(tv) == 12
        assert sum(e.is_reference for e in tv.entries) == 3
        perturbed = [e for e in tv.entries[3:6]]
        assert [e.word_id for e in perturbed] == [base.word_ids[i] for i in (0, 1, 2)]
        assert all(e.word_id not in base.word_ids[:3] for e in tv.entries[6:])

    def test_references_verbatim_once(self, base, rng):
        tv = build_sample_vocab(REFS, base, 30, rng)
        for lab, (a, b) in zip(REFS.labels, REFS.timestamps):
            hits = [e for e in tv.entries if e.word_id == base.word_ids[lab - 1] and (e.alpha, e.beta) == (a, b)]
            assert len(hits) == 1 and hits[0].is_reference
            np.testing.assert_array_equal(hits[0].vector, base.vectors[lab - 1])

    def test_random_words_distinct(self, base, rng):
        tv = build_sample_vocab(REFS, base, 30, rng)
        randoms = [e.word_id for e in tv.entries[6:]]
        assert len(set(randoms)) == len(randoms)

    def test_negatives_borrow_reference_stamps(self, base):
        tv = build_sample_vocab(REFS, base, 30, np.random.default_rng(0), sigma=1e-9)
        ref_stamps = np.array(REFS.timestamps)
        for e in tv.entries[6:]:
            assert np.min(np.abs(ref_stamps - [e.alpha, e.beta]).sum(axis=1)) < 1e-6

    def test_deterministic(self, base):
        a = build_sample_vocab(REFS, base, 20, np.random.default_rng(3))
        b = build_sample_vocab(REFS, base, 20, np.random.default_rng(3))
        assert [(e.word_id, e.alpha, e.beta) for e in a.entries] == [(e.word_id, e.alpha, e.beta) for e in b.entries]

    def test_rejects(self, base, rng):
        with pytest.raises(ValueError, match="too small"):
            build_sample_vocab(REFS, base, 8, rng)
        with pytest.raises(ValueError):
            build_sample_vocab(LabelSequence([]), base, 8, rng)
        with pytest.raises(ValueError):
            build_sample_vocab(LabelSequence([1]), base, 8, rng)
        with pytest.raises(ValueError, match="distinct"):
            build_sample_vocab(REFS, base, 60, rng)

    def test_reference_wins_for_perfect_output(self, base, rng):
        tv = build_sample_vocab(REFS, base, 40, rng)
        for j, (lab, ts) in enumerate(zip(REFS.labels, REFS.timestamps)):
            z = timestamped_scores_single(FrameOutput(base.vectors[lab - 1], 0.0, 0.0, [ts]), tv)[1:]
            assert z[j] == 0.0
            others = np.delete(z, j)
            assert np.all(others < 0)

    def test_uniform_over_non_reference_words(self, base):
        rng = np.random.default_rng(11)
        counts = {}
        refs = LabelSequence([1, 2, 3], [(0.0, 0.1), (0.2, 0.1), (0.4, 0.1)])
        for _ in range(5000):
            for e in build_sample_vocab(refs, base, 26, rng).entries[6:]:
                counts[e.word_id] = counts.get(e.word_id, 0) + 1
        assert sum(counts.values()) == 100_000
        assert len(counts) == 47
        assert stats.chisquare(list(counts.values())).pvalue > 0.01
