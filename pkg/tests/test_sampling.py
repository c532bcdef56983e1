import numpy as np
import pytest

from symir.corpus import Triplet
from symir.sampling import (
    NoTextAvailable,
    SampledView,
    SamplerPolicy,
    sample_view,
    text_dropout,
    truncate_tokens,
)
from symir.tokenizers import HashWordTokenizer

TOKENIZER = HashWordTokenizer(1024)


def full_triplet():
    return Triplet(
        abc="X:1\n%%MIDI program 40\nK:G\nG A B |]\n",
        mtf="ticks_per_beat 480\nprogram_change 0 0 40\nnote_on 0 0 67 80\n"
            "end_of_track 1\n",
        raw_text="Title: Air\nComposer: Anon\nGenre: folk",
        llm_en="A short folk air in G major.",
        llm_nen="##fr## Un petit air folk en sol majeur.",
        lang="fr",
    )


class TestTextDropout:
    def test_single_field_always_kept(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert text_dropout(["only"], rng) == "only"

    def test_disabled_keeps_declaration_order(self):
        rng = np.random.default_rng(0)
        fields = ["a", "b", "c"]
        assert text_dropout(fields, rng, enabled=False) == "a\nb\nc"

    def test_two_field_presence_matches_enumeration_oracle(self):
        # Exact enumeration of the renormalized process over two fields:
        # the kept subset is uniform over {A}, {B}, {A,B}, so each field is
        # present with probability exactly 2/3.
        expected = 2 / 3
        rng = np.random.default_rng(1)
        hits_a = 0
        trials = 10_000
        for _ in range(trials):
            out = text_dropout(["alpha", "beta"], rng)
            if "alpha" in out:
                hits_a += 1
        assert abs(hits_a / trials - expected) < 0.015

    def test_never_empty(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            assert text_dropout(["a", "b", "c"], rng)

    def test_requires_fields(self):
        with pytest.raises(ValueError):
            text_dropout([], np.random.default_rng(0))


class TestTruncateTokens:
    def test_short_is_identity(self):
        rng = np.random.default_rng(0)
        tokens = list(range(40))
        assert truncate_tokens(tokens, 128, rng) == tokens

    def test_window_is_contiguous_and_sized(self):
        rng = np.random.default_rng(1)
        tokens = list(range(300))
        for _ in range(200):
            window = truncate_tokens(tokens, 128, rng)
            assert len(window) == 128
            assert window == list(range(window[0], window[0] + 128))

    def test_three_branches_seen(self):
        rng = np.random.default_rng(2)
        tokens = list(range(200))
        starts = {truncate_tokens(tokens, 128, rng)[0] for _ in range(300)}
        assert 0 in starts            # first window
        assert 72 in starts           # last window
        assert len(starts) > 2        # random interior windows


class TestSampleView:
    def test_raw_only_fallback(self):
        triplet = Triplet(abc="X:1\nK:C\nC |]\n",
                          mtf="ticks_per_beat 480\nend_of_track 1\n",
                          raw_text="Title: Solo")
        rng = np.random.default_rng(0)
        for _ in range(50):
            view = sample_view(triplet, SamplerPolicy(), rng, TOKENIZER)
            assert view.text_source == "raw"

    def test_no_text_raises(self):
        triplet = Triplet(abc="X:1\nK:C\nC |]\n",
                          mtf="ticks_per_beat 480\nend_of_track 1\n",
                          raw_text="x")
        triplet.raw_text = None
        with pytest.raises(NoTextAvailable):
            sample_view(triplet, SamplerPolicy(), np.random.default_rng(0),
                        TOKENIZER)

    def test_short_text_not_truncated(self):
        rng = np.random.default_rng(3)
        view = sample_view(full_triplet(), SamplerPolicy(), rng, TOKENIZER)
        assert len(view.text_tokens) <= 128

    def test_modality_strip_and_source_frequencies(self):
        rng = np.random.default_rng(5)
        triplet = full_triplet()
        policy = SamplerPolicy()
        trials = 100_000
        counts = {"raw": 0, "llm_en": 0, "llm_nen": 0}
        abc_count = 0
        stripped_count = 0
        for _ in range(trials):
            view = sample_view(triplet, policy, rng, TOKENIZER)
            counts[view.text_source] += 1
            if view.modality == "abc":
                abc_count += 1
            if view.instruments_stripped:
                stripped_count += 1
        assert abs(counts["raw"] / trials - 0.50) < 0.01
        assert abs(counts["llm_en"] / trials - 0.25) < 0.01
        assert abs(counts["llm_nen"] / trials - 0.25) < 0.01
        assert abs(stripped_count / trials - 0.90) < 0.01
        assert abs(abc_count / trials - 0.50) < 0.01

    def test_stripping_removes_instrument_lines(self):
        rng = np.random.default_rng(7)
        saw_stripped_abc = saw_kept_abc = False
        for _ in range(200):
            view = sample_view(full_triplet(), SamplerPolicy(), rng, TOKENIZER)
            if view.modality == "abc" and view.instruments_stripped:
                assert "%%MIDI program" not in view.music_text
                saw_stripped_abc = True
            if view.modality == "mtf" and view.instruments_stripped:
                assert "program_change" not in view.music_text
            if view.modality == "abc" and not view.instruments_stripped:
                assert "%%MIDI program" in view.music_text
                saw_kept_abc = True
        assert saw_stripped_abc and saw_kept_abc


def test_policy_probabilities_validated():
    with pytest.raises(ValueError):
        SamplerPolicy(raw_prob=0.9, llm_en_prob=0.25, llm_nen_prob=0.25)
