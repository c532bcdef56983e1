import numpy as np
import pytest

from symir.abc_notation import (
    AbcTune,
    BarCountMismatch,
    DuplicateVoiceInBar,
    InterleavedAbcTune,
    MissingKeyField,
    UndeclaredVoice,
    emit_abc,
    emit_interleaved,
    interleaved_to_standard,
    normalize_music_whitespace,
    parse_abc,
    split_bars,
    standard_to_interleaved,
    strip_instruments,
    strip_lyrics,
    tunes_equivalent,
)
from helpers import TWO_VOICE_PIANO_STANDARD, random_multivoice_tune_text


SINGLE_VOICE = "X:1\nT:Small\nM:4/4\nL:1/8\nK:C\nC D E F | G A B c |]\n"


class TestSplitBars:
    def test_plain_bars(self):
        assert split_bars("ab | cd |") == ["ab |", " cd |"]

    def test_delimiters_retained_longest_first(self):
        assert split_bars("a || b :| c |] ") == ["a ||", " b :|", " c |] "]

    def test_quoted_pipe_ignored(self):
        assert split_bars('"A|B" c | d |') == ['"A|B" c |', " d |"]

    def test_trailing_content_is_final_bar(self):
        assert split_bars("a | b") == ["a |", " b"]


class TestParse:
    def test_single_voice_two_bars(self):
        tune = parse_abc(SINGLE_VOICE)
        assert tune.headers == ["X:1", "T:Small", "M:4/4", "L:1/8", "K:C"]
        assert list(tune.voices) == ["1"]
        assert len(tune.voices["1"]) == 2

    def test_two_voice_piano_equal_bars(self):
        tune = parse_abc(TWO_VOICE_PIANO_STANDARD)
        assert list(tune.voices) == ["1", "2"]
        assert len(tune.voices["1"]) == len(tune.voices["2"]) == 4

    def test_inline_field_stays_in_bar(self):
        text = "X:1\nK:C\nC D | [M:3/4] E F | G2 |]\n"
        tune = parse_abc(text)
        bars = tune.voices["1"]
        assert "[M:3/4]" in bars[1]

    def test_missing_key_field(self):
        with pytest.raises(MissingKeyField):
            parse_abc("X:1\nT:No key\nC D E F |\n")

    def test_undeclared_voice(self):
        text = "X:1\nV:1\nK:C\nV:2\nC D |\n"
        with pytest.raises(UndeclaredVoice):
            parse_abc(text)

    def test_lyrics_attach_to_preceding_bar(self):
        text = "X:1\nK:C\nC D E F |\nw: la la la la\nG A B c |]\n"
        tune = parse_abc(text)
        bars = tune.voices["1"]
        assert len(bars) == 2
        assert bars[0].endswith("\nw: la la la la")


class TestInterleave:
    def test_single_voice_gains_tags_only(self):
        tune = parse_abc(SINGLE_VOICE)
        interleaved = standard_to_interleaved(tune)
        text = emit_interleaved(interleaved)
        assert "[V:1] C D E F |" in text
        assert "[V:1] G A B c |]" in text

    def test_two_voice_line_shape(self):
        tune = parse_abc(TWO_VOICE_PIANO_STANDARD)
        text = emit_interleaved(standard_to_interleaved(tune))
        body = [l for l in text.split("\n") if l.startswith("[V:")]
        assert len(body) == 4
        for line in body:
            assert line.index("[V:1]") < line.index("[V:2]")

    def test_bar_count_mismatch_refused(self):
        tune = AbcTune(headers=["X:1", "K:C"],
                       voices={"1": ["a |", "b |"], "2": ["c |"]})
        with pytest.raises(BarCountMismatch) as exc:
            standard_to_interleaved(tune)
        assert exc.value.voice == "2"
        assert (exc.value.expected, exc.value.got) == (2, 1)

    def test_duplicate_voice_in_bar(self):
        bad = InterleavedAbcTune(headers=["X:1", "K:C"], voice_order=["1"],
                                 bars=[[("1", "a |"), ("1", "b |")]])
        with pytest.raises(DuplicateVoiceInBar):
            interleaved_to_standard(bad)

    def test_round_trip_piano_excerpt(self):
        tune = parse_abc(TWO_VOICE_PIANO_STANDARD)
        back = interleaved_to_standard(standard_to_interleaved(tune))
        assert tunes_equivalent(tune, back)

    def test_three_voice_synthetic_round_trip(self):
        tune = AbcTune(
            headers=["X:1", "V:a", "V:b", "V:c", "K:G"],
            voices={"a": ["A2 |", "B2 |]"], "b": ["C2 |", "D2 |]"],
                    "c": ["E2 |", "F2 |]"]})
        back = interleaved_to_standard(standard_to_interleaved(tune))
        assert back == tune

    def test_fuzz_round_trip_and_reparse(self):
        rng = np.random.default_rng(101)
        for _ in range(100):
            text = random_multivoice_tune_text(rng)
            tune = parse_abc(text)
            interleaved = standard_to_interleaved(tune)
            back = interleaved_to_standard(interleaved)
            assert tunes_equivalent(tune, back)
            # interleaved text re-parses cleanly and stays equivalent
            reparsed = parse_abc(emit_interleaved(interleaved))
            assert tunes_equivalent(tune,
                                    interleaved_to_standard(
                                        standard_to_interleaved(reparsed)))

    def test_emit_parse_stability(self):
        rng = np.random.default_rng(103)
        for _ in range(50):
            tune = parse_abc(random_multivoice_tune_text(rng))
            again = parse_abc(emit_abc(tune))
            assert tunes_equivalent(tune, again)


class TestNormalization:
    def test_collapses_space_runs_outside_quotes(self):
        assert normalize_music_whitespace('a   b "c   d"  e') == 'a b "c   d" e'

    def test_strips_edges(self):
        assert normalize_music_whitespace("  a b |  ") == "a b |"


class TestStripInstruments:
    def test_abc_midi_program_line_removed(self):
        text = "X:1\n%%MIDI program 40\nK:C\nC D |]\n"
        stripped = strip_instruments(text, "abc")
        assert "%%MIDI program" not in stripped
        assert "C D |]" in stripped

    def test_abc_name_clauses_removed(self):
        text = 'X:1\nV:1 nm="Piano" snm="Pno" clef=treble\nK:C\nC D |]\n'
        stripped = strip_instruments(text, "abc")
        assert "nm=" not in stripped
        assert "clef=treble" in stripped

    def test_mtf_program_change_removed(self):
        text = "ticks_per_beat 480\nprogram_change 0 0 0\nnote_on 0 0 74 80\n"
        stripped = strip_instruments(text, "mtf")
        assert stripped == "ticks_per_beat 480\nnote_on 0 0 74 80\n"

    def test_idempotent_and_identity_without_instruments(self):
        text = SINGLE_VOICE
        assert strip_instruments(text, "abc") == text
        once = strip_instruments(
            'X:1\n%%MIDI program 1\nV:1 nm="Oboe"\nK:C\nC |]\n', "abc")
        assert strip_instruments(once, "abc") == once

    def test_note_content_preserved(self):
        rng = np.random.default_rng(107)
        for _ in range(30):
            text = random_multivoice_tune_text(rng)
            stripped = strip_instruments(text, "abc")
            keep = lambda s: [c for c in s if c in "CDEFGABcdefgab^/0123456789|"]
            assert keep(stripped) == keep(text)


def test_strip_lyrics():
    text = "X:1\nK:C\nC D |\nw: la la\nE F |]\n"
    assert "w:" not in strip_lyrics(text)
    assert "C D |" in strip_lyrics(text)
