import numpy as np
import pytest

from symir.mtf import (
    ArityMismatch,
    MtfDocument,
    MtfLine,
    UnknownType,
    UnsupportedMessage,
    ValueOutOfRange,
    document_text,
    merge_lines,
    midi_to_mtf,
    mtf_to_midi,
    parse_mtf,
    render_merged_text,
    unmerge_patches,
    unmerge_text,
)
from symir.smf import Message, TrackEvent, merge_tracks
from helpers import (
    REFERENCE_MTF_TEXT,
    REFERENCE_TICKS_PER_BEAT,
    random_smf,
    reference_stream,
)


def test_note_on_line_field_order():
    stream = [TrackEvent(455, Message("note_on", channel=0, note=74, velocity=0))]
    doc = midi_to_mtf(stream, 480)
    assert doc.lines[1].render() == "note_on 455 0 74 0"


def test_time_signature_line_field_order():
    stream = [TrackEvent(0, Message("time_signature", numerator=3, denominator=4,
                                    clocks_per_click=24,
                                    notated_32nd_notes_per_beat=8))]
    doc = midi_to_mtf(stream, 480)
    assert doc.lines[1].render() == "time_signature 3 4 24 8 0"


def test_empty_stream_gives_resolution_line_only():
    doc = midi_to_mtf([], 480)
    assert document_text(doc) == "ticks_per_beat 480\n"


def test_reference_stream_renders_exactly():
    doc = midi_to_mtf(reference_stream(), REFERENCE_TICKS_PER_BEAT)
    assert document_text(doc) == REFERENCE_MTF_TEXT


def test_reference_text_parses_back_to_stream():
    doc = parse_mtf(REFERENCE_MTF_TEXT)
    events, ticks = mtf_to_midi(doc)
    assert ticks == 480
    assert events == reference_stream()


def test_single_end_of_track_line():
    doc = parse_mtf("ticks_per_beat 480\nend_of_track 1\n")
    events, ticks = mtf_to_midi(doc)
    assert events == [TrackEvent(1, Message("end_of_track"))]


def test_fuzz_round_trip():
    rng = np.random.default_rng(17)
    for _ in range(300):
        smf = random_smf(rng, mtf_only=True)
        stream = merge_tracks(smf)
        doc = midi_to_mtf(stream, smf.ticks_per_beat)
        events, ticks = mtf_to_midi(doc)
        assert ticks == smf.ticks_per_beat
        assert events == stream


def test_text_level_round_trip():
    rng = np.random.default_rng(19)
    for _ in range(100):
        smf = random_smf(rng, mtf_only=True)
        doc = midi_to_mtf(merge_tracks(smf), smf.ticks_per_beat)
        assert document_text(parse_mtf(document_text(doc))) == document_text(doc)


def test_unsupported_message_skips_with_warning():
    stream = [TrackEvent(0, Message("track_name", text="x")),
              TrackEvent(0, Message("end_of_track"))]
    with pytest.warns(UserWarning):
        doc = midi_to_mtf(stream, 480)
    assert [l.type_name for l in doc.lines] == ["ticks_per_beat", "end_of_track"]
    with pytest.raises(UnsupportedMessage):
        midi_to_mtf(stream, 480, on_unsupported="error")


class TestParseErrors:
    def test_unknown_type_reports_line(self):
        with pytest.raises(UnknownType) as exc:
            parse_mtf("ticks_per_beat 480\nnot_a_message 1 2\n")
        assert exc.value.line == 2

    def test_arity_mismatch_reports_line(self):
        with pytest.raises(ArityMismatch) as exc:
            parse_mtf("ticks_per_beat 480\nnote_on 0 0 74\n")
        assert exc.value.line == 2

    def test_value_out_of_range_reports_line(self):
        with pytest.raises(ValueOutOfRange) as exc:
            parse_mtf("ticks_per_beat 480\nnote_on 0 0 xx 0\n")
        assert exc.value.line == 2
        doc = parse_mtf("ticks_per_beat 480\nnote_on 0 0 200 0\n")
        with pytest.raises(ValueOutOfRange) as exc:
            mtf_to_midi(doc)
        assert exc.value.line == 2

    def test_bad_key_name(self):
        with pytest.raises(ValueOutOfRange):
            parse_mtf("ticks_per_beat 480\nkey_signature H 0\n")

    def test_first_line_must_be_resolution(self):
        with pytest.raises(UnknownType):
            parse_mtf("note_on 0 0 74 0\n")


class TestMerging:
    def test_short_same_type_lines_merge(self):
        text = ("ticks_per_beat 480\n"
                "note_on 0 0 60 80\nnote_on 0 0 64 80\nnote_on 0 0 67 80\n")
        patches = merge_lines(parse_mtf(text))
        assert patches[0] == "ticks_per_beat 480"
        assert patches[1] == "note_on 0 0 60 80\n0 0 64 80\n0 0 67 80"
        assert len(patches[1]) < 64

    def test_different_types_do_not_merge(self):
        text = "ticks_per_beat 480\nmidi_port 0 0\nset_tempo 500000 0\n"
        patches = merge_lines(parse_mtf(text))
        assert patches == ["ticks_per_beat 480", "midi_port 0 0",
                           "set_tempo 500000 0"]

    def test_overlong_line_splits_at_capacity(self):
        # Constructed 70-character line (syntactic split only; the value is
        # outside MIDI range on purpose).
        long_line = MtfLine("note_on", (10 ** 54, 0, 74, 0))
        assert len(long_line.render()) == 70
        doc = MtfDocument([MtfLine("ticks_per_beat", (480,)), long_line])
        patches = merge_lines(doc)
        assert patches[0] == "ticks_per_beat 480"
        assert [len(p) for p in patches[1:]] == [64, 6]
        assert patches[1] + patches[2] == long_line.render()

    def test_every_patch_within_capacity(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            smf = random_smf(rng, mtf_only=True)
            doc = midi_to_mtf(merge_tracks(smf), smf.ticks_per_beat)
            assert all(len(p) <= 64 for p in merge_lines(doc))

    def test_unmerge_patches_reproduces_document(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            smf = random_smf(rng, mtf_only=True)
            doc = midi_to_mtf(merge_tracks(smf), smf.ticks_per_beat)
            rebuilt = unmerge_patches(merge_lines(doc))
            assert rebuilt.lines == doc.lines

    def test_unmerge_handles_split_lines(self):
        long_line = MtfLine("note_on", (10 ** 54, 0, 74, 0))
        doc = MtfDocument([
            MtfLine("ticks_per_beat", (480,)),
            MtfLine("note_on", (0, 0, 60, 80)),
            long_line,
            MtfLine("end_of_track", (1,)),
        ])
        rebuilt = unmerge_patches(merge_lines(doc))
        assert rebuilt.lines == doc.lines

    def test_unmerge_text_reproduces_document(self):
        doc = parse_mtf(REFERENCE_MTF_TEXT)
        merged = render_merged_text(doc)
        assert unmerge_text(merged).lines == doc.lines
        # The merged form is strictly smaller thanks to type elision.
        assert len(merged) < len(REFERENCE_MTF_TEXT)
