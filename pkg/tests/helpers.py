"""Shared fuzzers and independent oracles for the test suite.

The fuzzers build random-but-valid inputs; the oracles are deliberately
naive reimplementations (pure-Python loops, no shared code paths) used to
check the library's answers.
"""

from __future__ import annotations

import math

import numpy as np

from symir.smf import (
    KEY_TO_SF_MI,
    Message,
    SmfFile,
    TrackEvent,
)

_KEY_CHOICES = sorted(KEY_TO_SF_MI)

# Messages with an MTF rendering; weights skew toward note events the way
# real files do.
_MTF_MESSAGE_POOL = [
    "note_on", "note_on", "note_on", "note_on", "note_off", "note_off",
    "control_change", "program_change", "pitchwheel", "polytouch",
    "aftertouch", "time_signature", "key_signature", "set_tempo", "midi_port",
]
_EXTRA_MESSAGE_POOL = _MTF_MESSAGE_POOL + ["track_name", "lyrics", "sysex",
                                           "unknown_meta"]


def random_message(rng: np.random.Generator, mtf_only: bool = True) -> Message:
    pool = _MTF_MESSAGE_POOL if mtf_only else _EXTRA_MESSAGE_POOL
    mtype = pool[int(rng.integers(len(pool)))]
    seven = lambda: int(rng.integers(0, 128))
    channel = int(rng.integers(0, 16))
    if mtype in ("note_on", "note_off"):
        return Message(mtype, channel=channel, note=seven(), velocity=seven())
    if mtype == "control_change":
        return Message(mtype, channel=channel, control=seven(), value=seven())
    if mtype == "program_change":
        return Message(mtype, channel=channel, program=seven())
    if mtype == "pitchwheel":
        return Message(mtype, channel=channel, pitch=int(rng.integers(-8192, 8192)))
    if mtype == "polytouch":
        return Message(mtype, channel=channel, note=seven(), value=seven())
    if mtype == "aftertouch":
        return Message(mtype, channel=channel, value=seven())
    if mtype == "time_signature":
        return Message(mtype, numerator=int(rng.integers(1, 32)),
                       denominator=int(2 ** rng.integers(0, 7)),
                       clocks_per_click=int(rng.integers(0, 256)),
                       notated_32nd_notes_per_beat=int(rng.integers(0, 256)))
    if mtype == "key_signature":
        return Message(mtype, key=_KEY_CHOICES[int(rng.integers(len(_KEY_CHOICES)))])
    if mtype == "set_tempo":
        return Message(mtype, tempo=int(rng.integers(0, 0x1000000)))
    if mtype == "midi_port":
        return Message(mtype, port=int(rng.integers(0, 256)))
    if mtype == "track_name":
        return Message(mtype, text="tk" + str(int(rng.integers(1000))))
    if mtype == "lyrics":
        return Message(mtype, text="la " * int(rng.integers(1, 4)))
    if mtype == "sysex":
        return Message(mtype, data=bytes(rng.integers(0, 128,
                                                      int(rng.integers(0, 6)))))
    return Message("unknown_meta", meta_type=int(rng.integers(0x60, 0x70)),
                   data=bytes(rng.integers(0, 256, int(rng.integers(0, 5)))))


def random_track(rng: np.random.Generator, mtf_only: bool = True) -> list[TrackEvent]:
    events = []
    for _ in range(int(rng.integers(0, 25))):
        delta = int(rng.integers(0, 2000)) if rng.random() < 0.9 \
            else int(rng.integers(0, 0x0FFFFFFF))
        events.append(TrackEvent(delta, random_message(rng, mtf_only)))
    events.append(TrackEvent(int(rng.integers(0, 100)), Message("end_of_track")))
    return events


def random_smf(rng: np.random.Generator, mtf_only: bool = True) -> SmfFile:
    n_tracks = int(rng.integers(1, 4))
    fmt = 0 if n_tracks == 1 and rng.random() < 0.5 else 1
    ticks = int(rng.choice([96, 192, 384, 480, 960]))
    tracks = [random_track(rng, mtf_only) for _ in range(n_tracks)]
    return SmfFile(ticks_per_beat=ticks, format=fmt, tracks=tracks)


# -- ABC fuzzing ------------------------------------------------------------------

_NOTE_LETTERS = list("CDEFGABcdefgab")
_DURATIONS = ["", "2", "3", "/2", "4"]


def random_bar_body(rng: np.random.Generator) -> str:
    notes = []
    for _ in range(int(rng.integers(1, 6))):
        note = _NOTE_LETTERS[int(rng.integers(len(_NOTE_LETTERS)))]
        if rng.random() < 0.2:
            note = "^" + note
        note += _DURATIONS[int(rng.integers(len(_DURATIONS)))]
        notes.append(note)
    body = " ".join(notes)
    if rng.random() < 0.15:
        body = '"Gm7" ' + body
    if rng.random() < 0.1:
        body = "[M:3/4] " + body
    return body


def random_multivoice_tune_text(rng: np.random.Generator) -> str:
    n_voices = int(rng.integers(2, 4))
    n_bars = int(rng.integers(2, 7))
    meters = ["4/4", "3/4", "6/8", "2/4"]
    keys = ["C", "G", "D", "Am", "F", "Bb"]
    lines = ["X:1", f"T:fuzz tune {int(rng.integers(10000))}"]
    lines.append(f"M:{meters[int(rng.integers(len(meters)))]}")
    lines.append("L:1/8")
    for v in range(1, n_voices + 1):
        lines.append(f"V:{v}")
    lines.append(f"K:{keys[int(rng.integers(len(keys)))]}")
    for v in range(1, n_voices + 1):
        lines.append(f"V:{v}")
        bars = []
        for b in range(n_bars):
            delim = "|]" if b == n_bars - 1 and rng.random() < 0.5 else "|"
            bars.append(random_bar_body(rng) + " " + delim)
        lines.append(" ".join(bars))
    return "\n".join(lines) + "\n"


# -- naive metric oracles ------------------------------------------------------------

def oracle_mrr(ranks) -> float:
    total = 0.0
    for r in ranks:
        total += 1.0 / r
    return total / len(ranks)


def oracle_hit_rate(ranks, k) -> float:
    hits = 0
    for r in ranks:
        if r <= k:
            hits += 1
    return hits / len(ranks)


def oracle_cosine_ranking(ids, matrix, query):
    """Full-scan cosine ranking with the (score desc, id asc) tie rule."""
    scored = []
    qn = math.sqrt(sum(q * q for q in query))
    for item_id, row in zip(ids, matrix):
        rn = math.sqrt(sum(v * v for v in row))
        if qn == 0 or rn == 0:
            score = 0.0
        else:
            score = sum(a * b for a, b in zip(row, query)) / (qn * rn)
        scored.append((item_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def oracle_infonce(music, text, scale=1.0) -> float:
    """Double-loop softmax cross-entropy in both directions."""
    b = len(music)
    logits = [[scale * sum(m * t for m, t in zip(music[i], text[j]))
               for j in range(b)] for i in range(b)]
    def ce(rows):
        total = 0.0
        for i, row in enumerate(rows):
            peak = max(row)
            denom = sum(math.exp(v - peak) for v in row)
            total += -(row[i] - peak - math.log(denom))
        return total / b
    columns = [[logits[i][j] for i in range(b)] for j in range(b)]
    return 0.5 * (ce(logits) + ce(columns))


# -- reference conversion exemplar ----------------------------------------------------
#
# A known-good merged stream and its exact text rendering, used to pin the
# field-order contract of the text codec.

def reference_stream() -> list[TrackEvent]:
    def ev(delta, mtype, **fields):
        return TrackEvent(delta, Message(mtype, **fields))

    notes = [
        (0, 74, 80), (455, 74, 0), (25, 67, 80), (239, 67, 0), (1, 69, 80),
        (191, 55, 0), (0, 59, 0), (0, 62, 0), (48, 69, 0), (1, 71, 80),
        (0, 57, 80), (239, 71, 0), (1, 72, 80), (215, 57, 0), (24, 72, 0),
        (1, 74, 80), (0, 59, 80), (455, 74, 0), (25, 67, 80), (239, 67, 0),
        (241, 67, 80), (239, 67, 0), (168, 59, 0),
    ]
    stream = [
        ev(0, "time_signature", numerator=3, denominator=4,
           clocks_per_click=24, notated_32nd_notes_per_beat=8),
        ev(0, "key_signature", key="G"),
        ev(0, "set_tempo", tempo=500000),
        ev(0, "control_change", channel=0, control=121, value=0),
        ev(0, "program_change", channel=0, program=0),
        ev(0, "control_change", channel=0, control=7, value=100),
        ev(0, "control_change", channel=0, control=10, value=64),
        ev(0, "control_change", channel=0, control=91, value=0),
        ev(0, "control_change", channel=0, control=93, value=0),
        ev(0, "midi_port", port=0),
        ev(0, "note_on", channel=0, note=74, velocity=80),
        ev(0, "key_signature", key="G"),
        ev(0, "midi_port", port=0),
        ev(0, "note_on", channel=0, note=55, velocity=80),
        ev(0, "note_on", channel=0, note=59, velocity=80),
        ev(0, "note_on", channel=0, note=62, velocity=80),
    ]
    for delta, note, velocity in notes[1:]:
        stream.append(ev(delta, "note_on", channel=0, note=note,
                         velocity=velocity))
    stream.append(ev(1, "end_of_track"))
    return stream


REFERENCE_TICKS_PER_BEAT = 480

REFERENCE_MTF_TEXT = """ticks_per_beat 480
time_signature 3 4 24 8 0
key_signature G 0
set_tempo 500000 0
control_change 0 0 121 0
program_change 0 0 0
control_change 0 0 7 100
control_change 0 0 10 64
control_change 0 0 91 0
control_change 0 0 93 0
midi_port 0 0
note_on 0 0 74 80
key_signature G 0
midi_port 0 0
note_on 0 0 55 80
note_on 0 0 59 80
note_on 0 0 62 80
note_on 455 0 74 0
note_on 25 0 67 80
note_on 239 0 67 0
note_on 1 0 69 80
note_on 191 0 55 0
note_on 0 0 59 0
note_on 0 0 62 0
note_on 48 0 69 0
note_on 1 0 71 80
note_on 0 0 57 80
note_on 239 0 71 0
note_on 1 0 72 80
note_on 215 0 57 0
note_on 24 0 72 0
note_on 1 0 74 80
note_on 0 0 59 80
note_on 455 0 74 0
note_on 25 0 67 80
note_on 239 0 67 0
note_on 241 0 67 80
note_on 239 0 67 0
note_on 168 0 59 0
end_of_track 1
"""


# -- reference two-voice piano excerpt -------------------------------------------------

TWO_VOICE_PIANO_STANDARD = """X:1
T:Evening Air
M:3/4
L:1/8
V:1 clef=treble
V:2 clef=bass
K:G
V:1
d2 B2 G2 | c2 A2 F2 | B2 G2 E2 | A4 z2 |]
V:2
G,2 D2 B,2 | F,2 C2 A,2 | E,2 B,2 G,2 | D,4 z2 |]
"""
