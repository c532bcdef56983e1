"""MIDI Text Format: a line-per-message text codec for merged MIDI streams.

The first line always carries the timing resolution (``ticks_per_beat N``).
Channel-voice messages serialize as ``type time channel data...`` while meta
messages serialize as ``type params... time``.  Conversion back to a message
stream is exact, so MIDI -> MTF -> MIDI is the identity on every supported
stream.

For model input, consecutive lines of the same type are greedily merged into
patches of fewer than 64 characters, with the type token elided after the
first message of each patch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .smf import (
    KEY_NAMES,
    Message,
    TrackEvent,
    ValueOutOfRange as SmfValueOutOfRange,
)

DEFAULT_PATCH_CAPACITY = 64


class MtfError(Exception):
    """Base class for MTF codec errors; carries the 1-based line number."""

    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class UnknownType(MtfError):
    pass


class ArityMismatch(MtfError):
    pass


class ValueOutOfRange(MtfError):
    pass


class UnsupportedMessage(Exception):
    """Raised in strict mode when a message has no MTF rendering."""


# Data fields serialized after `time channel` for channel-voice messages.
_CHANNEL_DATA = {
    "note_on": ("note", "velocity"),
    "note_off": ("note", "velocity"),
    "control_change": ("control", "value"),
    "program_change": ("program",),
    "pitchwheel": ("pitch",),
    "polytouch": ("note", "value"),
    "aftertouch": ("value",),
}
# Fields serialized before the trailing `time` for meta messages.
_META_DATA = {
    "time_signature": ("numerator", "denominator", "clocks_per_click",
                       "notated_32nd_notes_per_beat"),
    "key_signature": ("key",),
    "set_tempo": ("tempo",),
    "midi_port": ("port",),
    "end_of_track": (),
}

ARITY = {"ticks_per_beat": 1}
ARITY.update({t: 2 + len(f) for t, f in _CHANNEL_DATA.items()})
ARITY.update({t: 1 + len(f) for t, f in _META_DATA.items()})


@dataclass(frozen=True)
class MtfLine:
    type_name: str
    values: tuple

    def render(self) -> str:
        return " ".join([self.type_name] + [str(v) for v in self.values])

    def render_values(self) -> str:
        return " ".join(str(v) for v in self.values)


@dataclass
class MtfDocument:
    """An ordered list of MTF lines; the first is always the resolution line."""

    lines: list[MtfLine]

    def __post_init__(self):
        if not self.lines or self.lines[0].type_name != "ticks_per_beat":
            raise ValueError("first MTF line must be `ticks_per_beat <int>`")

    @property
    def ticks_per_beat(self) -> int:
        return self.lines[0].values[0]


def midi_to_mtf(stream, ticks_per_beat: int,
                on_unsupported: str = "skip") -> MtfDocument:
    """Convert a merged TrackEvent stream to an MtfDocument.

    Messages with no MTF rendering (opaque metas, sysex, text-bearing metas)
    are skipped with a warning by default; pass ``on_unsupported="error"``
    to fail instead.
    """
    if on_unsupported not in ("skip", "error"):
        raise ValueError("on_unsupported must be 'skip' or 'error'")
    lines = [MtfLine("ticks_per_beat", (int(ticks_per_beat),))]
    for event in stream:
        message = event.message
        mtype = message.type
        if mtype in _CHANNEL_DATA:
            values = (event.delta_ticks, message.channel) + tuple(
                getattr(message, f) for f in _CHANNEL_DATA[mtype])
        elif mtype in _META_DATA:
            values = tuple(getattr(message, f) for f in _META_DATA[mtype])
            values = values + (event.delta_ticks,)
        else:
            if on_unsupported == "error":
                raise UnsupportedMessage(f"no MTF rendering for {mtype!r}")
            warnings.warn(f"skipping message with no MTF rendering: {mtype}",
                          stacklevel=2)
            continue
        lines.append(MtfLine(mtype, values))
    return MtfDocument(lines)


def mtf_to_midi(doc: MtfDocument) -> tuple[list[TrackEvent], int]:
    """Rebuild the merged message stream (and resolution) from a document."""
    ticks_per_beat = doc.ticks_per_beat
    if not isinstance(ticks_per_beat, int) or ticks_per_beat <= 0:
        raise ValueOutOfRange(1, f"ticks_per_beat must be positive, got {ticks_per_beat}")
    events: list[TrackEvent] = []
    for number, line in enumerate(doc.lines[1:], start=2):
        mtype = line.type_name
        expected = ARITY.get(mtype)
        if expected is None or mtype == "ticks_per_beat":
            raise UnknownType(number, f"unknown message type {mtype!r}")
        if len(line.values) != expected:
            raise ArityMismatch(
                number, f"{mtype} takes {expected} values, got {len(line.values)}")
        try:
            if mtype in _CHANNEL_DATA:
                delta, channel = line.values[0], line.values[1]
                fields = dict(zip(_CHANNEL_DATA[mtype], line.values[2:]))
                message = Message(mtype, channel=channel, **fields)
            else:
                delta = line.values[-1]
                fields = dict(zip(_META_DATA[mtype], line.values[:-1]))
                message = Message(mtype, **fields)
        except SmfValueOutOfRange as exc:
            raise ValueOutOfRange(number, str(exc)) from None
        if not isinstance(delta, int) or delta < 0:
            raise ValueOutOfRange(number, f"negative delta time {delta}")
        events.append(TrackEvent(delta_ticks=delta, message=message))
    return events, ticks_per_beat


def parse_mtf(text: str) -> MtfDocument:
    """Parse MTF text; reports the offending line number on error."""
    raw_lines = text.split("\n")
    if raw_lines and raw_lines[-1] == "":
        raw_lines.pop()
    lines: list[MtfLine] = []
    for number, raw in enumerate(raw_lines, start=1):
        tokens = raw.split(" ")
        if tokens == [""]:
            raise UnknownType(number, "empty line")
        type_name = tokens[0]
        expected = ARITY.get(type_name)
        if expected is None:
            raise UnknownType(number, f"unknown message type {type_name!r}")
        if len(tokens) - 1 != expected:
            raise ArityMismatch(
                number, f"{type_name} takes {expected} values, got {len(tokens) - 1}")
        values = []
        for position, token in enumerate(tokens[1:]):
            if type_name == "key_signature" and position == 0:
                if token not in KEY_NAMES:
                    raise ValueOutOfRange(number, f"unknown key name {token!r}")
                values.append(token)
                continue
            try:
                values.append(int(token))
            except ValueError:
                raise ValueOutOfRange(number, f"non-integer value {token!r}") from None
        line = MtfLine(type_name, tuple(values))
        if number == 1:
            if type_name != "ticks_per_beat":
                raise UnknownType(1, "first line must be `ticks_per_beat <int>`")
            if values[0] <= 0:
                raise ValueOutOfRange(1, f"ticks_per_beat must be positive, got {values[0]}")
        lines.append(line)
    if not lines:
        raise UnknownType(1, "empty document")
    return MtfDocument(lines)


def document_text(doc: MtfDocument) -> str:
    """Render a document as newline-terminated lines, no trailing whitespace."""
    return "".join(line.render() + "\n" for line in doc.lines)


def merge_lines(doc: MtfDocument,
                patch_capacity: int = DEFAULT_PATCH_CAPACITY) -> list[str]:
    """Greedy left-to-right grouping of same-type lines into patch strings.

    Within a patch, merged messages are separated by ``\\n`` and only the
    first carries the type token.  Appending stops once the patch would no
    longer stay under ``patch_capacity`` characters.  A single line longer
    than the capacity is split at hard capacity boundaries.
    """
    patches: list[str] = []
    current: str | None = None
    current_type: str | None = None

    def flush():
        nonlocal current, current_type
        if current is not None:
            patches.append(current)
        current = None
        current_type = None

    for line in doc.lines:
        full = line.render()
        if len(full) > patch_capacity:
            flush()
            for start in range(0, len(full), patch_capacity):
                patches.append(full[start:start + patch_capacity])
            continue
        if current is not None and line.type_name == current_type:
            values = line.render_values()
            if len(current) + 1 + len(values) < patch_capacity:
                current = current + "\n" + values
                continue
        flush()
        current = full
        current_type = line.type_name
    flush()
    return patches


def render_merged_text(doc: MtfDocument,
                       patch_capacity: int = DEFAULT_PATCH_CAPACITY) -> str:
    """The patch-merged textual form consumed by the tokenizer."""
    return "\n".join(merge_lines(doc, patch_capacity))


def unmerge_patches(patches: list[str],
                    patch_capacity: int = DEFAULT_PATCH_CAPACITY) -> MtfDocument:
    """Reverse merge_lines: re-expand elided types back into a document.

    A patch that does not open with a known type token is the continuation
    of a line that was split at the capacity boundary; it is appended raw to
    the previous reconstructed line.
    """
    lines_text: list[str] = []
    current_type: str | None = None
    previous_patch: str | None = None
    for patch in patches:
        # Split chunks fill the capacity exactly and carry no separator, so a
        # patch following one of them and not opening with a type token is the
        # raw tail of the same line.
        split_tail = (previous_patch is not None
                      and "\n" not in previous_patch
                      and len(previous_patch) >= patch_capacity)
        for index, segment in enumerate(patch.split("\n")):
            first = segment.split(" ", 1)[0]
            if first in ARITY:
                lines_text.append(segment)
                current_type = first
            elif index == 0 and split_tail and lines_text:
                lines_text[-1] += segment
            elif current_type is not None:
                lines_text.append(current_type + " " + segment)
            else:
                raise UnknownType(1, f"dangling continuation {segment!r}")
        previous_patch = patch
    return parse_mtf("\n".join(lines_text) + "\n")


def unmerge_text(text: str) -> MtfDocument:
    """Re-expand elided types in merged text.

    Exact whenever no source line exceeded the patch capacity, which holds
    for every document whose values are within MIDI ranges.
    """
    lines_text: list[str] = []
    current_type: str | None = None
    for segment in text.split("\n"):
        if segment == "":
            continue
        first = segment.split(" ", 1)[0]
        if first in ARITY:
            lines_text.append(segment)
            current_type = first
        elif current_type is not None:
            lines_text.append(current_type + " " + segment)
        else:
            raise UnknownType(1, f"dangling continuation {segment!r}")
    return parse_mtf("\n".join(lines_text) + "\n")
