"""Standard MIDI File codec: message-level parsing, canonical writing, track merging.

Losslessness here means the *message stream* survives a round trip, not the
raw bytes: parsing expands running status, and the writer re-encodes every
event in a canonical form (no running status, minimal variable-length delta
times).  Unknown meta events are carried as opaque payloads so no file is
rejected for an exotic meta type.  SMPTE time division is rejected; the
downstream text format assumes ticks-per-beat timing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass


class SmfError(Exception):
    """Base class for SMF codec errors."""


class MalformedHeader(SmfError):
    def __init__(self, offset: int, detail: str):
        super().__init__(f"malformed header at byte {offset}: {detail}")
        self.offset = offset


class TruncatedChunk(SmfError):
    def __init__(self, offset: int, detail: str):
        super().__init__(f"truncated chunk at byte {offset}: {detail}")
        self.offset = offset


class BadVariableLengthQuantity(SmfError):
    def __init__(self, offset: int, detail: str):
        super().__init__(f"bad variable-length quantity at byte {offset}: {detail}")
        self.offset = offset


class MalformedEvent(SmfError):
    def __init__(self, offset: int, detail: str):
        super().__init__(f"malformed event at byte {offset}: {detail}")
        self.offset = offset


class UnsupportedDivision(SmfError):
    """SMPTE time division is not supported."""


class ValueOutOfRange(SmfError):
    """A message field exceeds the bit width of its SMF encoding."""


# Channel voice messages: status nibble and data fields beyond `channel`.
_CHANNEL_STATUS = {
    "note_off": 0x80,
    "note_on": 0x90,
    "polytouch": 0xA0,
    "control_change": 0xB0,
    "program_change": 0xC0,
    "aftertouch": 0xD0,
    "pitchwheel": 0xE0,
}
_CHANNEL_FIELDS = {
    "note_off": ("note", "velocity"),
    "note_on": ("note", "velocity"),
    "polytouch": ("note", "value"),
    "control_change": ("control", "value"),
    "program_change": ("program",),
    "aftertouch": ("value",),
    "pitchwheel": ("pitch",),
}
_STATUS_TO_TYPE = {v: k for k, v in _CHANNEL_STATUS.items()}
# Wire data-byte counts differ from the field counts (pitchwheel packs one
# 14-bit field into two bytes).
_CHANNEL_DATA_BYTES = {
    "note_off": 2, "note_on": 2, "polytouch": 2, "control_change": 2,
    "program_change": 1, "aftertouch": 1, "pitchwheel": 2,
}

# Meta messages with a typed field layout.  Anything else round-trips as an
# opaque `unknown_meta` carrying the raw type byte and payload.
_META_BYTES = {
    "text": 0x01,
    "copyright": 0x02,
    "track_name": 0x03,
    "instrument_name": 0x04,
    "lyrics": 0x05,
    "marker": 0x06,
    "cue_marker": 0x07,
    "device_name": 0x09,
    "midi_port": 0x21,
    "end_of_track": 0x2F,
    "set_tempo": 0x51,
    "time_signature": 0x58,
    "key_signature": 0x59,
}
_META_TYPES = {v: k for k, v in _META_BYTES.items()}
TEXT_META_TYPES = frozenset(
    ["text", "copyright", "track_name", "instrument_name", "lyrics",
     "marker", "cue_marker", "device_name"]
)

# Key signatures indexed by sharps/flats count (-7..7) and major/minor flag.
_MAJOR_KEYS = ["Cb", "Gb", "Db", "Ab", "Eb", "Bb", "F", "C",
               "G", "D", "A", "E", "B", "F#", "C#"]
_MINOR_KEYS = ["Abm", "Ebm", "Bbm", "Fm", "Cm", "Gm", "Dm", "Am",
               "Em", "Bm", "F#m", "C#m", "G#m", "D#m", "A#m"]
KEY_TO_SF_MI = {}
for _i, _name in enumerate(_MAJOR_KEYS):
    KEY_TO_SF_MI[_name] = (_i - 7, 0)
for _i, _name in enumerate(_MINOR_KEYS):
    KEY_TO_SF_MI[_name] = (_i - 7, 1)
SF_MI_TO_KEY = {v: k for k, v in KEY_TO_SF_MI.items()}
KEY_NAMES = frozenset(KEY_TO_SF_MI)

_FIELD_SPEC = {t: ("channel",) + f for t, f in _CHANNEL_FIELDS.items()}
_FIELD_SPEC.update({
    "time_signature": ("numerator", "denominator", "clocks_per_click",
                       "notated_32nd_notes_per_beat"),
    "key_signature": ("key",),
    "set_tempo": ("tempo",),
    "midi_port": ("port",),
    "end_of_track": (),
    "sysex": ("data",),
    "escape": ("data",),
    "unknown_meta": ("meta_type", "data"),
})
for _t in TEXT_META_TYPES:
    _FIELD_SPEC[_t] = ("text",)

_SEVEN_BIT = ("note", "velocity", "control", "value", "program")


def _check_range(msg_type: str, name: str, value):
    if name == "channel":
        ok = isinstance(value, int) and 0 <= value <= 15
    elif name in _SEVEN_BIT:
        ok = isinstance(value, int) and 0 <= value <= 127
    elif name == "pitch":
        ok = isinstance(value, int) and -8192 <= value <= 8191
    elif name == "tempo":
        ok = isinstance(value, int) and 0 <= value <= 0xFFFFFF
    elif name in ("numerator", "clocks_per_click", "notated_32nd_notes_per_beat",
                  "port"):
        ok = isinstance(value, int) and 0 <= value <= 255
    elif name == "denominator":
        # Stored on disk as a log2 exponent byte.
        ok = (isinstance(value, int) and value >= 1
              and value & (value - 1) == 0 and value.bit_length() - 1 <= 255)
    elif name == "key":
        ok = value in KEY_NAMES
    elif name == "text":
        ok = isinstance(value, str)
    elif name == "data":
        ok = isinstance(value, (bytes, bytearray))
    elif name == "meta_type":
        ok = isinstance(value, int) and 0 <= value <= 127
    else:
        ok = True
    if not ok:
        raise ValueOutOfRange(f"{msg_type}.{name}={value!r} out of range")


class Message:
    """A single MIDI message (channel voice, meta, sysex, or opaque meta).

    Immutable by convention; fields are validated against their SMF bit
    widths at construction time.
    """

    __slots__ = ("type", "_fields")

    def __init__(self, type: str, **fields):
        spec = _FIELD_SPEC.get(type)
        if spec is None:
            raise ValueError(f"unknown message type {type!r}")
        if set(fields) != set(spec):
            raise ValueError(
                f"{type} expects fields {sorted(spec)}, got {sorted(fields)}")
        for name, value in fields.items():
            _check_range(type, name, value)
        if "data" in fields:
            fields = dict(fields, data=bytes(fields["data"]))
        object.__setattr__(self, "type", type)
        object.__setattr__(self, "_fields", fields)

    def __getattr__(self, name):
        try:
            return self._fields[name]
        except KeyError:
            raise AttributeError(name) from None

    def __setattr__(self, name, value):
        raise AttributeError("Message is immutable")

    def __eq__(self, other):
        return (isinstance(other, Message) and self.type == other.type
                and self._fields == other._fields)

    def __hash__(self):
        return hash((self.type, tuple(sorted(self._fields.items()))))

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self._fields.items())
        return f"Message({self.type!r}, {inner})" if inner else f"Message({self.type!r})"

    @property
    def is_meta(self) -> bool:
        return self.type in _META_BYTES or self.type == "unknown_meta"


@dataclass(frozen=True)
class TrackEvent:
    delta_ticks: int
    message: Message


@dataclass
class SmfFile:
    ticks_per_beat: int
    format: int
    tracks: list[list[TrackEvent]]


def _read_u32(data: bytes, pos: int) -> int:
    return struct.unpack(">I", data[pos:pos + 4])[0]


def _read_vlq(data: bytes, pos: int, end: int) -> tuple[int, int]:
    start = pos
    value = 0
    for _ in range(4):
        if pos >= end:
            raise TruncatedChunk(pos, "variable-length quantity runs past chunk end")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise BadVariableLengthQuantity(start, "more than 4 bytes")


def parse_smf(data: bytes) -> SmfFile:
    """Parse a Standard MIDI File into its complete message stream.

    Running status is expanded, unknown meta events are kept as opaque
    payloads, and each track is guaranteed to end with exactly one
    end_of_track message (one is appended when the chunk lacks it).
    """
    if len(data) < 8 or data[:4] != b"MThd":
        raise MalformedHeader(0, "missing MThd chunk")
    header_len = _read_u32(data, 4)
    if header_len < 6 or 8 + header_len > len(data):
        raise MalformedHeader(4, f"bad header length {header_len}")
    fmt, n_tracks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise MalformedHeader(8, f"unsupported format {fmt}")
    if division & 0x8000:
        raise UnsupportedDivision("SMPTE division is not supported")
    if division == 0:
        raise MalformedHeader(12, "ticks per beat is zero")

    pos = 8 + header_len
    tracks: list[list[TrackEvent]] = []
    while len(tracks) < n_tracks:
        if pos + 8 > len(data):
            raise TruncatedChunk(pos, f"expected {n_tracks} track chunks, found {len(tracks)}")
        tag = data[pos:pos + 4]
        chunk_len = _read_u32(data, pos + 4)
        body_start = pos + 8
        if body_start + chunk_len > len(data):
            raise TruncatedChunk(pos, "chunk body extends past end of file")
        if tag == b"MTrk":
            tracks.append(_parse_track(data, body_start, body_start + chunk_len))
        # Alien chunk types are skipped, per the SMF specification.
        pos = body_start + chunk_len
    return SmfFile(ticks_per_beat=division, format=fmt, tracks=tracks)


def _parse_track(data: bytes, start: int, end: int) -> list[TrackEvent]:
    events: list[TrackEvent] = []
    pos = start
    running: int | None = None
    ended = False
    while pos < end and not ended:
        delta, pos = _read_vlq(data, pos, end)
        if pos >= end:
            raise TruncatedChunk(pos, "event status missing")
        first = data[pos]
        if first < 0x80:
            if running is None:
                raise MalformedEvent(pos, f"data byte 0x{first:02X} with no running status")
            status = running
        else:
            status = first
            pos += 1

        if status == 0xFF:
            running = None
            if pos >= end:
                raise TruncatedChunk(pos, "meta type missing")
            meta_type = data[pos]
            pos += 1
            length, pos = _read_vlq(data, pos, end)
            if pos + length > end:
                raise TruncatedChunk(pos, "meta payload runs past chunk end")
            payload = data[pos:pos + length]
            pos += length
            message = _decode_meta(meta_type, payload)
            if message.type == "end_of_track":
                ended = True
        elif status in (0xF0, 0xF7):
            running = None
            length, pos = _read_vlq(data, pos, end)
            if pos + length > end:
                raise TruncatedChunk(pos, "sysex payload runs past chunk end")
            payload = data[pos:pos + length]
            pos += length
            message = Message("sysex" if status == 0xF0 else "escape", data=payload)
        elif 0x80 <= status < 0xF0:
            running = status
            msg_type = _STATUS_TO_TYPE[status & 0xF0]
            n_data = _CHANNEL_DATA_BYTES[msg_type]
            if pos + n_data > end:
                raise TruncatedChunk(pos, "channel message data missing")
            raw = data[pos:pos + n_data]
            if any(b >= 0x80 for b in raw):
                raise MalformedEvent(pos, "channel data byte with high bit set")
            pos += n_data
            message = _decode_channel(msg_type, status & 0x0F, raw)
        else:
            raise MalformedEvent(pos, f"invalid status byte 0x{status:02X}")
        events.append(TrackEvent(delta_ticks=delta, message=message))
    if not ended:
        events.append(TrackEvent(0, Message("end_of_track")))
    return events


def _decode_channel(msg_type: str, channel: int, raw: bytes) -> Message:
    if msg_type == "pitchwheel":
        return Message("pitchwheel", channel=channel,
                       pitch=(raw[0] | (raw[1] << 7)) - 8192)
    fields = dict(zip(_CHANNEL_FIELDS[msg_type], raw))
    return Message(msg_type, channel=channel, **fields)


def _decode_meta(meta_type: int, payload: bytes) -> Message:
    name = _META_TYPES.get(meta_type)
    if name == "end_of_track":
        return Message("end_of_track")
    if name == "set_tempo" and len(payload) == 3:
        return Message("set_tempo", tempo=int.from_bytes(payload, "big"))
    if name == "time_signature" and len(payload) >= 4:
        exponent = payload[1]
        if exponent <= 255:
            return Message("time_signature", numerator=payload[0],
                           denominator=1 << exponent,
                           clocks_per_click=payload[2],
                           notated_32nd_notes_per_beat=payload[3])
    if name == "key_signature" and len(payload) == 2:
        sf = struct.unpack(">b", payload[:1])[0]
        mi = payload[1]
        key = SF_MI_TO_KEY.get((sf, mi))
        if key is not None:
            return Message("key_signature", key=key)
    if name == "midi_port" and len(payload) == 1:
        return Message("midi_port", port=payload[0])
    if name in TEXT_META_TYPES:
        # latin-1 is a bijection between byte values and code points, so text
        # payloads survive a round trip regardless of their real encoding.
        return Message(name, text=payload.decode("latin-1"))
    return Message("unknown_meta", meta_type=meta_type, data=payload)


def _encode_vlq(value: int) -> bytes:
    if not 0 <= value <= 0x0FFFFFFF:
        raise ValueOutOfRange(f"delta time {value} outside 0..0x0FFFFFFF")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _encode_message(message: Message) -> bytes:
    mtype = message.type
    if mtype in _CHANNEL_STATUS:
        status = _CHANNEL_STATUS[mtype] | message.channel
        if mtype == "pitchwheel":
            v = message.pitch + 8192
            return bytes([status, v & 0x7F, v >> 7])
        return bytes([status] + [getattr(message, f) for f in _CHANNEL_FIELDS[mtype]])
    if mtype == "sysex":
        return bytes([0xF0]) + _encode_vlq(len(message.data)) + message.data
    if mtype == "escape":
        return bytes([0xF7]) + _encode_vlq(len(message.data)) + message.data
    if mtype == "unknown_meta":
        return bytes([0xFF, message.meta_type]) + _encode_vlq(len(message.data)) + message.data
    payload = _encode_meta_payload(message)
    return bytes([0xFF, _META_BYTES[mtype]]) + _encode_vlq(len(payload)) + payload


def _encode_meta_payload(message: Message) -> bytes:
    mtype = message.type
    if mtype == "end_of_track":
        return b""
    if mtype == "set_tempo":
        return message.tempo.to_bytes(3, "big")
    if mtype == "time_signature":
        return bytes([message.numerator, message.denominator.bit_length() - 1,
                      message.clocks_per_click, message.notated_32nd_notes_per_beat])
    if mtype == "key_signature":
        sf, mi = KEY_TO_SF_MI[message.key]
        return struct.pack(">bB", sf, mi)
    if mtype == "midi_port":
        return bytes([message.port])
    if mtype in TEXT_META_TYPES:
        return message.text.encode("latin-1")
    raise ValueOutOfRange(f"cannot encode meta type {mtype}")


def write_smf(smf: SmfFile) -> bytes:
    """Serialize an SmfFile to canonical bytes (no running status).

    The output parses back to a message-equivalent SmfFile; byte-identical
    round trips are deliberately not promised.
    """
    if not isinstance(smf.ticks_per_beat, int) or not 0 < smf.ticks_per_beat <= 0x7FFF:
        raise ValueOutOfRange(f"ticks_per_beat {smf.ticks_per_beat} outside 1..32767")
    if smf.format not in (0, 1):
        raise ValueOutOfRange(f"format {smf.format} is not 0 or 1")
    if smf.format == 0 and len(smf.tracks) != 1:
        raise ValueOutOfRange("format 0 requires exactly one track")
    out = bytearray()
    out += b"MThd" + struct.pack(">IHHH", 6, smf.format, len(smf.tracks),
                                 smf.ticks_per_beat)
    for track in smf.tracks:
        body = bytearray()
        for event in track:
            body += _encode_vlq(event.delta_ticks)
            body += _encode_message(event.message)
        out += b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    return bytes(out)


def merge_tracks(smf: SmfFile) -> list[TrackEvent]:
    """Merge all tracks into one delta-timed stream ordered by absolute tick.

    Ties are broken by (track index, within-track order).  Per-track
    end_of_track messages are dropped and a single one is appended at the
    latest end time, so the merged stream carries exactly one terminator.
    """
    entries: list[tuple[int, int, int, Message]] = []
    end_tick = 0
    for track_index, track in enumerate(smf.tracks):
        tick = 0
        for order, event in enumerate(track):
            tick += event.delta_ticks
            if event.message.type == "end_of_track":
                end_tick = max(end_tick, tick)
            else:
                entries.append((tick, track_index, order, event.message))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    merged: list[TrackEvent] = []
    previous = 0
    for tick, _, _, message in entries:
        merged.append(TrackEvent(tick - previous, message))
        previous = tick
    if smf.tracks:
        end_tick = max(end_tick, previous)
        merged.append(TrackEvent(end_tick - previous, Message("end_of_track")))
    return merged
