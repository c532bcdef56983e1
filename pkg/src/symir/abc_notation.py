"""ABC notation parsing and the standard <-> voice-interleaved conversion.

A tune is modeled as its verbatim header lines plus, per voice, an ordered
list of bars (raw body text with bar delimiters retained).  The interleaved
form places every voice's k-th bar on one line, each segment tagged
``[V:id]``, which keeps corresponding bars adjacent while remaining valid
ABC syntax.

The converters are reversible at the tune level: converting to interleaved
and back yields the same headers, voices, and bars up to whitespace
normalization (runs of spaces and tabs outside double-quoted strings
collapse to one space; bar edges are trimmed).

Known limitation: parameters on body voice-switch lines (``V:1 clef=bass``)
are not preserved -- declare voice properties in the header.  Lyrics (w:)
lines are carried with the bar preceding them; interleaved emission keeps
them only for the final voice of a bar, so corpus pipelines should strip
lyrics first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class AbcError(Exception):
    """Base class for ABC conversion errors."""


class MissingKeyField(AbcError):
    pass


class UndeclaredVoice(AbcError):
    def __init__(self, voice: str):
        super().__init__(f"voice {voice!r} is not declared in the header")
        self.voice = voice


class BarCountMismatch(AbcError):
    def __init__(self, voice: str, expected: int, got: int):
        super().__init__(
            f"voice {voice!r} has {got} bars, expected {expected}")
        self.voice = voice
        self.expected = expected
        self.got = got


class DuplicateVoiceInBar(AbcError):
    def __init__(self, voice: str, bar_index: int):
        super().__init__(f"voice {voice!r} appears twice in bar {bar_index}")
        self.voice = voice
        self.bar_index = bar_index


@dataclass
class AbcTune:
    """Headers plus per-voice bars; voice insertion order is declaration order."""

    headers: list[str]
    voices: dict[str, list[str]] = field(default_factory=dict)


@dataclass
class InterleavedAbcTune:
    headers: list[str]
    voice_order: list[str]
    bars: list[list[tuple[str, str]]]


_TWO_CHAR_DELIMS = ("|]", "||", ":|", "|:")
_HEADER_FIELD_RE = re.compile(r"^[A-Za-z]:")
_VOICE_ID_RE = re.compile(r"^V:\s*(\S+)")
_INLINE_VOICE_RE = re.compile(r"\[V:\s*([^\]\s]+)\s*\]")
_DEFAULT_VOICE = "1"


def split_bars(text: str) -> list[str]:
    """Split body text on bar delimiters, keeping each delimiter with the
    content that precedes it.  Delimiters inside double-quoted strings are
    ignored.  Trailing content without a delimiter becomes the final bar;
    trailing whitespace attaches to the last bar."""
    bars: list[str] = []
    start = 0
    i = 0
    in_quote = False
    n = len(text)
    while i < n:
        c = text[i]
        if c == '"':
            in_quote = not in_quote
            i += 1
            continue
        if in_quote:
            i += 1
            continue
        if text[i:i + 2] in _TWO_CHAR_DELIMS:
            end = i + 2
        elif c == "|":
            end = i + 1
        else:
            i += 1
            continue
        bars.append(text[start:end])
        start = end
        i = end
    tail = text[start:]
    if tail:
        if tail.strip() or not bars:
            bars.append(tail)
        else:
            bars[-1] += tail
    return bars


def _ends_with_delimiter(bar: str) -> bool:
    stripped = bar.rstrip()
    return stripped.endswith(("|", "|]", ":|", "|:"))


class _BodyBuilder:
    """Accumulates body lines per voice, completing bars incrementally."""

    def __init__(self, declared: list[str]):
        self.declared = declared
        self.voices: dict[str, list[str]] = {v: [] for v in declared}
        self.residual: dict[str, str] = {}
        self.carry = ""

    def ensure(self, voice: str):
        if self.declared and voice not in self.voices:
            raise UndeclaredVoice(voice)
        self.voices.setdefault(voice, [])
        self.residual.setdefault(voice, "")

    def default_voice(self) -> str:
        if self.declared:
            return self.declared[0]
        if self.voices:
            return next(iter(self.voices))
        return _DEFAULT_VOICE

    def add_music(self, voice: str, text: str):
        self.ensure(voice)
        if self.carry:
            text = self.carry + text
            self.carry = ""
        pending = self.residual[voice]
        pending = pending + (" " if pending else "") + text
        bars = split_bars(pending)
        if bars and not _ends_with_delimiter(bars[-1]):
            self.residual[voice] = bars.pop()
        else:
            self.residual[voice] = ""
        self.voices[voice].extend(bars)

    def add_annotation(self, voice: str, line: str):
        """Attach a w:/directive line to the preceding bar of the voice."""
        self.ensure(voice)
        if self.residual[voice]:
            self.residual[voice] += "\n" + line
        elif self.voices[voice]:
            self.voices[voice][-1] += "\n" + line
        else:
            self.carry += line + "\n"

    def finish(self) -> dict[str, list[str]]:
        for voice, pending in self.residual.items():
            if pending.strip():
                self.voices[voice].append(pending)
            elif pending and self.voices[voice]:
                self.voices[voice][-1] += pending
        return self.voices


def parse_abc(text: str) -> AbcTune:
    """Parse a single ABC tune.

    Headers (up to and including the K: line) are preserved verbatim.  Body
    content is split into bars with delimiters retained; inline fields stay
    inside their bar.  Both standard (V: sections) and interleaved
    ([V:id]-tagged lines) bodies are accepted.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    headers: list[str] = []
    body_start = None
    for index, line in enumerate(lines):
        headers.append(line)
        if line.startswith("K:"):
            body_start = index + 1
            break
    if body_start is None:
        raise MissingKeyField("tune has no K: field terminating the header")

    declared = []
    for line in headers:
        match = _VOICE_ID_RE.match(line)
        if match and match.group(1) not in declared:
            declared.append(match.group(1))

    builder = _BodyBuilder(declared)
    current: str | None = None
    for line in lines[body_start:]:
        if not line.strip():
            continue
        if line.lstrip().startswith("[V:"):
            for voice, segment in _split_inline_segments(line):
                builder.add_music(voice, segment)
            continue
        match = _VOICE_ID_RE.match(line)
        if match:
            current = match.group(1)
            builder.ensure(current)
            continue
        if line.startswith(("w:", "%")):
            builder.add_annotation(current or builder.default_voice(), line)
            continue
        builder.add_music(current or builder.default_voice(), line)

    return AbcTune(headers=headers, voices=builder.finish())


def _split_inline_segments(line: str) -> list[tuple[str, str]]:
    segments = []
    matches = list(_INLINE_VOICE_RE.finditer(line))
    for index, match in enumerate(matches):
        end = matches[index + 1].start() if index + 1 < len(matches) else len(line)
        segments.append((match.group(1), line[match.end():end]))
    return segments


def standard_to_interleaved(tune: AbcTune) -> InterleavedAbcTune:
    """Group the k-th bar of every voice into one interleaved bar.

    All voices must have equal bar counts; the conversion refuses to guess
    an alignment otherwise.
    """
    order = list(tune.voices)
    if not order:
        return InterleavedAbcTune(list(tune.headers), [], [])
    expected = len(tune.voices[order[0]])
    for voice in order:
        got = len(tune.voices[voice])
        if got != expected:
            raise BarCountMismatch(voice, expected, got)
    bars = [[(voice, tune.voices[voice][k]) for voice in order]
            for k in range(expected)]
    return InterleavedAbcTune(list(tune.headers), order, bars)


def interleaved_to_standard(tune: InterleavedAbcTune) -> AbcTune:
    voices: dict[str, list[str]] = {v: [] for v in tune.voice_order}
    for index, bar in enumerate(tune.bars):
        seen = set()
        for voice, text in bar:
            if voice in seen:
                raise DuplicateVoiceInBar(voice, index)
            seen.add(voice)
            voices.setdefault(voice, []).append(text)
    return AbcTune(headers=list(tune.headers), voices=voices)


def emit_abc(tune: AbcTune) -> str:
    """Render an AbcTune as standard ABC text (one body line per voice)."""
    lines = list(tune.headers)
    multi = len(tune.voices) > 1
    for voice, bars in tune.voices.items():
        if multi:
            lines.append(f"V:{voice}")
        if bars:
            lines.append("".join(bars))
    return "\n".join(lines) + "\n"


def emit_interleaved(tune: InterleavedAbcTune) -> str:
    """Render an interleaved tune, one `[V:id] body` line per bar."""
    lines = list(tune.headers)
    for bar in tune.bars:
        lines.append(" ".join(f"[V:{voice}] {text.strip()}" for voice, text in bar))
    return "\n".join(lines) + "\n"


def normalize_music_whitespace(text: str) -> str:
    """Collapse runs of spaces/tabs outside double-quoted strings; trim ends."""
    out = []
    in_quote = False
    pending_space = False
    for c in text:
        if c == '"':
            if pending_space and out:
                out.append(" ")
            pending_space = False
            in_quote = not in_quote
            out.append(c)
        elif not in_quote and c in " \t":
            pending_space = True
        else:
            if pending_space and out:
                out.append(" ")
            pending_space = False
            out.append(c)
    return "".join(out)


def tunes_equivalent(a: AbcTune, b: AbcTune) -> bool:
    """Tune equality modulo the defined whitespace normalization of bars."""
    if a.headers != b.headers or list(a.voices) != list(b.voices):
        return False
    for voice in a.voices:
        bars_a = [normalize_music_whitespace(t) for t in a.voices[voice]]
        bars_b = [normalize_music_whitespace(t) for t in b.voices[voice]]
        if bars_a != bars_b:
            return False
    return True


def strip_lyrics(text: str) -> str:
    """Drop w: lines from ABC text (used by the corpus pipeline)."""
    lines = [line for line in text.split("\n") if not line.startswith("w:")]
    return "\n".join(lines)


_MIDI_DIRECTIVE_RE = re.compile(r"^%%MIDI\s+(program|channel)\b")
_INSTRUMENT_CLAUSE_RE = re.compile(r'\s*\bs?nm\s*=\s*("[^"]*"|\S+)')


def strip_instruments(text: str, modality: str) -> str:
    """Remove instrument information from ABC or MTF text.

    ABC: drops ``%%MIDI program``/``%%MIDI channel`` directive lines and
    ``nm=``/``snm=`` clauses on voice fields.  MTF: drops ``program_change``
    lines.  Everything else is byte-identical, and the operation is
    idempotent.
    """
    if modality == "mtf":
        lines = text.split("\n")
        kept = [line for line in lines
                if not line.startswith("program_change ") and line != "program_change"]
        return "\n".join(kept)
    if modality == "abc":
        out = []
        for line in text.split("\n"):
            if _MIDI_DIRECTIVE_RE.match(line):
                continue
            if line.startswith("V:") or "[V:" in line:
                line = _INSTRUMENT_CLAUSE_RE.sub("", line)
            out.append(line)
        return "\n".join(out)
    raise ValueError(f"unknown modality {modality!r}")
