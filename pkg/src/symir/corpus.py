"""Triplet corpus records and their JSON-lines serialization.

One triplet pairs an ABC rendering, an MTF rendering, and up to three text
sources: raw metadata, an LLM English summary, and an LLM non-English
summary with its language tag.  Corpora are stored one JSON object per line
with fields ``abc``, ``mtf``, ``raw_text``, ``llm_en``, ``llm_nen``, ``lang``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path


@dataclass
class Triplet:
    abc: str
    mtf: str
    raw_text: str | None = None
    llm_en: str | None = None
    llm_nen: str | None = None
    lang: str | None = None

    def __post_init__(self):
        if not self.abc or not self.mtf:
            raise ValueError("triplet requires both abc and mtf content")
        if self.raw_text is None and self.llm_en is None and self.llm_nen is None:
            raise ValueError("triplet requires at least one text field")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, payload: dict) -> "Triplet":
        return cls(abc=payload["abc"], mtf=payload["mtf"],
                   raw_text=payload.get("raw_text"),
                   llm_en=payload.get("llm_en"),
                   llm_nen=payload.get("llm_nen"),
                   lang=payload.get("lang"))


def read_triplets(path) -> list[Triplet]:
    triplets = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                triplets.append(Triplet.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{number}: bad triplet record: {exc}") from None
    return triplets


def write_triplets(path, triplets) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for triplet in triplets:
            handle.write(json.dumps(triplet.to_dict(), ensure_ascii=False) + "\n")


def read_kv_config(path) -> dict[str, str]:
    """Parse a key=value config file; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{number}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values
