"""Metadata refinement: prompt assembly, LLM calls, response filtering,
language balancing, and triplet deduplication.

The LLM is an external HTTP endpoint speaking a minimal chat-completion wire
format; a deterministic mock ships in-repo so the whole pipeline runs
offline.  Each corpus entry draws a target non-English language uniformly
from a 100-language list (99 tokenizer-supported languages plus Cantonese),
gets a fixed prompt (system instruction plus two in-context exchanges, one
accepting and one rejecting), and its response is validated: a ``None``
verdict, broken JSON, missing summary fields, or a non-English summary in
the wrong language all reject the entry.  Rejected entries keep their raw
text only.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np
import requests

from .corpus import Triplet
from .langid import LanguageIdentifier, StubLanguageIdentifier

# 99 non-English languages covered by the multilingual tokenizer, plus
# Cantonese.  Script variants carry a suffix.  Configurable per run.
LANGUAGE_NAMES: dict[str, str] = {
    "af": "Afrikaans", "am": "Amharic", "ar": "Arabic", "as": "Assamese",
    "az": "Azerbaijani", "be": "Belarusian", "bg": "Bulgarian",
    "bn": "Bengali", "bn-rom": "Romanized Bengali", "br": "Breton",
    "bs": "Bosnian", "ca": "Catalan", "cs": "Czech", "cy": "Welsh",
    "da": "Danish", "de": "German", "el": "Greek", "eo": "Esperanto",
    "es": "Spanish", "et": "Estonian", "eu": "Basque", "fa": "Persian",
    "fi": "Finnish", "fil": "Filipino", "fr": "French",
    "fy": "Western Frisian", "ga": "Irish", "gd": "Scottish Gaelic",
    "gl": "Galician", "gu": "Gujarati", "ha": "Hausa", "he": "Hebrew",
    "hi": "Hindi", "hi-rom": "Romanized Hindi", "hr": "Croatian",
    "hu": "Hungarian", "hy": "Armenian", "id": "Indonesian",
    "is": "Icelandic", "it": "Italian", "ja": "Japanese", "jv": "Javanese",
    "ka": "Georgian", "kk": "Kazakh", "km": "Khmer", "kn": "Kannada",
    "ko": "Korean", "ku": "Kurdish", "ky": "Kyrgyz", "la": "Latin",
    "lo": "Lao", "lt": "Lithuanian", "lv": "Latvian", "mg": "Malagasy",
    "mk": "Macedonian", "ml": "Malayalam", "mn": "Mongolian",
    "mr": "Marathi", "ms": "Malay", "my": "Burmese",
    "my-zaw": "Burmese (Zawgyi)", "ne": "Nepali", "nl": "Dutch",
    "no": "Norwegian", "om": "Oromo", "or": "Oriya", "pa": "Punjabi",
    "pl": "Polish", "ps": "Pashto", "pt": "Portuguese", "ro": "Romanian",
    "ru": "Russian", "sa": "Sanskrit", "sd": "Sindhi", "si": "Sinhala",
    "sk": "Slovak", "sl": "Slovenian", "so": "Somali", "sq": "Albanian",
    "sr": "Serbian", "su": "Sundanese", "sv": "Swedish", "sw": "Swahili",
    "ta": "Tamil", "ta-rom": "Romanized Tamil", "te": "Telugu",
    "te-rom": "Romanized Telugu", "th": "Thai", "tr": "Turkish",
    "ug": "Uyghur", "uk": "Ukrainian", "ur": "Urdu",
    "ur-rom": "Romanized Urdu", "uz": "Uzbek", "vi": "Vietnamese",
    "xh": "Xhosa", "yi": "Yiddish", "zh-Hans": "Simplified Chinese",
    "zh-Hant": "Traditional Chinese", "yue": "Cantonese",
}
DEFAULT_LANGUAGES: tuple[str, ...] = tuple(LANGUAGE_NAMES)

TOKEN_ENV_VAR = "SYMIR_LLM_TOKEN"


class ClientUnavailable(Exception):
    pass


@dataclass(frozen=True)
class PromptBundle:
    """Deterministic prompt: fixed system text, exactly two fixed in-context
    exchanges (one accepted, one rejected), then the entry and its target
    language."""

    system: str
    examples: tuple[tuple[str, str], tuple[str, str]]
    entry_text: str
    target_language: str

    def messages(self) -> list[dict]:
        chat = [{"role": "system", "content": self.system}]
        for user, assistant in self.examples:
            chat.append({"role": "user", "content": user})
            chat.append({"role": "assistant", "content": assistant})
        chat.append({"role": "user", "content": self.entry_text})
        return chat


_PROMPT_RESOURCE: dict | None = None


def _prompt_resource() -> dict:
    global _PROMPT_RESOURCE
    if _PROMPT_RESOURCE is None:
        payload = importlib_resources.files("symir.resources").joinpath(
            "refinery_prompt.json").read_text(encoding="utf-8")
        _PROMPT_RESOURCE = json.loads(payload)
    return _PROMPT_RESOURCE


def build_prompt(entry: dict, nen_language: str) -> PromptBundle:
    """Assemble the refinement prompt for one metadata entry."""
    resource = _prompt_resource()
    name = LANGUAGE_NAMES.get(nen_language, nen_language)
    entry_text = (json.dumps(entry, ensure_ascii=False)
                  + f"\nTarget language: {name} ({nen_language})")
    examples = tuple((ex["user"], ex["assistant"]) for ex in resource["examples"])
    return PromptBundle(system=resource["system"], examples=examples,
                        entry_text=entry_text, target_language=nen_language)


def pick_language(rng: np.random.Generator, languages=None) -> str:
    """Uniform draw over the configured non-English language list."""
    pool = list(languages) if languages is not None else list(DEFAULT_LANGUAGES)
    if not pool:
        raise ValueError("language list is empty")
    return pool[int(rng.integers(len(pool)))]


@dataclass(frozen=True)
class RefineryResult:
    verdict: str  # "accepted" | "rejected"
    reason: str | None = None
    en_summary: str | None = None
    nen_summary: str | None = None
    nen_language: str | None = None

    def __post_init__(self):
        if self.verdict == "accepted":
            if not self.en_summary or not self.nen_summary or not self.nen_language:
                raise ValueError("accepted result requires both summaries and a language")


def validate_response(raw: str, expected_language: str,
                      identifier: LanguageIdentifier | None = None) -> RefineryResult:
    """Filter an LLM response; rejection is a value, never an exception."""
    if identifier is None:
        identifier = StubLanguageIdentifier()
    text = raw.strip()
    if text in ("None", "none", "null"):
        return RefineryResult("rejected", reason="non_musical")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        return RefineryResult("rejected", reason="invalid_json")
    if payload is None:
        return RefineryResult("rejected", reason="non_musical")
    if not isinstance(payload, dict):
        return RefineryResult("rejected", reason="invalid_json")
    en = payload.get("en_summary")
    nen = payload.get("nen_summary")
    if not isinstance(en, str) or not isinstance(nen, str) or not en or not nen:
        return RefineryResult("rejected", reason="missing_fields")
    detected = identifier.detect(nen)
    if detected.language != expected_language:
        return RefineryResult("rejected", reason="wrong_language")
    return RefineryResult("accepted", en_summary=en, nen_summary=nen,
                          nen_language=expected_language)


# -- clients --------------------------------------------------------------------

class HttpChatClient:
    """Minimal chat-completion client; the API token comes from the
    SYMIR_LLM_TOKEN environment variable."""

    def __init__(self, endpoint: str, model: str = "gpt-4", timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def complete(self, messages: list[dict]) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = requests.post(
                self.endpoint, headers=headers, timeout=self.timeout,
                json={"model": self.model, "messages": messages})
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise ClientUnavailable(str(exc)) from None


_TARGET_RE = re.compile(r"\(([\w-]+)\)\s*$")


class MockLlmClient:
    """Deterministic offline stand-in for the refinement endpoint.

    Valid responses echo the entry back as proper summaries, tagging the
    non-English one with ``##code##`` so the stub identifier validates it.
    A configured fraction of responses is malformed, decided by a stable
    hash of (seed, prompt) so results are reproducible and independent of
    call order.
    """

    def __init__(self, malformed_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= malformed_rate <= 1.0:
            raise ValueError("malformed_rate must be in [0, 1]")
        self.malformed_rate = malformed_rate
        self.seed = seed
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        prompt = messages[-1]["content"]
        digest = hashlib.blake2b(f"{self.seed}:{prompt}".encode("utf-8"),
                                 digest_size=8).digest()
        draw = int.from_bytes(digest, "big") / 2 ** 64
        if draw < self.malformed_rate:
            return "Sorry, I could not process this entry."
        match = _TARGET_RE.search(prompt)
        code = match.group(1) if match else "und"
        entry_text = prompt.rsplit("\nTarget language:", 1)[0]
        try:
            entry = json.loads(entry_text)
            gist = "; ".join(str(v) for v in entry.values()) or "an untitled piece"
        except json.JSONDecodeError:
            gist = entry_text
        return json.dumps({
            "en_summary": f"A musical piece described as: {gist}.",
            "nen_summary": f"##{code}## resume: {gist}.",
        }, ensure_ascii=False)


# -- corpus-level operations -------------------------------------------------------

def deduplicate(triplets) -> list[Triplet]:
    """Merge triplets with identical (abc, mtf) keys.

    Text fields union with first-seen precedence per field; output order is
    first occurrence.  Idempotent.
    """
    merged: dict[tuple[str, str], Triplet] = {}
    for triplet in triplets:
        key = (triplet.abc, triplet.mtf)
        kept = merged.get(key)
        if kept is None:
            merged[key] = Triplet(**{k: v for k, v in triplet.to_dict().items()})
            continue
        for name in ("raw_text", "llm_en", "llm_nen", "lang"):
            if getattr(kept, name) is None and getattr(triplet, name) is not None:
                setattr(kept, name, getattr(triplet, name))
    return list(merged.values())


@dataclass
class LanguageStats:
    """Per-language entry counts before and after refinement."""

    before: dict[str, int] = field(default_factory=dict)
    after: dict[str, int] = field(default_factory=dict)

    def bump_before(self, lang: str):
        self.before[lang] = self.before.get(lang, 0) + 1

    def bump_after(self, lang: str):
        self.after[lang] = self.after.get(lang, 0) + 1

    def rows(self) -> list[tuple[str, int, int]]:
        langs = sorted(set(self.before) | set(self.after))
        return [(lang, self.before.get(lang, 0), self.after.get(lang, 0))
                for lang in langs]


def entry_from_raw_text(raw_text: str) -> dict:
    """Best-effort structuring of a raw metadata blob for the prompt.

    ``Key: value`` lines become fields; anything else lands in ``text``."""
    entry: dict[str, str] = {}
    leftovers: list[str] = []
    for line in raw_text.split("\n"):
        if ":" in line:
            key, value = line.split(":", 1)
            key = key.strip()
            if key and " " not in key and key not in entry:
                entry[key.lower()] = value.strip()
                continue
        if line.strip():
            leftovers.append(line.strip())
    if leftovers or not entry:
        entry["text"] = " ".join(leftovers) if leftovers else raw_text
    return entry


def _entry_rng(seed: int, index: int) -> np.random.Generator:
    # Per-entry seeded stream: parallel scheduling cannot change outputs.
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _process_entry(index: int, triplet: Triplet, client, seed: int,
                   languages, identifier, retries: int) -> dict:
    rng = _entry_rng(seed, index)
    language = pick_language(rng, languages)
    entry = entry_from_raw_text(triplet.raw_text or "")
    bundle = build_prompt(entry, language)
    attempt = 0
    while True:
        try:
            response = client.complete(bundle.messages())
            break
        except ClientUnavailable:
            attempt += 1
            if attempt > retries:
                raise
    result = validate_response(response, language, identifier)
    return {
        "index": index,
        "verdict": result.verdict,
        "reason": result.reason,
        "en": result.en_summary,
        "nen": result.nen_summary,
        "lang": result.nen_language,
    }


def _load_progress(path) -> dict[int, dict]:
    records: dict[int, dict] = {}
    if path and Path(path).exists():
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    record = json.loads(line)
                    records[record["index"]] = record
    return records


def refine_corpus(corpus, client, seed: int = 0, languages=None,
                  identifier: LanguageIdentifier | None = None,
                  retries: int = 3, progress_path=None,
                  parallel: int = 1) -> tuple[list[Triplet], LanguageStats]:
    """Run the refinement pipeline over a corpus of triplets.

    Accepted entries gain both LLM summaries and the language tag; rejected
    entries keep raw text only.  Music content is never dropped.  Progress
    is persisted per entry so an interrupted run resumes to the same corpus
    under the same seed.
    """
    if identifier is None:
        identifier = StubLanguageIdentifier()
    triplets = list(corpus)
    done = _load_progress(progress_path)
    pending = [i for i in range(len(triplets)) if i not in done]

    if parallel > 1 and pending:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = {i: pool.submit(_process_entry, i, triplets[i], client,
                                      seed, languages, identifier, retries)
                       for i in pending}
            fresh = {i: futures[i].result() for i in pending}
    else:
        fresh = {i: _process_entry(i, triplets[i], client, seed, languages,
                                   identifier, retries)
                 for i in pending}

    if progress_path and fresh:
        Path(progress_path).parent.mkdir(parents=True, exist_ok=True)
        with open(progress_path, "a", encoding="utf-8") as handle:
            for i in sorted(fresh):
                handle.write(json.dumps(fresh[i], ensure_ascii=False) + "\n")
    done.update(fresh)

    stats = LanguageStats()
    refined: list[Triplet] = []
    for index, triplet in enumerate(triplets):
        if triplet.raw_text:
            stats.bump_before(identifier.detect(triplet.raw_text).language)
        record = done[index]
        if record["verdict"] == "accepted":
            refined.append(Triplet(abc=triplet.abc, mtf=triplet.mtf,
                                   raw_text=triplet.raw_text,
                                   llm_en=record["en"], llm_nen=record["nen"],
                                   lang=record["lang"]))
            stats.bump_after(record["lang"])
        elif triplet.raw_text is not None:
            refined.append(Triplet(abc=triplet.abc, mtf=triplet.mtf,
                                   raw_text=triplet.raw_text))
        else:
            # No raw text to fall back on; keep the triplet as it came in
            # rather than strip it of all text.
            refined.append(triplet)
    return refined, stats
