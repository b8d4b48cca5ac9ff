"""Six-step tweet normalization pipeline.

Steps run in a fixed order:

1. NFC normalization and lowercasing
2. emoji replacement (table driven; unknown emoji are deleted)
3. social-token stripping (HTML tags, URLs, mentions, hashtags)
4. contraction expansion
5. special-character removal (keeps ``[a-z0-9 ]`` and the Devanagari block)
6. Devanagari to Latin transliteration

The output alphabet is ``[a-z0-9 ]`` with single spaces between tokens, and
the pipeline is idempotent.  All mappings live in editable TSV tables under
``data/``.
"""
from __future__ import annotations

import html
import re
import unicodedata
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Mapping

STEPS = ("lowercase", "emoji", "social", "contractions", "special_chars", "transliterate")

TABLE_FILES = {
    "emoji_table": "emoji.tsv",
    "contraction_table": "contractions.tsv",
    "translit_table": "translit.tsv",
}

_EMOJI_WORDS = re.compile(r"[a-z]+( [a-z]+)*")

# Presentation selectors, ZWJ, keycap and tag characters glue emoji sequences
# together; they are dropped before table lookup.
_EMOJI_GLUE = re.compile("[\ufe0e\ufe0f\u200d\u20e3\U000e0020-\U000e007f]")
_UNKNOWN_EMOJI = re.compile(
    "["
    "\U0001f000-\U0001faff"
    "\u2300-\u23ff"
    "\u2600-\u27bf"
    "\u2b00-\u2bff"
    "\u3030\u303d\u3297\u3299"
    "]+"
)

_HTML_TAG = re.compile(r"<[^>]*>")
_URL = re.compile(r"(?:https?://|www\.)\S+")
_MENTION = re.compile(r"@\S+")
_HASHTAG = re.compile(r"#(\w+)")
_APOSTROPHES = str.maketrans({"\u2019": "'", "\u2018": "'", "\u02bc": "'", "`": "'"})
_SPECIAL = re.compile("[^a-z0-9\u0900-\u097f ]")
_NON_OUTPUT = re.compile(r"[^a-z0-9 ]")
_WHITESPACE = re.compile(r"\s+")

VIRAMA = "\u094d"
NUKTA = "\u093c"


def is_consonant(ch: str) -> bool:
    cp = ord(ch)
    return 0x0915 <= cp <= 0x0939 or 0x0958 <= cp <= 0x095F


def is_vowel_sign(ch: str) -> bool:
    cp = ord(ch)
    return 0x093E <= cp <= 0x094C or 0x0955 <= cp <= 0x0957 or cp in (0x0962, 0x0963)


def load_table(path) -> dict[str, str]:
    """Read a ``key<TAB>value`` table; ``#`` lines and blank lines are skipped."""
    table = {}
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: expected key<TAB>value")
            key, value = line.split("\t", 1)
            table[unicodedata.normalize("NFC", key)] = value
    return table


def _longest_first(keys) -> str:
    return "|".join(re.escape(k) for k in sorted(keys, key=lambda k: (-len(k), k)))


@dataclass(frozen=True)
class PreprocessConfig:
    emoji_table: Mapping[str, str] = field(default_factory=dict)
    contraction_table: Mapping[str, str] = field(default_factory=dict)
    translit_table: Mapping[str, str] = field(default_factory=dict)
    step_toggles: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        for key, value in self.emoji_table.items():
            if not _EMOJI_WORDS.fullmatch(value):
                raise ValueError(f"emoji replacement for {key!r} must be lowercase ascii words, got {value!r}")
        unknown = set(self.step_toggles) - set(STEPS)
        if unknown:
            raise ValueError(f"unknown preprocessing steps: {sorted(unknown)}")

    @classmethod
    def from_dir(cls, tables_dir, step_toggles=None) -> "PreprocessConfig":
        tables_dir = Path(tables_dir)
        if not tables_dir.is_dir():
            raise FileNotFoundError(f"tables directory not found: {tables_dir}")
        tables = {}
        for name, filename in TABLE_FILES.items():
            path = tables_dir / filename
            if not path.is_file():
                raise FileNotFoundError(f"missing table file: {path}")
            tables[name] = load_table(path)
        return cls(**tables, step_toggles=dict(step_toggles or {}))

    def enabled(self, step: str) -> bool:
        return self.step_toggles.get(step, True)

    def with_toggles(self, **toggles) -> "PreprocessConfig":
        merged = {**self.step_toggles, **toggles}
        return PreprocessConfig(self.emoji_table, self.contraction_table, self.translit_table, merged)

    @cached_property
    def _emoji_re(self):
        keys = [_EMOJI_GLUE.sub("", k) for k in self.emoji_table]
        return re.compile(_longest_first(k for k in keys if k)) if keys else None

    @cached_property
    def _emoji_lookup(self):
        return {_EMOJI_GLUE.sub("", k): v for k, v in self.emoji_table.items()}

    @cached_property
    def _contraction_re(self):
        return _compile_contractions(self.contraction_table)


def bundled_tables_dir() -> Path:
    return Path(str(resources.files("subword_attention") / "data"))


def default_config(**step_toggles) -> PreprocessConfig:
    return PreprocessConfig.from_dir(bundled_tables_dir(), step_toggles)


def _compile_contractions(table):
    if not table:
        return None
    # a key matches only when not glued to other letters
    return re.compile(r"(?<![^\W\d_])(" + _longest_first(table) + r")(?![^\W\d_])")


def replace_emoji(text: str, config: PreprocessConfig) -> str:
    text = _EMOJI_GLUE.sub("", text)
    if config._emoji_re is not None:
        lookup = config._emoji_lookup
        text = config._emoji_re.sub(lambda m: f" {lookup[m.group(0)]} ", text)
    return _UNKNOWN_EMOJI.sub(" ", text)


def strip_social_tokens(text: str) -> str:
    text = html.unescape(text)
    text = _HTML_TAG.sub(" ", text)
    text = _URL.sub(" link ", text)
    text = _MENTION.sub(" username ", text)
    return _HASHTAG.sub(r"\1", text)


def _expand(text, pattern, table):
    text = text.translate(_APOSTROPHES)
    if pattern is None:
        return text
    return pattern.sub(lambda m: table[m.group(1)], text)


def expand_contractions(text: str, table: Mapping[str, str]) -> str:
    """Longest-match expansion of contracted forms, e.g. ``can't`` -> ``can not``."""
    return _expand(text, _compile_contractions(table), table)


def transliterate(text: str, table: Mapping[str, str]) -> str:
    """Romanize Devanagari with the inherent-vowel rule.

    A consonant emits a trailing ``a`` unless the next sign is a dependent
    vowel or a virama.  Codepoints outside the Devanagari block pass through;
    Devanagari codepoints missing from the table are dropped.
    """
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if not 0x0900 <= ord(ch) <= 0x097F:
            out.append(ch)
            i += 1
            continue
        if i + 1 < n and text[i : i + 2] in table:
            key = text[i : i + 2]
        else:
            key = ch
        i += len(key)
        if key not in table:
            continue
        out.append(table[key])
        if is_consonant(key[0]):
            j = i
            while j < n and text[j] == NUKTA:
                j += 1
            if j >= n or not (is_vowel_sign(text[j]) or text[j] == VIRAMA):
                out.append("a")
    return "".join(out)


def preprocess(text: str, config: PreprocessConfig | None = None) -> str:
    if config is None:
        config = _default()
    if config.enabled("lowercase"):
        text = unicodedata.normalize("NFC", text).lower()
    if config.enabled("emoji"):
        text = replace_emoji(text, config)
    if config.enabled("social"):
        text = strip_social_tokens(text)
    if config.enabled("contractions"):
        text = _expand(text, config._contraction_re, config.contraction_table)
    if config.enabled("special_chars"):
        text = _SPECIAL.sub(" ", text)
    if config.enabled("transliterate"):
        text = transliterate(text, config.translit_table)
        text = _NON_OUTPUT.sub("", text) if config.enabled("special_chars") else text
    return _WHITESPACE.sub(" ", text).strip()


_DEFAULT = None


def _default() -> PreprocessConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = default_config()
    return _DEFAULT
