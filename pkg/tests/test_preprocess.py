import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subword_attention.preprocess import (
    PreprocessConfig,
    bundled_tables_dir,
    default_config,
    expand_contractions,
    load_table,
    preprocess,
    replace_emoji,
    strip_social_tokens,
    transliterate,
)

CONFIG = default_config()
CONTRACTIONS = CONFIG.contraction_table
TRANSLIT = CONFIG.translit_table


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("@xyz Don't!", "username do not"),
        ("hello world", "hello world"),
        ("RT @u http://a.b #Nation", "rt username link nation"),
        ("@username K*tiya! Mujhe mat sikha: /", "username k tiya mujhe mat sikha"),
        ("Mausam accha hai 😂", "mausam accha hai laughing tears"),
        ("Yeh देश hamara", "yeh desha hamara"),
        ("", ""),
    ],
)
def test_pipeline_examples(raw, expected):
    assert preprocess(raw, CONFIG) == expected


@pytest.mark.parametrize(
    "raw, expected",
    [("can't", "can not"), ("cant", "cant"), ("don't you can't", "do not you can not"), ("don’t", "do not")],
)
def test_contractions(raw, expected):
    assert expand_contractions(raw, CONTRACTIONS) == expected


def test_contraction_not_inside_word():
    assert expand_contractions("xcan't", {"can't": "can not"}) == "xcan't"


@pytest.mark.parametrize(
    "raw, expected",
    [("@a @b", "username username"), ("<b>hi</b> www.x.com", "hi link")],
)
def test_social_tokens(raw, expected):
    assert " ".join(strip_social_tokens(raw).split()) == expected


def test_hashtag_lowercased_by_pipeline():
    assert strip_social_tokens("#JaiHind") == "JaiHind"
    assert preprocess("#JaiHind", CONFIG) == "jaihind"


def test_html_entities():
    assert preprocess("a &amp; b &lt;3", CONFIG) == "a b 3"


@pytest.mark.parametrize(
    "raw, expected",
    [("नमस्ते", "namaste"), ("abc", "abc"), ("क", "ka"), ("क्", "k"), ("पागल", "paagala"), ("१२३", "123")],
)
def test_transliterate(raw, expected):
    assert transliterate(raw, TRANSLIT) == expected


def test_nukta_consonant():
    # NFC keeps nukta forms decomposed, so the table has two-codepoint keys
    assert preprocess("ज़रा", CONFIG) == "zaraa"


def test_emoji_variation_selector_and_unknown():
    assert replace_emoji("❤️", CONFIG).strip() == replace_emoji("❤", CONFIG).strip()
    assert preprocess("ok \U0001faf6", CONFIG) == "ok"


def test_step_toggles():
    cfg = CONFIG.with_toggles(social=False)
    assert "xyz" in preprocess("@xyz hi", cfg)
    with pytest.raises(ValueError):
        CONFIG.with_toggles(bogus=True)


def test_tables_are_editable(tmp_path):
    for name in ("emoji.tsv", "contractions.tsv", "translit.tsv"):
        (tmp_path / name).write_text((bundled_tables_dir() / name).read_text(encoding="utf-8"), encoding="utf-8")
    with open(tmp_path / "contractions.tsv", "a", encoding="utf-8") as fh:
        fh.write("gonna\tgoing to\n")
    cfg = PreprocessConfig.from_dir(tmp_path)
    assert preprocess("gonna win", cfg) == "going to win"


def test_missing_tables_dir(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere"):
        PreprocessConfig.from_dir(tmp_path / "nowhere")


def test_bundled_tables_parse():
    assert len(load_table(bundled_tables_dir() / "emoji.tsv")) >= 50
    assert CONTRACTIONS["won't"] == "will not"


mixed_text = st.text(
    alphabet=st.one_of(
        st.characters(min_codepoint=0x20, max_codepoint=0x7E),
        st.characters(min_codepoint=0x0900, max_codepoint=0x097F),
        st.sampled_from(["😂", "😡", "❤", "\ufe0f", "‍", "’", "\t", "\n", "é", "ß"]),
    ),
    max_size=60,
)


@settings(max_examples=300, deadline=None)
@given(mixed_text)
def test_output_alphabet(text):
    out = preprocess(text, CONFIG)
    assert re.fullmatch(r"([a-z0-9]+( [a-z0-9]+)*)?", out)


@settings(max_examples=300, deadline=None)
@given(mixed_text)
def test_idempotent(text):
    once = preprocess(text, CONFIG)
    assert preprocess(once, CONFIG) == once


def test_preprocess_samples_drops_empty():
    from subword_attention.corpus import LabeledSample
    from subword_attention.pipeline import preprocess_samples

    out = preprocess_samples([LabeledSample("Hi @x", 0), LabeledSample("!!! ??", 1)], CONFIG)
    assert out == [LabeledSample("hi username", 0)]
