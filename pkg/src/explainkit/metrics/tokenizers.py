"""Tokenization rules for the generation metrics.

``tokenize_13a`` reproduces the mteval-v13a / WMT rule used by the standard
corpus BLEU scorers: entity unescaping, then splitting punctuation off words
unless it sits between digits. BLEU scores computed here are only comparable
with published numbers because this rule matches the reference scorer's.
"""

from __future__ import annotations

import re

_ENTITY_REPLACEMENTS = (
    ("<skipped>", ""),
    ("-\n", ""),
    ("\n", " "),
    ("&quot;", '"'),
    ("&amp;", "&"),
    ("&lt;", "<"),
    ("&gt;", ">"),
)

# Symbols and punctuation always split; periods/commas split only when not
# between digits; dashes split after a digit.
_PUNCT_SPLIT = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_PERIOD_COMMA_AFTER = re.compile(r"([^0-9])([\.,])")
_PERIOD_COMMA_BEFORE = re.compile(r"([\.,])([^0-9])")
_DIGIT_DASH = re.compile(r"([0-9])(-)")
_MANY_SPACES = re.compile(r"\s+")


def tokenize_13a(line: str) -> list[str]:
    norm = line
    for old, new in _ENTITY_REPLACEMENTS:
        norm = norm.replace(old, new)
    norm = f" {norm} "
    norm = _PUNCT_SPLIT.sub(r" \1 ", norm)
    norm = _PERIOD_COMMA_AFTER.sub(r"\1 \2 ", norm)
    norm = _PERIOD_COMMA_BEFORE.sub(r" \1 \2", norm)
    norm = _DIGIT_DASH.sub(r"\1 \2 ", norm)
    norm = _MANY_SPACES.sub(" ", norm).strip()
    return norm.split()


def whitespace_tokenize(line: str) -> list[str]:
    return line.split()
