"""Deterministic verb handling: tokenization, lemmatization, and extraction.

A statistical tagger is deliberately avoided. Reward scoring only needs
lemma-level equivalence ("closes" ~ "closed"), which a fixed irregular-verb
table plus ordered suffix rules provides reproducibly, with no model download
and no run-to-run drift.

The lexicon ships as a plain-text file: one base-form lemma per line, irregular
inflections as ``form<TAB>lemma`` lines. Pass a custom path through
:class:`VerbLexicon.load` or the ``TVGLAB_LEXICON`` environment variable.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")

_VOWELS = set("aeiou")

# Tokens that mark the following word as a non-verb ("the door" never yields a verb).
_DETERMINERS = frozenset(
    "a an the this that these those his her its my your our their each every some any no".split()
)


def tokenize(sentence: str) -> list[str]:
    """Lowercased word tokens in order; punctuation and case are dropped."""
    return _TOKEN_RE.findall(sentence.lower())


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class VerbLexicon:
    """Immutable base-form stem set plus irregular form -> lemma table."""

    stems: frozenset[str]
    irregular: dict[str, str]

    @staticmethod
    def load(path: str | Path) -> "VerbLexicon":
        stems: set[str] = set()
        irregular: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as fp:
            for line_no, line in enumerate(fp, start=1):
                entry = line.strip()
                if not entry or entry.startswith("#"):
                    continue
                if "\t" in entry:
                    form, _, lemma = entry.partition("\t")
                    form, lemma = form.strip(), lemma.strip()
                    if not form or not lemma:
                        raise LexiconError(f"line {line_no}: malformed irregular entry")
                    irregular[form] = lemma
                else:
                    stems.add(entry)
        return VerbLexicon(stems=frozenset(stems), irregular=irregular)

    def __contains__(self, lemma: str) -> bool:
        return lemma in self.stems


@lru_cache(maxsize=1)
def default_lexicon() -> VerbLexicon:
    override = os.environ.get("TVGLAB_LEXICON")
    if override:
        return VerbLexicon.load(override)
    with resources.as_file(resources.files("tvglab").joinpath("data/verb_lexicon.txt")) as path:
        return VerbLexicon.load(path)


def set_default_lexicon_path(path: str | Path | None) -> None:
    """Point every implicit lexicon lookup at ``path`` (None restores the
    bundled file). Takes effect for lookups after the call."""
    if path is None:
        os.environ.pop("TVGLAB_LEXICON", None)
    else:
        os.environ["TVGLAB_LEXICON"] = str(path)
    default_lexicon.cache_clear()


def _is_doubled_consonant(stem: str) -> bool:
    return len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS


def _candidates(token: str) -> list[str]:
    """Ordered stem candidates for one suffix pass.

    Rule order: -ies, -es after sibilant/o, -s, -ied, doubled-consonant -ed,
    -ed with silent-e restore, plain -ed, then the same three for -ing. The
    silent-e restore is tried before the plain strip because genuine
    short-vowel stems double their final consonant ("hopped"), so an
    un-doubled form ("hoped") points at an e-final stem.
    """
    out: list[str] = []
    if token.endswith("ies") and len(token) > 4:
        out.append(token[:-3] + "y")
    if token.endswith("es") and len(token) > 3:
        stem = token[:-2]
        if stem.endswith(("s", "x", "z", "ch", "sh", "o")):
            out.append(stem)
    if token.endswith("s") and not token.endswith("ss") and len(token) > 2:
        out.append(token[:-1])
    if token.endswith("ied") and len(token) > 4:
        out.append(token[:-3] + "y")
    for suffix in ("ed", "ing"):
        if token.endswith(suffix) and len(token) > len(suffix) + 1:
            stem = token[: -len(suffix)]
            if _is_doubled_consonant(stem):
                out.append(stem[:-1])
            if not stem.endswith("e"):
                out.append(stem + "e")
            out.append(stem)
    return out


def lemmatize_verb(token: str, lexicon: VerbLexicon | None = None) -> str:
    """Base form of a verb token; unknown forms pass through unchanged.

    Resolution order: irregular table, known base form, then suffix rules.
    A stripped candidate counts only when the lexicon confirms the stem, so
    junk like "clos" (from "closes") never escapes; a token no confirmed rule
    touches is its own lemma.
    """
    lexicon = lexicon or default_lexicon()
    token = token.lower()
    if token in lexicon.irregular:
        return lexicon.irregular[token]
    if token in lexicon.stems:
        return token
    for candidate in _candidates(token):
        if candidate in lexicon.irregular:
            return lexicon.irregular[candidate]
        if candidate in lexicon.stems:
            return candidate
    return token


def is_variant(a: str, b: str, lexicon: VerbLexicon | None = None) -> bool:
    """True iff the two tokens share a lemma (tense/person/number equivalence)."""
    lexicon = lexicon or default_lexicon()
    return lemmatize_verb(a, lexicon) == lemmatize_verb(b, lexicon)


@dataclass(frozen=True)
class VerbHit:
    surface: str
    lemma: str
    token_index: int


def extract_verbs(sentence: str, lexicon: VerbLexicon | None = None) -> list[VerbHit]:
    """All tokens whose lemma is a known verb stem, in sentence order.

    A token directly preceded by a determiner is treated as a noun and skipped,
    which keeps homographs like "the turn" or "a walk" out of the verb set.
    """
    lexicon = lexicon or default_lexicon()
    hits = []
    tokens = tokenize(sentence)
    for i, token in enumerate(tokens):
        if i > 0 and tokens[i - 1] in _DETERMINERS:
            continue
        lemma = lemmatize_verb(token, lexicon)
        if lemma in lexicon.stems:
            hits.append(VerbHit(surface=token, lemma=lemma, token_index=i))
    return hits


def verb_lemma_set(sentence: str, lexicon: VerbLexicon | None = None) -> frozenset[str]:
    return frozenset(hit.lemma for hit in extract_verbs(sentence, lexicon))
