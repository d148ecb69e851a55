"""Shared domain types, the product taxonomy, and text normalization.

Everything here is pure and stateless; the rest of the toolkit builds on
these primitives.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum

# The fixed 15-category product taxonomy. Values are canonical: lowercase,
# single internal spaces, no punctuation.
TAXONOMY: tuple[str, ...] = (
    "clothing",
    "accessories",
    "home and living",
    "weddings",
    "art and collectibles",
    "craft supplies and tools",
    "jewelry",
    "paper and party supplies",
    "toys and games",
    "electronics and accessories",
    "books movies and music",
    "bath and beauty",
    "bags and purses",
    "shoes",
    "pet supplies",
)

_TAXONOMY_SET = frozenset(TAXONOMY)

# Labels as word tuples, longest phrases first, for longest-match extraction.
_TAXONOMY_WORDS = sorted(
    ((tuple(label.split()), label) for label in TAXONOMY),
    key=lambda item: (-len(item[0]), -len(item[1])),
)


class TaskKind(str, Enum):
    """The five instruction task families."""

    ADS_GENERATION = "ads_generation"
    TITLE_REWRITING = "title_rewriting"
    PRODUCT_CLASSIFICATION = "product_classification"
    INTENT_SPECULATION = "intent_speculation"
    GENERAL_QA = "general_qa"


class ObjectFeature(str, Enum):
    """Feature slots contributed by sellers (S), customers (C0/C1), and the
    platform (P0/P1)."""

    S = "S"
    C0 = "C0"
    C1 = "C1"
    P0 = "P0"
    P1 = "P1"


# Which object features each task interleaves. Fixed by design.
TASK_FEATURES: dict[TaskKind, frozenset[ObjectFeature]] = {
    TaskKind.ADS_GENERATION: frozenset({ObjectFeature.S}),
    TaskKind.TITLE_REWRITING: frozenset({ObjectFeature.S, ObjectFeature.C0}),
    TaskKind.PRODUCT_CLASSIFICATION: frozenset({ObjectFeature.S, ObjectFeature.P0}),
    TaskKind.INTENT_SPECULATION: frozenset({ObjectFeature.C1, ObjectFeature.P0}),
    TaskKind.GENERAL_QA: frozenset({ObjectFeature.P1}),
}


class Action(str, Enum):
    """Customer interaction outcome attached to a product row."""

    NO_ACTION = "no_action"
    CLICK = "click"
    CART_ADD = "cart_add"
    PURCHASE = "purchase"


@dataclass(frozen=True)
class ProductRecord:
    """One e-commerce interaction row."""

    id: str
    title: str
    taxonomy: str
    action: Action
    description: str | None = None
    query: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be nonempty")
        if not self.title:
            raise ValueError(f"record {self.id!r}: title must be nonempty")
        if self.taxonomy not in _TAXONOMY_SET:
            raise ValueError(f"record {self.id!r}: invalid taxonomy {self.taxonomy!r}")


def is_taxonomy_label(value: str) -> bool:
    return value in _TAXONOMY_SET


# Unicode general categories stripped by clean_text: symbols (So, Sk) cover
# emoji and modifier marks, C* covers control/format/private-use/surrogates.
_STRIP_CATEGORIES = frozenset({"So", "Sk", "Cc", "Cf", "Co", "Cs"})


def clean_text(raw: str) -> str:
    """Strip emoji/control/format characters and normalize whitespace.

    Characters in the stripped categories act as separators (they are
    replaced by a space, not deleted), so "a\\u200bb" becomes "a b" rather
    than "ab". Whitespace runs collapse to single spaces; the result is
    stripped. Idempotent.
    """
    out = []
    for ch in raw:
        if unicodedata.category(ch) in _STRIP_CATEGORIES:
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, then peel leading/trailing punctuation
    into their own tokens.

    Internal punctuation (hyphens, apostrophes) stays attached, so
    "Boho-style bag!" -> ["boho-style", "bag", "!"].
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        lead: list[str] = []
        trail: list[str] = []
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            lead.append(chunk[start])
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            trail.append(chunk[end - 1])
            end -= 1
        tokens.extend(lead)
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(reversed(trail))
    return tokens


def normalize_label(free_text: str) -> str | None:
    """Resolve a free-form model answer to a taxonomy label.

    Lowercases, maps "&" to "and", strips punctuation, and returns the
    longest taxonomy phrase occurring as a contiguous word run. Returns
    None (unmapped) when no label phrase occurs; unmapped never matches a
    gold label downstream.
    """
    cleaned = clean_text(free_text).lower().replace("&", " and ")
    words = []
    for word in cleaned.split():
        stripped = "".join(c for c in word if not _is_punct(c))
        if stripped:
            words.append(stripped)
    for phrase, label in _TAXONOMY_WORDS:
        n = len(phrase)
        if n > len(words):
            continue
        for i in range(len(words) - n + 1):
            if tuple(words[i : i + n]) == phrase:
                return label
    return None
