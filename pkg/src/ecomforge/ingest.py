"""Loading, screening, and splitting of raw interaction data.

Input is JSONL, one object per line, keys: id, title, description, taxonomy,
query, action. Bad lines are collected as diagnostics instead of aborting the
load; a sidecar ``<input>.errors.jsonl`` is written when any line fails.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .core import Action, ProductRecord, clean_text, is_taxonomy_label

_ACTIONS = {a.value: a for a in Action}


class IngestError(Exception):
    pass


class FileUnreadable(IngestError):
    pass


class EmptyInput(IngestError):
    pass


@dataclass(frozen=True)
class MalformedLine:
    """Per-line load diagnostic; the record is skipped, the load continues."""

    line: int
    reason: str


@dataclass(frozen=True)
class DatasetSplit:
    train: list[ProductRecord]
    test: list[ProductRecord]
    seed: int
    ratio: float


def _optional_text(value) -> str | None:
    if value is None:
        return None
    return clean_text(str(value)) or None


def _parse_line(obj: dict) -> ProductRecord:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    rec_id = obj.get("id")
    if not isinstance(rec_id, str) or not rec_id:
        raise ValueError("missing or empty id")
    title = clean_text(str(obj.get("title") or ""))
    if not title:
        raise ValueError("empty title after cleaning")
    taxonomy = clean_text(str(obj.get("taxonomy") or "")).lower()
    if not is_taxonomy_label(taxonomy):
        raise ValueError(f"invalid taxonomy {obj.get('taxonomy')!r}")
    action_raw = obj.get("action")
    if action_raw not in _ACTIONS:
        raise ValueError(f"invalid action {action_raw!r}")
    return ProductRecord(
        id=rec_id,
        title=title,
        taxonomy=taxonomy,
        action=_ACTIONS[action_raw],
        description=_optional_text(obj.get("description")),
        query=_optional_text(obj.get("query")),
    )


def load_interactions(
    path: str | Path, *, write_sidecar: bool = True
) -> tuple[list[ProductRecord], list[MalformedLine]]:
    """Load interaction rows, cleaning text fields and rejecting bad lines.

    Returns (records, diagnostics) with input ordering preserved. Raises
    FileUnreadable if the file cannot be read, IngestError if every line
    fails.
    """
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc

    records: list[ProductRecord] = []
    diagnostics: list[MalformedLine] = []
    for line_no, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(_parse_line(json.loads(line)))
        except (json.JSONDecodeError, ValueError) as exc:
            diagnostics.append(MalformedLine(line=line_no, reason=str(exc)))

    if diagnostics and not records:
        raise IngestError(f"all {len(diagnostics)} lines of {path} failed to parse")
    if diagnostics and write_sidecar:
        write_error_sidecar(diagnostics, Path(str(path) + ".errors.jsonl"))
    return records, diagnostics


def write_error_sidecar(diagnostics: list[MalformedLine], path: str | Path) -> None:
    lines = [
        json.dumps({"line": d.line, "reason": d.reason}, ensure_ascii=False)
        for d in diagnostics
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def filter_by_action(records: list[ProductRecord]) -> list[ProductRecord]:
    """Drop rows labelled no_action (no purchase interest); order preserved."""
    return [r for r in records if r.action is not Action.NO_ACTION]


def shuffle_key(seed: int, item_id: str) -> str:
    """Stable shuffle key: hex digest of ``seed|id``.

    Hash-based ordering keeps splits and samples reproducible across
    platforms and processes without relying on RNG internals.
    """
    return hashlib.sha256(f"{seed}|{item_id}".encode("utf-8")).hexdigest()


def split_generic(items: list, ratio: float, seed: int, id_of) -> tuple[list, list]:
    """Deterministic two-way split of any id-carrying items: shuffle by
    seeded hash, first ceil(ratio*n) to the first side."""
    if not items:
        raise EmptyInput("cannot split an empty list")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    ids = [id_of(item) for item in items]
    if len(set(ids)) != len(ids):
        raise IngestError("duplicate ids; train/test disjointness would break")
    shuffled = sorted(items, key=lambda item: shuffle_key(seed, id_of(item)))
    n_first = math.ceil(ratio * len(items))
    return shuffled[:n_first], shuffled[n_first:]


def split(records: list[ProductRecord], ratio: float, seed: int) -> DatasetSplit:
    """Deterministic train/test split on record ids."""
    train, test = split_generic(records, ratio, seed, lambda r: r.id)
    return DatasetSplit(train=train, test=test, seed=seed, ratio=ratio)
