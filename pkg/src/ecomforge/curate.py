"""Deduplication, task balancing, canonical JSONL emission, and held-out
prompt packs.

Near-duplicate detection uses token 3-gram Jaccard similarity over the
normalized instruction+input+output text; the emitted JSONL is canonical
(sorted keys, compact separators, LF line ends) so content hashes are
reproducible.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .core import TaskKind, tokenize
from .formulate import InstructionPair, Provenance
from .ingest import shuffle_key

NGRAM_ORDER = 3


class CurateError(Exception):
    pass


class InsufficientPairs(CurateError):
    def __init__(self, task: TaskKind, have: int, need: int):
        super().__init__(f"{task.value}: {have} pairs after dedup, need {need}")
        self.task = task
        self.have = have
        self.need = need


class EmptyInputs(CurateError):
    pass


@dataclass(frozen=True)
class CurationConfig:
    near_dup_threshold: float = 0.9
    target_total: int = 1200
    rng_seed: int = 0
    per_task: dict[TaskKind, int] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.near_dup_threshold <= 1.0:
            raise ValueError("near_dup_threshold must be in [0, 1]")
        if self.per_task is None and self.target_total % len(TaskKind) != 0:
            raise ValueError(
                f"target_total must be divisible by {len(TaskKind)} unless per-task "
                "targets are given"
            )

    def targets(self) -> dict[TaskKind, int]:
        if self.per_task is not None:
            return dict(self.per_task)
        share = self.target_total // len(TaskKind)
        return {task: share for task in TaskKind}


@dataclass(frozen=True)
class Manifest:
    count: int
    per_task: dict[str, int]
    sha256: str

    def to_json(self) -> dict:
        return {"count": self.count, "per_task": self.per_task, "sha256": self.sha256}


def pair_tokens(pair: InstructionPair) -> tuple[str, ...]:
    """Normalized token stream of instruction+input+output, the dedup basis."""
    return tuple(tokenize(f"{pair.instruction} {pair.input} {pair.output}"))


def ngram_set(tokens: tuple[str, ...], n: int = NGRAM_ORDER) -> frozenset[tuple[str, ...]]:
    """Token n-grams; sequences shorter than n contribute themselves whole."""
    if not tokens:
        return frozenset()
    if len(tokens) < n:
        return frozenset({tokens})
    return frozenset(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union


def dedup(pairs: list[InstructionPair], threshold: float = 0.9) -> list[InstructionPair]:
    """Remove exact duplicates, then near-duplicates at or above the Jaccard
    threshold, keeping earliest occurrences. Stable order; idempotent."""
    if not pairs:
        raise ValueError("pairs must be nonempty")
    survivors: list[InstructionPair] = []
    seen_exact: set[tuple[str, ...]] = set()
    kept_grams: list[frozenset] = []
    for pair in pairs:
        tokens = pair_tokens(pair)
        if tokens in seen_exact:
            continue
        grams = ngram_set(tokens)
        size = len(grams)
        duplicate = False
        for other in kept_grams:
            # |a∩b|/|a∪b| can reach t only if min/max set sizes do.
            lo, hi = min(size, len(other)), max(size, len(other))
            if hi and lo / hi < threshold:
                continue
            if jaccard(grams, other) >= threshold:
                duplicate = True
                break
        if duplicate:
            continue
        seen_exact.add(tokens)
        kept_grams.append(grams)
        survivors.append(pair)
    return survivors


def balance(pairs: list[InstructionPair], config: CurationConfig) -> list[InstructionPair]:
    """Deterministic per-task sample hitting the configured targets exactly.

    Output is grouped in task order; within a task, pairs keep their input
    order. Raises InsufficientPairs naming the first short task.
    """
    targets = config.targets()
    by_task: dict[TaskKind, list[InstructionPair]] = {task: [] for task in TaskKind}
    for pair in pairs:
        by_task[pair.task].append(pair)
    for task in TaskKind:
        need = targets.get(task, 0)
        if len(by_task[task]) < need:
            raise InsufficientPairs(task, len(by_task[task]), need)
    out: list[InstructionPair] = []
    for task in TaskKind:
        need = targets.get(task, 0)
        pool = by_task[task]
        ranked = sorted(
            pool, key=lambda p: shuffle_key(config.rng_seed, f"{task.value}|{p.id}")
        )
        chosen = {p.id for p in ranked[:need]}
        out.extend(p for p in pool if p.id in chosen)
    return out


def _pair_to_obj(pair: InstructionPair) -> dict:
    return {
        "id": pair.id,
        "task": pair.task.value,
        "instruction": pair.instruction,
        "input": pair.input,
        "output": pair.output,
        "provenance": {
            "origin": pair.provenance.origin,
            "strategy": pair.provenance.strategy,
            "seed_id": pair.provenance.seed_id,
            "teacher": pair.provenance.teacher,
        },
    }


def _pair_from_obj(obj: dict) -> InstructionPair:
    prov = obj["provenance"]
    return InstructionPair(
        id=obj["id"],
        task=TaskKind(obj["task"]),
        instruction=obj["instruction"],
        input=obj["input"],
        output=obj["output"],
        provenance=Provenance(
            origin=prov["origin"],
            strategy=prov.get("strategy"),
            seed_id=prov.get("seed_id"),
            teacher=prov.get("teacher"),
        ),
    )


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def emit_jsonl(pairs: list[InstructionPair], path: str | Path) -> Manifest:
    """Write canonical JSONL and return a manifest with per-task counts and
    the file's content hash. emit -> load -> emit is byte-identical."""
    path = Path(path)
    data = "".join(canonical_json(_pair_to_obj(p)) + "\n" for p in pairs).encode("utf-8")
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise CurateError(f"cannot write {path}: {exc}") from exc
    per_task = {task.value: 0 for task in TaskKind}
    for pair in pairs:
        per_task[pair.task.value] += 1
    return Manifest(
        count=len(pairs), per_task=per_task, sha256=hashlib.sha256(data).hexdigest()
    )


def load_jsonl(path: str | Path) -> list[InstructionPair]:
    path = Path(path)
    pairs = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            pairs.append(_pair_from_obj(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CurateError(f"{path}:{line_no}: bad instruction row ({exc})") from exc
    return pairs


# ---------------------------------------------------------------------------
# Held-out prompt packs

SCENARIO_ADS = "scenario_ads"
RECOMMENDATION = "recommendation"

SCENARIO_AD_TEMPLATE = "{scenario} is almost. Generate an ad for the following products: {products}."


@dataclass(frozen=True)
class HeldoutPrompt:
    id: str
    kind: str
    prompt: str


def and_join(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def build_heldout_packs(
    kind: str,
    *,
    scenarios: list[str] = (),
    product_sets: list[list[str]] = (),
    intents: list[str] = (),
) -> list[HeldoutPrompt]:
    """Zero-shot evaluation prompts, never turned into training pairs.

    scenario_ads crosses every scenario with every product set;
    recommendation wraps each free-form shopping intent as-is.
    """
    prompts: list[HeldoutPrompt] = []
    if kind == SCENARIO_ADS:
        if not scenarios or not product_sets or any(not ps for ps in product_sets):
            raise EmptyInputs("scenario_ads needs scenarios and nonempty product sets")
        i = 0
        for scenario in scenarios:
            for products in product_sets:
                text = SCENARIO_AD_TEMPLATE.format(
                    scenario=scenario, products=and_join(list(products))
                )
                prompts.append(HeldoutPrompt(f"heldout-{kind}-{i:04d}", kind, text))
                i += 1
    elif kind == RECOMMENDATION:
        if not intents:
            raise EmptyInputs("recommendation needs at least one intent")
        for i, intent in enumerate(intents):
            prompts.append(HeldoutPrompt(f"heldout-{kind}-{i:04d}", kind, intent))
    else:
        raise ValueError(f"unknown pack kind {kind!r}")
    return prompts


def emit_pack(prompts: list[HeldoutPrompt], path: str | Path) -> int:
    path = Path(path)
    data = "".join(
        canonical_json({"id": p.id, "kind": p.kind, "prompt": p.prompt}) + "\n"
        for p in prompts
    ).encode("utf-8")
    path.write_bytes(data)
    return len(prompts)
