"""Teacher-model expansion of the seed set.

Three strategies: instruction rewriting (all tasks), response generation and
response rewriting (generative tasks only; classification-style outputs are
fixed labels and must not change). Backend calls run with bounded
concurrency, but output assembly is deterministic: seed order, then strategy
order, then variant index.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import TaskKind
from .formulate import (
    EXPANDED_ORIGIN,
    GENERATIVE_TASKS,
    INSTRUCTION_REWRITE,
    LABEL_TASKS,
    RESPONSE_GENERATION,
    RESPONSE_REWRITE,
    InstructionPair,
    Provenance,
)
from .modelio import Backend, BackendError, BackendRequest, COMPLETE, stable_hash

INSTRUCTION_REWRITE_PROMPT = (
    "Rewrite the following instruction while maintaining semantic consistency:"
)
RESPONSE_REWRITE_PROMPT = (
    "Rewrite the following generated response to diversify its expression:"
)

_STRATEGY_TAGS = {
    INSTRUCTION_REWRITE: "ir",
    RESPONSE_GENERATION: "rg",
    RESPONSE_REWRITE: "rr",
}


class ExpandError(Exception):
    pass


class EmptyGeneration(ExpandError):
    pass


class AllCallsFailed(ExpandError):
    pass


@dataclass(frozen=True)
class ExpansionPlan:
    """Variant counts per strategy plus the tasks restricted to
    instruction-only rewriting."""

    instruction_rewrites: int = 4
    response_generations: int = 1
    response_rewrites: int = 1
    tasks_instruction_only: frozenset[TaskKind] = LABEL_TASKS
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for n in (self.instruction_rewrites, self.response_generations, self.response_rewrites):
            if n < 0:
                raise ValueError("variant counts must be >= 0")
        if not self.tasks_instruction_only <= LABEL_TASKS:
            raise ValueError("only classification-style tasks may be instruction-only")


@dataclass(frozen=True)
class ExpansionFailure:
    seed_id: str
    strategy: str
    index: int
    reason: str


@dataclass
class ExpansionResult:
    pairs: list[InstructionPair]
    failures: list[ExpansionFailure] = field(default_factory=list)


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.7
    max_tokens: int = 256


def _variant_seed(rng_seed: int, seed_id: str, strategy: str, index: int) -> int:
    return stable_hash(rng_seed, seed_id, strategy, index) % (2**31)


def _call(
    backend: Backend,
    prompt: str,
    *,
    model: str | None,
    decoding: Decoding,
    seed: int,
) -> str:
    request = BackendRequest(
        kind=COMPLETE,
        text=prompt,
        model=model or backend.default_model(),
        temperature=decoding.temperature,
        max_tokens=decoding.max_tokens,
        seed=seed,
    )
    text = backend.complete(request)
    if not text:
        raise EmptyGeneration("teacher returned empty text after cleaning")
    return text


def rewrite_instruction(
    backend: Backend,
    pair: InstructionPair,
    n_variants: int,
    *,
    rng_seed: int = 0,
    decoding: Decoding = Decoding(),
    model: str | None = None,
) -> tuple[list[InstructionPair], list[ExpansionFailure]]:
    """Ask the teacher for instruction paraphrases; input/output unchanged.

    Partial success is allowed: failures are collected per variant.
    """
    prompt = f"{INSTRUCTION_REWRITE_PROMPT}\n{pair.instruction}"
    teacher = model or backend.default_model()
    variants: list[InstructionPair] = []
    failures: list[ExpansionFailure] = []
    for j in range(n_variants):
        seed = _variant_seed(rng_seed, pair.id, INSTRUCTION_REWRITE, j)
        try:
            text = _call(backend, prompt, model=teacher, decoding=decoding, seed=seed)
            variants.append(
                InstructionPair(
                    id=f"{pair.id}-ir{j}",
                    task=pair.task,
                    instruction=text,
                    input=pair.input,
                    output=pair.output,
                    provenance=Provenance(
                        EXPANDED_ORIGIN, INSTRUCTION_REWRITE, pair.id, teacher
                    ),
                )
            )
        except (BackendError, EmptyGeneration) as exc:
            failures.append(ExpansionFailure(pair.id, INSTRUCTION_REWRITE, j, str(exc)))
    return variants, failures


def generate_response(
    backend: Backend,
    instruction: str,
    seed_input: str,
    *,
    task: TaskKind,
    seed: int = 0,
    decoding: Decoding = Decoding(),
    model: str | None = None,
) -> str:
    """Have the teacher produce a fresh response for a generative-task
    instruction and its fixed input features."""
    if task not in GENERATIVE_TASKS:
        raise ValueError(f"response generation is restricted to generative tasks, got {task.value}")
    prompt = f"{instruction}\n{seed_input}" if seed_input else instruction
    return _call(backend, prompt, model=model, decoding=decoding, seed=seed)


def rewrite_response(
    backend: Backend,
    response: str,
    *,
    seed: int = 0,
    decoding: Decoding = Decoding(),
    model: str | None = None,
) -> str:
    """Paraphrase an existing response; the paired instruction stays fixed."""
    if not response:
        raise ValueError("response must be nonempty")
    prompt = f"{RESPONSE_REWRITE_PROMPT}\n{response}"
    return _call(backend, prompt, model=model, decoding=decoding, seed=seed)


def expand_corpus(
    backend: Backend,
    seeds: list[InstructionPair],
    plan: ExpansionPlan,
    *,
    concurrency: int = 4,
    decoding: Decoding = Decoding(),
    model: str | None = None,
) -> ExpansionResult:
    """Grow the seed set per the plan, returning seeds plus variants.

    Instruction rewrites run first (response generation reuses the j-th
    rewritten instruction when available), then response strategies; each
    phase fans out over the backend with bounded concurrency. Raises
    AllCallsFailed only when every teacher call failed.
    """
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    teacher = model or backend.default_model()

    rewrites: dict[str, list[InstructionPair]] = {}
    failures: list[ExpansionFailure] = []
    total_calls = 0

    def run_rewrites(pair: InstructionPair):
        return rewrite_instruction(
            backend,
            pair,
            plan.instruction_rewrites,
            rng_seed=plan.rng_seed,
            decoding=decoding,
            model=teacher,
        )

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for pair, (variants, fails) in zip(seeds, pool.map(run_rewrites, seeds)):
            rewrites[pair.id] = variants
            failures.extend(fails)
            total_calls += plan.instruction_rewrites

    def run_response_strategies(pair: InstructionPair):
        generated: list[tuple[int, str] | ExpansionFailure] = []
        rewritten: list[tuple[int, str] | ExpansionFailure] = []
        if pair.task in plan.tasks_instruction_only:
            return generated, rewritten
        ir_variants = rewrites[pair.id]
        for j in range(plan.response_generations):
            instruction = (
                ir_variants[j].instruction if j < len(ir_variants) else pair.instruction
            )
            seed = _variant_seed(plan.rng_seed, pair.id, RESPONSE_GENERATION, j)
            try:
                text = generate_response(
                    backend,
                    instruction,
                    pair.input,
                    task=pair.task,
                    seed=seed,
                    decoding=decoding,
                    model=teacher,
                )
                generated.append((j, text))
            except (BackendError, EmptyGeneration) as exc:
                generated.append(ExpansionFailure(pair.id, RESPONSE_GENERATION, j, str(exc)))
        for j in range(plan.response_rewrites):
            seed = _variant_seed(plan.rng_seed, pair.id, RESPONSE_REWRITE, j)
            try:
                text = rewrite_response(
                    backend, pair.output, seed=seed, decoding=decoding, model=teacher
                )
                rewritten.append((j, text))
            except (BackendError, EmptyGeneration) as exc:
                rewritten.append(ExpansionFailure(pair.id, RESPONSE_REWRITE, j, str(exc)))
        return generated, rewritten

    response_results: dict[str, tuple[list, list]] = {}
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for pair, result in zip(seeds, pool.map(run_response_strategies, seeds)):
            response_results[pair.id] = result
            if pair.task not in plan.tasks_instruction_only:
                total_calls += plan.response_generations + plan.response_rewrites

    pairs: list[InstructionPair] = []
    for pair in seeds:
        pairs.append(pair)
        ir_variants = rewrites[pair.id]
        pairs.extend(ir_variants)
        generated, rewritten = response_results[pair.id]
        for item in generated:
            if isinstance(item, ExpansionFailure):
                failures.append(item)
                continue
            j, text = item
            instruction = (
                ir_variants[j].instruction if j < len(ir_variants) else pair.instruction
            )
            pairs.append(
                InstructionPair(
                    id=f"{pair.id}-rg{j}",
                    task=pair.task,
                    instruction=instruction,
                    input=pair.input,
                    output=text,
                    provenance=Provenance(
                        EXPANDED_ORIGIN, RESPONSE_GENERATION, pair.id, teacher
                    ),
                )
            )
        for item in rewritten:
            if isinstance(item, ExpansionFailure):
                failures.append(item)
                continue
            j, text = item
            pairs.append(
                InstructionPair(
                    id=f"{pair.id}-rr{j}",
                    task=pair.task,
                    instruction=pair.instruction,
                    input=pair.input,
                    output=text,
                    provenance=Provenance(
                        EXPANDED_ORIGIN, RESPONSE_REWRITE, pair.id, teacher
                    ),
                )
            )

    if total_calls > 0 and len(failures) == total_calls:
        raise AllCallsFailed(f"all {total_calls} teacher calls failed")
    return ExpansionResult(pairs=pairs, failures=failures)
