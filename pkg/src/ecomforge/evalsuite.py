"""The 18-metric evaluation system and its geometric-mean aggregate.

Per task family: BLEU/ROUGE-L overlap scores for ads (against title and
description), title rewriting (against raw title and query) plus perplexity,
macro P/R/F1 for the two label tasks, and BLEU/ROUGE-L plus an embedding
similarity score for Q&A. Sentence-level metrics are averaged over samples.
Perplexity enters the aggregate as 1/ln(PPL) so that lower perplexity raises
the geometric mean like every other metric.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import TaskKind, normalize_label, tokenize
from .modelio import Backend


class EvalError(Exception):
    pass


class EmptyCandidate(EvalError):
    pass


class EmptyReference(EvalError):
    pass


class EmptySequence(EvalError):
    pass


class PositiveLogprob(EvalError):
    pass


class PplAtOrBelowOne(EvalError):
    pass


class LengthMismatch(EvalError):
    pass


class EmptyInput(EvalError):
    pass


class EmptySide(EvalError):
    pass


class DimensionMismatch(EvalError):
    pass


class NonPositiveValue(EvalError):
    def __init__(self, index: int, value: float):
        super().__init__(f"value at index {index} is not positive: {value}")
        self.index = index


class WrongArity(EvalError):
    pass


class DuplicateRating(EvalError):
    pass


BLEU_EPSILON = 1e-9
ROUGE_BETA = 1.2

# Report fields in table column order; PPL is reported raw and transformed
# only inside the aggregate.
METRIC_NAMES = (
    "BL_At", "RL_At", "BL_Ad", "RL_Ad",
    "BL_Tt", "RL_Tt", "BL_Tq", "RL_Tq", "PPL",
    "P_pt", "R_pt", "F1_pt",
    "P_qs", "R_qs", "F1_qs",
    "BL_qa", "RL_qa", "BE_qa",
)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: list[str], reference: list[str], epsilon: float = BLEU_EPSILON) -> float:
    """Sentence BLEU-4: uniform quarter weights, brevity penalty, and
    epsilon-smoothed zero counts. Scaled to 0-100."""
    if not candidate:
        raise EmptyCandidate("candidate token sequence is empty")
    if not reference:
        raise EmptyReference("reference token sequence is empty")
    log_sum = 0.0
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            log_sum += 0.25 * math.log(epsilon)
            continue
        ref_counts = _ngram_counts(reference, n)
        clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        p = clipped / total if clipped > 0 else epsilon / total
        log_sum += 0.25 * math.log(p)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100.0 * bp * math.exp(log_sum)


def _lcs_length(a: list[str], b: list[str]) -> int:
    # Iterative DP over two rows.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str], beta: float = ROUGE_BETA) -> float:
    """LCS F-score with recall-weighted beta, scaled to 0-100."""
    if not candidate:
        raise EmptyCandidate("candidate token sequence is empty")
    if not reference:
        raise EmptyReference("reference token sequence is empty")
    lcs = _lcs_length(candidate, reference)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    if precision + recall == 0:
        return 0.0
    b2 = beta * beta
    return 100.0 * (1 + b2) * precision * recall / (recall + b2 * precision)


def perplexity(token_logprobs: list[float]) -> float:
    """exp of the negative mean natural-log token probability."""
    if not token_logprobs:
        raise EmptySequence("no token logprobs")
    if any(lp > 0 for lp in token_logprobs):
        raise PositiveLogprob("logprobs must be <= 0")
    return math.exp(-sum(token_logprobs) / len(token_logprobs))


def ppl_transform(ppl: float) -> float:
    """Monotone inversion 1/ln(PPL): lower perplexity, higher score."""
    if ppl <= 1.0:
        raise PplAtOrBelowOne(f"transform undefined for PPL {ppl} <= 1")
    return 1.0 / math.log(ppl)


def macro_prf(
    predictions: list[str | None], gold: list[str]
) -> tuple[float, float, float]:
    """Macro-averaged precision/recall/F1 over labels occurring in gold.

    Unmapped predictions (None) never match; labels with no predicted
    positives score precision 0. Scaled to 0-100.
    """
    if not gold:
        raise EmptyInput("gold labels are empty")
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gold)} gold labels")
    labels = sorted(set(gold))
    precisions, recalls, f1s = [], [], []
    for label in labels:
        tp = sum(1 for p, g in zip(predictions, gold) if p == label and g == label)
        fp = sum(1 for p, g in zip(predictions, gold) if p == label and g != label)
        fn = sum(1 for p, g in zip(predictions, gold) if p != label and g == label)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    n = len(labels)
    return (
        100.0 * sum(precisions) / n,
        100.0 * sum(recalls) / n,
        100.0 * sum(f1s) / n,
    )


def bert_style_score(
    candidate_vectors: list[list[float]], reference_vectors: list[list[float]]
) -> tuple[float, float, float]:
    """Greedy cosine matching between token embeddings.

    Recall averages each reference token's best match among candidate tokens;
    precision is symmetric; F1 is their harmonic mean (zero unless both sides
    are positive). No baseline rescaling. Scaled to 0-100.
    """
    if not candidate_vectors or not reference_vectors:
        raise EmptySide("both sides need at least one token vector")
    cand = np.asarray(candidate_vectors, dtype=float)
    ref = np.asarray(reference_vectors, dtype=float)
    if cand.shape[1] != ref.shape[1]:
        raise DimensionMismatch(f"{cand.shape[1]} vs {ref.shape[1]} dimensions")
    cand_norm = np.linalg.norm(cand, axis=1, keepdims=True)
    ref_norm = np.linalg.norm(ref, axis=1, keepdims=True)
    # Zero vectors contribute zero similarity instead of NaN.
    cand_unit = np.divide(cand, cand_norm, out=np.zeros_like(cand), where=cand_norm > 0)
    ref_unit = np.divide(ref, ref_norm, out=np.zeros_like(ref), where=ref_norm > 0)
    sim = cand_unit @ ref_unit.T  # (n_cand, n_ref)
    precision = float(np.mean(np.max(sim, axis=1)))
    recall = float(np.mean(np.max(sim, axis=0)))
    f1 = 2 * precision * recall / (precision + recall) if precision > 0 and recall > 0 else 0.0
    return 100.0 * precision, 100.0 * recall, 100.0 * f1


def geometric_mean(values: list[float]) -> float:
    """exp of the mean log of exactly 18 positive metric values (the PPL slot
    must already hold its 1/ln transform)."""
    if len(values) != len(METRIC_NAMES):
        raise WrongArity(f"expected {len(METRIC_NAMES)} values, got {len(values)}")
    for i, v in enumerate(values):
        if v <= 0:
            raise NonPositiveValue(i, v)
    return math.exp(sum(math.log(v) for v in values) / len(values))


# ---------------------------------------------------------------------------
# Run-level evaluation


@dataclass(frozen=True)
class AdsSample:
    sample_id: str
    generation: str
    title: str
    description: str


@dataclass(frozen=True)
class RewriteSample:
    sample_id: str
    generation: str
    title: str
    query: str


@dataclass(frozen=True)
class LabelSample:
    sample_id: str
    generation: str
    gold: str


@dataclass(frozen=True)
class QASample:
    sample_id: str
    generation: str
    answer: str


@dataclass
class EvalData:
    ads: list[AdsSample] = field(default_factory=list)
    rewrites: list[RewriteSample] = field(default_factory=list)
    classification: list[LabelSample] = field(default_factory=list)
    intent: list[LabelSample] = field(default_factory=list)
    qa: list[QASample] = field(default_factory=list)


@dataclass
class MetricReport:
    """The 18 named metric values plus the aggregate; missing tasks leave
    their metrics (and the aggregate) unset."""

    values: dict[str, float | None]
    gm: float | None
    missing_tasks: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.missing_tasks)

    def to_json(self) -> dict:
        out: dict = {name: self.values.get(name) for name in METRIC_NAMES}
        out["GM"] = self.gm
        if self.missing_tasks:
            out["missing_tasks"] = self.missing_tasks
        return out


def gm_from_metrics(values: dict[str, float]) -> float:
    """Assemble the aggregate from a full named-metric dict, applying the
    perplexity transform in place of the raw PPL."""
    vector = [
        ppl_transform(values[name]) if name == "PPL" else values[name]
        for name in METRIC_NAMES
    ]
    return geometric_mean(vector)


def _mean(xs: list[float]) -> float:
    return sum(xs) / len(xs)


def evaluate_run(
    data: EvalData,
    backend: Backend,
    *,
    bleu_epsilon: float = BLEU_EPSILON,
    rouge_beta: float = ROUGE_BETA,
) -> MetricReport:
    """Compute the full report over aligned per-task samples.

    The backend supplies token logprobs (perplexity of rewritten titles) and
    token embeddings (Q&A similarity). Tasks with no samples are reported as
    missing and the aggregate is omitted.
    """
    values: dict[str, float | None] = {name: None for name in METRIC_NAMES}
    missing: list[str] = []

    def _bleu(g, r):
        return bleu(g, r, epsilon=bleu_epsilon)

    def _rouge(g, r):
        return rouge_l(g, r, beta=rouge_beta)

    if data.ads:
        gens = [tokenize(s.generation) for s in data.ads]
        titles = [tokenize(s.title) for s in data.ads]
        descs = [tokenize(s.description) for s in data.ads]
        values["BL_At"] = _mean([_bleu(g, t) for g, t in zip(gens, titles)])
        values["RL_At"] = _mean([_rouge(g, t) for g, t in zip(gens, titles)])
        values["BL_Ad"] = _mean([_bleu(g, d) for g, d in zip(gens, descs)])
        values["RL_Ad"] = _mean([_rouge(g, d) for g, d in zip(gens, descs)])
    else:
        missing.append(TaskKind.ADS_GENERATION.value)

    if data.rewrites:
        gens = [tokenize(s.generation) for s in data.rewrites]
        titles = [tokenize(s.title) for s in data.rewrites]
        queries = [tokenize(s.query) for s in data.rewrites]
        values["BL_Tt"] = _mean([_bleu(g, t) for g, t in zip(gens, titles)])
        values["RL_Tt"] = _mean([_rouge(g, t) for g, t in zip(gens, titles)])
        values["BL_Tq"] = _mean([_bleu(g, q) for g, q in zip(gens, queries)])
        values["RL_Tq"] = _mean([_rouge(g, q) for g, q in zip(gens, queries)])
        values["PPL"] = _mean(
            [perplexity(backend.score_logprobs(s.generation)) for s in data.rewrites]
        )
    else:
        missing.append(TaskKind.TITLE_REWRITING.value)

    for samples, keys, task in (
        (data.classification, ("P_pt", "R_pt", "F1_pt"), TaskKind.PRODUCT_CLASSIFICATION),
        (data.intent, ("P_qs", "R_qs", "F1_qs"), TaskKind.INTENT_SPECULATION),
    ):
        if samples:
            predictions = [normalize_label(s.generation) for s in samples]
            gold = [s.gold for s in samples]
            p, r, f1 = macro_prf(predictions, gold)
            values[keys[0]], values[keys[1]], values[keys[2]] = p, r, f1
        else:
            missing.append(task.value)

    if data.qa:
        gens = [tokenize(s.generation) for s in data.qa]
        answers = [tokenize(s.answer) for s in data.qa]
        values["BL_qa"] = _mean([_bleu(g, a) for g, a in zip(gens, answers)])
        values["RL_qa"] = _mean([_rouge(g, a) for g, a in zip(gens, answers)])
        f1s = []
        for s in data.qa:
            cand_vectors = backend.embed_tokens(s.generation)
            ref_vectors = backend.embed_tokens(s.answer)
            f1s.append(bert_style_score(cand_vectors, ref_vectors)[2])
        values["BE_qa"] = _mean(f1s)
    else:
        missing.append(TaskKind.GENERAL_QA.value)

    gm = None
    if not missing:
        gm = gm_from_metrics({name: values[name] for name in METRIC_NAMES})
    return MetricReport(values=values, gm=gm, missing_tasks=missing)


# ---------------------------------------------------------------------------
# Human evaluation

RATES = ("A", "B", "C", "D")
HUMAN_EVAL_TASKS = (TaskKind.ADS_GENERATION, TaskKind.TITLE_REWRITING)


@dataclass(frozen=True)
class HumanRating:
    annotator: str
    sample_id: str
    task: TaskKind
    rate: str

    def __post_init__(self) -> None:
        if self.rate not in RATES:
            raise ValueError(f"rate must be one of {RATES}, got {self.rate!r}")
        if self.task not in HUMAN_EVAL_TASKS:
            raise ValueError(f"human evaluation covers {[t.value for t in HUMAN_EVAL_TASKS]}")


@dataclass
class HumanEvalReport:
    per_task: dict[str, dict[str, float]]  # task -> rate -> fraction
    annotator_counts: dict[str, int]

    def to_json(self) -> dict:
        return {"per_task": self.per_task, "annotator_counts": self.annotator_counts}


def human_eval_report(ratings: list[HumanRating]) -> HumanEvalReport:
    """Per-task A-D rate distribution (fractions sum to 1) plus per-annotator
    volume for audit. Rejects duplicate (annotator, sample) entries."""
    seen: set[tuple[str, str]] = set()
    task_counts: dict[str, Counter] = {}
    annotator_counts: Counter = Counter()
    for rating in ratings:
        key = (rating.annotator, rating.sample_id)
        if key in seen:
            raise DuplicateRating(f"duplicate rating for {key}")
        seen.add(key)
        task_counts.setdefault(rating.task.value, Counter())[rating.rate] += 1
        annotator_counts[rating.annotator] += 1
    per_task = {}
    for task, counts in task_counts.items():
        total = sum(counts.values())
        per_task[task] = {rate: counts.get(rate, 0) / total for rate in RATES}
    return HumanEvalReport(per_task=per_task, annotator_counts=dict(annotator_counts))


def load_ratings(path) -> list[HumanRating]:
    ratings = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            ratings.append(
                HumanRating(
                    annotator=str(obj["annotator"]),
                    sample_id=str(obj["sample_id"]),
                    task=TaskKind(obj["task"]),
                    rate=str(obj["rate"]),
                )
            )
    return ratings


# ---------------------------------------------------------------------------
# Rendering


def render_table(rows: list[tuple[str, MetricReport]]) -> str:
    """Aligned fixed-order comparison table, one row per named report."""
    headers = ["model", *METRIC_NAMES, "GM"]
    table = [headers]
    for name, report in rows:
        cells = [name]
        for metric in METRIC_NAMES:
            v = report.values.get(metric)
            cells.append("-" if v is None else f"{v:.2f}")
        cells.append("-" if report.gm is None else f"{report.gm:.2f}")
        table.append(cells)
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
