"""Command-line entry point: ``forge <stage> [options]``.

Stages mirror the pipeline: formulate (ingest + seed set), expand (teacher
variants), curate (dedup, balance, emit, held-out packs), evaluate (metric
report or replay), lora-verify (adapter math checks), human-eval (rating
distributions), check-manifest (artifact re-verification).

Exit codes: 0 clean, 2 completed with partial diagnostics, 1 hard failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import curate, evalsuite, expand, formulate, ingest, lora
from .config import ConfigError, PipelineConfig, load_config
from .core import TaskKind
from .modelio import Backend, HttpBackend, MockBackend, RetryPolicy

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2

GENERATION_KEY = "generation"


class CliError(Exception):
    pass


def demo_data_path(name: str) -> Path:
    return Path(str(resources.files("ecomforge") / "data" / name))


def _records_path(config: PipelineConfig) -> Path:
    configured = config["paths"]["data_in"]
    return Path(configured) if configured else demo_data_path("demo_records.jsonl")


def _qa_path(config: PipelineConfig) -> Path:
    configured = config["paths"]["qa_in"]
    return Path(configured) if configured else demo_data_path("demo_qa.jsonl")


def make_backend(config: PipelineConfig, kind: str) -> Backend:
    backend_cfg = config["backend"]
    if kind == "mock":
        return MockBackend(model=backend_cfg["model"])
    if kind == "http":
        api_key_env = backend_cfg["api_key_env"]
        return HttpBackend(
            base_url=backend_cfg["base_url"],
            model=backend_cfg["model"],
            api_key=os.environ.get(api_key_env),
            timeout_s=backend_cfg["timeout_s"],
            policy=RetryPolicy(max_retries=backend_cfg["max_retries"]),
        )
    raise CliError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# Run manifest and locking


class OutDirLock:
    """One command instance per out_dir; guards against concurrent clobbering."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".forge.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(
                f"lock {self.path} exists; another run is active (or remove it)"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info):
        self.path.unlink(missing_ok=True)
        return False


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _update_run_manifest(
    config: PipelineConfig, stage: str, outputs: dict[str, Path], seconds: float
) -> None:
    manifest_path = config.out_dir / "run_manifest.json"
    manifest = {"run_id": config.hash()[:12], "config_hash": config.hash(), "stages": {}}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest["run_id"] = config.hash()[:12]
        manifest["config_hash"] = config.hash()
    manifest.setdefault("stages", {})[stage] = {
        "outputs": {name: _sha256_file(path) for name, path in outputs.items()},
        "seconds": round(seconds, 3),
    }
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Stage commands


def _load_split(config: PipelineConfig) -> tuple[ingest.DatasetSplit, list]:
    records, diagnostics = ingest.load_interactions(_records_path(config), write_sidecar=False)
    if diagnostics:
        out = config.out_dir / "ingest.errors.jsonl"
        config.out_dir.mkdir(parents=True, exist_ok=True)
        ingest.write_error_sidecar(diagnostics, out)
    filtered = ingest.filter_by_action(records)
    dsplit = ingest.split(filtered, config["pipeline"]["split_ratio"], config.rng_seed)
    return dsplit, diagnostics


def _load_qa_split(config: PipelineConfig) -> tuple[list, list]:
    qa_pairs = formulate.load_qa_pairs(_qa_path(config))
    return ingest.split_generic(
        qa_pairs, config["pipeline"]["split_ratio"], config.rng_seed, lambda q: q.id
    )


def cmd_formulate(config: PipelineConfig) -> int:
    started = time.perf_counter()
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    with OutDirLock(out_dir):
        dsplit, diagnostics = _load_split(config)
        qa_train, _ = _load_qa_split(config)
        seeds = formulate.build_seed_set(
            dsplit.train,
            qa_train,
            per_task=config["pipeline"]["seed_per_task"],
            seed=config.rng_seed,
        )
        seeds_path = out_dir / "seeds.jsonl"
        manifest = curate.emit_jsonl(seeds, seeds_path)
        _update_run_manifest(
            config, "formulate", {"seeds.jsonl": seeds_path}, time.perf_counter() - started
        )
    print(f"formulate: {manifest.count} seed pairs -> {seeds_path}")
    for task, count in manifest.per_task.items():
        print(f"  {task}: {count}")
    if diagnostics:
        print(f"  {len(diagnostics)} malformed input lines (see ingest.errors.jsonl)")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_expand(config: PipelineConfig, backend_kind: str) -> int:
    started = time.perf_counter()
    out_dir = config.out_dir
    seeds_path = out_dir / "seeds.jsonl"
    if not seeds_path.exists():
        raise CliError(f"{seeds_path} not found; run `forge formulate` first")
    seeds = curate.load_jsonl(seeds_path)
    backend = make_backend(config, backend_kind)
    pipeline_cfg = config["pipeline"]
    plan = expand.ExpansionPlan(
        instruction_rewrites=pipeline_cfg["instruction_rewrites"],
        response_generations=pipeline_cfg["response_generations"],
        response_rewrites=pipeline_cfg["response_rewrites"],
        rng_seed=config.rng_seed,
    )
    decoding = expand.Decoding(
        temperature=config["backend"]["expand_temperature"],
        max_tokens=config["backend"]["max_tokens"],
    )
    with OutDirLock(out_dir):
        result = expand.expand_corpus(
            backend,
            seeds,
            plan,
            concurrency=config["backend"]["concurrency"],
            decoding=decoding,
        )
        expanded_path = out_dir / "expanded.jsonl"
        manifest = curate.emit_jsonl(result.pairs, expanded_path)
        diagnostics_path = out_dir / "diagnostics.jsonl"
        diagnostics_path.write_text(
            "".join(
                json.dumps(
                    {
                        "seed_id": f.seed_id,
                        "strategy": f.strategy,
                        "index": f.index,
                        "reason": f.reason,
                    },
                    ensure_ascii=False,
                )
                + "\n"
                for f in result.failures
            ),
            encoding="utf-8",
        )
        _update_run_manifest(
            config,
            "expand",
            {"expanded.jsonl": expanded_path, "diagnostics.jsonl": diagnostics_path},
            time.perf_counter() - started,
        )
    print(f"expand: {manifest.count} pairs ({len(result.failures)} failed calls) -> {expanded_path}")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _heldout_product_sets(config: PipelineConfig, dsplit: ingest.DatasetSplit) -> list[list[str]]:
    pipeline_cfg = config["pipeline"]
    n_sets = pipeline_cfg["heldout_product_sets"]
    set_size = pipeline_cfg["heldout_set_size"]
    ranked = sorted(
        dsplit.test, key=lambda r: ingest.shuffle_key(config.rng_seed, f"heldout|{r.id}")
    )
    needed = n_sets * set_size
    titles = [r.title for r in ranked[:needed]]
    if len(titles) < needed:
        raise CliError(f"test split too small for {n_sets} held-out sets of {set_size}")
    return [titles[i * set_size : (i + 1) * set_size] for i in range(n_sets)]


def cmd_curate(config: PipelineConfig) -> int:
    started = time.perf_counter()
    out_dir = config.out_dir
    expanded_path = out_dir / "expanded.jsonl"
    if not expanded_path.exists():
        raise CliError(f"{expanded_path} not found; run `forge expand` first")
    pairs = curate.load_jsonl(expanded_path)
    pipeline_cfg = config["pipeline"]
    cur_config = curate.CurationConfig(
        near_dup_threshold=pipeline_cfg["near_dup_threshold"],
        target_total=pipeline_cfg["target_total"],
        rng_seed=config.rng_seed,
    )
    with OutDirLock(out_dir):
        deduped = curate.dedup(pairs, cur_config.near_dup_threshold)
        balanced = curate.balance(deduped, cur_config)
        dataset_path = out_dir / "dataset.jsonl"
        manifest = curate.emit_jsonl(balanced, dataset_path)

        dsplit, _ = _load_split(config)
        scenario_prompts = curate.build_heldout_packs(
            curate.SCENARIO_ADS,
            scenarios=pipeline_cfg["heldout_scenarios"],
            product_sets=_heldout_product_sets(config, dsplit),
        )
        recommendation_prompts = curate.build_heldout_packs(
            curate.RECOMMENDATION, intents=pipeline_cfg["heldout_intents"]
        )
        training_ids = {p.id for p in balanced}
        pack_ids = {p.id for p in scenario_prompts + recommendation_prompts}
        if training_ids & pack_ids:
            raise CliError("held-out pack ids overlap the training set")
        scenario_path = out_dir / "heldout_scenario_ads.jsonl"
        recommendation_path = out_dir / "heldout_recommendation.jsonl"
        curate.emit_pack(scenario_prompts, scenario_path)
        curate.emit_pack(recommendation_prompts, recommendation_path)

        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(
            json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        _update_run_manifest(
            config,
            "curate",
            {
                "dataset.jsonl": dataset_path,
                "manifest.json": manifest_path,
                "heldout_scenario_ads.jsonl": scenario_path,
                "heldout_recommendation.jsonl": recommendation_path,
            },
            time.perf_counter() - started,
        )
    print(f"curate: {manifest.count} pairs -> {dataset_path} (sha256 {manifest.sha256[:12]})")
    for task, count in manifest.per_task.items():
        print(f"  {task}: {count}")
    print(
        f"  held-out packs: {len(scenario_prompts)} scenario ads, "
        f"{len(recommendation_prompts)} recommendation"
    )
    return EXIT_OK


def _read_generations(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out[str(obj["id"])] = str(obj[GENERATION_KEY])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError(f"{path}:{line_no}: bad generation row ({exc})") from exc
    return out


def _build_eval_data(
    config: PipelineConfig, generations_dir: Path
) -> tuple[evalsuite.EvalData, list[str]]:
    dsplit, _ = _load_split(config)
    _, qa_test = _load_qa_split(config)
    records = {r.id: r for r in dsplit.test}
    qa_refs = {q.id: q for q in qa_test}

    def _record(sample_id: str, task: TaskKind):
        if sample_id not in records:
            raise CliError(f"{task.value}: id {sample_id!r} not in the test split")
        return records[sample_id]

    data = evalsuite.EvalData()
    missing_files: list[str] = []
    for task in TaskKind:
        path = generations_dir / f"{task.value}.jsonl"
        if not path.exists():
            missing_files.append(task.value)
            continue
        for sample_id, generation in _read_generations(path).items():
            if task is TaskKind.ADS_GENERATION:
                record = _record(sample_id, task)
                if not record.description:
                    raise CliError(f"{task.value}: record {sample_id!r} has no description")
                data.ads.append(
                    evalsuite.AdsSample(sample_id, generation, record.title, record.description)
                )
            elif task is TaskKind.TITLE_REWRITING:
                record = _record(sample_id, task)
                if not record.query:
                    raise CliError(f"{task.value}: record {sample_id!r} has no query")
                data.rewrites.append(
                    evalsuite.RewriteSample(sample_id, generation, record.title, record.query)
                )
            elif task is TaskKind.PRODUCT_CLASSIFICATION:
                record = _record(sample_id, task)
                data.classification.append(
                    evalsuite.LabelSample(sample_id, generation, record.taxonomy)
                )
            elif task is TaskKind.INTENT_SPECULATION:
                record = _record(sample_id, task)
                data.intent.append(
                    evalsuite.LabelSample(sample_id, generation, record.taxonomy)
                )
            else:
                if sample_id not in qa_refs:
                    raise CliError(f"{task.value}: id {sample_id!r} not in the test QA set")
                data.qa.append(
                    evalsuite.QASample(sample_id, generation, qa_refs[sample_id].answer)
                )
    return data, missing_files


def cmd_evaluate(
    config: PipelineConfig,
    backend_kind: str,
    generations_dir: Path | None,
    replay_path: Path | None,
) -> int:
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if replay_path is not None:
        return _cmd_replay(config, replay_path)
    if generations_dir is None:
        raise CliError("evaluate needs --generations DIR or --replay FILE")
    data, _ = _build_eval_data(config, generations_dir)
    backend = make_backend(config, backend_kind)
    report = evalsuite.evaluate_run(
        data,
        backend,
        bleu_epsilon=config["metrics"]["bleu_epsilon"],
        rouge_beta=config["metrics"]["rouge_beta"],
    )
    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    table = evalsuite.render_table([("run", report)])
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    if report.partial:
        print(f"partial report; missing tasks: {', '.join(report.missing_tasks)}")
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_replay(config: PipelineConfig, replay_path: Path) -> int:
    if str(replay_path) == "builtin":
        replay_path = demo_data_path("reference_runs.json")
    rows = json.loads(Path(replay_path).read_text(encoding="utf-8"))
    reports: list[tuple[str, evalsuite.MetricReport]] = []
    for i, row in enumerate(rows):
        try:
            name = row["name"]
            metrics = {m: float(row["metrics"][m]) for m in evalsuite.METRIC_NAMES}
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"replay row {i}: missing or bad field ({exc})") from exc
        gm = evalsuite.gm_from_metrics(metrics)
        reports.append((name, evalsuite.MetricReport(values=dict(metrics), gm=gm)))
    table = evalsuite.render_table(reports)
    out_path = config.out_dir / "replay_report.json"
    out_path.write_text(
        json.dumps(
            {name: report.to_json() for name, report in reports}, indent=2, sort_keys=True
        )
        + "\n",
        encoding="utf-8",
    )
    print(table)
    return EXIT_OK


def cmd_lora_verify(config: PipelineConfig) -> int:
    rng = np.random.default_rng(config.rng_seed)
    failures = 0

    def check(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        print(f"{name:<24s} {status}  {detail}")
        if not ok:
            failures += 1

    worst = 0.0
    for _ in range(100):
        d, k = int(rng.integers(2, 33)), int(rng.integers(2, 33))
        r = int(rng.integers(1, min(d, k) + 1))
        W0 = rng.standard_normal((d, k))
        x = rng.standard_normal(k)
        adapter = lora.lora_init(d, k, r, seed=int(rng.integers(0, 2**31)))
        base = W0 @ x
        err = float(np.max(np.abs(lora.lora_forward(W0, adapter, x) - base)))
        scale = max(float(np.max(np.abs(base))), 1e-12)
        worst = max(worst, err / scale)
    check("zero-init identity", worst <= 1e-12, f"max rel err {worst:.2e}")

    worst = 0.0
    for _ in range(100):
        d, k = int(rng.integers(2, 65)), int(rng.integers(2, 65))
        r = int(rng.integers(1, min(d, k) + 1))
        W0 = rng.standard_normal((d, k))
        x = rng.standard_normal(k)
        adapter = lora.lora_init(d, k, r, seed=int(rng.integers(0, 2**31)))
        adapter.B[:] = rng.standard_normal((d, r))
        dense = (W0 + adapter.B @ adapter.A) @ x
        err = float(np.max(np.abs(lora.lora_forward(W0, adapter, x) - dense)))
        scale = max(float(np.max(np.abs(dense))), 1e-12)
        worst = max(worst, err / scale)
    check("dense equivalence", worst <= 1e-12, f"max rel err {worst:.2e}")

    adapter = lora.lora_init(8, 8, 2, seed=config.rng_seed, sigma=0.5)
    adapter.B[:] = rng.standard_normal((8, 2))
    W0 = rng.standard_normal((8, 8))
    x = rng.standard_normal(8)
    y = rng.standard_normal(8)
    err = lora.grad_check(W0, adapter, x, y, eps=1e-5)
    check("gradient check", err <= 1e-4, f"max rel err {err:.2e}")

    expected = {(4096, 32): 8_388_608, (5120, 40): 13_107_200, (6656, 60): 25_559_040}
    counts = {
        (d_model, layers): lora.lora_param_count(d_model, 8, layers)
        for (d_model, layers) in expected
    }
    check(
        "parameter accounting",
        counts == expected,
        ", ".join(f"{d}x{n}: {c:,}" for (d, n), c in counts.items()),
    )

    W0 = rng.standard_normal((16, 16))
    U = rng.standard_normal((16, 2))
    V = rng.standard_normal((2, 16))
    target = W0 + 0.5 * (U @ V)
    digest_before = lora.matrix_digest(W0)
    fitted, losses = lora.adapter_fit_toy(W0, target, r=2, steps=500, lr=0.01, seed=config.rng_seed)
    ratio = losses[-1] / losses[0]
    digest_ok = lora.matrix_digest(W0) == digest_before
    check(
        "frozen-base toy fit",
        ratio <= 0.01 and digest_ok,
        f"loss ratio {ratio:.2e}, base digest {'unchanged' if digest_ok else 'CHANGED'}",
    )

    return EXIT_ERROR if failures else EXIT_OK


def cmd_human_eval(config: PipelineConfig, ratings_path: Path) -> int:
    ratings = evalsuite.load_ratings(ratings_path)
    report = evalsuite.human_eval_report(ratings)
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "human_eval.json"
    out_path.write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for task, dist in sorted(report.per_task.items()):
        parts = ", ".join(f"{rate}: {frac:.2f}" for rate, frac in dist.items())
        print(f"{task}: {parts}")
    print(f"annotators: {len(report.annotator_counts)} -> {out_path}")
    return EXIT_OK


def cmd_check_manifest(config: PipelineConfig) -> int:
    manifest_path = config.out_dir / "run_manifest.json"
    if not manifest_path.exists():
        raise CliError(f"{manifest_path} not found")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    bad = 0
    for stage, info in sorted(manifest.get("stages", {}).items()):
        for name, expected in sorted(info.get("outputs", {}).items()):
            path = config.out_dir / name
            if not path.exists():
                print(f"{stage}/{name}: MISSING")
                bad += 1
                continue
            actual = _sha256_file(path)
            ok = actual == expected
            print(f"{stage}/{name}: {'OK' if ok else 'HASH MISMATCH'}")
            bad += 0 if ok else 1
    return EXIT_ERROR if bad else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="E-commerce instruction-dataset construction and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, backend: bool = False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config value (dotted path, JSON value)",
        )
        if backend:
            p.add_argument("--backend", choices=("mock", "http"), default="mock")
        return p

    add("formulate", "ingest raw interactions and build the seed set")
    add("expand", "grow the seed set with teacher variants", backend=True)
    add("curate", "dedup, balance, emit the dataset and held-out packs")
    p_eval = add("evaluate", "compute the metric report", backend=True)
    p_eval.add_argument("--generations", type=Path, default=None, metavar="DIR")
    p_eval.add_argument(
        "--replay",
        type=Path,
        default=None,
        metavar="FILE",
        help="aggregate pre-computed metric rows ('builtin' for the bundled set)",
    )
    add("lora-verify", "verify the adapter math end to end")
    p_human = add("human-eval", "summarize human rating files")
    p_human.add_argument("--ratings", type=Path, required=True, metavar="FILE")
    add("check-manifest", "re-verify stage outputs against the run manifest")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
        if args.command == "formulate":
            return cmd_formulate(config)
        if args.command == "expand":
            return cmd_expand(config, args.backend)
        if args.command == "curate":
            return cmd_curate(config)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.backend, args.generations, args.replay)
        if args.command == "lora-verify":
            return cmd_lora_verify(config)
        if args.command == "human-eval":
            return cmd_human_eval(config, args.ratings)
        if args.command == "check-manifest":
            return cmd_check_manifest(config)
        raise CliError(f"unknown command {args.command!r}")
    except (
        CliError,
        ConfigError,
        ingest.IngestError,
        formulate.FormulateError,
        expand.ExpandError,
        curate.CurateError,
        evalsuite.EvalError,
        lora.LoraError,
        ValueError,  # precondition violations from module surfaces
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
