"""Pipeline configuration: a single JSON file with dotted-path overrides.

Every knob has a default aimed at the bundled desk-scale demo; a config file
only needs the keys it changes. The API key is named by ``api_key_env`` and
read from the environment, never stored in the file.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

DEFAULTS: dict = {
    "backend": {
        "base_url": "http://localhost:8000/v1",
        "model": "gpt-3.5-turbo",
        "api_key_env": "FORGE_API_KEY",
        "timeout_s": 60.0,
        "max_retries": 3,
        "concurrency": 4,
        "expand_temperature": 0.7,
        "score_temperature": 0.0,
        "max_tokens": 256,
    },
    "pipeline": {
        "seed_per_task": 60,
        "instruction_rewrites": 4,
        "response_generations": 1,
        "response_rewrites": 1,
        "target_total": 1200,
        "near_dup_threshold": 0.9,
        "split_ratio": 0.8,
        "heldout_scenarios": ["Christmas", "Sports Fans", "Mid-year Sale"],
        "heldout_product_sets": 2,
        "heldout_set_size": 5,
        "heldout_intents": [
            "What products should I buy when planning my wedding?",
            "I'm looking for a gift for a middle-aged woman. Give me some ideas.",
            "I'm looking for a gift for a little kid. What should I choose?",
            "Recommend something for a friend who loves hiking and camping.",
        ],
    },
    "metrics": {
        "rouge_beta": 1.2,
        "bleu_epsilon": 1e-9,
    },
    "rng_seed": 0,
    "paths": {
        # null data_in/qa_in selects the bundled synthetic demo fixture
        "data_in": None,
        "qa_in": None,
        "out_dir": "forge-out",
    },
}


class ConfigError(Exception):
    pass


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _set_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def parse_override(expr: str) -> tuple[str, object]:
    """Parse one --set KEY=VALUE; the value is JSON when it parses, else a
    bare string."""
    if "=" not in expr:
        raise ConfigError(f"--set expects key=value, got {expr!r}")
    key, raw = expr.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


@dataclass(frozen=True)
class PipelineConfig:
    data: dict

    def __getitem__(self, key: str):
        return self.data[key]

    @property
    def rng_seed(self) -> int:
        return int(self.data["rng_seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.data["paths"]["out_dir"])

    def hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _validate(cfg: dict) -> None:
    backend = cfg["backend"]
    pipeline = cfg["pipeline"]
    checks = [
        (backend["concurrency"] >= 1, "backend.concurrency must be >= 1"),
        (backend["max_retries"] >= 0, "backend.max_retries must be >= 0"),
        (backend["timeout_s"] > 0, "backend.timeout_s must be > 0"),
        (backend["expand_temperature"] >= 0, "backend.expand_temperature must be >= 0"),
        (backend["score_temperature"] >= 0, "backend.score_temperature must be >= 0"),
        (backend["max_tokens"] >= 1, "backend.max_tokens must be >= 1"),
        (pipeline["seed_per_task"] >= 1, "pipeline.seed_per_task must be >= 1"),
        (pipeline["instruction_rewrites"] >= 0, "pipeline.instruction_rewrites must be >= 0"),
        (pipeline["response_generations"] >= 0, "pipeline.response_generations must be >= 0"),
        (pipeline["response_rewrites"] >= 0, "pipeline.response_rewrites must be >= 0"),
        (pipeline["target_total"] >= 5, "pipeline.target_total must be >= 5"),
        (
            0.0 <= pipeline["near_dup_threshold"] <= 1.0,
            "pipeline.near_dup_threshold must be in [0, 1]",
        ),
        (0.0 < pipeline["split_ratio"] < 1.0, "pipeline.split_ratio must be in (0, 1)"),
        (pipeline["heldout_product_sets"] >= 1, "pipeline.heldout_product_sets must be >= 1"),
        (pipeline["heldout_set_size"] >= 1, "pipeline.heldout_set_size must be >= 1"),
        (cfg["metrics"]["rouge_beta"] > 0, "metrics.rouge_beta must be > 0"),
        (cfg["metrics"]["bleu_epsilon"] > 0, "metrics.bleu_epsilon must be > 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def load_config(
    path: str | Path | None = None, overrides: list[str] = ()
) -> PipelineConfig:
    """Defaults, deep-merged with the optional file, then --set overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _deep_merge(cfg, loaded)
    for expr in overrides:
        key, value = parse_override(expr)
        _set_path(cfg, key, value)
    _validate(cfg)
    return PipelineConfig(data=cfg)
