"""Layered run configuration: YAML sections, environment macros, overrides.

Unknown keys are rejected at load so typos fail fast, and every effective
value records where it came from. Reports embed the config digest for
reproducibility.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml


class ConfigError(ValueError):
    """Unknown key, unresolved macro, or type mismatch in a config source."""


_ENV_MACRO = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

# Known keys and their types; nested dicts mirror the file sections.
CONFIG_SCHEMA: dict[str, Any] = {
    "seed": int,
    "llm": {
        "model": str,
        "temperature": float,
        "max_tokens": int,
        "trajectory_reward_rule": str,
        "upper_limit_weight_for_scheduled_ruler": float,
        "hybrid_ruler_weight": float,
        "total_steps": int,
        "rollout": {
            "sample_num_per_training_scenario": int,
            "sample_num_per_validation_scenario": int,
            "temperature": float,
            "messages": str,
        },
        "judger": {
            "model": str,
            "api_key_name": str,
            "base_url": str,
            "max_retries": int,
            "custom_ruler_placeholder": list,
        },
    },
    "ddp_training": {
        "enable_ddp": bool,
        "world_size": int,
        "ddp_backend": str,
        "master_addr": str,
        "master_port": str,
        "ddp_timeout_minutes": int,
        "batch_size_allow_adjusting": bool,
        "replicate_dataset_across_ranks": bool,
    },
    "art_multi_server": {
        "trainer_args": {
            "training_batch_size": int,
            "logprob_calculation_chunk_size": int,
            "max_negative_advantage_importance_sampling_weight": float,
        },
        "server_pool": {
            "max_servers_per_model": int,
            "concurrent_startup": bool,
            "port_range_start": int,
            "port_range_end": int,
            "gpu_memory_per_server": float,
            "gpu_count": int,
        },
        "rollout": {
            "enable_concurrent_rollouts": bool,
            "rollout_batch_size": int,
            "load_balancing_strategy": str,
            "max_concurrent_api_number": int,
        },
    },
}

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "llm": {
        "trajectory_reward_rule": "rac_score",
        "upper_limit_weight_for_scheduled_ruler": 0.3,
        "hybrid_ruler_weight": 0.5,
        "total_steps": 1,
        "judger": {"max_retries": 3, "custom_ruler_placeholder": []},
    },
    "art_multi_server": {
        "rollout": {"max_concurrent_api_number": 8, "load_balancing_strategy": "round_robin"},
    },
}


def _resolve_macros(value: Any, path: str) -> Any:
    if isinstance(value, str):
        def sub(match: re.Match[str]) -> str:
            name = match.group(1)
            resolved = os.environ.get(name)
            if resolved is None:
                raise ConfigError(f"{path}: unresolved environment macro ${{{name}}}")
            return resolved

        return _ENV_MACRO.sub(sub, value)
    return value


def _coerce(value: Any, expected: type, path: str) -> Any:
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is bool and isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if isinstance(value, str) and expected in (int, float):
        try:
            return expected(value)
        except ValueError:
            raise ConfigError(f"{path}: expected {expected.__name__}, got {value!r}") from None
    if not isinstance(value, expected) or (expected in (int, float) and isinstance(value, bool)):
        raise ConfigError(f"{path}: expected {expected.__name__}, got {type(value).__name__}")
    return value


def _merge_section(
    target: dict[str, Any],
    source: Mapping[str, Any],
    schema: Mapping[str, Any],
    provenance: dict[str, str],
    origin: str,
    prefix: str = "",
) -> None:
    for key, value in source.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown configuration key {path!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{path}: expected a section")
            _merge_section(target.setdefault(key, {}), value, spec, provenance, origin, path + ".")
        else:
            value = _resolve_macros(value, path)
            target[key] = _coerce(value, spec, path)
            provenance[path] = origin


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]
    provenance: Mapping[str, str]

    def get(self, dotted: str, default: Any = None) -> Any:
        node: Any = self.values
        for part in dotted.split("."):
            if not isinstance(node, Mapping) or part not in node:
                return default
            node = node[part]
        return node

    def digest(self) -> str:
        canonical = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _set_dotted(
    values: dict[str, Any], dotted: str, raw: Any, provenance: dict[str, str]
) -> None:
    parts = dotted.split(".")
    schema: Any = CONFIG_SCHEMA
    for part in parts[:-1]:
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError(f"unknown configuration key {dotted!r}")
        schema = schema[part]
    leaf = parts[-1]
    if not isinstance(schema, dict) or leaf not in schema or isinstance(schema[leaf], dict):
        raise ConfigError(f"unknown configuration key {dotted!r}")
    node = values
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[leaf] = _coerce(_resolve_macros(raw, dotted), schema[leaf], dotted)
    provenance[dotted] = "override"


def load_config(
    paths: Sequence[str | Path] = (),
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Merge defaults, config files in order, then command-line overrides."""
    values: dict[str, Any] = {}
    provenance: dict[str, str] = {}
    _merge_section(values, DEFAULTS, CONFIG_SCHEMA, provenance, "default")
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            try:
                doc = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge_section(values, doc, CONFIG_SCHEMA, provenance, f"file:{path}")
    for dotted, raw in (overrides or {}).items():
        _set_dotted(values, dotted, raw, provenance)
    return RunConfig(values=values, provenance=provenance)
