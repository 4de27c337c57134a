"""Experiment configuration: YAML loading, validation, canonical hashing.

The semantic config (everything that shapes results) is hashed so an
artifact refuses to resume under an edited configuration; `output_dir`
is runtime-only and excluded, and the seed is excluded from the
cross-run compatibility key used by `analyze`.
"""

from __future__ import annotations

import hashlib
import json
import os

import yaml

from .core import GameConfig
from .evolution import ExperimentConfig, ProviderSettings


class ConfigError(Exception):
    pass


_GAME_KEYS = {
    "population_size": int,
    "rounds": int,
    "endowment": float,
    "donation_multiplier": float,
    "trace_depth": int,
    "punishment_enabled": bool,
    "punishment_multiplier": float,
}

_TOP_KEYS = {
    "generations": int,
    "seed": int,
    "backend": str,
    "output_dir": str,
}

_SCRIPTED_KEYS = {"strategy": str, "mutation": float}

_PROVIDER_KEYS = {
    "endpoint": str,
    "model": str,
    "key_env": str,
    "temperature": float,
    "max_tokens": int,
    "input_price": float,
    "output_price": float,
    "requests_per_minute": float,
}

# Keys the paper's protocol sweeps; accepted as shorthand in ablations.
ABLATION_ALIASES = {
    "multiplier": "donation_multiplier",
    "depth": "trace_depth",
}


def _coerce(key: str, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = set(_GAME_KEYS) | set(_TOP_KEYS) | {"scripted", "provider"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")

    game_kwargs = {}
    for key, kind in _GAME_KEYS.items():
        if key in data:
            game_kwargs[key] = _coerce(key, data[key], kind)
    try:
        game = GameConfig(**game_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    scripted = data.get("scripted") or {}
    if not isinstance(scripted, dict):
        raise ConfigError("config key 'scripted' must be a mapping")
    for key in scripted:
        if key not in _SCRIPTED_KEYS:
            raise ConfigError(f"unknown config key 'scripted.{key}'")

    provider_data = data.get("provider") or {}
    if not isinstance(provider_data, dict):
        raise ConfigError("config key 'provider' must be a mapping")
    provider_kwargs = {}
    for key, value in provider_data.items():
        if key not in _PROVIDER_KEYS:
            raise ConfigError(f"unknown config key 'provider.{key}'")
        if value is not None:
            provider_kwargs[key] = _coerce(f"provider.{key}", value, _PROVIDER_KEYS[key])

    try:
        cfg = ExperimentConfig(
            game=game,
            generations=_coerce("generations", data.get("generations", 10), int),
            master_seed=_coerce("seed", data.get("seed", 0), int),
            backend=_coerce("backend", data.get("backend", "mock"), str),
            scripted_strategy=_coerce(
                "scripted.strategy", scripted.get("strategy", "full_donor"), str
            ),
            scripted_mutation=_coerce(
                "scripted.mutation", scripted.get("mutation", 0.05), float
            ),
            provider=ProviderSettings(**provider_kwargs),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.backend == "llm":
        if not cfg.provider.endpoint:
            raise ConfigError("backend 'llm' requires config key 'provider.endpoint'")
        if not cfg.provider.model:
            raise ConfigError("backend 'llm' requires config key 'provider.model'")
    return cfg


def load_config(path: str) -> tuple:
    """Returns (ExperimentConfig, output_dir or None)."""

    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if data is None:
        data = {}
    output_dir = None
    if isinstance(data, dict) and "output_dir" in data:
        output_dir = _coerce("output_dir", data.pop("output_dir"), str)
    return config_from_dict(data), output_dir


def semantic_dict(cfg: ExperimentConfig) -> dict:
    """The full result-shaping configuration as a plain sorted dict."""

    key_env = cfg.provider.key_env
    if key_env.startswith("env:"):
        key_env = key_env[len("env:"):]
    return {
        "population_size": cfg.game.population_size,
        "rounds": cfg.game.rounds,
        "endowment": cfg.game.endowment,
        "donation_multiplier": cfg.game.donation_multiplier,
        "trace_depth": cfg.game.trace_depth,
        "punishment_enabled": cfg.game.punishment_enabled,
        "punishment_multiplier": cfg.game.punishment_multiplier,
        "generations": cfg.generations,
        "seed": cfg.master_seed,
        "backend": cfg.backend,
        "scripted": {"strategy": cfg.scripted_strategy, "mutation": cfg.scripted_mutation},
        "provider": {
            "endpoint": cfg.provider.endpoint,
            "model": cfg.provider.model,
            "key_env": key_env,
            "temperature": cfg.provider.temperature,
            "max_tokens": cfg.provider.max_tokens,
            "input_price": cfg.provider.input_price,
            "output_price": cfg.provider.output_price,
            "requests_per_minute": cfg.provider.requests_per_minute,
        },
    }


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(semantic_dict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def compatibility_key(cfg: ExperimentConfig) -> str:
    """Hash ignoring the seed; artifacts analyzed together must agree."""

    data = semantic_dict(cfg)
    data.pop("seed")
    payload = json.dumps(data, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_api_key(cfg: ExperimentConfig) -> str:
    name = cfg.provider.key_env
    if name.startswith("env:"):
        name = name[len("env:"):]
    value = os.environ.get(name)
    if not value:
        raise ConfigError(f"provider credential not found in environment variable {name!r}")
    return value
