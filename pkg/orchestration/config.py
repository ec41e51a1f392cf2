"""
Experiment configuration: loading, hashing, overrides and environment defaults.
"""
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from core.errors import ConfigurationError
from core.schemas import ExperimentConfig

# Load environment variables
load_dotenv()

logger = logging.getLogger("config")

DEFAULT_OUTPUT_DIR = "runs"

# Short names accepted by `sweep --param` and `apply_override`
ALIASES: Dict[str, str] = {
    "sigma": "observation.sigma",
    "beta": "filter.covariance.beta",
    "mu": "filter.inflation.additive",
    "nudging_mu": "filter.nudging_mu",
    "nu": "system.nu",
    "grashof": "system.grashof",
    "dt": "time.dt",
    "horizon": "time.horizon",
    "K": "filter.ensemble_size",
    "replicas": "replicas",
}


def _read_mapping(path: Path) -> Dict[str, Any]:
    suffix = path.suffix.lower()
    if suffix == ".toml":
        with open(path, "rb") as f:
            return tomllib.load(f)
    if suffix in (".yaml", ".yml"):
        with open(path, "r") as f:
            return yaml.safe_load(f) or {}
    if suffix == ".json":
        with open(path, "r") as f:
            return json.load(f)
    raise ConfigurationError(f"unsupported config format '{suffix}' (use .toml, .yaml or .json)")


def env_defaults() -> Dict[str, Any]:
    """Values taken from DAF_OUTPUT_DIR / DAF_THREADS when the file leaves them out."""
    out: Dict[str, Any] = {}
    if os.environ.get("DAF_OUTPUT_DIR"):
        out["output_dir"] = os.environ["DAF_OUTPUT_DIR"]
    if os.environ.get("DAF_THREADS"):
        try:
            out["threads"] = int(os.environ["DAF_THREADS"])
        except ValueError:
            logger.warning(f"Ignoring non-integer DAF_THREADS={os.environ['DAF_THREADS']!r}")
    return out


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**{**env_defaults(), **data})
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {e}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = _read_mapping(path)
    except (tomllib.TOMLDecodeError, yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"malformed config {path}: {e}") from e
    config = parse_config(data)
    logger.info(f"Loaded config '{config.label}' from {path} (hash {config_hash(config)[:16]})")
    return config


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def run_id_for(config: ExperimentConfig) -> str:
    return config_hash(config)[:16]


def apply_override(config: ExperimentConfig, key: str, value: Any) -> ExperimentConfig:
    """Copy of `config` with one dotted field (or alias) replaced, re-validated."""
    dotted = ALIASES.get(key, key)
    data = config.model_dump(mode="json")
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigurationError(f"unknown config field '{dotted}'")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigurationError(f"unknown config field '{dotted}'")
    node[parts[-1]] = value
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(f"override {dotted}={value!r} rejected: {e}") from e


def apply_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Derive all four seeds from one base seed (truth, obs noise, filter noise, ensemble init)."""
    data = config.model_dump(mode="json")
    data["seeds"] = {"truth": seed, "obs_noise": seed + 1, "filter_noise": seed + 2, "ensemble_init": seed + 3}
    return ExperimentConfig(**data)


def resolve_cli_overrides(config: ExperimentConfig, *, seed: Optional[int] = None, replicas: Optional[int] = None,
                          out: Optional[str] = None, threads: Optional[int] = None) -> ExperimentConfig:
    if seed is not None:
        config = apply_seed(config, seed)
    if replicas is not None:
        config = apply_override(config, "replicas", replicas)
    if out is not None:
        config = apply_override(config, "output_dir", out)
    if threads is not None:
        config = apply_override(config, "threads", threads)
    return config


def parse_value(text: str) -> Any:
    """Sweep values arrive as strings: ints, then floats, then booleans, else the raw text."""
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    return text.strip()
