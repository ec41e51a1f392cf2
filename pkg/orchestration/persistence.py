"""
Run directory layout and atomic artifact writes.

<out>/<run_id>/
    config.json  manifest.json  bound_report.json  series.csv
    observations.csv  observations.json  truth/  summary.json
"""
import json
import logging
import os
import platform
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel

from core.schemas import ExperimentConfig, RunSummary

logger = logging.getLogger("persistence")

TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "langgraph")


def write_json_atomic(path: Union[str, Path], data: Union[BaseModel, Dict[str, Any], List[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = str(path) + ".tmp"
    with open(tmp_path, "w") as f:
        if isinstance(data, BaseModel):
            f.write(data.model_dump_json(indent=2))
        else:
            json.dump(data, f, indent=2, sort_keys=True)
    os.replace(tmp_path, path)
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r") as f:
        return json.load(f)


def library_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def run_directory(config: ExperimentConfig, run_id: str, run_dir: Optional[Union[str, Path]] = None) -> Path:
    path = Path(run_dir) if run_dir is not None else Path(config.output_dir) / run_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_config_echo(run_dir: Path, config: ExperimentConfig) -> Path:
    return write_json_atomic(run_dir / "config.json", config.model_dump(mode="json"))


def write_manifest(run_dir: Path, *, run_id: str, config_hash: str, config: ExperimentConfig,
                   timestamps: Dict[str, str], extra: Optional[Dict[str, Any]] = None) -> Path:
    manifest = {
        "run_id": run_id,
        "config_hash": config_hash,
        "seeds": config.seeds.model_dump(),
        "replicas": config.replicas,
        "timestamps": {**timestamps, "written": datetime.now().isoformat()},
        "versions": library_versions(),
        "platform": platform.platform(),
        **(extra or {}),
    }
    return write_json_atomic(run_dir / "manifest.json", manifest)


def write_series(run_dir: Path, frame: pd.DataFrame) -> Path:
    path = run_dir / "series.csv"
    tmp_path = str(path) + ".tmp"
    frame.to_csv(tmp_path, index=False, float_format="%.10e")
    os.replace(tmp_path, path)
    logger.info(f"Wrote {len(frame)} series rows to {path}")
    return path


def write_summary(run_dir: Path, summary: RunSummary) -> Path:
    """summary.json carries no wall-clock content, so equal seeds give equal bytes."""
    return write_json_atomic(run_dir / "summary.json", summary)


def load_summary(path: Union[str, Path]) -> RunSummary:
    with open(path, "r") as f:
        return RunSummary.model_validate_json(f.read())


def find_summaries(root: Union[str, Path]) -> List[Path]:
    return sorted(Path(root).rglob("summary.json"))


def summary_row(summary: RunSummary, source: Optional[Path] = None) -> Dict[str, Any]:
    est = summary.estimate
    row = {
        "run_id": summary.run_id,
        "label": summary.label,
        "system": summary.system.value,
        "filter": summary.filter.value,
        "status": summary.status.value,
        "exit_code": summary.exit_code,
        "guaranteed": summary.guaranteed,
        "limsup": est.limsup,
        "tail_mean": est.tail_mean,
        "standard_error": est.standard_error,
        "bound": est.theoretical_bound,
        "passed": est.passed,
        "enstrophy_average": est.enstrophy_average,
        "enstrophy_bound": est.enstrophy_bound,
    }
    for key, value in summary.meta.get("overrides", {}).items():
        row[f"param:{key}"] = value
    if source is not None:
        row["path"] = str(source.parent)
    return row


def summaries_table(root: Union[str, Path]) -> pd.DataFrame:
    rows = [summary_row(load_summary(p), p) for p in find_summaries(root)]
    return pd.DataFrame(rows)
