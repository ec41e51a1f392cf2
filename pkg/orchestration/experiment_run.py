"""
Entry point for twin experiments via the LangGraph pipeline.
"""
import asyncio
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

from core.schemas import ExperimentConfig, RunStatus, RunSummary
from orchestration import persistence
from orchestration.config import config_hash
from orchestration.graph import ExperimentState, experiment_graph

logger = logging.getLogger("experiment_run")

STAGE_TEXT = {
    "spin_up": "Truth spun up.",
    "observe": "Observation path generated.",
    "calibrate": "Constants calibrated; accuracy conditions evaluated.",
    "assimilate": "Replicas assimilated.",
    "diagnose": "Replicas aggregated against the bound.",
}


async def run_twin_experiment(
    config: ExperimentConfig,
    *,
    run_dir: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    progress_callback: Optional[Callable[[Dict], None]] = None,
) -> RunSummary:
    """
    Spin up the truth, observe it, run the filter over every replica and write
    series.csv, bound_report.json and summary.json into the run directory.
    """
    digest = config_hash(config)
    run_id = digest[:16]
    directory = persistence.run_directory(config, run_id, run_dir)

    # Helper for events
    def emit(type_: str, payload: Any = None, **kwargs):
        if progress_callback:
            event = {"type": type_, "timestamp": datetime.now().isoformat(), "run_id": run_id, **kwargs}
            if payload is not None:
                if hasattr(payload, "model_dump"):
                    event["payload"] = payload.model_dump(mode="json")
                else:
                    event["payload"] = payload
            try:
                progress_callback(event)
            except Exception as e:
                logger.warning(f"Callback error: {e}")

    emit("status", text=f"Starting run {run_id} ({config.label})")
    persistence.write_config_echo(directory, config)

    initial_state: ExperimentState = {
        "run_id": run_id,
        "config_hash": digest,
        "config": config,
        "run_dir": str(directory),
        "overrides": dict(overrides or {}),
        "system": None,
        "op": None,
        "covariance": None,
        "truth": None,
        "spin_up": None,
        "calibration": None,
        "bound_report": None,
        "outcomes": [],
        "estimate": None,
        "summary": None,
        "final_status": None,
        "error": None,
        "timestamps": {"start": datetime.now().isoformat()},
    }

    summary: Optional[RunSummary] = None

    async for output in experiment_graph.astream(initial_state):
        for node_name, state_update in output.items():
            if not state_update:
                continue
            if state_update.get("error"):
                emit("error", text=state_update["error"])
                continue

            if node_name in STAGE_TEXT:
                emit("status", text=STAGE_TEXT[node_name])
            if node_name == "spin_up":
                emit("spin_up", payload=state_update.get("spin_up"))
            elif node_name == "calibrate":
                emit("calibration", payload=state_update.get("calibration"))
                if state_update.get("bound_report") is not None:
                    emit("bound_report", payload=state_update["bound_report"])
            elif node_name == "assimilate":
                for outcome in state_update.get("outcomes", []):
                    emit("replica", replica=outcome.replica,
                         payload=outcome.fault if outcome.fault is not None else {"status": "ok"})
            elif node_name == "diagnose":
                emit("estimate", payload=state_update.get("estimate"))
            elif node_name == "finalize":
                summary = state_update.get("summary")

    if summary is None:
        raise RuntimeError("Graph execution failed to produce a summary")

    emit("done", payload=summary)
    return summary


def run_twin_experiment_sync(config: ExperimentConfig, **kwargs) -> RunSummary:
    return asyncio.run(run_twin_experiment(config, **kwargs))


def is_failure(status: RunStatus) -> bool:
    return status in (RunStatus.PARTIAL_FAILURE, RunStatus.SYSTEM_ERROR)
