"""
Twin-experiment pipeline as a LangGraph state machine:

spin_up -> observe -> calibrate -> assimilate -> diagnose -> finalize

Any stage failure routes straight to finalize, which always writes a summary.
"""
import asyncio
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph

from core.errors import AnalysisError, DAError, StepRejectedError
from core.rng import NoiseStreams
from core.schemas import (
    EXIT_CODES,
    BoundReport,
    CalibrationResult,
    EstimateSummary,
    ExperimentConfig,
    ReplicaFault,
    RunStatus,
    RunSummary,
    SpinUpSummary,
)
from covariance.operators import CovarianceOperator
from diagnostics.aggregate import ReplicaAggregator, ReplicaOutcome
from diagnostics.bounds import bound_kind_for, build_bound_inputs, check_conditions
from diagnostics.calibration import calibrate_constants
from dynamics.base import DissipativeSystem
from dynamics.trajectory import (
    TruthTrajectory,
    energy_balance_residual,
    integrate,
    save_trajectory,
    spin_up,
    time_integral_ratio,
)
from observations.noise import write_observation_log
from observations.operators import ObservationOperator
from orchestration import persistence
from orchestration.builders import (
    build_covariance,
    build_filter,
    build_initial,
    build_operator,
    build_path,
    build_system,
    truth_initial_state,
)

logger = logging.getLogger("graph")


class ExperimentState(TypedDict):
    # Inputs
    run_id: str
    config_hash: str
    config: ExperimentConfig
    run_dir: str
    overrides: Dict[str, Any]

    # Built objects
    system: Optional[DissipativeSystem]
    op: Optional[ObservationOperator]
    covariance: Optional[CovarianceOperator]
    truth: Optional[TruthTrajectory]

    # Stage artifacts
    spin_up: Optional[SpinUpSummary]
    calibration: Optional[CalibrationResult]
    bound_report: Optional[BoundReport]
    outcomes: List[ReplicaOutcome]
    estimate: Optional[EstimateSummary]

    # Final Output
    summary: Optional[RunSummary]
    final_status: Optional[RunStatus]
    error: Optional[str]
    timestamps: Dict[str, str]


def _stamp(state: ExperimentState, name: str) -> Dict[str, str]:
    return {**state.get("timestamps", {}), name: datetime.now().isoformat()}


def _failure(state: ExperimentState, stage: str, e: Exception) -> Dict:
    logger.error(f"{stage} failed: {type(e).__name__}: {e}")
    return {
        "error": f"{stage}: {type(e).__name__}: {e}",
        "final_status": RunStatus.SYSTEM_ERROR,
        "timestamps": _stamp(state, f"{stage}_failed"),
    }


def spin_up_truth(config: ExperimentConfig, system: DissipativeSystem):
    """Spin up, then integrate the assimilation window from the spun-up state."""
    dt = config.time.dt
    streams = NoiseStreams(config.seeds.truth)
    u0 = truth_initial_state(config, system)
    spun = spin_up(system, u0, max(config.time.spin_up, dt), dt, streams)
    spin_steps = spun.n_steps
    truth = integrate(system, spun.final, config.time.n_steps, dt, streams,
                      t_start=float(spun.times[-1]), step_offset=spin_steps)
    truth.t0 = spun.t0
    truth.M_u = max(spun.M_u, truth.M_u)
    summary = SpinUpSummary(
        grashof=system.grashof,
        t0=spun.t0,
        M_u=truth.M_u,
        max_energy_ratio=spun.meta.get("max_energy_ratio", 0.0),
        max_enstrophy_ratio=spun.meta.get("max_enstrophy_ratio", 0.0),
        max_norm_Au=float(np.max(np.linalg.norm(system.apply_A(truth.states), axis=1))),
        energy_balance_residual=None if system.stochastic else energy_balance_residual(system, truth),
        energy_envelope_ratio=spun.meta.get("energy_envelope_ratio"),
        time_integral_ratio=None if system.stochastic else time_integral_ratio(system, truth),
    )
    return truth, summary


async def node_spin_up(state: ExperimentState) -> Dict:
    """Builds the system and the post-spin-up truth trajectory."""
    config = state["config"]
    try:
        system = build_system(config)
        truth, summary = await asyncio.to_thread(spin_up_truth, config, system)
        await asyncio.to_thread(save_trajectory, truth, Path(state["run_dir"]) / "truth",
                                meta={"system": config.system.kind.value})
    except Exception as e:
        return _failure(state, "spin_up", e)

    logger.info(f"spin-up done: G={summary.grashof:.4g}, t0={summary.t0:.3f}, M_u={summary.M_u:.4g}")
    return {
        "system": system,
        "truth": truth,
        "spin_up": summary,
        "timestamps": _stamp(state, "spin_up_done"),
    }


async def node_observe(state: ExperimentState) -> Dict:
    """Builds the observation operator and logs the replica-0 observation path."""
    config = state["config"]
    truth = state["truth"]
    try:
        op = build_operator(config, state["system"])
        path = build_path(config, op, truth.states, truth.dt, replica=0, t_start=float(truth.times[0]))
        await asyncio.to_thread(write_observation_log, path, state["run_dir"], config.time.record_every)
    except Exception as e:
        return _failure(state, "observe", e)
    return {"op": op, "timestamps": _stamp(state, "observe_done")}


def _bounds(config: ExperimentConfig, system, op, calibration, M_u, covariance) -> Optional[BoundReport]:
    kind = bound_kind_for(config.filter)
    inputs = build_bound_inputs(system, op, config.filter, config.observation.sigma, calibration, M_u,
                                horizon=config.time.horizon, covariance=covariance)
    return check_conditions(kind, inputs)


async def node_calibrate(state: ExperimentState) -> Dict:
    """Calibrates c1, c2, c_L and evaluates the accuracy conditions."""
    config = state["config"]
    system, op = state["system"], state["op"]
    try:
        calibration = await asyncio.to_thread(
            calibrate_constants, system, op, config.calibration_corpus, config.seeds.truth
        )
        covariance = build_covariance(config, system, op)
    except Exception as e:
        return _failure(state, "calibrate", e)

    report = None
    try:
        report = await asyncio.to_thread(_bounds, config, system, op, calibration, state["spin_up"].M_u, covariance)
        persistence.write_json_atomic(Path(state["run_dir"]) / "bound_report.json", report)
    except DAError as e:
        logger.warning(f"bound report unavailable: {e}")
        persistence.write_json_atomic(Path(state["run_dir"]) / "bound_report.json", {"error": str(e)})

    return {
        "calibration": calibration,
        "covariance": covariance,
        "bound_report": report,
        "timestamps": _stamp(state, "calibrate_done"),
    }


def run_replica(config: ExperimentConfig, system: DissipativeSystem, op: ObservationOperator,
                covariance: Optional[CovarianceOperator], truth: TruthTrajectory, replica: int) -> ReplicaOutcome:
    """One filter run on its own observation-noise realisation; failures become fault records."""
    run = None
    fault = None
    try:
        path = build_path(config, op, truth.states, truth.dt, replica, t_start=float(truth.times[0]))
        filt = build_filter(config, system, op, covariance)
        initial = build_initial(config, system, truth.states[0], replica)
        run = filt.run(initial, path, record_every=config.time.record_every)
        if run.diverged:
            fault = ReplicaFault(
                fault_type="DIVERGED",
                replica=replica,
                step=run.divergence["step"],
                message=f"|m| = {run.divergence['norm']:.3e} exceeded {run.divergence['threshold']:.3e}",
            )
    except StepRejectedError as e:
        fault = ReplicaFault(fault_type="STEP_REJECTED", replica=replica, step=e.step, message=str(e)[:300])
    except AnalysisError as e:
        fault = ReplicaFault(fault_type="ANALYSIS_ERROR", replica=replica, message=str(e)[:300])
    except Exception as e:
        fault = ReplicaFault(fault_type="SYSTEM_ERROR", replica=replica, message=f"{type(e).__name__}: {str(e)[:300]}")

    if fault is not None:
        logger.warning(f"replica {replica}: {fault.fault_type} ({fault.message})")
    else:
        logger.info(f"replica {replica}: {run.steps_completed} steps, final err_H2={run.series['err_H2'][-1]:.4e}")
    return ReplicaOutcome(replica=replica, run=run, fault=fault)


async def node_assimilate(state: ExperimentState) -> Dict:
    """Runs the R replicas in a bounded worker pool."""
    config = state["config"]
    semaphore = asyncio.Semaphore(config.threads)

    async def run_one(replica: int) -> ReplicaOutcome:
        async with semaphore:
            return await asyncio.to_thread(
                run_replica, config, state["system"], state["op"], state["covariance"], state["truth"], replica
            )

    tasks = [run_one(r) for r in range(config.replicas)]
    outcomes = await asyncio.gather(*tasks)

    return {
        "outcomes": sorted(outcomes, key=lambda o: o.replica),
        "timestamps": _stamp(state, "assimilate_done"),
    }


async def node_diagnose(state: ExperimentState) -> Dict:
    """Deterministically aggregates replicas against the bound."""
    outcomes = state["outcomes"]
    report = state.get("bound_report")
    estimate = ReplicaAggregator.aggregate(outcomes, report, nu=state["system"].nu)
    status = ReplicaAggregator.status(outcomes, report, estimate)
    persistence.write_series(Path(state["run_dir"]), ReplicaAggregator.series_frame(outcomes))
    return {
        "estimate": estimate,
        "final_status": status,
        "timestamps": _stamp(state, "diagnose_done"),
    }


def _damping_meta(outcomes: List[ReplicaOutcome]) -> Dict[str, Any]:
    values = [o.run.series["damping"] for o in outcomes if o.run is not None and "damping" in o.run.series]
    if not values:
        return {}
    stacked = np.concatenate(values)
    return {"damping_max": float(np.max(stacked)), "damping_nonpositive": bool(np.all(stacked <= 0.0))}


async def node_finalize(state: ExperimentState) -> Dict:
    """Packages the summary and manifest."""
    config = state["config"]
    status = state.get("final_status") or RunStatus.SYSTEM_ERROR
    report = state.get("bound_report")
    outcomes = state.get("outcomes") or []

    meta: Dict[str, Any] = {
        "overrides": state.get("overrides", {}),
        "dt": config.time.dt,
        "horizon": config.time.horizon,
        "n_steps": config.time.n_steps,
        "replicas": config.replicas,
        **_damping_meta(outcomes),
    }
    if state.get("op") is not None:
        meta["operator"] = state["op"].describe()
    if state.get("error"):
        meta["error"] = state["error"]

    summary = RunSummary(
        run_id=state["run_id"],
        config_hash=state["config_hash"],
        label=config.label,
        status=status,
        exit_code=EXIT_CODES[status],
        system=config.system.kind,
        filter=config.filter.kind,
        guaranteed=bool(report and report.guaranteed),
        estimate=state.get("estimate") or EstimateSummary(),
        bound_report=report,
        spin_up=state.get("spin_up"),
        calibration=state.get("calibration"),
        replicas=ReplicaAggregator.replica_results(outcomes),
        meta=meta,
    )

    run_dir = Path(state["run_dir"])
    timestamps = _stamp(state, "end")
    persistence.write_summary(run_dir, summary)
    persistence.write_manifest(run_dir, run_id=state["run_id"], config_hash=state["config_hash"],
                               config=config, timestamps=timestamps)
    logger.info(f"run {state['run_id']} finished with {status.value} (exit {summary.exit_code})")
    return {"summary": summary, "final_status": status, "timestamps": timestamps}


def build_graph():
    workflow = StateGraph(ExperimentState)

    workflow.add_node("spin_up", node_spin_up)
    workflow.add_node("observe", node_observe)
    workflow.add_node("calibrate", node_calibrate)
    workflow.add_node("assimilate", node_assimilate)
    workflow.add_node("diagnose", node_diagnose)
    workflow.add_node("finalize", node_finalize)

    workflow.set_entry_point("spin_up")

    def proceed_to(next_node: str):
        def route(state: ExperimentState) -> str:
            if state.get("error"):
                return "finalize"
            return next_node
        return route

    workflow.add_conditional_edges("spin_up", proceed_to("observe"), ["observe", "finalize"])
    workflow.add_conditional_edges("observe", proceed_to("calibrate"), ["calibrate", "finalize"])
    workflow.add_conditional_edges("calibrate", proceed_to("assimilate"), ["assimilate", "finalize"])
    workflow.add_edge("assimilate", "diagnose")
    workflow.add_edge("diagnose", "finalize")
    workflow.add_edge("finalize", END)

    return workflow.compile()


experiment_graph = build_graph()
