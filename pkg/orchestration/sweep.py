"""
One-parameter sweeps: one run directory per value under <out>/<label>_<param>/.

For ensemble filters the additive inflation may be given relative to the
calibrated threshold ("threshold", "2*threshold").
"""
import asyncio
import logging
import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from core.errors import ConfigurationError
from core.schemas import BoundKind, ExperimentConfig, FilterKind, RunSummary
from diagnostics.bounds import build_bound_inputs, inflation_threshold
from diagnostics.calibration import calibrate_constants
from orchestration import persistence
from orchestration.builders import build_operator, build_system
from orchestration.config import ALIASES, apply_override, parse_value
from orchestration.experiment_run import run_twin_experiment
from orchestration.graph import spin_up_truth

logger = logging.getLogger("sweep")

THRESHOLD_PATTERN = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*[*x]\s*)?threshold\s*$")


def threshold_for(config: ExperimentConfig) -> float:
    """Calibrated additive-inflation threshold c_L^2 sigma^2 M_u^2 / (w nu) of an ensemble config."""
    if config.filter.kind not in (FilterKind.ENKF, FilterKind.ENSRKF):
        raise ConfigurationError("the inflation threshold is defined for EnKF and EnSRKF only")
    system = build_system(config)
    truth, spin = spin_up_truth(config, system)
    op = build_operator(config, system)
    calibration = calibrate_constants(system, op, config.calibration_corpus, config.seeds.truth)
    inputs = build_bound_inputs(system, op, config.filter, config.observation.sigma, calibration, spin.M_u)
    value = inflation_threshold(BoundKind(config.filter.kind.value), inputs)
    logger.info(f"inflation threshold for {config.label}: {value:.6g}")
    return value


def resolve_values(config: ExperimentConfig, param: str, raw: Sequence[str]) -> List[Any]:
    values: List[Any] = []
    threshold: Optional[float] = None
    for text in raw:
        match = THRESHOLD_PATTERN.match(str(text))
        if match:
            if ALIASES.get(param, param) != ALIASES["mu"]:
                raise ConfigurationError("'threshold' values are only meaningful for the mu parameter")
            if threshold is None:
                threshold = threshold_for(config)
            values.append(float(match.group(1) or 1.0) * threshold)
        else:
            values.append(parse_value(str(text)))
    return values


def cell_name(param: str, raw: str) -> str:
    return f"{param}_{str(raw).strip().replace('*', 'x').replace('/', '_')}"


async def run_sweep(
    config: ExperimentConfig,
    param: str,
    raw_values: Sequence[str],
    *,
    out: Optional[str] = None,
    progress_callback: Optional[Callable[[Dict], None]] = None,
) -> List[Tuple[str, RunSummary]]:
    """Run one experiment per value; cells are independent and run sequentially."""
    values = resolve_values(config, param, raw_values)
    root = Path(out or config.output_dir) / f"{config.label}_{param}"
    root.mkdir(parents=True, exist_ok=True)

    results: List[Tuple[str, RunSummary]] = []
    for raw, value in zip(raw_values, values):
        cell = apply_override(config, param, value)
        cell = apply_override(cell, "label", f"{config.label}[{param}={raw}]")
        logger.info(f"sweep cell {param}={value}")
        summary = await run_twin_experiment(
            cell,
            run_dir=root / cell_name(param, raw),
            overrides={param: value},
            progress_callback=progress_callback,
        )
        results.append((str(raw), summary))

    table = persistence.summaries_table(root)
    if not table.empty:
        table.to_csv(root / "sweep.csv", index=False)
    return results


def run_sweep_sync(config: ExperimentConfig, param: str, raw_values: Sequence[str], **kwargs):
    return asyncio.run(run_sweep(config, param, raw_values, **kwargs))


def monotone_decreasing(results: List[Tuple[str, RunSummary]], key: str = "limsup") -> bool:
    """True when the chosen estimate strictly decreases along the sweep order."""
    series = []
    for _, summary in results:
        est = summary.estimate
        value = getattr(est, key)
        if value is None:
            value = est.tail_mean
        series.append(value)
    return all(b < a for a, b in zip(series, series[1:]))
