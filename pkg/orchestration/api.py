from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from core.errors import ConfigurationError, DAError
from core.schemas import BoundInputs, BoundKind, BoundReport, ExperimentConfig, RunSummary
from diagnostics.bounds import check_conditions
from orchestration.experiment_run import run_twin_experiment

app = FastAPI(title="Data Assimilation Experiment API")


class BoundsRequest(BaseModel):
    kind: BoundKind
    inputs: BoundInputs


@app.post("/bounds", response_model=BoundReport)
async def bounds_endpoint(payload: BoundsRequest):
    try:
        return check_conditions(payload.kind, payload.inputs)
    except DAError as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.post("/run", response_model=RunSummary)
async def run_endpoint(config: ExperimentConfig):
    try:
        return await run_twin_experiment(config)
    except ConfigurationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/health")
async def health_check():
    return {"status": "ok"}
