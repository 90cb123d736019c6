import logging
from typing import Any, Dict, Optional

from fastapi import APIRouter, Body, HTTPException
from fastapi.concurrency import run_in_threadpool

from app.core.config import settings
from app.lab.bootstrap import get_registry
from app.lab.models import ExperimentResponse
from app.lab.registry import ExperimentNotFoundError

logger = logging.getLogger(__name__)
router = APIRouter()


@router.get("/health")
def health_check() -> dict:
    return {
        "app": settings.app_name,
        "version": settings.version,
        "status": "ok",
    }


@router.get("/lab/experiments")
def list_experiments(suite: Optional[str] = None) -> dict:
    experiments = get_registry().list_experiments(suite)
    return {"count": len(experiments), "experiments": experiments}


@router.post("/lab/run/{name}", response_model=ExperimentResponse)
async def run_experiment(name: str, params: Optional[Dict[str, Any]] = Body(default=None)) -> ExperimentResponse:
    registry = get_registry()
    try:
        experiment = registry.get(name)
    except ExperimentNotFoundError as exc:
        logger.warning(f"Unknown experiment requested: {name}")
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    logger.info(f"Running {name} over HTTP with {params or {}}")
    return await run_in_threadpool(lambda: experiment.run(**(params or {})))
