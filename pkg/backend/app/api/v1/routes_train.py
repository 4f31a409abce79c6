from typing import List

from fastapi import APIRouter, HTTPException, status

from ...core.errors import UVEError
from ...models.training import RunReport, TrainConfig
from ...services.store import store
from ...services.training_service import TrainingService
from .errors import to_http


router = APIRouter(tags=["train"])


training_service = TrainingService()


@router.post("/train", response_model=RunReport)
def train(payload: TrainConfig) -> RunReport:
    try:
        return training_service.train(payload)
    except UVEError as exc:
        raise to_http(exc) from exc


@router.get("/runs", response_model=List[str])
async def list_runs() -> List[str]:
    return sorted(store.runs)


@router.get("/runs/{run_id}", response_model=RunReport)
async def get_run(run_id: str) -> RunReport:
    report = store.runs.get(run_id)
    if report is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown run {run_id}")
    return report
