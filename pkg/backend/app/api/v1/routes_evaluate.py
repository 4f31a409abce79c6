from fastapi import APIRouter, HTTPException, status

from ...core.errors import UVEError
from ...models.jobs import EvaluateRequest, EvaluateResponse
from ...services.evaluation_service import EvaluationService
from .errors import to_http


router = APIRouter(tags=["evaluate"])


evaluation_service = EvaluationService()


@router.post("/evaluate", response_model=EvaluateResponse)
def evaluate(payload: EvaluateRequest) -> EvaluateResponse:
    for directory in (payload.enhanced_dir, payload.gt_dir, payload.baseline_dir):
        if directory is not None and not directory.is_dir():
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"No frame directory at {directory}")
    try:
        return evaluation_service.evaluate(payload)
    except UVEError as exc:
        raise to_http(exc) from exc
