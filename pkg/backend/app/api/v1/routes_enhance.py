from fastapi import APIRouter, HTTPException, status

from ...core.errors import UVEError
from ...models.jobs import EnhanceRequest, EnhanceResponse
from ...services.enhance_service import EnhanceService
from .errors import to_http


router = APIRouter(tags=["enhance"])


enhance_service = EnhanceService()


@router.post("/enhance", response_model=EnhanceResponse)
def enhance(payload: EnhanceRequest) -> EnhanceResponse:
    if not payload.checkpoint_path.exists():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"No checkpoint at {payload.checkpoint_path}")
    try:
        return enhance_service.enhance(payload)
    except UVEError as exc:
        raise to_http(exc) from exc
