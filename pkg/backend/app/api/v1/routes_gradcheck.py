from fastapi import APIRouter

from ...models.gradcheck import GradcheckReport
from ...models.jobs import GradcheckRequest
from ...services.gradcheck_service import GradcheckService


router = APIRouter(tags=["gradcheck"])


gradcheck_service = GradcheckService()


@router.post("/gradcheck", response_model=GradcheckReport)
def gradcheck(payload: GradcheckRequest) -> GradcheckReport:
    return gradcheck_service.run(seed=payload.seed, include_model=payload.include_model)
