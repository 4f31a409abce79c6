from fastapi import APIRouter

from ...core.errors import UVEError
from ...models.dataset import SynthConfig
from ...models.jobs import SynthResponse
from ...services.synth_service import SynthService
from .errors import to_http


router = APIRouter(tags=["synth"])


synth_service = SynthService()


@router.post("/synth", response_model=SynthResponse)
def synthesize(payload: SynthConfig) -> SynthResponse:
    try:
        return synth_service.synthesize(payload)
    except UVEError as exc:
        raise to_http(exc) from exc
