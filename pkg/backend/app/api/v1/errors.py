from fastapi import HTTPException, status

from ...core.errors import NonFiniteError, TrainingError, UVEError


def to_http(exc: UVEError) -> HTTPException:
    if isinstance(exc, (TrainingError, NonFiniteError)):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    else:
        code = status.HTTP_400_BAD_REQUEST
    return HTTPException(status_code=code, detail=str(exc))
