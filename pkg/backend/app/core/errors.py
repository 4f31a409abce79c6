from __future__ import annotations


class UVEError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(UVEError, ValueError):
    pass


class NonFiniteError(UVEError, FloatingPointError):
    def __init__(self, op: str, detail: str = "") -> None:
        self.op = op
        message = f"{op} produced non-finite values"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class CheckpointError(UVEError):
    def __init__(self, path: str, reason: str, offset: int | None = None) -> None:
        self.path = path
        self.reason = reason
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"Cannot load checkpoint {path}{where}: {reason}")


class DepthFillError(UVEError, ValueError):
    pass


class DatasetError(UVEError, ValueError):
    pass


class TrainingError(UVEError, RuntimeError):
    pass
