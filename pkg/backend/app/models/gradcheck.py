from __future__ import annotations

from typing import List

from pydantic import BaseModel, computed_field


class GradcheckResult(BaseModel):
    name: str
    worst_rel_error: float
    tolerance: float
    passed: bool


class GradcheckReport(BaseModel):
    seed: int
    results: List[GradcheckResult]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def failures(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def format_table(self) -> str:
        lines = [f"{'op':<22} {'worst rel err':>14} {'tol':>8}  status"]
        for r in self.results:
            lines.append(f"{r.name:<22} {r.worst_rel_error:>14.3e} {r.tolerance:>8.0e}  {'ok' if r.passed else 'FAIL'}")
        return "\n".join(lines)
