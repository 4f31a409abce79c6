import threading
from collections import OrderedDict
from typing import Generic, Optional, TypeVar

from ..core.config import get_settings
from ..models.gradcheck import GradcheckReport
from ..models.jobs import EvaluateResponse, SynthResponse
from ..models.training import RunReport


K = TypeVar("K")
V = TypeVar("V")


class RecentResults(OrderedDict, Generic[K, V]):
    """Insertion-ordered mapping that drops its oldest entries beyond ``limit``."""

    def __init__(self, limit: int) -> None:
        super().__init__()
        self.limit = limit

    def __setitem__(self, key: K, value: V) -> None:
        if key in self:
            self.move_to_end(key)
        super().__setitem__(key, value)
        while len(self) > self.limit:
            self.popitem(last=False)


class InMemoryStore:
    def __init__(self, limit: Optional[int] = None) -> None:
        limit = limit or get_settings().store_limit
        self.lock = threading.Lock()
        self.runs: RecentResults[str, RunReport] = RecentResults(limit)
        self.datasets: RecentResults[str, SynthResponse] = RecentResults(limit)
        self.evaluations: RecentResults[str, EvaluateResponse] = RecentResults(limit)
        self.gradchecks: RecentResults[int, GradcheckReport] = RecentResults(limit)


store = InMemoryStore()
