import logging
from typing import List

import numpy as np

from ..engine.gradcheck import GradCase, GraphFn, op_cases, run_case
from ..engine.tensor import Tensor
from ..ml.uvenet import FrameWindow, UVENetParams, forward, init_params
from ..models.gradcheck import GradcheckReport, GradcheckResult
from ..models.network import Aggregation, ModelConfig
from .store import store


logger = logging.getLogger(__name__)

MODEL_TOLERANCE = 1e-3
MODEL_POINTS = 30

# two windows of three 16x16 frames; dims divisible by 16 so channel attention is exercised
MICRO_CONFIG = ModelConfig(
    num_frames=3,
    dims=[16, 32, 64, 128],
    depths=[1, 1, 1, 1],
    shift_len=1,
    aggregation=Aggregation.dsc_ca,
    decoder_dim=8,
    grm_dim=8,
)


def micro_model_case(config: ModelConfig = MICRO_CONFIG, batch: int = 2, size: int = 16) -> GradCase:
    def build(rng: np.random.Generator) -> tuple[GraphFn, List[Tensor]]:
        params = init_params(config, seed=int(rng.integers(2**31))).requires_grad_(True)
        window = FrameWindow(rng.uniform(0.0, 1.0, size=(batch, config.num_frames, 3, size, size)))
        names = list(params)

        def fn(*tensors: Tensor) -> Tensor:
            return forward(window, UVENetParams(dict(zip(names, tensors))), config)

        return fn, [params[n] for n in names]

    return GradCase("uvenet_micro", build, tolerance=MODEL_TOLERANCE, n_points=MODEL_POINTS, per_input=False)


class GradcheckService:
    def cases(self, include_model: bool = True) -> List[GradCase]:
        cases = op_cases()
        if include_model:
            cases.append(micro_model_case())
        return cases

    def run(self, seed: int = 0, include_model: bool = True) -> GradcheckReport:
        results = []
        for case in self.cases(include_model):
            worst = run_case(case, seed)
            passed = worst < case.tolerance
            results.append(GradcheckResult(name=case.name, worst_rel_error=worst, tolerance=case.tolerance, passed=passed))
            log = logger.info if passed else logger.warning
            log("gradcheck %-20s worst rel err %.3e (tol %.0e) %s", case.name, worst, case.tolerance, "ok" if passed else "FAIL")

        report = GradcheckReport(seed=seed, results=results)
        with store.lock:
            store.gradchecks[seed] = report
        return report
