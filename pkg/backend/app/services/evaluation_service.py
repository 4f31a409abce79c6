import logging
import uuid
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.errors import DatasetError
from ..integrations import frame_io
from ..integrations.reports import save_metrics
from ..ml.quality import evaluate_dataset
from ..models.jobs import EvaluateRequest, EvaluateResponse
from .store import store


logger = logging.getLogger(__name__)

BASELINE_NAME = "raw_input"


class EvaluationService:
    def evaluate(self, request: EvaluateRequest) -> EvaluateResponse:
        enhanced = frame_io.read_frames(request.enhanced_dir)
        gt = frame_io.read_frames(request.gt_dir) if request.gt_dir is not None else None

        videos: Dict[str, Tuple[List[np.ndarray], Optional[List[np.ndarray]]]] = {request.name: (enhanced, gt)}
        if request.baseline_dir is not None:
            if request.name == BASELINE_NAME:
                raise DatasetError(f"video name {BASELINE_NAME!r} is reserved for the baseline row")
            videos[BASELINE_NAME] = (frame_io.read_frames(request.baseline_dir), gt)

        metrics, table = evaluate_dataset(videos)
        if len(metrics) == 1:
            table = table[table["video"] != "mean"]
        json_path, csv_path = save_metrics(metrics, request.output_dir, table=table)

        response = EvaluateResponse(metrics=metrics, json_path=str(json_path), csv_path=str(csv_path))
        with store.lock:
            store.evaluations[uuid.uuid4().hex[:12]] = response
        logger.info("Wrote metrics for %d video(s) to %s", len(metrics), request.output_dir)
        return response
