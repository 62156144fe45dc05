from .ablation import (
    ablation_prompt_reduction,
    ablation_tilt_reduction,
    evaluate_on_scenes,
    module_grid,
    reduce_prompts,
    reduce_stack,
    run_inference,
    subsample_schedule,
)
from .metrics import (
    EvalConfig,
    EvalReport,
    average_precision,
    detections_to_pixels,
    evaluate_detections,
    evaluate_pairs,
    match_detections,
)

__all__ = [
    "EvalConfig",
    "EvalReport",
    "ablation_prompt_reduction",
    "ablation_tilt_reduction",
    "average_precision",
    "detections_to_pixels",
    "evaluate_detections",
    "evaluate_pairs",
    "evaluate_on_scenes",
    "match_detections",
    "module_grid",
    "reduce_prompts",
    "reduce_stack",
    "run_inference",
    "subsample_schedule",
]
