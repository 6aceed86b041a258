"""Subpopulation label-flipping poisoning experiments across model capacities."""

__version__ = "0.1.0"

from .boundary import (RasterGrid, ShiftReport, boundary_shift, data_bbox, rasterize,
                       target_region)
from .errors import TrainingError, UnsupportedOperation, ValidationError
from .evaluation import (DamageReport, MatrixResult, collateral_damage, run_matrix,
                         summarize, summarize_models, target_damage)
from .ingestion import TabularSchema, load_tabular, load_tabular_split, split
from .learners import (LearnerConfig, TrainedModel, gradient_check, param_count, predict,
                       train)
from .mixture import ComponentSpec, Dataset, MixtureSpec, make_gaussian_benchmark, sample_dataset
from .poisoning import PoisonPlan, apply_label_flip, apply_plan, plan_attack, poison_budget
from .subgroups import (AnnotationSchema, Subgroup, component_schema, derive_subgroups,
                        with_component_annotations)
from .theory import (chernoff_success_bound, chernoff_tail_bound, estimate_delta,
                     simulate_theorem1, subpop_size_tail, target_mixture)

__all__ = [
    "AnnotationSchema", "ComponentSpec", "DamageReport", "Dataset", "LearnerConfig",
    "MatrixResult", "MixtureSpec", "PoisonPlan", "RasterGrid", "ShiftReport", "Subgroup",
    "TabularSchema", "TrainedModel", "TrainingError", "UnsupportedOperation", "ValidationError",
    "apply_label_flip", "apply_plan", "boundary_shift", "chernoff_success_bound",
    "chernoff_tail_bound", "collateral_damage", "component_schema", "data_bbox",
    "derive_subgroups", "estimate_delta", "gradient_check", "load_tabular", "load_tabular_split",
    "make_gaussian_benchmark", "param_count", "plan_attack", "poison_budget", "predict",
    "rasterize", "run_matrix", "sample_dataset", "simulate_theorem1", "split",
    "subpop_size_tail", "summarize", "summarize_models", "target_damage", "target_mixture",
    "target_region", "train", "with_component_annotations",
]
