"""Adaptive cross-attention masking with a synthetic failure-mode harness."""

from .attention import (
    AttentionMask,
    AttentionState,
    GridShape,
    MapKind,
    PromptEmbedding,
    ProjectionSet,
    attend,
    compute_logits,
    masked_softmax,
    zero_mask,
)
from .harness import (
    Archetype,
    ClassifierConfig,
    FailureVerdict,
    PickedToken,
    PipelineConfig,
    RunReport,
    ScenarioSpec,
    ScenarioToken,
    StepRecord,
    TokenSelection,
    archetype_preset,
    classify_failures,
    disc_zone,
    drifting_preset,
    generate_scenario,
    preset_subject,
    run_pipeline,
)
from .maskgen import MaskGenConfig, build_mask, should_mask
from .regions import (
    EnumerationLimitError,
    RegionAssignment,
    RegionSelectionConfig,
    eligible_pixels,
    objective_exact,
    objective_surrogate,
    solve_regions_approx,
    solve_regions_exact,
)
from .smoothing import GaussianKernelSpec, smooth_map
from .temporal import (
    MomentumConfig,
    TemporalState,
    averaged_map,
    momentum_update,
    top_fraction_score,
)

__all__ = [
    "Archetype",
    "AttentionMask",
    "AttentionState",
    "ClassifierConfig",
    "EnumerationLimitError",
    "FailureVerdict",
    "GaussianKernelSpec",
    "GridShape",
    "MapKind",
    "MaskGenConfig",
    "MomentumConfig",
    "PickedToken",
    "PipelineConfig",
    "ProjectionSet",
    "PromptEmbedding",
    "RegionAssignment",
    "RegionSelectionConfig",
    "RunReport",
    "ScenarioSpec",
    "ScenarioToken",
    "StepRecord",
    "TemporalState",
    "TokenSelection",
    "archetype_preset",
    "attend",
    "averaged_map",
    "build_mask",
    "classify_failures",
    "compute_logits",
    "disc_zone",
    "drifting_preset",
    "eligible_pixels",
    "generate_scenario",
    "masked_softmax",
    "momentum_update",
    "objective_exact",
    "objective_surrogate",
    "preset_subject",
    "run_pipeline",
    "should_mask",
    "smooth_map",
    "solve_regions_approx",
    "solve_regions_exact",
    "top_fraction_score",
    "zero_mask",
]

__version__ = "0.1.0"
