"""Cross-step smoothing and aggregation of attention maps.

A denoising run walks the step index downward. At each step the fresh
attention probabilities are blended with the carried map from the previous
step (an exponential moving average with independent coefficients), and the
raw per-step maps are kept for later averaging and scoring.

Note the default coefficients sum to 1.02, so the blended map is *not*
row-normalized. Downstream region selection only compares values against
per-token max-relative thresholds, which are scale-invariant, so the excess
mass is harmless; the blend is therefore typed as an unnormalized
(LOGITS-kind) state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionState, MapKind


@dataclass(frozen=True)
class MomentumConfig:
    """Blend weights: ``alpha`` on the carried map, ``beta`` on the incoming."""

    alpha: float = 0.03
    beta: float = 0.99

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(
                f"coefficients must be >= 0, got alpha={self.alpha} beta={self.beta}"
            )


@dataclass
class TemporalState:
    """Mutable per-run state: owned by exactly one denoising loop.

    ``current_step`` is the step index the next incoming map belongs to;
    it decreases by one on every update. ``carried_map`` is the previous
    blend result, ``history`` the raw (pre-blend) per-step maps in arrival
    order.
    """

    current_step: int
    carried_map: AttentionState | None = None
    history: list[AttentionState] = field(default_factory=list)

    @classmethod
    def for_run(cls, num_steps: int) -> TemporalState:
        if num_steps < 1:
            raise ValueError(f"a run needs at least one step, got {num_steps}")
        return cls(current_step=num_steps - 1)


def momentum_update(
    state: TemporalState, incoming: AttentionState, config: MomentumConfig
) -> AttentionState:
    """Blend the incoming probability map with the carried map.

    The first update of a run has no predecessor and passes the incoming
    map through unchanged. The blend result becomes the new carried map;
    the raw incoming map is appended to the history.
    """
    if incoming.kind is not MapKind.PROBS:
        raise ValueError(f"expected a PROBS-kind state, got {incoming.kind.value}")
    if state.carried_map is not None:
        carried = state.carried_map
        if carried.shape != incoming.shape or carried.num_tokens != incoming.num_tokens:
            raise ValueError(
                f"incoming map is {incoming.shape.height}x{incoming.shape.width} "
                f"x {incoming.num_tokens}, carried map is "
                f"{carried.shape.height}x{carried.shape.width} x {carried.num_tokens}"
            )
        blended = AttentionState(
            shape=incoming.shape,
            kind=MapKind.LOGITS,
            values=config.alpha * carried.values + config.beta * incoming.values,
        )
    else:
        blended = incoming
    state.carried_map = blended
    state.history.append(incoming)
    state.current_step -= 1
    return blended


def averaged_map(state: TemporalState, token: int) -> np.ndarray:
    """Element-wise mean of the token's raw spatial maps across all steps."""
    if not state.history:
        raise ValueError("no steps recorded; cannot average an empty history")
    stacked = np.stack([entry.token_map(token) for entry in state.history])
    return stacked.mean(axis=0)


def top_fraction_score(spatial_map: np.ndarray, fraction: float = 0.25) -> float:
    """Mean of the largest ceil(fraction * N) values of the map."""
    flat = np.asarray(spatial_map, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        raise ValueError("cannot score an empty map")
    if not np.all(np.isfinite(flat)):
        raise ValueError("map contains non-finite entries")
    if not (0 < fraction <= 1):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    count = math.ceil(fraction * flat.size)
    top = np.sort(flat)[::-1][:count]
    return float(top.mean())
