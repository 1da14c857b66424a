"""Turn a region assignment into an additive attention mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionMask, GridShape
from .regions import RegionAssignment


@dataclass(frozen=True)
class MaskGenConfig:
    """Boost magnitude plus the grid resolutions masking applies to."""

    boost: float = 5.0
    masked_resolutions: frozenset[int] = frozenset({16})

    def __post_init__(self) -> None:
        if not (self.boost > 0) or not np.isfinite(self.boost):
            raise ValueError(f"boost must be a positive finite real, got {self.boost}")
        resolutions = frozenset(int(r) for r in self.masked_resolutions)
        if not resolutions:
            raise ValueError("masked_resolutions must be non-empty")
        if any(r < 1 for r in resolutions):
            raise ValueError("masked resolutions must be >= 1")
        object.__setattr__(self, "masked_resolutions", resolutions)


def build_mask(
    assignment: RegionAssignment,
    shape: GridShape,
    num_tokens: int,
    config: MaskGenConfig,
) -> AttentionMask:
    """Boost each assigned (pixel, token) cell; everything else stays zero.

    ``assignment.token_indices`` address columns of the full L-token mask,
    so non-picked tokens keep all-zero columns. Each cell is written at
    most once (regions are sets and token indices are unique), so setting
    rather than accumulating cannot double-boost.
    """
    values = np.zeros((shape.num_pixels, num_tokens))
    for token, region in zip(assignment.token_indices, assignment.regions):
        if not (0 <= token < num_tokens):
            raise ValueError(f"token index {token} out of range [0, {num_tokens})")
        for pixel in region:
            if not (0 <= pixel < shape.num_pixels):
                raise ValueError(
                    f"pixel index {pixel} out of range [0, {shape.num_pixels})"
                )
            values[pixel, token] = config.boost
    return AttentionMask(shape=shape, values=values)


def should_mask(shape: GridShape, config: MaskGenConfig) -> bool:
    """Masking applies only to square grids at a configured side length."""
    return shape.height == shape.width and shape.height in config.masked_resolutions
