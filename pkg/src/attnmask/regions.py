"""Per-token region selection with a cross-token overlap penalty.

Each picked token gets a pixel region drawn from its "eligible" set (pixels
at or above a fraction of the token's maximum attention value). Regions are
chosen to maximize total captured attention mass minus a penalty on mass
sitting in other tokens' regions.

Two solvers are provided:

* ``solve_regions_approx`` maximizes a decoupled surrogate in which the
  penalty counts overlap against the *eligible* sets rather than the chosen
  regions. The surrogate decomposes per pixel, so the maximizer is a
  closed-form inclusion rule evaluated in O(S*N).
* ``solve_regions_exact`` exhaustively maximizes the coupled objective on
  small instances. It exists to verify the surrogate, not to be fast.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np


class EnumerationLimitError(ValueError):
    """Instance too large for the exhaustive solver."""


MAX_EXACT_TOKENS = 3
MAX_EXACT_ELIGIBLE = 8


@dataclass(frozen=True)
class RegionSelectionConfig:
    """Knobs for eligibility and the overlap penalty.

    ``threshold_ratio`` sets each token's eligibility floor at
    ratio * max(map). ``top_k``, when set, additionally caps the eligible
    set at the k largest values (ties broken toward lower pixel index).
    """

    overlap_penalty: float = 0.5
    threshold_ratio: float = 0.5
    top_k: int | None = None

    def __post_init__(self) -> None:
        if self.overlap_penalty < 0:
            raise ValueError(f"overlap penalty must be >= 0, got {self.overlap_penalty}")
        if not (0 < self.threshold_ratio <= 1):
            raise ValueError(
                f"threshold ratio must lie in (0, 1], got {self.threshold_ratio}"
            )
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top_k must be >= 1 when set, got {self.top_k}")


@dataclass(frozen=True)
class RegionAssignment:
    """Selected regions per token, alongside the eligible sets they came from."""

    token_indices: tuple[int, ...]
    regions: tuple[frozenset[int], ...]
    approx_regions: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if not (len(self.token_indices) == len(self.regions) == len(self.approx_regions)):
            raise ValueError("token_indices, regions and approx_regions lengths differ")
        if len(set(self.token_indices)) != len(self.token_indices):
            raise ValueError("token indices must be unique")
        for token, region, approx in zip(
            self.token_indices, self.regions, self.approx_regions
        ):
            if not region <= approx:
                raise ValueError(
                    f"region for token {token} is not contained in its eligible set"
                )

    @property
    def num_tokens(self) -> int:
        return len(self.token_indices)


def _flatten(spatial_map: np.ndarray) -> np.ndarray:
    flat = np.asarray(spatial_map, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(flat)):
        raise ValueError("attention map contains non-finite entries")
    return flat


def eligible_pixels(
    smoothed_map: np.ndarray, config: RegionSelectionConfig
) -> frozenset[int]:
    """Pixels at or above threshold_ratio times the map maximum.

    Returns the empty set for an all-zero map (a degenerate token). With a
    positive maximum the argmax always qualifies, so the result is never
    empty. ``top_k`` keeps only the k largest, lower index winning ties.
    """
    flat = _flatten(smoothed_map)
    peak = flat.max()
    if peak <= 0.0:
        return frozenset()
    tau = config.threshold_ratio * peak
    eligible = np.flatnonzero(flat >= tau)
    if config.top_k is not None and eligible.size > config.top_k:
        ranked = sorted(eligible.tolist(), key=lambda p: (-flat[p], p))
        eligible = ranked[: config.top_k]
    return frozenset(int(p) for p in eligible)


def objective_exact(
    candidate: RegionAssignment,
    maps: Sequence[np.ndarray],
    overlap_penalty: float,
) -> float:
    """Coupled objective: region mass minus penalized pairwise-overlap mass.

    The overlap term runs over ordered pairs i != j and charges the owning
    token's values over the intersection. Pure evaluation; no feasibility
    checks beyond shapes.
    """
    if len(maps) != candidate.num_tokens:
        raise ValueError(
            f"{len(maps)} maps for {candidate.num_tokens} assigned tokens"
        )
    flats = [_flatten(m) for m in maps]
    gain = sum(
        float(flats[i][sorted(region)].sum()) if region else 0.0
        for i, region in enumerate(candidate.regions)
    )
    penalty = 0.0
    for i, j in combinations(range(candidate.num_tokens), 2):
        shared = candidate.regions[i] & candidate.regions[j]
        if shared:
            idx = sorted(shared)
            penalty += float(flats[i][idx].sum()) + float(flats[j][idx].sum())
    return gain - overlap_penalty * penalty


def objective_surrogate(
    candidate: RegionAssignment,
    maps: Sequence[np.ndarray],
    overlap_penalty: float,
) -> float:
    """Decoupled objective: the penalty counts overlap with eligible sets."""
    if len(maps) != candidate.num_tokens:
        raise ValueError(
            f"{len(maps)} maps for {candidate.num_tokens} assigned tokens"
        )
    flats = [_flatten(m) for m in maps]
    total = 0.0
    for i, region in enumerate(candidate.regions):
        for p in region:
            others = sum(
                1
                for j in range(candidate.num_tokens)
                if j != i and p in candidate.approx_regions[j]
            )
            total += flats[i][p] * (1.0 - overlap_penalty * others)
    return total


def solve_regions_approx(
    maps: Sequence[np.ndarray],
    config: RegionSelectionConfig,
    token_indices: Sequence[int] | None = None,
) -> RegionAssignment:
    """Maximize the decoupled surrogate objective.

    A pixel joins token i's region iff it is eligible for i and its value,
    discounted by overlap_penalty per *other* eligible set containing it,
    stays strictly positive. Zero-gain pixels are excluded for determinism.
    """
    flats = [_flatten(m) for m in maps]
    if token_indices is None:
        token_indices = range(len(maps))
    approx_sets = [eligible_pixels(m, config) for m in maps]
    num_pixels = flats[0].shape[0] if flats else 0
    membership = np.zeros(num_pixels, dtype=np.int64)
    for eligible in approx_sets:
        for p in eligible:
            membership[p] += 1
    regions = []
    for flat, eligible in zip(flats, approx_sets):
        region = frozenset(
            p
            for p in eligible
            if flat[p] * (1.0 - config.overlap_penalty * (membership[p] - 1)) > 0.0
        )
        regions.append(region)
    return RegionAssignment(
        token_indices=tuple(int(t) for t in token_indices),
        regions=tuple(regions),
        approx_regions=tuple(approx_sets),
    )


def _subsets_in_encoding_order(pixels: frozenset[int]) -> list[tuple[int, ...]]:
    """All subsets as sorted tuples, ordered lexicographically."""
    ordered = sorted(pixels)
    subsets: list[tuple[int, ...]] = [()]
    for size in range(1, len(ordered) + 1):
        subsets.extend(combinations(ordered, size))
    return sorted(subsets)


def solve_regions_exact(
    maps: Sequence[np.ndarray],
    config: RegionSelectionConfig,
    token_indices: Sequence[int] | None = None,
) -> RegionAssignment:
    """Exhaustively maximize the coupled objective over feasible regions.

    Feasible regions are subsets of each token's eligible set. Bounded to
    MAX_EXACT_TOKENS tokens and MAX_EXACT_ELIGIBLE eligible pixels per
    token; larger instances raise EnumerationLimitError. Ties are broken
    toward the lexicographically smallest tuple-of-sorted-pixel-tuples.
    """
    flats = [_flatten(m) for m in maps]
    if token_indices is None:
        token_indices = range(len(maps))
    if len(flats) > MAX_EXACT_TOKENS:
        raise EnumerationLimitError(
            f"{len(flats)} tokens exceeds the exhaustive bound of {MAX_EXACT_TOKENS}"
        )
    approx_sets = [eligible_pixels(m, config) for m in maps]
    for token, eligible in zip(token_indices, approx_sets):
        if len(eligible) > MAX_EXACT_ELIGIBLE:
            raise EnumerationLimitError(
                f"token {token} has {len(eligible)} eligible pixels, "
                f"exhaustive bound is {MAX_EXACT_ELIGIBLE}"
            )
    if not flats:
        return RegionAssignment(token_indices=(), regions=(), approx_regions=())

    subset_lists = [_subsets_in_encoding_order(s) for s in approx_sets]
    union_pixels = sorted(set().union(*approx_sets)) if approx_sets else []
    pixel_pos = {p: k for k, p in enumerate(union_pixels)}
    # Boolean membership matrix per token: one row per candidate subset.
    members = []
    masses = []
    for flat, subsets in zip(flats, subset_lists):
        mat = np.zeros((len(subsets), len(union_pixels)), dtype=np.float64)
        for row, subset in enumerate(subsets):
            for p in subset:
                mat[row, pixel_pos[p]] = 1.0
        members.append(mat)
        values = flat[union_pixels] if union_pixels else np.zeros(0)
        masses.append(mat @ values)

    count = len(flats)
    grid = [len(s) for s in subset_lists]
    objective = np.zeros(grid, dtype=np.float64)
    for i in range(count):
        axis = [1] * count
        axis[i] = grid[i]
        objective += masses[i].reshape(axis)
    penalty_weight = config.overlap_penalty
    if penalty_weight != 0.0:
        for i in range(count):
            weighted = members[i] * (
                flats[i][union_pixels] if union_pixels else np.zeros(0)
            )
            for j in range(count):
                if i == j:
                    continue
                # Sum of token i's values over R_i intersect R_j.
                pair = weighted @ members[j].T
                axis = [1] * count
                axis[i] = grid[i]
                axis[j] = grid[j]
                objective -= penalty_weight * pair.reshape(axis)

    best_flat = int(np.argmax(objective))
    best = np.unravel_index(best_flat, grid)
    regions = tuple(
        frozenset(subset_lists[i][best[i]]) for i in range(count)
    )
    return RegionAssignment(
        token_indices=tuple(int(t) for t in token_indices),
        regions=regions,
        approx_regions=tuple(approx_sets),
    )
