"""Core cross-attention tensor types and the masked attention forward pass.

The central object is the attention map: an N x L matrix linking N spatial
pixels (queries) to L prompt tokens (keys/values). Maps exist in two kinds,
raw similarity scores ("logits") and row-normalized weights
("probabilities"), and an optional additive mask can be injected between
the two.

All values are float64 and immutable after construction; every operation
here is a pure function, safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class MapKind(Enum):
    """Whether an attention map holds raw scores or normalized weights."""

    LOGITS = "LOGITS"
    PROBS = "PROBS"


PROB_ROW_SUM_TOL = 1e-9


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    """Copy to a C-contiguous read-only float64 array."""
    arr = np.array(values, dtype=dtype, order="C")
    arr.setflags(write=False)
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class GridShape:
    """Square-or-rectangular spatial grid; pixels are indexed row-major."""

    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError(
                f"grid dimensions must be >= 1, got {self.height}x{self.width}"
            )

    @property
    def num_pixels(self) -> int:
        return self.height * self.width

    def flat_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise ValueError(f"({row}, {col}) outside {self.height}x{self.width} grid")
        return row * self.width + col


@dataclass(frozen=True)
class PromptEmbedding:
    """Encoded prompt: one D-dimensional row per token, plus display labels."""

    tokens: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        tokens = _frozen_array(self.tokens)
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] < 1:
            raise ValueError(f"token matrix must be L x D with L,D >= 1, got {tokens.shape}")
        _require_finite(tokens, "prompt embedding")
        labels = tuple(self.labels)
        if len(labels) != tokens.shape[0]:
            raise ValueError(
                f"{len(labels)} labels for {tokens.shape[0]} token rows"
            )
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "labels", labels)

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]


@dataclass(frozen=True)
class ProjectionSet:
    """Query/key/value projection matrices, each D x D."""

    q_weights: np.ndarray
    k_weights: np.ndarray
    v_weights: np.ndarray

    def __post_init__(self) -> None:
        mats = {}
        dim = None
        for name in ("q_weights", "k_weights", "v_weights"):
            mat = _frozen_array(getattr(self, name))
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square, got {mat.shape}")
            _require_finite(mat, name)
            if dim is None:
                dim = mat.shape[0]
            elif mat.shape[0] != dim:
                raise ValueError("projection matrices disagree on dimension")
            mats[name] = mat
        for name, mat in mats.items():
            object.__setattr__(self, name, mat)

    @property
    def dim(self) -> int:
        return self.q_weights.shape[0]


@dataclass(frozen=True)
class AttentionState:
    """An N x L attention map on a spatial grid.

    Column ``i`` reshaped to ``shape`` is token i's spatial map. When
    ``kind`` is PROBS, each row is validated as a probability distribution
    (non-negative, summing to 1 within ``PROB_ROW_SUM_TOL``). LOGITS-kind
    states carry arbitrary finite real values and are also used for
    unnormalized score maps (e.g. momentum blends of probability maps).
    """

    shape: GridShape
    kind: MapKind
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise ValueError(f"attention values must be 2-D, got ndim={values.ndim}")
        if values.shape[0] != self.shape.num_pixels:
            raise ValueError(
                f"{values.shape[0]} rows for a {self.shape.height}x{self.shape.width} "
                f"grid ({self.shape.num_pixels} pixels)"
            )
        if values.shape[1] < 1:
            raise ValueError("attention map needs at least one token column")
        _require_finite(values, "attention map")
        if self.kind is MapKind.PROBS:
            if np.any(values < 0):
                raise ValueError("probability map has negative entries")
            row_sums = values.sum(axis=1)
            if np.any(np.abs(row_sums - 1.0) > PROB_ROW_SUM_TOL):
                worst = float(np.max(np.abs(row_sums - 1.0)))
                raise ValueError(
                    f"probability rows must sum to 1 within {PROB_ROW_SUM_TOL}, "
                    f"worst deviation {worst:g}"
                )
        object.__setattr__(self, "values", values)

    @property
    def num_tokens(self) -> int:
        return self.values.shape[1]

    def token_map(self, token: int) -> np.ndarray:
        """Token ``token``'s spatial map as a height x width array."""
        if not (0 <= token < self.num_tokens):
            raise ValueError(f"token index {token} out of range [0, {self.num_tokens})")
        return self.values[:, token].reshape(self.shape.height, self.shape.width)


@dataclass(frozen=True)
class AttentionMask:
    """Additive N x L logit offsets: every entry is 0 or one shared boost."""

    shape: GridShape
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen_array(self.values)
        if values.ndim != 2 or values.shape[0] != self.shape.num_pixels:
            raise ValueError(
                f"mask must be {self.shape.num_pixels} x L, got {values.shape}"
            )
        _require_finite(values, "attention mask")
        nonzero = np.unique(values[values != 0.0])
        if nonzero.size > 1:
            raise ValueError(
                f"mask entries must share a single boost value, found {nonzero.size}"
            )
        if nonzero.size == 1 and nonzero[0] <= 0:
            raise ValueError(f"mask boost must be positive, got {nonzero[0]}")
        object.__setattr__(self, "values", values)

    @property
    def num_tokens(self) -> int:
        return self.values.shape[1]

    @property
    def num_boosted(self) -> int:
        return int(np.count_nonzero(self.values))


def zero_mask(shape: GridShape, num_tokens: int) -> AttentionMask:
    """The identity mask (all zeros)."""
    return AttentionMask(shape, np.zeros((shape.num_pixels, num_tokens)))


def compute_logits(
    latent: np.ndarray, prompt: PromptEmbedding, proj: ProjectionSet, shape: GridShape
) -> AttentionState:
    """Similarity scores between image features and prompt tokens.

    Args:
        latent: N x D spatial feature matrix (N = shape pixels).
        prompt: the encoded prompt providing the key side.
        proj: query/key projections; dimension must match ``latent`` columns.
        shape: spatial grid the N rows live on.

    Returns:
        A LOGITS-kind state holding (latent Wq)(prompt Wk)^T / sqrt(D).
    """
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2:
        raise ValueError(f"latent must be 2-D, got ndim={latent.ndim}")
    if latent.shape[0] != shape.num_pixels:
        raise ValueError(
            f"latent has {latent.shape[0]} rows, grid has {shape.num_pixels} pixels"
        )
    dim = latent.shape[1]
    if dim != prompt.dim or dim != proj.dim:
        raise ValueError(
            f"dimension mismatch: latent D={dim}, prompt D={prompt.dim}, "
            f"projections D={proj.dim}"
        )
    _require_finite(latent, "latent")
    queries = latent @ proj.q_weights
    keys = prompt.tokens @ proj.k_weights
    logits = (queries @ keys.T) / math.sqrt(dim)
    return AttentionState(shape=shape, kind=MapKind.LOGITS, values=logits)


def masked_softmax(
    logits: AttentionState, mask: AttentionMask | None = None
) -> AttentionState:
    """Row-wise softmax of logits plus an optional additive mask.

    Stabilized by subtracting each row's maximum before exponentiation.
    A missing mask is treated as all-zero; passing an explicit zero mask
    produces bitwise-identical output to passing no mask.
    """
    if logits.kind is not MapKind.LOGITS:
        raise ValueError(f"expected a LOGITS-kind state, got {logits.kind.value}")
    if mask is not None:
        if mask.shape != logits.shape or mask.num_tokens != logits.num_tokens:
            raise ValueError(
                f"mask is {mask.shape.height}x{mask.shape.width} x {mask.num_tokens}, "
                f"logits are {logits.shape.height}x{logits.shape.width} "
                f"x {logits.num_tokens}"
            )
        scores = logits.values + mask.values
    else:
        scores = logits.values
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return AttentionState(shape=logits.shape, kind=MapKind.PROBS, values=probs)


def attend(
    probabilities: AttentionState, prompt: PromptEmbedding, proj: ProjectionSet
) -> np.ndarray:
    """Aggregate projected token values under the attention weights.

    Returns the N x D matrix ``probabilities @ (prompt Wv)``.
    """
    if probabilities.kind is not MapKind.PROBS:
        raise ValueError(
            f"expected a PROBS-kind state, got {probabilities.kind.value}"
        )
    if probabilities.num_tokens != prompt.num_tokens:
        raise ValueError(
            f"state has {probabilities.num_tokens} token columns, "
            f"prompt has {prompt.num_tokens} tokens"
        )
    if prompt.dim != proj.dim:
        raise ValueError(
            f"prompt D={prompt.dim} does not match projections D={proj.dim}"
        )
    values = prompt.tokens @ proj.v_weights
    return probabilities.values @ values
