"""Synthetic attention scenarios and the end-to-end masking pipeline.

A scenario describes, per prompt token, a Gaussian "blob" of attention
logits that may drift across the grid over a run of denoising steps, plus
seeded pixel noise. Three failure archetypes are built in:

* overlapping: two unrelated tokens contest the same area with similar
  strength, so one of them loses its identity.
* preempted: both tokens sit in sensible places but one dwarfs the other,
  starving it.
* wrong_region: an attribute token lands on the wrong object's area.

``run_pipeline`` plays a scenario through the full loop (softmax with the
previous step's mask, momentum blend, smoothing, region selection, mask
build) and ``classify_failures`` diagnoses the resulting run against the
archetype taxonomy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .attention import (
    AttentionMask,
    AttentionState,
    GridShape,
    MapKind,
    masked_softmax,
    zero_mask,
)
from .maskgen import MaskGenConfig, build_mask, should_mask
from .regions import RegionAssignment, RegionSelectionConfig, solve_regions_approx
from .smoothing import GaussianKernelSpec, smooth_map
from .temporal import MomentumConfig, TemporalState, momentum_update, top_fraction_score


class Archetype(Enum):
    """Failure taxonomy; CLEAN doubles as the no-failure verdict."""

    OVERLAPPING = "overlapping"
    PREEMPTED = "preempted"
    WRONG_REGION = "wrong_region"
    CLEAN = "clean"


@dataclass(frozen=True)
class ScenarioToken:
    """One token's attention blob plus its evaluation metadata.

    ``picked`` marks tokens that take part in region selection and masking
    (object nouns and attributes in a real prompt); non-picked tokens, such
    as a flat background/filler token, only shape the softmax competition.
    ``expected_zone`` is the ground-truth pixel set used for misplacement
    scoring.
    """

    label: str
    center: tuple[float, float]
    amplitude: float
    sigma: float
    drift: tuple[float, float] = (0.0, 0.0)
    picked: bool = True
    expected_zone: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("token label must be non-empty")
        if not (self.amplitude > 0) or not np.isfinite(self.amplitude):
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not (self.sigma > 0) or not np.isfinite(self.sigma):
            raise ValueError(f"blob sigma must be positive, got {self.sigma}")
        if len(self.center) != 2 or not all(np.isfinite(c) for c in self.center):
            raise ValueError(f"center must be a finite (row, col) pair, got {self.center}")
        if len(self.drift) != 2 or not all(np.isfinite(d) for d in self.drift):
            raise ValueError(f"drift must be a finite (row, col) pair, got {self.drift}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "drift", (float(self.drift[0]), float(self.drift[1])))
        if self.expected_zone is not None:
            object.__setattr__(
                self, "expected_zone", frozenset(int(p) for p in self.expected_zone)
            )


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative multi-step attention evolution; fully seeded."""

    shape: GridShape
    num_steps: int
    tokens: tuple[ScenarioToken, ...]
    noise_sigma: float = 0.0
    seed: int = 0
    archetype: Archetype = Archetype.CLEAN

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if not self.tokens:
            raise ValueError("a scenario needs at least one token")
        if self.noise_sigma < 0 or not np.isfinite(self.noise_sigma):
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        for token in self.tokens:
            row, col = token.center
            if not (0 <= row <= self.shape.height - 1 and 0 <= col <= self.shape.width - 1):
                raise ValueError(
                    f"token {token.label!r} center {token.center} outside the "
                    f"{self.shape.height}x{self.shape.width} grid"
                )
            if token.expected_zone is not None and token.expected_zone:
                if max(token.expected_zone) >= self.shape.num_pixels or min(token.expected_zone) < 0:
                    raise ValueError(
                        f"token {token.label!r} expected zone leaves the grid"
                    )

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    def selection(self) -> TokenSelection:
        """The picked-token subset, in token order."""
        picked = tuple(
            PickedToken(index=i, label=t.label, expected_zone=t.expected_zone)
            for i, t in enumerate(self.tokens)
            if t.picked
        )
        return TokenSelection(picked=picked)


@dataclass(frozen=True)
class PickedToken:
    index: int
    label: str
    expected_zone: frozenset[int] | None = None


@dataclass(frozen=True)
class TokenSelection:
    """The token subset that receives regions and mask columns."""

    picked: tuple[PickedToken, ...]

    def __post_init__(self) -> None:
        indices = [t.index for t in self.picked]
        if any(i < 0 for i in indices):
            raise ValueError("picked token indices must be non-negative")
        if len(set(indices)) != len(indices):
            raise ValueError("picked token indices must be unique")

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(t.index for t in self.picked)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.picked)


@dataclass(frozen=True)
class ClassifierConfig:
    """Calibration thresholds for the failure-mode classifier."""

    overlap_min: float = 0.5
    balanced_gap_max: float = 2.0
    gap_min: float = 5.0
    misplacement_min: float = 0.5
    score_fraction: float = 0.25


@dataclass(frozen=True)
class PipelineConfig:
    """Bundle of all stage configurations with production defaults."""

    smoothing: GaussianKernelSpec = GaussianKernelSpec()
    regions: RegionSelectionConfig = RegionSelectionConfig()
    maskgen: MaskGenConfig = MaskGenConfig()
    momentum: MomentumConfig = MomentumConfig()
    classifier: ClassifierConfig = ClassifierConfig()


@dataclass(frozen=True)
class FailureVerdict:
    """Classifier outcome for a token pair (len-2 subject) or token (len-1)."""

    subject: tuple[int, ...]
    labels: tuple[str, ...]
    verdict: Archetype
    metrics: dict[str, float]


@dataclass(frozen=True)
class StepRecord:
    """Everything the pipeline produced at one step."""

    step: int
    probabilities: AttentionState
    assignment: RegionAssignment
    mask: AttentionMask
    scores: tuple[float, ...]

    @property
    def regions(self) -> tuple[frozenset[int], ...]:
        return self.assignment.regions


@dataclass
class RunReport:
    """Full record of one pipeline run."""

    spec: ScenarioSpec
    masking_enabled: bool
    config: PipelineConfig
    selection: TokenSelection
    steps: list[StepRecord]
    averaged: np.ndarray
    verdicts: list[FailureVerdict] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    def averaged_token_map(self, token: int) -> np.ndarray:
        return self.averaged[:, token].reshape(
            self.spec.shape.height, self.spec.shape.width
        )


def _blob(shape: GridShape, center: tuple[float, float], amplitude: float, sigma: float) -> np.ndarray:
    rows = np.arange(shape.height, dtype=np.float64)[:, None]
    cols = np.arange(shape.width, dtype=np.float64)[None, :]
    dist_sq = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return amplitude * np.exp(-dist_sq / (2.0 * sigma**2))


def _drifted_center(
    token: ScenarioToken, elapsed: int, shape: GridShape
) -> tuple[float, float]:
    row = min(max(token.center[0] + elapsed * token.drift[0], 0.0), shape.height - 1.0)
    col = min(max(token.center[1] + elapsed * token.drift[1], 0.0), shape.width - 1.0)
    return row, col


def generate_scenario(spec: ScenarioSpec) -> list[AttentionState]:
    """Per-step logit states in execution order (step T-1 first, 0 last).

    Each token's column is its drifted Gaussian blob plus zero-mean noise
    drawn from a substream keyed by (seed, step, token index), so extending
    the token list never perturbs existing tokens' noise.
    """
    states = []
    for elapsed in range(spec.num_steps):
        step = spec.num_steps - 1 - elapsed
        columns = []
        for index, token in enumerate(spec.tokens):
            center = _drifted_center(token, elapsed, spec.shape)
            column = _blob(spec.shape, center, token.amplitude, token.sigma).reshape(-1)
            if spec.noise_sigma > 0:
                rng = np.random.default_rng(
                    np.random.SeedSequence([spec.seed, step, index])
                )
                column = column + rng.normal(0.0, spec.noise_sigma, size=column.shape)
            columns.append(column)
        values = np.stack(columns, axis=1)
        states.append(AttentionState(shape=spec.shape, kind=MapKind.LOGITS, values=values))
    return states


def run_pipeline(
    spec: ScenarioSpec,
    masking_enabled: bool,
    config: PipelineConfig = PipelineConfig(),
) -> RunReport:
    """Drive a scenario through the full masking loop.

    Steps run from T-1 down to 0. The mask built at step t is applied to
    step t-1's logits (region selection needs the current probabilities, so
    the mask lags one step); step T-1 is always unmasked. With masking
    disabled the loop records regions and scores as diagnostics but applies
    no mask, and every recorded mask is all-zero.
    """
    start = time.perf_counter()
    selection = spec.selection()
    logits_seq = generate_scenario(spec)
    state = TemporalState.for_run(spec.num_steps)
    masking_active = masking_enabled and should_mask(spec.shape, config.maskgen)
    pending_mask: AttentionMask | None = None
    steps: list[StepRecord] = []
    for offset, logits in enumerate(logits_seq):
        step = spec.num_steps - 1 - offset
        probs = masked_softmax(logits, pending_mask)
        blended = momentum_update(state, probs, config.momentum)
        smoothed = [
            smooth_map(blended.token_map(i), config.smoothing)
            for i in selection.indices
        ]
        assignment = solve_regions_approx(
            smoothed, config.regions, token_indices=selection.indices
        )
        if masking_active:
            mask = build_mask(assignment, spec.shape, spec.num_tokens, config.maskgen)
            pending_mask = mask
        else:
            mask = zero_mask(spec.shape, spec.num_tokens)
            pending_mask = None
        scores = tuple(
            top_fraction_score(probs.token_map(i), config.classifier.score_fraction)
            for i in selection.indices
        )
        steps.append(
            StepRecord(
                step=step,
                probabilities=probs,
                assignment=assignment,
                mask=mask,
                scores=scores,
            )
        )
    averaged = np.mean([entry.values for entry in state.history], axis=0)
    averaged.setflags(write=False)
    report = RunReport(
        spec=spec,
        masking_enabled=masking_enabled,
        config=config,
        selection=selection,
        steps=steps,
        averaged=averaged,
    )
    report.verdicts = classify_failures(report)
    report.elapsed_seconds = time.perf_counter() - start
    return report


def _pair_gap(score_a: float, score_b: float) -> float:
    if score_a <= 0.0 and score_b <= 0.0:
        return 1.0
    if score_a <= 0.0 or score_b <= 0.0:
        return float("inf")
    ratio = score_a / score_b
    return max(ratio, 1.0 / ratio)


def classify_failures(
    report: RunReport,
    selection: TokenSelection | None = None,
    require_expected_zones: bool = False,
) -> list[FailureVerdict]:
    """Diagnose a finished run against the failure taxonomy.

    Works on the run's final averaged maps: regions are re-selected from
    the smoothed averages, scores are top-fraction means of the raw
    averages. Pair records cover every unordered picked-token pair;
    placement records cover picked tokens that carry an expected zone
    (all of them must, when ``require_expected_zones`` is set).
    """
    if selection is None:
        selection = report.selection
    config = report.config
    shape = report.spec.shape
    indices = selection.indices
    avg_maps = {i: report.averaged_token_map(i) for i in indices}
    smoothed = [smooth_map(avg_maps[i], config.smoothing) for i in indices]
    assignment = solve_regions_approx(smoothed, config.regions, token_indices=indices)
    regions = dict(zip(indices, assignment.regions))
    scores = {
        i: top_fraction_score(avg_maps[i], config.classifier.score_fraction)
        for i in indices
    }
    labels = dict(zip(indices, selection.labels))
    zones = {t.index: t.expected_zone for t in selection.picked}

    verdicts: list[FailureVerdict] = []
    thresholds = config.classifier
    for a_pos in range(len(indices)):
        for b_pos in range(a_pos + 1, len(indices)):
            a, b = indices[a_pos], indices[b_pos]
            region_a, region_b = regions[a], regions[b]
            smaller = min(len(region_a), len(region_b))
            overlap = len(region_a & region_b) / smaller if smaller else 0.0
            gap = _pair_gap(scores[a], scores[b])
            if gap >= thresholds.gap_min:
                verdict = Archetype.PREEMPTED
            elif overlap >= thresholds.overlap_min and gap <= thresholds.balanced_gap_max:
                verdict = Archetype.OVERLAPPING
            else:
                verdict = Archetype.CLEAN
            verdicts.append(
                FailureVerdict(
                    subject=(a, b),
                    labels=(labels[a], labels[b]),
                    verdict=verdict,
                    metrics={"overlap": overlap, "gap": gap},
                )
            )
    for i in indices:
        zone = zones[i]
        if zone is None:
            if require_expected_zones:
                raise ValueError(
                    f"token {i} ({labels[i]!r}) has no expected zone; "
                    "misplacement cannot be scored"
                )
            continue
        region = regions[i]
        flat = avg_maps[i].reshape(-1)
        total_mass = float(flat[sorted(region)].sum()) if region else 0.0
        if total_mass > 0.0:
            inside = region & zone
            inside_mass = float(flat[sorted(inside)].sum()) if inside else 0.0
            misplacement = 1.0 - inside_mass / total_mass
        else:
            misplacement = 0.0
        verdict = (
            Archetype.WRONG_REGION
            if misplacement >= thresholds.misplacement_min
            else Archetype.CLEAN
        )
        verdicts.append(
            FailureVerdict(
                subject=(i,),
                labels=(labels[i],),
                verdict=verdict,
                metrics={"misplacement": misplacement, "region_size": float(len(region))},
            )
        )
    return verdicts


def disc_zone(shape: GridShape, center: tuple[float, float], radius: float) -> frozenset[int]:
    """Pixels within ``radius`` of ``center``, as flat indices."""
    rows = np.arange(shape.height, dtype=np.float64)[:, None]
    cols = np.arange(shape.width, dtype=np.float64)[None, :]
    inside = (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius**2
    return frozenset(int(p) for p in np.flatnonzero(inside.reshape(-1)))


_BACKGROUND = ScenarioToken(
    label="background",
    center=(7.5, 7.5),
    amplitude=4.0,
    sigma=1e4,
    picked=False,
)


def archetype_preset(
    archetype: Archetype,
    seed: int,
    num_steps: int = 24,
    shape: GridShape = GridShape(16, 16),
) -> ScenarioSpec:
    """Calibrated scenario reproducing one failure archetype.

    Every preset carries a flat, strong, non-picked background token that
    absorbs attention away from the blobs (the filler-token analogue);
    without it every token would keep a high uniform floor and the
    archetypes could not separate.
    """
    left = (4.0, 4.0)
    right = (11.0, 11.0)
    left_zone = disc_zone(shape, left, 3.0)
    right_zone = disc_zone(shape, right, 3.0)
    if archetype is Archetype.OVERLAPPING:
        middle = (7.0, 7.0)
        tokens = (
            ScenarioToken("cat", middle, amplitude=6.0, sigma=2.0),
            ScenarioToken("dog", middle, amplitude=5.9, sigma=2.0),
            _BACKGROUND,
        )
        noise = 0.1
    elif archetype is Archetype.PREEMPTED:
        tokens = (
            ScenarioToken("cat", left, amplitude=10.0, sigma=2.0, expected_zone=left_zone),
            ScenarioToken("dog", right, amplitude=1.0, sigma=2.0, expected_zone=right_zone),
            _BACKGROUND,
        )
        noise = 0.1
    elif archetype is Archetype.WRONG_REGION:
        tokens = (
            ScenarioToken("cat", left, amplitude=6.0, sigma=2.0, expected_zone=left_zone),
            ScenarioToken("ball", right, amplitude=6.0, sigma=2.0, expected_zone=right_zone),
            ScenarioToken("red", left, amplitude=5.5, sigma=1.8, expected_zone=right_zone),
            _BACKGROUND,
        )
        noise = 0.1
    elif archetype is Archetype.CLEAN:
        # Sharper blobs and low noise keep the half-max boundary clear of
        # marginal pixels, so masking never perturbs the selected regions.
        tokens = (
            ScenarioToken("cat", left, amplitude=6.0, sigma=1.6, expected_zone=left_zone),
            ScenarioToken("dog", right, amplitude=6.0, sigma=1.6, expected_zone=right_zone),
            _BACKGROUND,
        )
        noise = 0.02
    else:
        raise ValueError(f"unknown archetype {archetype!r}")
    return ScenarioSpec(
        shape=shape,
        num_steps=num_steps,
        tokens=tokens,
        noise_sigma=noise,
        seed=seed,
        archetype=archetype,
    )


def preset_subject(archetype: Archetype) -> tuple[int, ...]:
    """The token pair/token a preset's archetype verdict is asserted on."""
    if archetype in (Archetype.OVERLAPPING, Archetype.PREEMPTED, Archetype.CLEAN):
        return (0, 1)
    if archetype is Archetype.WRONG_REGION:
        return (2,)
    raise ValueError(f"unknown archetype {archetype!r}")


def drifting_preset(
    seed: int,
    num_steps: int = 40,
    shape: GridShape = GridShape(16, 16),
) -> ScenarioSpec:
    """Moving-blob scenario used for momentum stability comparisons."""
    tokens = (
        ScenarioToken("cat", (4.0, 4.0), amplitude=6.0, sigma=2.0, drift=(0.18, 0.18)),
        ScenarioToken("dog", (11.0, 4.0), amplitude=6.0, sigma=2.0, drift=(-0.18, 0.18)),
        _BACKGROUND,
    )
    return ScenarioSpec(
        shape=shape,
        num_steps=num_steps,
        tokens=tokens,
        noise_sigma=0.25,
        seed=seed,
        archetype=Archetype.CLEAN,
    )


def with_momentum(config: PipelineConfig, alpha: float, beta: float) -> PipelineConfig:
    """Copy of ``config`` with different momentum coefficients."""
    return replace(config, momentum=MomentumConfig(alpha=alpha, beta=beta))
