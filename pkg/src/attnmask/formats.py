"""Text and raster file formats.

AMAP — attention maps and masks::

    AMAP 1 <kind> <height> <width> <num_tokens>
    <L space-separated values>        (one line per pixel, row-major)

kind is LOGITS, PROBS or MASK. Values are written with shortest
round-trip float formatting, so parse(render(x)) reproduces x exactly.

SCEN — scenario descriptions, line-oriented ``key=value`` with ``#``
comments. Top-level keys: shape, steps, seed, noise_sigma, archetype.
Each ``token.label`` line opens a token block with keys token.center,
token.amplitude, token.sigma and optional token.drift, token.picked,
token.expected_zone. Unknown keys are rejected.

REGION — one line per token: the token index followed by its sorted
pixel indices. Lines starting with ``#`` are comments.

PGM — binary P5 grayscale, maxval 255, used for heatmap dumps.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .attention import AttentionMask, AttentionState, GridShape, MapKind
from .harness import Archetype, ScenarioSpec, ScenarioToken


class FormatError(ValueError):
    """Malformed file content."""


AMAP_KINDS = ("LOGITS", "PROBS", "MASK")


def _fmt(value: float) -> str:
    return repr(float(value))


@dataclass(frozen=True)
class AmapFile:
    """Parsed or to-be-rendered AMAP content."""

    kind: str
    shape: GridShape
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in AMAP_KINDS:
            raise FormatError(f"unknown AMAP kind {self.kind!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != self.shape.num_pixels:
            raise FormatError(
                f"AMAP body must be {self.shape.num_pixels} x L, got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def num_tokens(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_state(cls, state: AttentionState) -> AmapFile:
        return cls(kind=state.kind.value, shape=state.shape, values=state.values)

    @classmethod
    def from_mask(cls, mask: AttentionMask) -> AmapFile:
        return cls(kind="MASK", shape=mask.shape, values=mask.values)

    def to_state(self) -> AttentionState:
        if self.kind == "MASK":
            raise FormatError("MASK-kind AMAP cannot become an attention state")
        return AttentionState(
            shape=self.shape, kind=MapKind(self.kind), values=self.values
        )

    def to_mask(self) -> AttentionMask:
        if self.kind != "MASK":
            raise FormatError(f"expected a MASK-kind AMAP, got {self.kind}")
        return AttentionMask(shape=self.shape, values=self.values)


def render_amap(amap: AmapFile) -> str:
    lines = [
        f"AMAP 1 {amap.kind} {amap.shape.height} {amap.shape.width} {amap.num_tokens}"
    ]
    for row in amap.values:
        lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_amap(text: str) -> AmapFile:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty AMAP input")
    header = lines[0].split()
    if len(header) != 6 or header[0] != "AMAP" or header[1] != "1":
        raise FormatError(f"bad AMAP header: {lines[0]!r}")
    kind = header[2]
    if kind not in AMAP_KINDS:
        raise FormatError(f"unknown AMAP kind {kind!r}")
    try:
        height, width, num_tokens = (int(v) for v in header[3:6])
    except ValueError as exc:
        raise FormatError(f"non-integer AMAP dimensions: {lines[0]!r}") from exc
    shape = GridShape(height, width)
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != shape.num_pixels:
        raise FormatError(
            f"AMAP body has {len(body)} rows, header promises {shape.num_pixels}"
        )
    values = np.empty((shape.num_pixels, num_tokens))
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != num_tokens:
            raise FormatError(
                f"AMAP row {i} has {len(fields)} values, header promises {num_tokens}"
            )
        try:
            values[i] = [float(f) for f in fields]
        except ValueError as exc:
            raise FormatError(f"AMAP row {i} holds a non-numeric value") from exc
    return AmapFile(kind=kind, shape=shape, values=values)


_SCEN_TOP_KEYS = ("shape", "steps", "seed", "noise_sigma", "archetype")
_SCEN_TOKEN_KEYS = (
    "token.label",
    "token.center",
    "token.amplitude",
    "token.sigma",
    "token.drift",
    "token.picked",
    "token.expected_zone",
)
_SCEN_TOKEN_REQUIRED = ("token.center", "token.amplitude", "token.sigma")


def render_scen(spec: ScenarioSpec) -> str:
    lines = [
        f"shape={spec.shape.height}x{spec.shape.width}",
        f"steps={spec.num_steps}",
        f"seed={spec.seed}",
        f"noise_sigma={_fmt(spec.noise_sigma)}",
        f"archetype={spec.archetype.value}",
    ]
    for token in spec.tokens:
        lines.append(f"token.label={token.label}")
        lines.append(f"token.center={_fmt(token.center[0])},{_fmt(token.center[1])}")
        lines.append(f"token.amplitude={_fmt(token.amplitude)}")
        lines.append(f"token.sigma={_fmt(token.sigma)}")
        lines.append(f"token.drift={_fmt(token.drift[0])},{_fmt(token.drift[1])}")
        lines.append(f"token.picked={'true' if token.picked else 'false'}")
        if token.expected_zone is not None:
            zone = ",".join(str(p) for p in sorted(token.expected_zone))
            lines.append(f"token.expected_zone={zone}")
    return "\n".join(lines) + "\n"


def _parse_pair(raw: str, key: str, lineno: int) -> tuple[float, float]:
    parts = raw.split(",")
    if len(parts) != 2:
        raise FormatError(f"line {lineno}: {key} needs 'row,col', got {raw!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {key} holds a non-numeric value") from exc


def parse_scen(text: str) -> ScenarioSpec:
    top: dict[str, str] = {}
    token_blocks: list[dict[str, tuple[str, int]]] = []
    current: dict[str, tuple[str, int]] | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _SCEN_TOP_KEYS:
            if key in top:
                raise FormatError(f"line {lineno}: duplicate key {key!r}")
            top[key] = value
        elif key == "token.label":
            current = {"token.label": (value, lineno)}
            token_blocks.append(current)
        elif key in _SCEN_TOKEN_KEYS:
            if current is None:
                raise FormatError(
                    f"line {lineno}: {key} before any token.label"
                )
            if key in current:
                raise FormatError(
                    f"line {lineno}: duplicate key {key!r} in token block"
                )
            current[key] = (value, lineno)
        else:
            raise FormatError(f"line {lineno}: unknown key {key!r}")

    for key in _SCEN_TOP_KEYS:
        if key not in top:
            raise FormatError(f"missing required key {key!r}")

    shape_raw = top["shape"]
    parts = shape_raw.lower().split("x")
    if len(parts) != 2:
        raise FormatError(f"shape must be like '16x16', got {shape_raw!r}")
    try:
        shape = GridShape(int(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise FormatError(f"bad shape {shape_raw!r}: {exc}") from exc
    try:
        steps = int(top["steps"])
        seed = int(top["seed"])
        noise_sigma = float(top["noise_sigma"])
    except ValueError as exc:
        raise FormatError(f"bad numeric top-level value: {exc}") from exc
    try:
        archetype = Archetype(top["archetype"])
    except ValueError as exc:
        raise FormatError(
            f"unknown archetype {top['archetype']!r}; expected one of "
            f"{', '.join(a.value for a in Archetype)}"
        ) from exc

    parsed_tokens = []
    for block in token_blocks:
        label, label_line = block["token.label"]
        for key in _SCEN_TOKEN_REQUIRED:
            if key not in block:
                raise FormatError(
                    f"token {label!r} (line {label_line}): missing required key {key!r}"
                )
        center_raw, center_line = block["token.center"]
        center = _parse_pair(center_raw, "token.center", center_line)
        try:
            amplitude = float(block["token.amplitude"][0])
            sigma = float(block["token.sigma"][0])
        except ValueError as exc:
            raise FormatError(
                f"token {label!r}: non-numeric amplitude or sigma"
            ) from exc
        drift = (0.0, 0.0)
        if "token.drift" in block:
            drift_raw, drift_line = block["token.drift"]
            drift = _parse_pair(drift_raw, "token.drift", drift_line)
        picked = True
        if "token.picked" in block:
            picked_raw, picked_line = block["token.picked"]
            if picked_raw not in ("true", "false"):
                raise FormatError(
                    f"line {picked_line}: token.picked must be true or false, "
                    f"got {picked_raw!r}"
                )
            picked = picked_raw == "true"
        expected_zone = None
        if "token.expected_zone" in block:
            zone_raw, zone_line = block["token.expected_zone"]
            if zone_raw:
                try:
                    expected_zone = frozenset(int(p) for p in zone_raw.split(","))
                except ValueError as exc:
                    raise FormatError(
                        f"line {zone_line}: token.expected_zone holds a "
                        "non-integer pixel index"
                    ) from exc
            else:
                expected_zone = frozenset()
        try:
            parsed_tokens.append(
                ScenarioToken(
                    label=label,
                    center=center,
                    amplitude=amplitude,
                    sigma=sigma,
                    drift=drift,
                    picked=picked,
                    expected_zone=expected_zone,
                )
            )
        except ValueError as exc:
            raise FormatError(f"token {label!r} (line {label_line}): {exc}") from exc

    try:
        return ScenarioSpec(
            shape=shape,
            num_steps=steps,
            tokens=tuple(parsed_tokens),
            noise_sigma=noise_sigma,
            seed=seed,
            archetype=archetype,
        )
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def render_region(
    token_regions: Sequence[tuple[int, frozenset[int]]],
) -> str:
    lines = []
    for token, region in token_regions:
        pixels = " ".join(str(p) for p in sorted(region))
        lines.append(f"{token} {pixels}".rstrip())
    return "\n".join(lines) + "\n"


def parse_region(text: str) -> tuple[tuple[int, frozenset[int]], ...]:
    result = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        try:
            token = int(fields[0])
            pixels = frozenset(int(p) for p in fields[1:])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-integer REGION entry") from exc
        result.append((token, pixels))
    return tuple(result)


def render_pgm(spatial_map: np.ndarray) -> bytes:
    """Binary P5 heatmap, normalized so the map maximum renders as 255."""
    spatial_map = np.asarray(spatial_map, dtype=np.float64)
    if spatial_map.ndim != 2:
        raise FormatError(f"expected a 2-D map, got ndim={spatial_map.ndim}")
    if not np.all(np.isfinite(spatial_map)):
        raise FormatError("map contains non-finite entries")
    height, width = spatial_map.shape
    peak = spatial_map.max()
    if peak > 0:
        scaled = np.clip(np.rint(255.0 * spatial_map / peak), 0, 255)
        pixels = scaled.astype(np.uint8)
    else:
        pixels = np.zeros((height, width), dtype=np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def write_atomic(path: str | Path, data: str | bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
