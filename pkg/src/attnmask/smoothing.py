"""Gaussian filtering of per-token spatial attention maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Isotropic Gaussian kernel on a (2*radius+1)^2 support, normalized to 1."""

    radius: int = 1
    sigma: float = 0.5

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if not (self.sigma > 0) or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be a positive finite real, got {self.sigma}")

    def kernel(self) -> np.ndarray:
        offsets = np.arange(-self.radius, self.radius + 1, dtype=np.float64)
        dist_sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
        weights = np.exp(-dist_sq / (2.0 * self.sigma**2))
        return weights / weights.sum()


def smooth_map(spatial_map: np.ndarray, spec: GaussianKernelSpec) -> np.ndarray:
    """Convolve a height x width map with the kernel, reflect-padded borders.

    Reflect padding mirrors interior rows/columns without repeating the edge
    itself, so the map must be strictly larger than the kernel radius on
    both axes. radius 0 returns an unmodified copy.
    """
    spatial_map = np.asarray(spatial_map, dtype=np.float64)
    if spatial_map.ndim != 2:
        raise ValueError(f"expected a 2-D map, got ndim={spatial_map.ndim}")
    if not np.all(np.isfinite(spatial_map)):
        raise ValueError("spatial map contains non-finite entries")
    if spec.radius == 0:
        return spatial_map.copy()
    height, width = spatial_map.shape
    if spec.radius >= height or spec.radius >= width:
        raise ValueError(
            f"radius {spec.radius} too large for a {height}x{width} map "
            "under reflect padding"
        )
    padded = np.pad(spatial_map, spec.radius, mode="reflect")
    windows = sliding_window_view(
        padded, (2 * spec.radius + 1, 2 * spec.radius + 1)
    )
    return np.einsum("ijkl,kl->ij", windows, spec.kernel())
