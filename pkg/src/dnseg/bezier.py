"""Monotonic intensity curves and style augmentation of 2D slices.

A cubic parametric curve over [-1, 1]^2 with fixed end points and
symmetric control points (-v, v), (v, -v) gives a smooth, monotonic
gray-level remapping. Increasing curves keep contrast polarity
(source-similar style); decreasing curves invert it (source-dissimilar).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from dnseg import kernels
from dnseg.domains import DomainTag

# degenerate control-point layout (P0=P1, P2=P3): the curve is linear
SENTINEL_LINEAR = -1.0

DEFAULT_LUT_RESOLUTION = 4096

# random control-point offsets are drawn uniformly from this open interval
V_LOW, V_HIGH = 0.01, 0.99

# foreground = pixels above the normalized minimum (zero-background scans)
FOREGROUND_THRESHOLD = -1.0 + 1e-3


class CurveDirection(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"


@dataclass(frozen=True)
class IntensityCurve:
    """One monotonic intensity mapping, tabulated for interpolation."""

    direction: CurveDirection
    v: float
    lut_x: np.ndarray = field(repr=False)
    lut_y: np.ndarray = field(repr=False)

    @property
    def is_linear(self) -> bool:
        return self.v == SENTINEL_LINEAR

    @property
    def lut_resolution(self) -> int:
        return int(self.lut_x.shape[0])

    def evaluate(self, x):
        """Map intensities through the curve (linear interpolation in the LUT)."""
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if self.is_linear:
            out = arr.copy() if self.direction is CurveDirection.INCREASING else -arr
        else:
            flat = arr.reshape(1, -1)
            ones = np.ones(flat.shape, dtype=np.uint8)
            out = kernels.lut_apply(flat, self.lut_x, self.lut_y, ones).reshape(arr.shape)
            np.clip(out, -1.0, 1.0, out=out)
        return out if np.ndim(x) else float(out[0])


def _curve_samples(v: float, resolution: int):
    """Sample (x(t), y(t)) of the increasing-frame curve at uniform t."""
    t = np.linspace(0.0, 1.0, resolution)
    b0 = (1.0 - t) ** 3
    b1 = 3.0 * (1.0 - t) ** 2 * t
    b2 = 3.0 * (1.0 - t) * t**2
    b3 = t**3
    if v == SENTINEL_LINEAR:
        x = -(b0 + b1) + (b2 + b3)
        return x, x.copy()
    x = -b0 - v * b1 + v * b2 + b3
    y = -b0 + v * b1 - v * b2 + b3
    return x, y


def make_curve(
    direction: CurveDirection,
    v: float,
    lut_resolution: int = DEFAULT_LUT_RESOLUTION,
) -> IntensityCurve:
    """Build a curve from end points (-1,-1), (1,1) and control points (-v,v), (v,-v).

    Decreasing curves negate the y-outputs of the corresponding increasing
    curve, flipping the end points to (-1,1), (1,-1).
    """
    direction = CurveDirection(direction)
    if lut_resolution < 2:
        raise ValueError(f"lut_resolution must be >= 2, got {lut_resolution}")
    v = float(v)
    if v != SENTINEL_LINEAR and not 0.0 < v < 1.0:
        raise ValueError(f"v must lie in (0, 1) or be the linear sentinel, got {v}")

    x, y = _curve_samples(v, lut_resolution)
    if direction is CurveDirection.DECREASING:
        y = -y
    if np.any(np.diff(x) <= 0):
        raise ValueError("curve parameterization produced non-increasing LUT inputs")
    x.setflags(write=False)
    y.setflags(write=False)
    return IntensityCurve(direction=direction, v=v, lut_x=x, lut_y=y)


def apply_curve(
    image: np.ndarray,
    curve: IntensityCurve,
    foreground_mask: np.ndarray,
) -> np.ndarray:
    """Remap foreground pixels through the curve; background is untouched.

    image must be 2D with values in [-1, 1] (1e-6 slack); the mask must
    share its shape. Output values stay in [-1, 1].
    """
    image = np.asarray(image)
    foreground_mask = np.asarray(foreground_mask)
    if image.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {image.shape}")
    if image.shape != foreground_mask.shape:
        raise ValueError(
            f"image shape {image.shape} != mask shape {foreground_mask.shape}"
        )
    lo, hi = float(image.min()), float(image.max())
    if lo < -1.0 - 1e-6 or hi > 1.0 + 1e-6:
        raise ValueError(f"image values outside [-1, 1]: range [{lo}, {hi}]")

    mask = foreground_mask.astype(bool)
    if curve.is_linear:
        # exact fast paths; interpolation could not guarantee bitwise identity
        out = image.copy()
        if curve.direction is CurveDirection.DECREASING:
            out[mask] = -out[mask]
        return out

    work = np.ascontiguousarray(image, dtype=np.float64)
    out = kernels.lut_apply(work, curve.lut_x, curve.lut_y, mask.astype(np.uint8))
    np.clip(out, -1.0, 1.0, out=out)
    if out.dtype != image.dtype:
        result = image.copy()
        result[mask] = out[mask].astype(image.dtype)
        return result
    return out


class TransformBank:
    """Curve factory: the linear pair plus k random-v pairs per draw.

    Every draw() resamples the k random offsets, so each augmented image
    sees fresh curves. The decreasing list mirrors the increasing one
    (same v values, negated outputs).
    """

    def __init__(
        self,
        k: int = 2,
        rng: np.random.Generator | int | None = None,
        lut_resolution: int = DEFAULT_LUT_RESOLUTION,
    ):
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        self.k = int(k)
        if isinstance(rng, np.random.Generator):
            self.rng = rng
            self.rng_seed = None
        else:
            self.rng_seed = rng
            self.rng = np.random.default_rng(rng)
        self.lut_resolution = int(lut_resolution)
        self.increasing: list[IntensityCurve] = []
        self.decreasing: list[IntensityCurve] = []

    def draw(self) -> tuple[list[IntensityCurve], list[IntensityCurve]]:
        """Resample the random curves; returns (increasing, decreasing) lists."""
        vs = self.rng.uniform(V_LOW, V_HIGH, size=self.k)
        inc = [make_curve(CurveDirection.INCREASING, SENTINEL_LINEAR, self.lut_resolution)]
        dec = [make_curve(CurveDirection.DECREASING, SENTINEL_LINEAR, self.lut_resolution)]
        for v in vs:
            inc.append(make_curve(CurveDirection.INCREASING, v, self.lut_resolution))
            dec.append(make_curve(CurveDirection.DECREASING, v, self.lut_resolution))
        self.increasing = inc
        self.decreasing = dec
        return inc, dec


def foreground_of(image: np.ndarray, explicit_mask: np.ndarray | None = None) -> np.ndarray:
    """Foreground pixels: above the normalized minimum, unless a mask is given."""
    if explicit_mask is not None:
        return np.asarray(explicit_mask).astype(bool)
    return np.asarray(image) > FOREGROUND_THRESHOLD


def augment_sample(sample, bank: TransformBank, foreground_mask: np.ndarray | None = None):
    """Produce k+1 source-similar and k+1 source-dissimilar copies of a slice.

    Returns a list of (SliceSample, DomainTag) pairs; labels are copied
    untouched. Curves are freshly drawn for this sample.
    """
    mask = foreground_of(sample.image, foreground_mask)
    inc, dec = bank.draw()
    out = []
    for curve in inc:
        img = apply_curve(sample.image, curve, mask)
        out.append((sample.with_image(img), DomainTag.SIMILAR))
    for curve in dec:
        img = apply_curve(sample.image, curve, mask)
        out.append((sample.with_image(img), DomainTag.DISSIMILAR))
    return out
