"""Per-pixel membership probability fields and spatial quality.

A probabilistic box induces, for every pixel center, the probability that
the pixel lies below-right of the (Gaussian) top-left corner and
above-left of the (Gaussian) bottom-right corner. The four corner
marginals are treated independently, so the field is a separable product
of two 1D profiles; this is exact for the diagonal covariances used
throughout. Off-diagonal covariances are rejected rather than silently
approximated.

Spatial quality of a (ground truth, field) pair is the exponentiated mean
log-probability over the true object's pixels, plus a penalty for
probability mass the field places outside the true bounding box. Both
sums are divided by the pixel count of the true box. Log arguments are
floored at ``CLAMP_EPS`` so the score stays finite; probabilities of
exactly one therefore contribute exactly zero loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.special import ndtr, ndtri

from .core import BoundingBox, GroundTruthObject, ProbabilisticBox, box_pixel_bounds, box_pixel_count

# Floor for log arguments; keeps the metric finite and reproducible.
CLAMP_EPS = 1e-14

# Half-width of the support of a univariate corner CDF factor, in standard
# deviations: beyond mean +/- this, the factor is below CLAMP_EPS.
_SUPPORT_Z = float(ndtri(1.0 - CLAMP_EPS))


def gaussian_corner_cdf(value: float, mean: float, variance: float) -> float:
    """Normal CDF of one corner marginal; a step function at zero variance.

    Uses the complementary error function so the lower tail keeps full
    relative accuracy (the spatial-quality logs amplify tail errors).
    """
    if variance < 0.0:
        raise ValueError(f"variance must be >= 0, got {variance!r}")
    if variance == 0.0:
        return 1.0 if value >= mean else 0.0
    return 0.5 * math.erfc((mean - value) / math.sqrt(2.0 * variance))


@dataclass(eq=False)
class PixelProbabilityField:
    """Dense membership probabilities over an integer pixel rectangle.

    ``probs[j, i]`` is the probability for pixel ``(x0 + i, y0 + j)``.
    Outside the rectangle the field is below ``CLAMP_EPS`` and treated
    as zero.
    """

    x0: int
    y0: int
    probs: np.ndarray = dataclass_field(repr=False)

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("probs must be a 2D array")
        if self.probs.size and (self.probs.min() < 0.0 or self.probs.max() > 1.0):
            raise ValueError("field probabilities must lie in [0, 1]")
        self.probs.setflags(write=False)

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def region(self) -> tuple[int, int, int, int]:
        """Half-open pixel rectangle ``(x0, y0, x_end, y_end)``."""
        return self.x0, self.y0, self.x0 + self.width, self.y0 + self.height

    def prob_at(self, i: int, j: int) -> float:
        """Probability at pixel ``(i, j)``; 0 outside the stored rectangle."""
        if self.x0 <= i < self.x0 + self.width and self.y0 <= j < self.y0 + self.height:
            return float(self.probs[j - self.y0, i - self.x0])
        return 0.0


def _axis_profile(
    lo_mean: float,
    lo_var: float,
    hi_mean: float,
    hi_var: float,
    n_pixels: int,
) -> tuple[int, np.ndarray]:
    """1D factor profile along one axis, restricted to its support.

    Returns ``(first_index, values)`` where ``values[k]`` is the product
    of the low-corner CDF and the high-corner survival at pixel center
    ``first_index + k + 0.5``.
    """
    lo_bound = lo_mean - (_SUPPORT_Z * math.sqrt(lo_var) if lo_var > 0.0 else 0.0)
    hi_bound = hi_mean + (_SUPPORT_Z * math.sqrt(hi_var) if hi_var > 0.0 else 0.0)

    start = max(0, int(math.floor(lo_bound)) - 1)
    stop = min(n_pixels, int(math.ceil(hi_bound)) + 1)
    if stop <= start:
        return 0, np.empty(0, dtype=np.float64)

    idx = np.arange(start, stop)
    u = idx + 0.5
    # Support predicates: strict beyond-threshold for Gaussian corners,
    # half-open [lo_mean, hi_mean) for deterministic ones.
    keep_lo = (u > lo_bound) if lo_var > 0.0 else (u >= lo_mean)
    keep_hi = (u < hi_bound) if hi_var > 0.0 else (u < hi_mean)
    keep = keep_lo & keep_hi
    if not keep.any():
        return 0, np.empty(0, dtype=np.float64)
    sel = np.nonzero(keep)[0]
    first, last = int(sel[0]), int(sel[-1])
    u = u[first : last + 1]

    if lo_var > 0.0:
        f = ndtr((u - lo_mean) / math.sqrt(lo_var))
    else:
        f = (u >= lo_mean).astype(np.float64)
    if hi_var > 0.0:
        # survival via the mirrored CDF keeps tail accuracy (no 1 - x)
        f = f * ndtr((hi_mean - u) / math.sqrt(hi_var))
    else:
        f = f * (u < hi_mean)
    return int(idx[first]), f


def pixel_field(pbox: ProbabilisticBox, image_w: int, image_h: int) -> PixelProbabilityField:
    """Rasterize a probabilistic box into its membership-probability field.

    The stored rectangle is the box inflated by the corner uncertainties
    and clipped to the image; everything outside is below ``CLAMP_EPS``.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    tl, br = pbox.cov_top_left, pbox.cov_bottom_right
    if tl.cxy != 0.0 or br.cxy != 0.0:
        raise ValueError(
            "non-diagonal corner covariance is not supported; the separable "
            "corner model requires cxy == 0"
        )
    box = pbox.box
    x0, fx = _axis_profile(box.x1, tl.cxx, box.x2, br.cxx, image_w)
    y0, fy = _axis_profile(box.y1, tl.cyy, box.y2, br.cyy, image_h)
    if fx.size == 0 or fy.size == 0:
        return PixelProbabilityField(0, 0, np.empty((0, 0), dtype=np.float64))
    probs = np.clip(np.outer(fy, fx), 0.0, 1.0)
    return PixelProbabilityField(x0, y0, probs)


def _log_floored(values: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(values, CLAMP_EPS))


def spatial_quality(g: GroundTruthObject, field: PixelProbabilityField) -> float:
    """Spatial quality of a ground truth against a detection's field.

    ``exp((foreground + background) / N)`` where N is the pixel count of
    the true box, the foreground term sums ``log P`` over the object's
    pixels, and the background term sums ``log (1 - P)`` over field
    pixels that exceed ``CLAMP_EPS`` outside the true box.

    Raises ``ValueError`` for a degenerate ground truth whose box
    contains no pixels; callers treat such a pair as quality zero.
    """
    n_box = box_pixel_count(g.box)
    if n_box == 0:
        raise ValueError("degenerate ground truth: true box contains no pixels")

    ix0, iy0, ix1, iy1 = box_pixel_bounds(g.box)
    fx0, fy0 = field.x0, field.y0
    fw, fh = field.width, field.height
    probs = field.probs

    # Foreground: every mask pixel, with pixels outside the stored
    # rectangle contributing log(CLAMP_EPS).
    if g.mask is not None:
        coords = np.fromiter(
            (c for px in sorted(g.mask) for c in px), dtype=np.int64
        ).reshape(-1, 2)
        xs, ys = coords[:, 0], coords[:, 1]
        inside = (xs >= fx0) & (xs < fx0 + fw) & (ys >= fy0) & (ys < fy0 + fh)
        fg_vals = probs[ys[inside] - fy0, xs[inside] - fx0]
        n_outside = int(coords.shape[0] - inside.sum())
    else:
        # Mask defaults to the box pixels: a rectangle, intersected directly.
        rx0, rx1 = max(ix0, fx0), min(ix1, fx0 + fw - 1)
        ry0, ry1 = max(iy0, fy0), min(iy1, fy0 + fh - 1)
        if rx0 <= rx1 and ry0 <= ry1:
            fg_vals = probs[ry0 - fy0 : ry1 - fy0 + 1, rx0 - fx0 : rx1 - fx0 + 1].ravel()
        else:
            fg_vals = np.empty(0, dtype=np.float64)
        n_outside = n_box - fg_vals.size
    fg_sum = float(_log_floored(fg_vals).sum()) + n_outside * math.log(CLAMP_EPS)

    # Background penalty: field pixels above the clamp floor outside the
    # true bounding box.
    if probs.size:
        col = np.arange(fx0, fx0 + fw)
        row = np.arange(fy0, fy0 + fh)
        in_box = ((row >= iy0) & (row <= iy1))[:, None] & ((col >= ix0) & (col <= ix1))[None, :]
        bg_sel = (probs > CLAMP_EPS) & ~in_box
        bg_vals = probs[bg_sel]
        bg_sum = float(_log_floored(1.0 - bg_vals).sum())
    else:
        bg_sum = 0.0

    return float(math.exp((fg_sum + bg_sum) / n_box))
