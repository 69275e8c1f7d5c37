"""Pure-NumPy implementations of the hot kernels.

Used whenever the compiled extension is unavailable (or forced via
DNSEG_PURE_PYTHON=1). Both backends evaluate the same arithmetic
expressions so their results agree to the last bit.
"""

import numpy as np


def lut_apply(image, lut_x, lut_y, mask):
    """Remap masked pixels through a piecewise-linear lookup table.

    image: 2D float64 array. lut_x: strictly increasing float64 knots.
    lut_y: float64 values at the knots. mask: uint8/bool, same shape as
    image; pixels where mask is 0 are copied through untouched. Inputs
    outside [lut_x[0], lut_x[-1]] clamp to the end values.
    """
    out = image.copy()
    sel = mask.astype(bool)
    x = image[sel]
    k = lut_x.shape[0]
    j = np.searchsorted(lut_x, x, side="right") - 1
    np.clip(j, 0, k - 2, out=j)
    x0 = lut_x[j]
    y0 = lut_y[j]
    y = y0 + (x - x0) * (lut_y[j + 1] - y0) / (lut_x[j + 1] - x0)
    y = np.where(x <= lut_x[0], lut_y[0], y)
    y = np.where(x >= lut_x[-1], lut_y[-1], y)
    out[sel] = y
    return out


def directed_hausdorff(points_a, points_b, spacing_y, spacing_x):
    """max over a in A of min over b in B of the scaled Euclidean distance.

    points_a, points_b: (N, 2) int64 arrays of (row, col) coordinates,
    both non-empty. Returns the distance in physical units (mm).
    """
    if points_a.shape[0] == 0 or points_b.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    by = points_b[:, 0]
    bx = points_b[:, 1]
    worst = 0.0
    # row-chunked to bound the pairwise matrix
    chunk = max(1, int(2**22 // max(points_b.shape[0], 1)))
    for start in range(0, points_a.shape[0], chunk):
        pa = points_a[start : start + chunk]
        dy = (pa[:, 0:1] - by[None, :]) * spacing_y
        dx = (pa[:, 1:2] - bx[None, :]) * spacing_x
        d2 = dy * dy + dx * dx
        m = d2.min(axis=1).max()
        if m > worst:
            worst = m
    return float(np.sqrt(worst))
