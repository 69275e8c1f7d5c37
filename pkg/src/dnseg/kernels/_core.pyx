# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: LUT intensity remapping and directed Hausdorff.

Mirrors dnseg.kernels._fallback expression-for-expression so both
backends return bit-identical results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def lut_apply(image, lut_x, lut_y, mask):
    """Remap masked pixels through a piecewise-linear lookup table."""
    out_arr = np.array(image, dtype=np.float64, order="C", copy=True)
    # const views accept the read-only LUT arrays curves carry
    cdef const double[:, ::1] im = np.ascontiguousarray(image, dtype=np.float64)
    cdef double[:, ::1] ov = out_arr
    cdef const cnp.uint8_t[:, ::1] mk = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef const double[::1] xs = np.ascontiguousarray(lut_x, dtype=np.float64)
    cdef const double[::1] ys = np.ascontiguousarray(lut_y, dtype=np.float64)
    cdef Py_ssize_t h = im.shape[0]
    cdef Py_ssize_t w = im.shape[1]
    cdef Py_ssize_t k = xs.shape[0]
    cdef double x_first = xs[0]
    cdef double x_last = xs[k - 1]
    cdef double y_first = ys[0]
    cdef double y_last = ys[k - 1]
    cdef Py_ssize_t i, j, lo, hi, mid
    cdef double x, x0

    with nogil:
        for i in range(h):
            for j in range(w):
                if mk[i, j] == 0:
                    continue
                x = im[i, j]
                if x <= x_first:
                    ov[i, j] = y_first
                elif x >= x_last:
                    ov[i, j] = y_last
                else:
                    # rightmost knot <= x (same interval as searchsorted side="right")
                    lo = 0
                    hi = k
                    while lo < hi:
                        mid = (lo + hi) >> 1
                        if xs[mid] <= x:
                            lo = mid + 1
                        else:
                            hi = mid
                    lo = lo - 1
                    if lo > k - 2:
                        lo = k - 2
                    x0 = xs[lo]
                    ov[i, j] = ys[lo] + (x - x0) * (ys[lo + 1] - ys[lo]) / (xs[lo + 1] - x0)
    return out_arr


def directed_hausdorff(points_a, points_b, double spacing_y, double spacing_x):
    """max over a in A of min over b in B of the scaled Euclidean distance."""
    cdef const cnp.int64_t[:, ::1] pa = np.ascontiguousarray(points_a, dtype=np.int64)
    cdef const cnp.int64_t[:, ::1] pb = np.ascontiguousarray(points_b, dtype=np.int64)
    cdef Py_ssize_t n = pa.shape[0]
    cdef Py_ssize_t m = pb.shape[0]
    if n == 0 or m == 0:
        raise ValueError("point sets must be non-empty")
    cdef double worst = 0.0
    cdef double best, dy, dx, d2
    cdef Py_ssize_t i, j
    cdef bint skip

    with nogil:
        for i in range(n):
            best = -1.0
            skip = 0
            for j in range(m):
                dy = (pa[i, 0] - pb[j, 0]) * spacing_y
                dx = (pa[i, 1] - pb[j, 1]) * spacing_x
                d2 = dy * dy + dx * dx
                if d2 < worst:
                    # this point's minimum cannot raise the running maximum
                    skip = 1
                    break
                if best < 0.0 or d2 < best:
                    best = d2
            if not skip and best > worst:
                worst = best
    return sqrt(worst)
