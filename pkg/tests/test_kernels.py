"""Kernel backends: LUT remapping and directed Hausdorff distance."""

import numpy as np
import pytest

from dnseg import kernels
from dnseg.kernels import _fallback


def _random_lut(rng, n=257):
    x = np.sort(rng.uniform(-1, 1, n - 2))
    lut_x = np.concatenate([[-1.0], x, [1.0]])
    # force strict increase
    lut_x = np.unique(lut_x)
    lut_y = np.cumsum(rng.uniform(0, 0.1, lut_x.shape[0]))
    lut_y = 2 * (lut_y - lut_y[0]) / (lut_y[-1] - lut_y[0]) - 1
    return lut_x, lut_y


def test_lut_matches_np_interp(rng):
    lut_x, lut_y = _random_lut(rng)
    img = rng.uniform(-1, 1, (37, 41))
    mask = np.ones(img.shape, dtype=np.uint8)
    got = kernels.lut_apply(img, lut_x, lut_y, mask)
    want = np.interp(img, lut_x, lut_y)
    assert np.max(np.abs(got - want)) < 1e-12


def test_lut_background_untouched(rng):
    lut_x, lut_y = _random_lut(rng)
    img = rng.uniform(-1, 1, (16, 16))
    mask = (rng.random(img.shape) < 0.5).astype(np.uint8)
    out = kernels.lut_apply(img, lut_x, lut_y, mask)
    bg = mask == 0
    assert np.array_equal(out[bg], img[bg])
    assert not np.array_equal(out[~bg], img[~bg])


def test_lut_clamps_beyond_knots():
    lut_x = np.array([-1.0, 0.0, 1.0])
    lut_y = np.array([-0.5, 0.1, 0.5])
    img = np.array([[-2.0, -1.0, 1.0, 2.0]])
    mask = np.ones(img.shape, dtype=np.uint8)
    out = kernels.lut_apply(img, lut_x, lut_y, mask)
    assert out[0, 0] == -0.5 and out[0, 1] == -0.5
    assert out[0, 2] == 0.5 and out[0, 3] == 0.5


def test_backends_bit_identical(rng):
    core = pytest.importorskip("dnseg.kernels._core")
    lut_x, lut_y = _random_lut(rng)
    img = rng.uniform(-1, 1, (64, 64))
    mask = (rng.random(img.shape) < 0.8).astype(np.uint8)
    a = core.lut_apply(img, lut_x, lut_y, mask)
    b = _fallback.lut_apply(img, lut_x, lut_y, mask)
    assert np.array_equal(a, b)

    pa = rng.integers(0, 50, (120, 2))
    pb = rng.integers(0, 50, (90, 2))
    da = core.directed_hausdorff(pa, pb, 0.7, 1.3)
    db = _fallback.directed_hausdorff(pa, pb, 0.7, 1.3)
    assert da == db


def _brute_directed(pa, pb, sy, sx):
    worst = 0.0
    for ay, ax in pa:
        best = np.inf
        for by, bx in pb:
            dy = (ay - by) * sy
            dx = (ax - bx) * sx
            d2 = dy * dy + dx * dx
            if d2 < best:
                best = d2
        if best > worst:
            worst = best
    return float(np.sqrt(worst))


def test_hausdorff_matches_bruteforce(rng):
    for _ in range(5):
        pa = rng.integers(0, 20, (rng.integers(1, 40), 2))
        pb = rng.integers(0, 20, (rng.integers(1, 40), 2))
        got = kernels.directed_hausdorff(pa, pb, 1.0, 1.0)
        assert got == _brute_directed(pa, pb, 1.0, 1.0)


def test_hausdorff_anisotropic_spacing():
    pa = np.array([[0, 0]])
    pb = np.array([[3, 4]])
    d = kernels.directed_hausdorff(pa, pb, 2.0, 1.0)
    assert d == pytest.approx(np.sqrt((3 * 2.0) ** 2 + 4.0**2), abs=1e-12)


def test_hausdorff_rejects_empty():
    pts = np.array([[1, 1]])
    empty = np.empty((0, 2), dtype=np.int64)
    with pytest.raises(ValueError):
        kernels.directed_hausdorff(empty, pts, 1.0, 1.0)
    with pytest.raises(ValueError):
        kernels.directed_hausdorff(pts, empty, 1.0, 1.0)


def test_backend_reports_name():
    assert kernels.BACKEND in {"cython", "python"}
