"""Slice archives, preprocessing, geometric augmentation, synthetic benchmark.

Archive layout: one directory per dataset holding manifest.json plus one
pair of binaries per slice ({case}_s{idx}.img float32-LE, .lbl uint8,
row-major). The manifest records shapes, spacing, class count, case
splits, and sha256 checksums, so a reload is verifiably bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

ARCHIVE_VERSION = 1

# resampling fills pixels that fall outside the source frame
IMAGE_FILL = -1.0
LABEL_FILL = 0


class ArchiveError(ValueError):
    """Malformed, inconsistent, or corrupted slice archive."""


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass
class SliceSample:
    """One 2D slice: image in [-1,1], integer class labels, mm spacing."""

    image: np.ndarray
    label: np.ndarray
    spacing: tuple[float, float]
    case_id: str
    slice_index: int

    def __post_init__(self):
        if self.image.shape != self.label.shape:
            raise ValueError(
                f"image shape {self.image.shape} != label shape {self.label.shape}"
            )

    def with_image(self, image: np.ndarray) -> "SliceSample":
        """Copy of this sample with a new image; the label array is copied."""
        return replace(self, image=image, label=self.label.copy())


@dataclass
class CaseEntry:
    case_id: str
    num_slices: int
    split: Split


@dataclass
class CaseManifest:
    modality: str
    num_classes: int
    spacing: tuple[float, float]
    shape: tuple[int, int]
    cases: list[CaseEntry] = field(default_factory=list)

    def split_of(self, case_id: str) -> Split:
        for c in self.cases:
            if c.case_id == case_id:
                return c.split
        raise KeyError(case_id)

    def case_ids(self, split: Split | None = None) -> list[str]:
        return [c.case_id for c in self.cases if split is None or c.split is split]


def _slice_name(case_id: str, slice_index: int) -> str:
    return f"{case_id}_s{slice_index:03d}"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save_archive(path, manifest: CaseManifest, samples: Iterable[SliceSample]) -> Path:
    """Write samples plus manifest.json; returns the archive directory.

    Samples must arrive grouped per manifest case order with slice_index
    0..n-1; the manifest is written last so its checksums cover exactly
    the bytes on disk.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    h, w = manifest.shape
    expected = [
        (c.case_id, i) for c in manifest.cases for i in range(c.num_slices)
    ]
    checksums: dict[str, str] = {}
    count = 0
    for sample, (case_id, idx) in zip(samples, expected, strict=True):
        if (sample.case_id, sample.slice_index) != (case_id, idx):
            raise ArchiveError(
                f"sample order mismatch: got {sample.case_id}/{sample.slice_index}, "
                f"manifest expects {case_id}/{idx}"
            )
        if sample.image.shape != (h, w):
            raise ArchiveError(f"slice shape {sample.image.shape} != manifest {manifest.shape}")
        if sample.label.min() < 0 or sample.label.max() >= manifest.num_classes:
            raise ArchiveError("label ids outside [0, num_classes)")
        img_bytes = np.ascontiguousarray(sample.image, dtype="<f4").tobytes()
        lbl_bytes = np.ascontiguousarray(sample.label, dtype=np.uint8).tobytes()
        stem = _slice_name(case_id, idx)
        (root / f"{stem}.img").write_bytes(img_bytes)
        (root / f"{stem}.lbl").write_bytes(lbl_bytes)
        checksums[f"{stem}.img"] = _sha256(img_bytes)
        checksums[f"{stem}.lbl"] = _sha256(lbl_bytes)
        count += 1

    doc = {
        "version": ARCHIVE_VERSION,
        "modality": manifest.modality,
        "num_classes": manifest.num_classes,
        "spacing": [float(s) for s in manifest.spacing],
        "shape": [int(h), int(w)],
        "cases": [
            {"case_id": c.case_id, "num_slices": c.num_slices, "split": c.split.value}
            for c in manifest.cases
        ],
        "checksums": checksums,
    }
    (root / "manifest.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return root


def _read_manifest(root: Path) -> tuple[CaseManifest, dict[str, str]]:
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ArchiveError(f"missing manifest: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"unparseable manifest: {exc}") from exc
    required = {"version", "modality", "num_classes", "spacing", "shape", "cases", "checksums"}
    missing = required - doc.keys()
    if missing:
        raise ArchiveError(f"manifest missing keys: {sorted(missing)}")
    if doc["version"] != ARCHIVE_VERSION:
        raise ArchiveError(f"unsupported archive version {doc['version']}")
    try:
        cases = [
            CaseEntry(c["case_id"], int(c["num_slices"]), Split(c["split"]))
            for c in doc["cases"]
        ]
        manifest = CaseManifest(
            modality=str(doc["modality"]),
            num_classes=int(doc["num_classes"]),
            spacing=(float(doc["spacing"][0]), float(doc["spacing"][1])),
            shape=(int(doc["shape"][0]), int(doc["shape"][1])),
            cases=cases,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ArchiveError(f"malformed manifest field: {exc}") from exc
    if manifest.num_classes < 2:
        raise ArchiveError("num_classes must be >= 2")
    ids = manifest.case_ids()
    if len(set(ids)) != len(ids):
        raise ArchiveError("duplicate case ids")
    return manifest, dict(doc["checksums"])


def _read_checked(root: Path, name: str, checksums: dict[str, str], nbytes: int) -> bytes:
    fp = root / name
    if not fp.is_file():
        raise ArchiveError(f"missing slice file: {fp}")
    data = fp.read_bytes()
    if name not in checksums:
        raise ArchiveError(f"file absent from manifest checksums: {name}")
    if _sha256(data) != checksums[name]:
        raise ArchiveError(f"checksum mismatch: {name}")
    if len(data) != nbytes:
        raise ArchiveError(f"{name}: expected {nbytes} bytes, found {len(data)}")
    return data


def load_archive(path) -> tuple[CaseManifest, Iterator[SliceSample]]:
    """Open an archive; slices stream lazily with checksum verification."""
    root = Path(path)
    manifest, checksums = _read_manifest(root)
    h, w = manifest.shape

    def _iter() -> Iterator[SliceSample]:
        for case in manifest.cases:
            for idx in range(case.num_slices):
                stem = _slice_name(case.case_id, idx)
                img = np.frombuffer(
                    _read_checked(root, f"{stem}.img", checksums, h * w * 4), dtype="<f4"
                ).reshape(h, w).astype(np.float32)
                lbl = np.frombuffer(
                    _read_checked(root, f"{stem}.lbl", checksums, h * w), dtype=np.uint8
                ).reshape(h, w).astype(np.int64)
                if lbl.max() >= manifest.num_classes:
                    raise ArchiveError(f"{stem}: label id >= num_classes")
                if img.min() < -1.0 - 1e-6 or img.max() > 1.0 + 1e-6:
                    raise ArchiveError(f"{stem}: intensities outside [-1, 1]")
                yield SliceSample(
                    image=img,
                    label=lbl,
                    spacing=manifest.spacing,
                    case_id=case.case_id,
                    slice_index=idx,
                )

    return manifest, _iter()


def load_split(path, split: Split) -> tuple[CaseManifest, list[SliceSample]]:
    """Load every slice belonging to one split, in manifest order."""
    manifest, it = load_archive(path)
    wanted = set(manifest.case_ids(split))
    return manifest, [s for s in it if s.case_id in wanted]


# ---------------------------------------------------------------------------
# resampling

def resize_bilinear(image: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Half-pixel-centered bilinear resize with edge clamping.

    Output pixel (i, j) samples the source at ((i+0.5)*H/out_H - 0.5,
    (j+0.5)*W/out_W - 0.5); resizing to the same size is exact.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    oh, ow = target_size
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = (1.0 - fx)[None, :] * img[np.ix_(y0c, x0c)] + fx[None, :] * img[np.ix_(y0c, x1c)]
    bot = (1.0 - fx)[None, :] * img[np.ix_(y1c, x0c)] + fx[None, :] * img[np.ix_(y1c, x1c)]
    return (1.0 - fy)[:, None] * top + fy[:, None] * bot


def resize_nearest(label: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize for label maps (same half-pixel mapping)."""
    lbl = np.asarray(label)
    h, w = lbl.shape
    oh, ow = target_size
    ys = np.minimum(np.floor((np.arange(oh) + 0.5) * (h / oh)).astype(np.int64), h - 1)
    xs = np.minimum(np.floor((np.arange(ow) + 0.5) * (w / ow)).astype(np.int64), w - 1)
    return lbl[np.ix_(ys, xs)]


def preprocess(raw_slice: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Resize then min-max normalize to [-1, 1]; constant slices map to -1.

    Normalization runs last so the output attains both -1 and 1, making
    the operation idempotent.
    """
    raw = np.asarray(raw_slice, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError(f"expected 2D slice, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw slice contains non-finite values")
    if raw.min() == raw.max():
        return np.full(target_size, -1.0, dtype=np.float32)
    resized = resize_bilinear(raw, target_size)
    lo = resized.min()
    hi = resized.max()
    if hi == lo:
        return np.full(target_size, -1.0, dtype=np.float32)
    out = 2.0 * (resized - lo) / (hi - lo) - 1.0
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# geometric augmentation

def _affine_src_coords(shape, angle_deg: float, scale: float):
    """Inverse-map coordinates: positive angle rotates content like np.rot90."""
    h, w = shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    dy = np.arange(h, dtype=np.float64)[:, None] - cy
    dx = np.arange(w, dtype=np.float64)[None, :] - cx
    src_y = (cos_t * dy + sin_t * dx) / scale + cy
    src_x = (-sin_t * dy + cos_t * dx) / scale + cx
    return src_y, src_x


def _sample_bilinear_at(img, src_y, src_x, fill):
    h, w = img.shape
    y0 = np.floor(src_y)
    x0 = np.floor(src_x)
    fy = src_y - y0
    fx = src_x - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    out = (1.0 - fy) * ((1.0 - fx) * img[y0c, x0c] + fx * img[y0c, x1c]) + fy * (
        (1.0 - fx) * img[y1c, x0c] + fx * img[y1c, x1c]
    )
    outside = (src_y < -1e-9) | (src_y > h - 1 + 1e-9) | (src_x < -1e-9) | (src_x > w - 1 + 1e-9)
    return np.where(outside, fill, out)


def _sample_nearest_at(lbl, src_y, src_x, fill):
    h, w = lbl.shape
    yr = np.rint(src_y).astype(np.int64)
    xr = np.rint(src_x).astype(np.int64)
    inside = (yr >= 0) & (yr < h) & (xr >= 0) & (xr < w)
    out = lbl[np.clip(yr, 0, h - 1), np.clip(xr, 0, w - 1)]
    return np.where(inside, out, fill)


def apply_geometric(
    image: np.ndarray,
    label: np.ndarray,
    crop_top: int,
    crop_left: int,
    crop_h: int,
    crop_w: int,
    angle_deg: float,
    scale: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Crop-and-resize-back, then rotate+zoom about the center.

    Bilinear on the image (filling -1 outside the frame), nearest on the
    label (filling 0). Identity parameters return the input unchanged.
    """
    h, w = image.shape
    img = np.asarray(image, dtype=np.float64)
    lbl = np.asarray(label)
    if not (0 <= crop_top and crop_top + crop_h <= h and 0 <= crop_left and crop_left + crop_w <= w):
        raise ValueError("crop window outside image bounds")
    img = resize_bilinear(img[crop_top : crop_top + crop_h, crop_left : crop_left + crop_w], (h, w))
    lbl = resize_nearest(lbl[crop_top : crop_top + crop_h, crop_left : crop_left + crop_w], (h, w))
    src_y, src_x = _affine_src_coords((h, w), angle_deg, scale)
    img = _sample_bilinear_at(img, src_y, src_x, IMAGE_FILL)
    lbl = _sample_nearest_at(lbl, src_y, src_x, LABEL_FILL)
    np.clip(img, -1.0, 1.0, out=img)
    return img.astype(image.dtype), lbl.astype(label.dtype)


def geometric_augment(sample: SliceSample, rng: np.random.Generator) -> SliceSample:
    """Random crop (0.8-1.0 of the frame), rotation (±15°), scale (0.9-1.1)."""
    h, w = sample.image.shape
    frac = rng.uniform(0.8, 1.0)
    ch = max(1, round(frac * h))
    cw = max(1, round(frac * w))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    angle = rng.uniform(-15.0, 15.0)
    scale = rng.uniform(0.9, 1.1)
    img, lbl = apply_geometric(sample.image, sample.label, top, left, ch, cw, angle, scale)
    return replace(sample, image=img, label=lbl)


# ---------------------------------------------------------------------------
# synthetic cross-modality benchmark

# intensity bands before noise; modality B is the negation of A
SYNTH_BG_A = (-0.9, -0.5)
SYNTH_FG_A = (0.3, 0.8)
SYNTH_NOISE_SIGMA = 0.05
SYNTH_SPACING = (1.0, 1.0)
SYNTH_NUM_CLASSES = 2
SYNTH_TRAIN_FRACTION = 0.8


def _ellipse_mask(size: int, cy, cx, ry, rx, tilt) -> np.ndarray:
    yy = np.arange(size, dtype=np.float64)[:, None] - cy
    xx = np.arange(size, dtype=np.float64)[None, :] - cx
    ct, st = math.cos(tilt), math.sin(tilt)
    u = (ct * yy + st * xx) / ry
    v2 = (-st * yy + ct * xx) / rx
    return (u * u + v2 * v2) <= 1.0


def generate_synthetic_benchmark(
    out_dir,
    num_cases: int = 25,
    slices_per_case: int = 10,
    image_size: int = 64,
    seed: int = 0,
) -> tuple[Path, Path]:
    """Write paired modality archives; returns (path_a, path_b).

    Each case is an elliptical structure whose radius follows a smooth
    through-slice profile. Modality A shows it bright on dark, modality
    B dark on bright (negated intensities, fresh noise); label maps are
    identical, so per-slice evaluation is paired. The train/test case
    split is shared by both modalities.
    """
    if num_cases < 2:
        raise ValueError("need at least 2 cases to form a split")
    if image_size < 16 or image_size % 16 != 0:
        raise ValueError("image_size must be a positive multiple of 16")
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)

    case_ids = [f"case{c:03d}" for c in range(num_cases)]
    order = rng.permutation(num_cases)
    n_train = max(1, min(num_cases - 1, round(SYNTH_TRAIN_FRACTION * num_cases)))
    train_set = {case_ids[i] for i in order[:n_train]}
    cases = [
        CaseEntry(cid, slices_per_case, Split.TRAIN if cid in train_set else Split.TEST)
        for cid in case_ids
    ]

    samples_a: list[SliceSample] = []
    samples_b: list[SliceSample] = []
    s = float(image_size)
    for cid in case_ids:
        cy = rng.uniform(0.35, 0.65) * s
        cx = rng.uniform(0.35, 0.65) * s
        ry = rng.uniform(0.13, 0.20) * s
        rx = rng.uniform(0.13, 0.20) * s
        tilt = rng.uniform(0.0, math.pi)
        # one acquisition per case: intensity levels are case constants
        bg = rng.uniform(*SYNTH_BG_A)
        fg = rng.uniform(*SYNTH_FG_A)
        for idx in range(slices_per_case):
            # radius swells mildly toward the middle slice, like a volume
            profile = 0.8 + 0.2 * math.sin(math.pi * (idx + 1) / (slices_per_case + 1))
            mask = _ellipse_mask(image_size, cy, cx, ry * profile, rx * profile, tilt)
            base = np.where(mask, fg, bg)
            noise_a = rng.normal(0.0, SYNTH_NOISE_SIGMA, size=mask.shape)
            noise_b = rng.normal(0.0, SYNTH_NOISE_SIGMA, size=mask.shape)
            img_a = np.clip(base + noise_a, -1.0, 1.0).astype(np.float32)
            img_b = np.clip(-base + noise_b, -1.0, 1.0).astype(np.float32)
            lbl = mask.astype(np.int64)
            samples_a.append(SliceSample(img_a, lbl, SYNTH_SPACING, cid, idx))
            samples_b.append(SliceSample(img_b, lbl.copy(), SYNTH_SPACING, cid, idx))

    shape = (image_size, image_size)
    manifest_a = CaseManifest("synthA", SYNTH_NUM_CLASSES, SYNTH_SPACING, shape, cases)
    manifest_b = CaseManifest(
        "synthB", SYNTH_NUM_CLASSES, SYNTH_SPACING, shape, [replace(c) for c in cases]
    )
    path_a = save_archive(out_dir / "modality_a", manifest_a, samples_a)
    path_b = save_archive(out_dir / "modality_b", manifest_b, samples_b)
    return path_a, path_b
