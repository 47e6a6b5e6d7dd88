"""Dataset handling: class metadata, directory scanning, image decode and
preprocessing, augmentation, deterministic splits, batching, and a
synthetic dataset generator for desk-scale tests.

Images flow through as channels-last float32 arrays; bilinear resampling
is center-aligned (source = (dest + 0.5) * scale - 0.5) with coordinates
clamped to the image border.
"""
import colorsys
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from leafcnn.errors import DecodeError, ManifestError
from leafcnn.tensor import SeededRng, Tensor

log = logging.getLogger(__name__)

IMAGE_SIZE = 256
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class ClassInfo:
    class_index: int
    plant: str
    condition: str  # disease name, or "Healthy"
    healthy: bool
    directory_name: str
    plant_emoji: str

    def to_dict(self) -> dict:
        return {
            "class_index": self.class_index,
            "plant": self.plant,
            "condition": self.condition,
            "healthy": self.healthy,
            "directory_name": self.directory_name,
            "plant_emoji": self.plant_emoji,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassInfo":
        return cls(d["class_index"], d["plant"], d["condition"], d["healthy"],
                   d["directory_name"], d["plant_emoji"])


@dataclass(frozen=True)
class Sample:
    path: Path
    class_index: int


@dataclass
class DatasetManifest:
    root: Path
    samples: list
    classes: list  # the full 38-entry class table

    def class_counts(self) -> dict:
        counts = {}
        for s in self.samples:
            counts[s.class_index] = counts.get(s.class_index, 0) + 1
        return counts


@dataclass
class AugmentConfig:
    rotation_degrees_max: float = 20.0
    horizontal_flip_prob: float = 0.5
    vertical_flip_prob: float = 0.5
    zoom_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        if self.rotation_degrees_max < 0:
            raise ValueError("rotation_degrees_max must be >= 0")
        for p in (self.horizontal_flip_prob, self.vertical_flip_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"flip probability {p} outside [0, 1]")
        lo, hi = self.zoom_range
        if not (0 < lo <= hi):
            raise ValueError(f"zoom_range {self.zoom_range} must be positive with lo <= hi")


@dataclass
class Batch:
    inputs: Tensor  # [N, H, W, 3] in [0, 1]
    labels: np.ndarray  # [N] class indices


def load_class_table() -> list:
    """The canonical 38-class table shipped with the package."""
    text = resources.files("leafcnn").joinpath("classes.json").read_text("utf-8")
    table = [ClassInfo.from_dict(d) for d in json.loads(text)]
    if [c.class_index for c in table] != list(range(38)):
        raise ManifestError("class table must hold indices 0..37 in order")
    return table


def scan_manifest(root, validate: bool = True) -> DatasetManifest:
    """Walk a class-per-directory image tree.

    Directory names are matched case-insensitively against the class
    table; unmatched directories and rejected files are logged and
    skipped. Raises when the root is missing or no directory matches.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    classes = load_class_table()
    by_dir = {c.directory_name.lower(): c for c in classes}
    samples = []
    matched = 0
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        info = by_dir.get(entry.name.lower())
        if info is None:
            log.warning("ignoring unknown class directory %s", entry.name)
            continue
        matched += 1
        count = 0
        for f in sorted(entry.iterdir()):
            if f.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            if validate:
                ok, reason = validate_image(f)
                if not ok:
                    log.warning("skipping %s: %s", f, reason)
                    continue
            samples.append(Sample(f, info.class_index))
            count += 1
        if count == 0:
            log.warning("class directory %s holds no usable images", entry.name)
    if matched == 0:
        raise ManifestError(f"no class directories matched under {root}")
    return DatasetManifest(root, samples, classes)


def _sample_bilinear(img: Tensor, ys, xs) -> Tensor:
    """Bilinear lookup of img[ys, xs] with border clamping.

    ys/xs are float coordinate grids of the output shape; out-of-range
    coordinates read the nearest edge pixel.
    """
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(img.dtype)[..., None]
    fx = (xs - x0).astype(img.dtype)[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def resize_bilinear(img: Tensor, out_h: int, out_w: int) -> Tensor:
    h, w = img.shape[:2]
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    return _sample_bilinear(img, *np.meshgrid(ys, xs, indexing="ij"))


def decode_resize(path, size: int = IMAGE_SIZE) -> Tensor:
    """Decode PNG/JPEG to float32 RGB [size, size, 3], values 0..255."""
    try:
        with Image.open(path) as im:
            img = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise DecodeError(f"cannot decode {path}: {e}") from e
    if img.shape[:2] != (size, size):
        img = resize_bilinear(img, size, size).astype(np.float32)
    return img


def normalize(img: Tensor) -> Tensor:
    """Map pixel values 0..255 to 0..1."""
    img = np.asarray(img, dtype=np.float32)
    if img.size and (img.min() < 0 or img.max() > 255):
        raise ValueError("pixel values outside [0, 255]")
    return img / np.float32(255.0)


def validate_image(path):
    """Noise filter: (accepted, reason). Rejects files that fail to
    decode and blank zero-variance images; everything else passes."""
    try:
        with Image.open(path) as im:
            img = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        return False, f"decode failure: {e}"
    if img.std() == 0.0:
        return False, "zero variance"
    return True, None


def augment(img: Tensor, cfg: AugmentConfig, rng: SeededRng) -> Tensor:
    """Random rotation, flips, zoom, in that order; disabled stages are
    exact pass-throughs and draw nothing from rng."""
    h, w = img.shape[:2]
    if cfg.rotation_degrees_max > 0:
        angle = math.radians(rng.uniform((), -cfg.rotation_degrees_max, cfg.rotation_degrees_max)[()])
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        dy, dx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
        cos_a, sin_a = math.cos(angle), math.sin(angle)
        img = _sample_bilinear(img, cy + dy * cos_a - dx * sin_a, cx + dy * sin_a + dx * cos_a)
    if cfg.horizontal_flip_prob > 0 and rng.random() < cfg.horizontal_flip_prob:
        img = img[:, ::-1]
    if cfg.vertical_flip_prob > 0 and rng.random() < cfg.vertical_flip_prob:
        img = img[::-1]
    lo, hi = cfg.zoom_range
    if (lo, hi) != (1.0, 1.0):
        zoom = rng.uniform((), lo, hi)[()] if lo < hi else lo
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        dy, dx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
        img = _sample_bilinear(img, cy + dy / zoom, cx + dx / zoom)
    return np.clip(np.ascontiguousarray(img, dtype=np.float32), 0.0, 1.0)


def split(samples, train_fraction: float, seed: int):
    """Seeded stratified partition: round(train_fraction * n) of each
    class to train, the rest to val."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction {train_fraction} outside (0, 1)")
    by_class = {}
    for s in samples:
        by_class.setdefault(s.class_index, []).append(s)
    rng = SeededRng(seed)
    train, val = [], []
    for class_index in sorted(by_class):
        group = sorted(by_class[class_index], key=lambda s: str(s.path))
        order = rng.child("split", class_index).permutation(len(group))
        shuffled = [group[i] for i in order]
        if len(group) < 2:
            log.warning("class %d has %d sample(s); keeping all in train", class_index, len(group))
            train += shuffled
            continue
        n_train = int(math.floor(train_fraction * len(group) + 0.5))
        train += shuffled[:n_train]
        val += shuffled[n_train:]
    return train, val


def batches(samples, batch_size: int, shuffle_seed: int,
            size: int = IMAGE_SIZE, augment_cfg: AugmentConfig = None):
    """Yield one epoch of Batch in seeded-shuffled order; the final
    partial batch is included. Per-sample augmentation streams derive
    from the epoch seed and the sample's position, so results do not
    depend on decode scheduling."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = SeededRng(shuffle_seed) if isinstance(shuffle_seed, int) else shuffle_seed
    order = rng.permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        chunk = order[start:start + batch_size]
        inputs = np.empty((len(chunk), size, size, 3), dtype=np.float32)
        labels = np.empty(len(chunk), dtype=np.int64)
        for pos, i in enumerate(chunk):
            s = samples[int(i)]
            img = normalize(decode_resize(s.path, size))
            if augment_cfg is not None:
                img = augment(img, augment_cfg, rng.child("augment", start + pos))
            inputs[pos] = img
            labels[pos] = s.class_index
        yield Batch(inputs, labels)


def generate_synthetic_dataset(n_classes: int, n_per_class: int, seed: int, out_dir,
                               size: int = 64) -> Path:
    """Write a small class-per-directory PNG tree for desk-scale runs.

    Classes reuse the first n canonical directory names; each gets a
    distinct base color plus an oriented stripe texture, with per-image
    phase and noise. Deterministic for a given seed.
    """
    if not 1 <= n_classes <= 38:
        raise ValueError("n_classes must be in 1..38")
    out_dir = Path(out_dir)
    table = load_class_table()[:n_classes]
    rng = SeededRng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for k, info in enumerate(table):
        class_dir = out_dir / info.directory_name
        class_dir.mkdir(parents=True, exist_ok=True)
        base = np.array(colorsys.hsv_to_rgb((k * 0.618034) % 1.0, 0.65, 0.75), dtype=np.float32)
        theta = k * math.pi / 4.0
        freq = 2.0 + k
        axis = (xx * math.cos(theta) + yy * math.sin(theta)) / size
        for j in range(n_per_class):
            phase = rng.uniform((), 0.0, 2.0 * math.pi)[()]
            stripes = 0.22 * np.sin(2.0 * math.pi * freq * axis + phase)[..., None]
            noise = rng.normal((size, size, 3), std=0.03)
            img = np.clip(base + stripes + noise, 0.0, 1.0)
            pixels = (img * 255.0 + 0.5).astype(np.uint8)
            Image.fromarray(pixels, "RGB").save(class_dir / f"img_{j:04d}.png")
    return out_dir
