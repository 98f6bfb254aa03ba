"""Manifest-driven datasets: loading images as vectors, synthesizing test data.

The manifest is a plain CSV-ish text file (UTF-8, LF, no quoting):

    width,height
    relative/path.pgm,subject_id,train
    ...

Images are canonical 8-bit binary PGM (P5); other formats are read through
Pillow and converted to luminance.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ImageFormatError, InvalidInputError, ManifestError

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ImageRecord:
    path: str
    subject_id: str
    split: str  # "train" or "test"


@dataclass
class Manifest:
    records: list
    image_width: int
    image_height: int
    base_dir: str = "."  # relative record paths resolve against this

    @property
    def dims(self):
        return (self.image_width, self.image_height)

    def resolve(self, record):
        return os.path.join(self.base_dir, record.path)

    def train_records(self):
        return [r for r in self.records if r.split == "train"]

    def test_records(self):
        return [r for r in self.records if r.split == "test"]


@dataclass(frozen=True)
class ImageVector:
    data: np.ndarray  # flattened row-major, values in [0, 255], length w*h
    source: ImageRecord


def load_manifest(path):
    """Parse a manifest file. Errors name the offending line number."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    # drop a single trailing empty line from the final LF
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ManifestError("empty manifest: missing width,height header", line=1)

    header = lines[0].split(",")
    if len(header) != 2:
        raise ManifestError(f"line 1: expected 'width,height', got {lines[0]!r}", line=1)
    try:
        width, height = int(header[0]), int(header[1])
    except ValueError:
        raise ManifestError(f"line 1: non-integer dimensions {lines[0]!r}", line=1)
    if width <= 0 or height <= 0:
        raise ManifestError(f"line 1: dimensions must be positive, got {width}x{height}", line=1)

    records = []
    for i, line in enumerate(lines[1:], start=2):
        if line == "":
            raise ManifestError(f"line {i}: blank line", line=i)
        parts = line.split(",")
        if len(parts) != 3:
            raise ManifestError(f"line {i}: expected path,subject_id,split, got {line!r}", line=i)
        rpath, subject, split = parts
        if not subject:
            raise ManifestError(f"line {i}: empty subject_id", line=i)
        if split not in SPLITS:
            raise ManifestError(f"line {i}: unknown split {split!r} (want train|test)", line=i)
        records.append(ImageRecord(path=rpath, subject_id=subject, split=split))

    if not any(r.split == "train" for r in records):
        raise ManifestError("manifest has no train records", line=len(lines))
    base = os.path.dirname(os.path.abspath(path))
    return Manifest(records=records, image_width=width, image_height=height, base_dir=base)


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{manifest.image_width},{manifest.image_height}\n")
        for r in manifest.records:
            if "," in r.path or "," in r.subject_id:
                raise InvalidInputError(f"manifest fields may not contain commas: {r}")
            fh.write(f"{r.path},{r.subject_id},{r.split}\n")


def write_pgm(path, pixels):
    """Write an 8-bit binary PGM (P5, maxval 255). pixels: 2-d uint8-able array."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise InvalidInputError(f"PGM needs a 2-d array, got shape {arr.shape}")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def read_pgm(path):
    """Read an 8-bit binary PGM. Returns a (h, w) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ImageFormatError(f"{path}: not a binary PGM (missing P5 magic)")
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PGM header")
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise ImageFormatError(f"{path}: raster truncated ({len(raster)} of {w * h} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def _luminance(rgb):
    # ITU-R 601 weights, rounded to nearest integer
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.rint(y)


def load_image_vector(record, expected_dims, base_dir="."):
    """Load one record as a flat grayscale vector in [0, 255].

    expected_dims is (width, height); a mismatch is an error, never a resize.
    Color inputs are converted to luminance (0.299 R + 0.587 G + 0.114 B,
    rounded).
    """
    path = os.path.join(base_dir, record.path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
    except OSError as exc:
        raise ImageFormatError(f"cannot read image {path}: {exc}") from exc

    if magic == b"P5":
        gray = read_pgm(path).astype(float)
    else:
        try:
            from PIL import Image
        except ImportError as exc:  # pragma: no cover
            raise ImageFormatError(f"{path}: not a PGM and Pillow is unavailable") from exc
        try:
            with Image.open(path) as img:
                if img.mode in ("L", "I;16", "I"):
                    gray = np.asarray(img.convert("L"), dtype=float)
                else:
                    rgb = np.asarray(img.convert("RGB"), dtype=float)
                    gray = _luminance(rgb)
        except OSError as exc:
            raise ImageFormatError(f"cannot decode image {path}: {exc}") from exc

    h, w = gray.shape
    ew, eh = expected_dims
    if (w, h) != (ew, eh):
        raise DimensionMismatchError(f"{path}: image is {w}x{h}, manifest says {ew}x{eh}")
    return ImageVector(data=gray.reshape(-1), source=record)


def load_split(manifest, split):
    """Load every record of one split as (ImageVector, subject_id) pairs."""
    out = []
    for r in manifest.records:
        if r.split == split:
            iv = load_image_vector(r, manifest.dims, base_dir=manifest.base_dir)
            out.append((iv, r.subject_id))
    return out


def _smooth_field(rng, width, height, coarse=5):
    """Seeded smooth random field: coarse random grid, bilinear upsample."""
    grid = rng.random((coarse, coarse))
    xs = np.linspace(0.0, coarse - 1, width)
    ys = np.linspace(0.0, coarse - 1, height)
    idx = np.arange(coarse, dtype=float)
    rows = np.empty((coarse, width))
    for i in range(coarse):
        rows[i] = np.interp(xs, idx, grid[i])
    out = np.empty((height, width))
    for j in range(width):
        out[:, j] = np.interp(ys, idx, rows[:, j])
    lo, hi = out.min(), out.max()
    if hi > lo:
        out = (out - lo) / (hi - lo) * 255.0
    return np.rint(out)


def synth_dataset(num_subjects, train_per_subject, test_per_subject, dims,
                  noise_sigma, seed, out_dir, impostors=0):
    """Generate a deterministic synthetic dataset on disk; returns its Manifest.

    Each subject gets a smooth random prototype in [0, 255]; every instance is
    prototype + Gaussian noise (sigma = noise_sigma), clamped and rounded to
    8-bit. `impostors` extra subjects get only test images (absent from the
    gallery). The same seed reproduces byte-identical files.
    """
    if num_subjects < 1 or train_per_subject < 1 or test_per_subject < 1:
        raise InvalidInputError("subject and per-subject counts must be >= 1")
    if noise_sigma < 0:
        raise InvalidInputError(f"noise_sigma must be >= 0, got {noise_sigma}")
    width, height = dims
    if width < 1 or height < 1:
        raise InvalidInputError(f"dims must be positive, got {dims}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create output directory {out_dir}: {exc}") from exc

    rng = np.random.default_rng(seed)
    total = num_subjects + impostors
    protos = [_smooth_field(rng, width, height) for _ in range(total)]
    for i in range(total):
        for j in range(i + 1, total):
            if np.array_equal(protos[i], protos[j]):
                raise InvalidInputError(
                    f"prototype collision between subjects {i} and {j}; change the seed")

    records = []
    for s in range(total):
        sid = f"s{s:03d}"
        enrolled = s < num_subjects
        n_train = train_per_subject if enrolled else 0
        for k in range(n_train + test_per_subject):
            split = "train" if k < n_train else "test"
            img = protos[s]
            if noise_sigma > 0:
                img = img + rng.normal(0.0, noise_sigma, size=img.shape)
            pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
            name = f"{sid}_{split}_{k:02d}.pgm"
            write_pgm(os.path.join(out_dir, name), pixels)
            records.append(ImageRecord(path=name, subject_id=sid, split=split))

    manifest = Manifest(records=records, image_width=width, image_height=height,
                        base_dir=os.path.abspath(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest
