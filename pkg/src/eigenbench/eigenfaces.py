"""The eigenfaces pipeline: train, prune, project, match.

Training mean-centers the image vectors, eigendecomposes the small Gram
matrix A^T A, lifts its eigenvectors through A to get the eigenfaces, and
stores one averaged projection per subject as the gallery template. Matching
is nearest class projection by squared Euclidean distance, thresholded.
"""

import struct
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .dataset import ImageVector
from .errors import (
    DegenerateTrainingError,
    DimensionMismatchError,
    EmptySelectionError,
    InvalidInputError,
    ModelFormatError,
    UnsupportedVersionError,
)
from .numerics import gram_matrix, sym_eig

# Eigenvalues at or below this fraction of the largest are zero-rank noise
# (the decomposition can even produce slightly negative ones).
EIGENVALUE_FLOOR_RTOL = 1e-10
# Lifted vectors shorter than this are numerically null and dropped.
LIFT_NORM_FLOOR = 1e-12 * 255.0

MODEL_MAGIC = b"EFM1"


@dataclass(frozen=True)
class SelectionRule:
    """How eigenfaces are chosen: top_k count or eigenvalue threshold, not both."""

    top_k: int = None
    value_threshold: float = None

    def __post_init__(self):
        if (self.top_k is None) == (self.value_threshold is None):
            raise InvalidInputError("set exactly one of top_k / value_threshold")
        if self.top_k is not None and self.top_k < 1:
            raise InvalidInputError(f"top_k must be >= 1, got {self.top_k}")
        if self.value_threshold is not None and np.isnan(self.value_threshold):
            raise InvalidInputError("value_threshold may not be NaN")


def keep_all():
    """Selection rule that keeps every non-degenerate eigenface."""
    return SelectionRule(value_threshold=-np.inf)


@dataclass
class TrainingSet:
    vectors: np.ndarray  # (M, D), one image vector per row, values in [0, 255]
    subjects: list  # subject_id per row

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            raise InvalidInputError(f"vectors must be 2-d, got shape {self.vectors.shape}")
        if len(self.subjects) != self.vectors.shape[0]:
            raise InvalidInputError("one subject_id per image vector required")
        if self.vectors.shape[0] < 2:
            raise InvalidInputError("training needs at least 2 images")
        if len(set(self.subjects)) < 2:
            warnings.warn("training set has a single subject; matching is degenerate")

    @property
    def count(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def class_counts(self):
        counts = {}
        for s in self.subjects:
            counts[s] = counts.get(s, 0) + 1
        return counts

    @classmethod
    def from_pairs(cls, pairs):
        """Build from (ImageVector, subject_id) pairs as loaded from a manifest."""
        vecs = np.stack([iv.data for iv, _ in pairs])
        return cls(vectors=vecs, subjects=[sid for _, sid in pairs])


@dataclass
class EigenModel:
    mean_face: np.ndarray  # (D,)
    eigenvalues: np.ndarray  # all M spectrum values, sorted descending
    eigenfaces: np.ndarray  # (D, m'), unit columns
    selection: SelectionRule
    class_projections: dict  # subject_id -> (m',) vector
    dims: tuple  # (width, height)
    class_counts: dict = None  # subject_id -> training images enrolled

    @property
    def kept_count(self):
        return self.eigenfaces.shape[1]

    @property
    def pixel_count(self):
        return self.eigenfaces.shape[0]

    @property
    def subjects(self):
        return sorted(self.class_projections)


@dataclass
class MatchDecision:
    accepted: bool
    subject_id: str  # best-matching subject whether accepted or not
    distance: float
    per_class_distances: dict


def compute_mean(ts):
    """The mean face: arithmetic average of all training vectors."""
    return ts.vectors.mean(axis=0)


def center(ts, mean_face):
    """Difference matrix: column i is image i minus the mean face. Shape (D, M)."""
    if len(mean_face) != ts.dim:
        raise DimensionMismatchError(
            f"mean face has length {len(mean_face)}, images have {ts.dim}")
    return (ts.vectors - mean_face).T


def select_eigenfaces(eigenvalues, rule):
    """Indices kept by a selection rule; always a prefix of the sorted order."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise EmptySelectionError("no eigenvalues to select from")
    if np.any(np.diff(lam) > 0):
        raise InvalidInputError("eigenvalues must be sorted descending")
    if rule.top_k is not None:
        n = min(rule.top_k, lam.size)
    else:
        n = int(np.count_nonzero(lam >= rule.value_threshold))
    if n == 0:
        raise EmptySelectionError(
            f"selection rule {rule} keeps no eigenfaces "
            f"(spectrum spans [{lam[-1]:g}, {lam[0]:g}])")
    return np.arange(n)


def distance(a, b):
    """Squared Euclidean distance between two projection vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def _image_data(image):
    return image.data if isinstance(image, ImageVector) else np.asarray(image, dtype=float)


def project(image, model):
    """Coordinates of a mean-centered image in the kept eigenface basis."""
    x = _image_data(image)
    if x.shape[0] != model.pixel_count:
        raise DimensionMismatchError(
            f"image has {x.shape[0]} pixels, model expects {model.pixel_count}")
    return model.eigenfaces.T @ (x - model.mean_face)


def class_projections(ts, mean_face, eigenfaces):
    """Per-subject average projection of that subject's own training images."""
    omega = eigenfaces.T @ center(ts, mean_face)  # (m', M)
    sums = {}
    counts = {}
    for i, sid in enumerate(ts.subjects):
        if sid in sums:
            sums[sid] = sums[sid] + omega[:, i]
            counts[sid] += 1
        else:
            sums[sid] = omega[:, i].copy()
            counts[sid] = 1
    return {sid: sums[sid] / counts[sid] for sid in sums}


def train(ts, selection, dims=None):
    """Train an EigenModel: mean, Gram spectrum, lifted eigenfaces, gallery.

    The full spectrum (all M values) is retained in the model; pruning only
    selects eigenface columns. Eigenvalues at the numerical-noise floor are
    never kept, regardless of the selection rule.
    """
    if dims is None:
        dims = (ts.dim, 1)
    psi = compute_mean(ts)
    a = center(ts, psi)  # (D, M)
    pairs = sym_eig(gram_matrix(a))
    lam = pairs.values
    if lam[0] <= 0.0:
        raise DegenerateTrainingError("training set has zero variance (all images identical)")
    floor = EIGENVALUE_FLOOR_RTOL * lam[0]
    available = int(np.count_nonzero(lam > floor))

    lifted = a @ pairs.vectors[:, :available]  # (D, available)
    norms = np.linalg.norm(lifted, axis=0)
    ok = norms >= LIFT_NORM_FLOOR * np.sqrt(ts.dim)
    # floor-excluded values sit at the end; null lifts can only shrink the prefix
    available = int(np.count_nonzero(np.cumprod(ok)))
    if available == 0:
        raise DegenerateTrainingError("no eigenvector survived lifting")
    u = lifted[:, :available] / norms[:available]

    kept = select_eigenfaces(lam[:available], selection)
    u = u[:, : kept.size]
    return EigenModel(
        mean_face=psi,
        eigenvalues=lam,
        eigenfaces=u,
        selection=selection,
        class_projections=class_projections(ts, psi, u),
        dims=dims,
        class_counts=ts.class_counts(),
    )


def truncate_model(model, kept_count):
    """Pruned copy keeping the first kept_count eigenfaces.

    Projections of any image under the result equal the leading coordinates of
    the full model's projection, so this is the pruning path used by the
    benchmark.
    """
    if kept_count < 1 or kept_count > model.kept_count:
        raise InvalidInputError(
            f"kept_count must be in [1, {model.kept_count}], got {kept_count}")
    return EigenModel(
        mean_face=model.mean_face,
        eigenvalues=model.eigenvalues,
        # contiguous copy: a strided column slice would still drag the full
        # matrix through the cache on every projection
        eigenfaces=np.ascontiguousarray(model.eigenfaces[:, :kept_count]),
        selection=SelectionRule(top_k=kept_count),
        class_projections={s: p[:kept_count] for s, p in model.class_projections.items()},
        dims=model.dims,
        class_counts=model.class_counts,
    )


def identify(probe, model, theta):
    """Match a probe against every class projection; accept if close enough.

    Best match is the argmin distance, ties broken by subject_id. Accepted iff
    the best (squared) distance is <= theta.
    """
    if not model.class_projections:
        raise InvalidInputError("model has no enrolled subjects")
    if theta < 0:
        raise InvalidInputError(f"acceptance threshold must be >= 0, got {theta}")
    omega = project(probe, model)
    dists = {sid: distance(omega, tpl) for sid, tpl in model.class_projections.items()}
    best = min(dists, key=lambda sid: (dists[sid], sid))
    best_d = dists[best]
    return MatchDecision(
        accepted=best_d <= theta,
        subject_id=best,
        distance=best_d,
        per_class_distances=dists,
    )


# ---------------------------------------------------------------------------
# model serialization: magic EFM1, little-endian
#   u32 D, M, m', width, height
#   f8[D] mean | f8[M] eigenvalues | f8[D*m'] eigenfaces column-major
#   u32 class count, then per class (sorted by id):
#       u32 id byte-length, id utf-8, u32 training-image count, f8[m'] projection
#   u32 crc32 of all prior bytes
# The selection rule is not persisted; a loaded model reports top_k(m').

def save_model(model, path):
    chunks = [MODEL_MAGIC]
    d = model.pixel_count
    m = len(model.eigenvalues)
    mp = model.kept_count
    w, h = model.dims
    chunks.append(struct.pack("<5I", d, m, mp, w, h))
    chunks.append(np.ascontiguousarray(model.mean_face, dtype="<f8").tobytes())
    chunks.append(np.ascontiguousarray(model.eigenvalues, dtype="<f8").tobytes())
    chunks.append(np.asfortranarray(model.eigenfaces.astype("<f8")).tobytes(order="F"))
    chunks.append(struct.pack("<I", len(model.class_projections)))
    counts = model.class_counts or {}
    for sid in sorted(model.class_projections):
        sid_b = sid.encode("utf-8")
        chunks.append(struct.pack("<I", len(sid_b)))
        chunks.append(sid_b)
        chunks.append(struct.pack("<I", counts.get(sid, 1)))
        chunks.append(np.ascontiguousarray(model.class_projections[sid], dtype="<f8").tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"{self.path}: truncated model file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def f8(self, n):
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)


def load_model(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    if len(data) < 8:
        raise ModelFormatError(f"{path}: too short to be a model file")
    magic = data[:4]
    if magic != MODEL_MAGIC:
        if magic[:3] == MODEL_MAGIC[:3] and magic[3:4].isdigit():
            raise UnsupportedVersionError(
                f"{path}: model format version {magic.decode('ascii', 'replace')} "
                f"not supported (this build reads {MODEL_MAGIC.decode()})")
        raise ModelFormatError(f"{path}: bad magic bytes {magic!r}")
    stored = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored:
        raise ModelFormatError(f"{path}: checksum mismatch")

    r = _Reader(data[:-4], path)
    r.take(4)  # magic
    d, m, mp, w, h = struct.unpack("<5I", r.take(20))
    mean = r.f8(d)
    eigenvalues = r.f8(m)
    faces = r.f8(d * mp).reshape((d, mp), order="F")
    n_classes = r.u32()
    projections = {}
    counts = {}
    for _ in range(n_classes):
        sid = r.take(r.u32()).decode("utf-8")
        counts[sid] = r.u32()
        projections[sid] = r.f8(mp)
    if r.pos != len(r.data):
        raise ModelFormatError(f"{path}: {len(r.data) - r.pos} unexpected trailing bytes")
    return EigenModel(
        mean_face=mean,
        eigenvalues=eigenvalues,
        eigenfaces=faces,
        selection=SelectionRule(top_k=mp),
        class_projections=projections,
        dims=(w, h),
        class_counts=counts,
    )
