"""Point storage, synthetic mixtures, linear transforms, and file formats.

The unit of data everywhere in this package is the :class:`PointSet`: a
columnar block of N points in D dimensions with optional integer labels
and optional scalar targets.  Everything downstream (grids, trees,
Voronoi maps, estimators) consumes point ids into one of these blocks.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

# Magic tag and current version of the binary point format.
POINTS_MAGIC = b"HGPS"
POINTS_VERSION = 1

# Flag bits in the binary header.
_FLAG_LABELS = 1
_FLAG_TARGETS = 2


def _as_column(values, n, name, dtype):
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a 1-d array of length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PointSet:
    """Immutable columnar set of N points in D dimensions.

    Parameters
    ----------
    coords : ndarray of float64, shape (N, D)
        Point coordinates.  Stored column-major so per-dimension scans
        touch contiguous memory.  Must be finite.
    labels : ndarray of int32, shape (N,), optional
        Per-point class label (-1 is conventionally "outlier/unknown").
    targets : ndarray of float64, shape (N,), optional
        Per-point scalar target used by the estimator.
    """

    coords: np.ndarray
    labels: np.ndarray | None = None
    targets: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2:
            raise ValueError(f"coords must be 2-d (N, D), got ndim={coords.ndim}")
        n, d = coords.shape
        if d < 1:
            raise ValueError("points must have at least one dimension")
        if not np.isfinite(coords).all():
            bad = int(np.argwhere(~np.isfinite(coords))[0][0])
            raise ValueError(f"row {bad}: non-finite coordinate")
        coords = np.asfortranarray(coords)
        object.__setattr__(self, "coords", coords)
        if self.labels is not None:
            object.__setattr__(self, "labels", _as_column(self.labels, n, "labels", np.int32))
        if self.targets is not None:
            targets = _as_column(self.targets, n, "targets", np.float64)
            if not np.isfinite(targets).all():
                bad = int(np.argwhere(~np.isfinite(targets))[0][0])
                raise ValueError(f"row {bad}: non-finite target")
            object.__setattr__(self, "targets", targets)
        for arr in (self.coords, self.labels, self.targets):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def take(self, ids) -> "PointSet":
        """New PointSet holding rows `ids` (any integer index array)."""
        ids = np.asarray(ids)
        return PointSet(
            self.coords[ids],
            None if self.labels is None else self.labels[ids],
            None if self.targets is None else self.targets[ids],
        )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; membership is half-open, lo <= x < hi per axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.ascontiguousarray(self.lo, dtype=np.float64)
        hi = np.ascontiguousarray(self.hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if (hi < lo).any():
            raise ValueError("box has hi < lo on some axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        lo.flags.writeable = False
        hi.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Half-open membership test for an (M, dim) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return ((pts >= self.lo) & (pts < self.hi)).all(axis=1)

    def intersects(self, other: "BoundingBox") -> bool:
        return bool(((self.lo < other.hi) & (other.lo < self.hi)).all())


def bounding_box_of(coords: np.ndarray) -> BoundingBox:
    """Smallest padded half-open box containing every row of `coords`.

    The upper bound is pushed out by 1e-9 of the per-axis extent so the
    maximum point itself satisfies the half-open test; a degenerate axis
    (all values equal) gets an absolute pad of 1e-9 * max(1, |value|).
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if coords.shape[0] == 0:
        raise ValueError("cannot bound an empty point set")
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    extent = hi - lo
    pad = 1e-9 * extent
    flat = extent == 0.0
    pad[flat] = 1e-9 * np.maximum(1.0, np.abs(hi[flat]))
    return BoundingBox(lo, hi + pad)


def bounding_box(points: PointSet) -> BoundingBox:
    """Padded half-open bounding box of a PointSet (see bounding_box_of)."""
    return bounding_box_of(points.coords)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class MixtureComponent:
    """One isotropic Gaussian component of a synthetic mixture."""

    weight: float
    mean: np.ndarray
    stdev: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.ascontiguousarray(self.mean, dtype=np.float64))
        if self.weight <= 0:
            raise ValueError("component weight must be positive")
        if self.stdev <= 0:
            raise ValueError("component stdev must be positive")


def random_components(dim: int, n_components: int, seed: int,
                      separation: float = 6.0, stdev: float = 1.0) -> list[MixtureComponent]:
    """Equal-weight components with means drawn to be pairwise separated.

    Means are drawn uniformly in a cube scaled so the expected spacing is
    `separation` stdevs; candidates closer than `separation * stdev` to an
    accepted mean are rejected and redrawn.
    """
    rng = np.random.default_rng(seed)
    side = separation * stdev * max(2.0, n_components ** (1.0 / dim) + 1.0)
    means: list[np.ndarray] = []
    attempts = 0
    while len(means) < n_components:
        cand = rng.uniform(0.0, side, size=dim)
        if all(np.linalg.norm(cand - m) >= separation * stdev for m in means):
            means.append(cand)
        attempts += 1
        if attempts > 1000 * n_components:
            raise ValueError("could not place separated component means; lower separation")
    return [MixtureComponent(1.0 / n_components, m, stdev) for m in means]


def generate_mixture(n: int, dim: int, components, seed: int,
                     outlier_fraction: float = 0.0) -> PointSet:
    """Draw points from a Gaussian mixture plus uniform outliers.

    Parameters
    ----------
    n : int
        Total number of points returned.
    dim : int
        Dimensionality; every component mean must have this length.
    components : sequence of MixtureComponent
        Weights are normalised to sum to one over the non-outlier mass.
    seed : int
        Seed for the generator (PCG64); identical inputs give identical
        output bit for bit.
    outlier_fraction : float
        Fraction of `n` (rounded) drawn uniformly over the padded
        bounding box of the mixture draws and labelled -1.

    Returns
    -------
    PointSet
        Labels give the component index of each point, -1 for outliers.
    """
    comps = list(components)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not comps:
        raise ValueError("at least one mixture component is required")
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must be in [0, 1)")
    for c in comps:
        if c.mean.shape != (dim,):
            raise ValueError(f"component mean has shape {c.mean.shape}, expected ({dim},)")
    rng = np.random.default_rng(seed)
    weights = np.array([c.weight for c in comps], dtype=np.float64)
    weights /= weights.sum()

    n_out = int(round(outlier_fraction * n))
    n_mix = n - n_out
    choice = rng.choice(len(comps), size=n_mix, p=weights)
    coords = np.empty((n, dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int32)
    for i, c in enumerate(comps):
        mask = choice == i
        k = int(mask.sum())
        coords[:n_mix][mask] = c.mean + c.stdev * rng.standard_normal((k, dim))
        labels[:n_mix][mask] = i
    if n_out:
        if n_mix:
            box = bounding_box_of(coords[:n_mix])
        else:
            means = np.array([c.mean for c in comps])
            box = bounding_box_of(means)
        coords[n_mix:] = rng.uniform(box.lo, box.hi, size=(n_out, dim))
        labels[n_mix:] = -1
    return PointSet(coords, labels=labels)


# ---------------------------------------------------------------------------
# linear transforms


@dataclass(frozen=True)
class LinearTransform:
    """Affine map x -> matrix @ (x - mean), with provenance metadata.

    `matrix` has shape (K, D): rows are output directions.  For a PCA
    transform the rows are orthonormal eigenvectors of the sample
    covariance and `explained_variance` holds their eigenvalues in
    non-increasing order.  `degenerate` is set when some requested
    direction carried (numerically) zero variance.
    """

    mean: np.ndarray
    matrix: np.ndarray
    kind: str = "linear"
    explained_variance: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or mean.ndim != 1 or matrix.shape[1] != mean.shape[0]:
            raise ValueError("matrix must be (K, D) and mean (D,)")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "matrix", matrix)
        if self.explained_variance is not None:
            ev = np.ascontiguousarray(self.explained_variance, dtype=np.float64)
            object.__setattr__(self, "explained_variance", ev)

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]


def fit_pca(points: PointSet, n_components: int) -> LinearTransform:
    """Principal directions of a point set by covariance eigendecomposition.

    Rows of the returned matrix are orthonormal and ordered by
    non-increasing explained variance.  Row signs are fixed by making
    each row's largest-magnitude entry positive, so the fit is
    deterministic.  Requires at least two points.
    """
    n, d = points.n, points.dim
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must be in [1, {d}]")
    if n < 2:
        raise ValueError("PCA requires at least two points")
    mean = points.coords.mean(axis=0)
    centered = points.coords - mean
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:n_components]
    rows = evecs[:, order].T.copy()
    flip = rows[np.arange(len(order)), np.abs(rows).argmax(axis=1)] < 0
    rows[flip] *= -1.0
    explained = np.maximum(evals[order], 0.0)
    degenerate = bool((explained <= 1e-12 * max(evals.max(), 1e-300)).any())
    return LinearTransform(mean, rows, kind="pca",
                           explained_variance=explained, degenerate=degenerate)


def fit_whitening(points: PointSet) -> LinearTransform:
    """Per-axis standardisation: subtract mean, divide by sample stdev.

    Axes with zero variance keep scale 1 and set the `degenerate` flag.
    """
    if points.n < 2:
        raise ValueError("whitening requires at least two points")
    mean = points.coords.mean(axis=0)
    std = points.coords.std(axis=0, ddof=1)
    flat = std == 0.0
    scale = np.where(flat, 1.0, std)
    return LinearTransform(mean, np.diag(1.0 / scale), kind="whiten",
                           explained_variance=std ** 2, degenerate=bool(flat.any()))


def apply_transform(transform: LinearTransform, points: PointSet) -> PointSet:
    """Map every point through `transform`, keeping labels and targets."""
    if points.dim != transform.mean.shape[0]:
        raise ValueError(f"transform expects dim {transform.mean.shape[0]}, got {points.dim}")
    out = (points.coords - transform.mean) @ transform.matrix.T
    return PointSet(out, labels=points.labels, targets=points.targets)


# ---------------------------------------------------------------------------
# file formats

# Binary layout (all little-endian):
#   magic "HGPS" | u16 version | u16 flags | u64 n | u32 dim |
#   coords as dim contiguous float64 columns |
#   labels int32 column (if flag bit 1) | targets float64 column (if bit 2)
_HEADER = struct.Struct("<4sHHQI")


def save(points: PointSet, path: str, fmt: str = "binary") -> None:
    """Write a PointSet to `path` as 'binary' (exact) or 'csv' (text)."""
    if fmt == "binary":
        _save_binary(points, path)
    elif fmt == "csv":
        _save_csv(points, path)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'binary' or 'csv'")


def load(path: str, fmt: str | None = None) -> PointSet:
    """Read a PointSet written by :func:`save`.

    With fmt=None the format is sniffed: files starting with the binary
    magic are parsed as binary, anything else as CSV.
    """
    if fmt is None:
        with open(path, "rb") as fh:
            fmt = "binary" if fh.read(4) == POINTS_MAGIC else "csv"
    if fmt == "binary":
        return _load_binary(path)
    if fmt == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown format {fmt!r}; expected 'binary' or 'csv'")


def dump_binary(points: PointSet, fh) -> None:
    """Write the binary encoding of `points` to a binary file object."""
    flags = 0
    if points.labels is not None:
        flags |= _FLAG_LABELS
    if points.targets is not None:
        flags |= _FLAG_TARGETS
    fh.write(_HEADER.pack(POINTS_MAGIC, POINTS_VERSION, flags, points.n, points.dim))
    for d in range(points.dim):
        fh.write(np.ascontiguousarray(points.coords[:, d]).tobytes())
    if points.labels is not None:
        fh.write(points.labels.tobytes())
    if points.targets is not None:
        fh.write(points.targets.tobytes())


def _save_binary(points: PointSet, path: str) -> None:
    with open(path, "wb") as fh:
        dump_binary(points, fh)


def _read_exact(fh, count, path, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(f"{path}: truncated while reading {what}")
    return buf


def _load_binary(path: str) -> PointSet:
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size, path, "header")
        magic, version, flags, n, dim = _HEADER.unpack(header)
        if magic != POINTS_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {POINTS_MAGIC!r}")
        if version != POINTS_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        coords = np.empty((n, dim), dtype=np.float64, order="F")
        for d in range(dim):
            col = _read_exact(fh, 8 * n, path, f"coordinate column {d}")
            coords[:, d] = np.frombuffer(col, dtype="<f8")
        labels = targets = None
        if flags & _FLAG_LABELS:
            labels = np.frombuffer(_read_exact(fh, 4 * n, path, "labels"), dtype="<i4")
        if flags & _FLAG_TARGETS:
            targets = np.frombuffer(_read_exact(fh, 8 * n, path, "targets"), dtype="<f8")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after declared columns")
    try:
        return PointSet(coords, labels=labels, targets=targets)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _save_csv(points: PointSet, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x{d}" for d in range(points.dim)]
        if points.labels is not None:
            header.append("label")
        if points.targets is not None:
            header.append("target")
        writer.writerow(header)
        for i in range(points.n):
            row = [repr(float(v)) for v in points.coords[i]]
            if points.labels is not None:
                row.append(str(int(points.labels[i])))
            if points.targets is not None:
                row.append(repr(float(points.targets[i])))
            writer.writerow(row)


def _load_csv(path: str) -> PointSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        label_col = header.index("label") if "label" in header else -1
        target_col = header.index("target") if "target" in header else -1
        coord_cols = [i for i, h in enumerate(header) if i not in (label_col, target_col)]
        if not coord_cols:
            raise FormatError(f"{path}: no coordinate columns in header")
        rows, labels, targets = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[i]) for i in coord_cols])
                if label_col >= 0:
                    labels.append(int(row[label_col]))
                if target_col >= 0:
                    targets.append(float(row[target_col]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    coords = np.array(rows, dtype=np.float64)
    try:
        return PointSet(
            coords,
            labels=np.array(labels, dtype=np.int32) if label_col >= 0 else None,
            targets=np.array(targets, dtype=np.float64) if target_col >= 0 else None,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
