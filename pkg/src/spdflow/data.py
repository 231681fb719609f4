"""Labeled matrix datasets: storage, synthetic generation, splitting and
covariance estimation from raw time series.

On disk a dataset is a directory holding ``manifest.json`` and
``matrices.f64`` (little-endian float64, ``n * d * d`` values, each matrix
row-major, matrices in index order).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import (
    CannotSplit,
    DegenerateChannel,
    FormatError,
    InvalidDataset,
    InvalidInput,
)

FORMAT_VERSION = 1
SYMMETRY_TOL = 1e-10


@dataclass
class LabeledDataset:
    manifold: str
    matrices: np.ndarray  # (n, d, d)
    labels: np.ndarray  # (n,) int64
    subject_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.subject_ids:
            self.subject_ids = [f"sub-{i:05d}" for i in range(len(self.labels))]
        self.subject_ids = [str(s) for s in self.subject_ids]

    @property
    def n(self):
        return self.matrices.shape[0]

    @property
    def d(self):
        return self.matrices.shape[-1]

    @property
    def classes(self):
        return tuple(int(c) for c in np.unique(self.labels))

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return LabeledDataset(
            self.manifold,
            self.matrices[idx],
            self.labels[idx],
            [self.subject_ids[i] for i in idx],
        )

    def validate(self):
        """Raise ``InvalidDataset`` unless every matrix belongs to the manifold."""
        if self.manifold not in geo.MANIFOLDS:
            raise InvalidDataset(f"unknown manifold {self.manifold!r}")
        mats = self.matrices
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise InvalidDataset(f"matrices must have shape (n, d, d), got {mats.shape}")
        if not (len(self.labels) == len(self.subject_ids) == mats.shape[0]):
            raise InvalidDataset("matrices, labels and subject_ids differ in length")
        if mats.shape[0] == 0:
            return self
        if not np.all(np.isfinite(mats)):
            raise InvalidDataset("non-finite matrix entries")
        scale = 1.0 + np.abs(mats).max()
        if np.abs(mats - np.swapaxes(mats, 1, 2)).max() > SYMMETRY_TOL * scale:
            raise InvalidDataset("matrices are not symmetric")
        if not np.all(geo.is_spd(mats)):
            raise InvalidDataset("matrices are not positive definite")
        if self.manifold == "corr":
            diag = np.diagonal(mats, axis1=1, axis2=2)
            if np.abs(diag - 1.0).max() > geo.UNIT_DIAG_TOL:
                raise InvalidDataset("correlation matrices need a unit diagonal")
        return self


def write_dataset(ds, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": FORMAT_VERSION,
        "manifold": ds.manifold,
        "d": int(ds.d),
        "n": int(ds.n),
        "labels": [int(v) for v in ds.labels],
        "subject_ids": list(ds.subject_ids),
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    (path / "matrices.f64").write_bytes(np.ascontiguousarray(ds.matrices, dtype="<f8").tobytes())


def read_dataset(path, validate=True):
    """Load a dataset directory; ``validate=False`` skips manifold checks."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        version = manifest["version"]
        manifold = manifest["manifold"]
        d = int(manifest["d"])
        n = int(manifest["n"])
        labels = manifest["labels"]
        subjects = manifest["subject_ids"]
    except FileNotFoundError as exc:
        raise FormatError(f"missing dataset file: {exc.filename}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt manifest in {path}: {exc}") from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if len(labels) != n or len(subjects) != n or d < 1 or n < 0:
        raise FormatError("manifest sizes are inconsistent")
    try:
        raw = (path / "matrices.f64").read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(f"missing dataset file: {exc.filename}") from exc
    if len(raw) != 8 * n * d * d:
        raise FormatError(f"matrices.f64 has {len(raw)} bytes, expected {8 * n * d * d}")
    mats = np.frombuffer(raw, dtype="<f8").reshape(n, d, d).astype(np.float64)
    ds = LabeledDataset(manifold, mats, np.asarray(labels, dtype=np.int64), subjects)
    if validate:
        ds.validate()
    return ds


def read_matrix_csv(path):
    """One matrix per file, comma-separated rows."""
    try:
        mat = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"cannot parse {path}: {exc}") from exc
    if mat.shape[0] != mat.shape[1]:
        raise FormatError(f"{path} is not a square matrix")
    return mat


def dataset_from_csv(paths, labels, manifold, subject_ids=None):
    mats = np.stack([read_matrix_csv(p) for p in paths])
    return LabeledDataset(manifold, mats, labels, subject_ids or []).validate()


# ---------------------------------------------------------------------------
# synthetic ground truth
# ---------------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    manifold: str = "spd"
    d: int = 4
    n_classes: int = 2
    per_class: int = 400
    sigma: float = 0.3
    seed: int = 0
    offsets: np.ndarray = None  # (K, m) class means in the flat space
    separation: float = 3.0  # default offsets: k * separation * sigma along one axis

    def __post_init__(self):
        geo.check_manifold_tag(self.manifold)
        if self.sigma <= 0 or self.n_classes < 1 or self.per_class < 1 or self.d < 2:
            raise InvalidInput("need sigma > 0, at least one class and sample, d >= 2")

    def class_means(self):
        m = geo.embed_dim(self.d, self.manifold)
        if self.offsets is not None:
            means = np.asarray(self.offsets, dtype=np.float64)
            if means.shape != (self.n_classes, m):
                raise InvalidInput(f"offsets must have shape {(self.n_classes, m)}")
            return means
        direction = np.ones(m) / np.sqrt(m)
        steps = np.arange(self.n_classes, dtype=np.float64)
        return steps[:, None] * (self.separation * self.sigma) * direction


def synth_generate(spec):
    """Wrapped-Gaussian dataset: per class ``z ~ N(mu_y, sigma^2 I)``, matrix ``phi^-1(z)``."""
    rng = np.random.default_rng(spec.seed)
    means = spec.class_means()
    m = means.shape[1]
    z = np.concatenate([means[k] + spec.sigma * rng.standard_normal((spec.per_class, m)) for k in range(spec.n_classes)])
    labels = np.repeat(np.arange(spec.n_classes), spec.per_class)
    mats = geo.phi_inv(z, spec.manifold)
    return LabeledDataset(spec.manifold, mats, labels)


def grouped_split(ds, test_fraction, seed=0):
    """Split by subject so no subject contributes to both halves."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInput("test_fraction must lie strictly between 0 and 1")
    subjects = np.array(sorted(set(ds.subject_ids)))
    if subjects.size < 2:
        raise CannotSplit("need at least two subjects to split")
    rng = np.random.default_rng(seed)
    n_test = int(np.clip(np.rint(test_fraction * subjects.size), 1, subjects.size - 1))
    test_subjects = set(rng.permutation(subjects)[:n_test].tolist())
    in_test = np.array([s in test_subjects for s in ds.subject_ids])
    return ds.subset(np.flatnonzero(~in_test)), ds.subset(np.flatnonzero(in_test))


# ---------------------------------------------------------------------------
# estimation from time series
# ---------------------------------------------------------------------------

def oas_shrinkage(s, n_samples):
    """Oracle-approximating shrinkage coefficient for sample covariance ``s``."""
    d = s.shape[0]
    tr = np.trace(s)
    tr2 = np.sum(s * s)
    num = (1.0 - 2.0 / d) * tr2 + tr * tr
    den = (n_samples + 1.0 - 2.0 / d) * (tr2 - tr * tr / d)
    if den <= 0.0:
        return 1.0
    return float(min(1.0, num / den))


def oas_covariance(x):
    """OAS covariance of a ``(T, d)`` time series (mean removed, divisor T)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise InvalidInput("expected a (T, d) array with T >= 2")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("time series has non-finite entries")
    t, d = x.shape
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / t
    rho = oas_shrinkage(s, t)
    out = (1.0 - rho) * s
    out[np.diag_indices(d)] += rho * np.trace(s) / d
    return 0.5 * (out + out.T)


def corr_from_timeseries(x):
    """Z-score channels, estimate with OAS, rescale to a unit diagonal."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInput("expected a (T, d) array with T >= 2")
    std = x.std(axis=0)
    if np.any(std <= 0.0):
        raise DegenerateChannel(f"constant channel(s): {np.flatnonzero(std <= 0.0).tolist()}")
    cov = oas_covariance((x - x.mean(axis=0)) / std)
    scale = 1.0 / np.sqrt(np.diag(cov))
    out = cov * scale[:, None] * scale[None, :]
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out
