"""Class-conditional flow matching in the embedded space.

Training never leaves the flat space: targets are the embedded data, sources
are per-class Gaussians fitted to the same embeddings, and the regression
target for the pair ``(z0, z1)`` at time ``t`` is the straight-line velocity
``z1 - z0`` evaluated at ``(1 - t) z0 + t z1``.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import geometry as geo
from .embedding import Embedding
from .errors import FormatError, InvalidInput, MissingClass, NonFiniteLoss
from .nn import AdamWState, adamw_step, load_params, mlp_backward, mlp_forward, mlp_init, save_params

log = logging.getLogger(__name__)

COVARIANCE_MODES = ("auto", "full", "diagonal")


# ---------------------------------------------------------------------------
# configuration and model containers
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    manifold: str = "spd"
    hidden_dims: tuple = (512,)
    lr: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    source_ridge: float = 1e-6
    covariance_mode: str = "auto"
    embedding: str = "diffeo"

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.validate()

    def validate(self):
        geo.check_manifold_tag(self.manifold)
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise InvalidInput("epochs, batch_size and lr must be positive")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise InvalidInput(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if self.source_ridge < 0 or self.weight_decay < 0:
            raise InvalidInput("source_ridge and weight_decay must be non-negative")
        Embedding(self.manifold, self.embedding)

    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self):
        out = asdict(self)
        out["hidden_dims"] = list(self.hidden_dims)
        return out


@dataclass
class VectorFieldModel:
    """MLP realizing the velocity field ``u(t, z, y)`` in the flat space.

    The network input is ``concat(z, t, one_hot(y))``.
    """

    params: object
    manifold: str
    d: int
    classes: tuple
    embedding: str = "diffeo"
    seed: int = 0

    @property
    def dim(self):
        return geo.embed_dim(self.d, self.manifold)

    @property
    def chart(self):
        return Embedding(self.manifold, self.embedding)

    def class_index(self, y):
        y = np.asarray(y)
        lookup = {c: i for i, c in enumerate(self.classes)}
        try:
            return np.array([lookup[int(v)] for v in np.ravel(y)], dtype=np.intp).reshape(y.shape)
        except KeyError as exc:
            raise MissingClass(f"label {exc.args[0]} unknown to the model") from None

    def inputs(self, t, z, y):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        n = z.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        idx = np.broadcast_to(self.class_index(y), (n,))
        onehot = np.zeros((n, len(self.classes)))
        onehot[np.arange(n), idx] = 1.0
        return np.concatenate([z, t[:, None], onehot], axis=1)

    def velocity(self, t, z, y):
        """Velocity at time ``t`` for a point or a batch of points."""
        single = np.ndim(z) == 1
        out = mlp_forward(self.params, self.inputs(t, z, y))
        return out[0] if single else out


def new_model(manifold, d, classes, hidden_dims=(512,), seed=0, embedding="diffeo"):
    classes = tuple(sorted(int(c) for c in classes))
    m = geo.embed_dim(d, manifold)
    params = mlp_init(seed, m + 1 + len(classes), list(hidden_dims), m)
    return VectorFieldModel(params, manifold, d, classes, embedding, seed)


@dataclass
class ConditionalGaussianSource:
    classes: tuple
    means: np.ndarray  # (K, m)
    factors: np.ndarray  # (K, m, m) lower-triangular
    counts: np.ndarray = field(default=None)

    def index(self, y):
        try:
            return self.classes.index(int(y))
        except ValueError:
            raise MissingClass(f"no source fitted for label {y}") from None

    def covariance(self, y):
        f = self.factors[self.index(y)]
        return f @ f.T

    def to_dict(self):
        return {
            "classes": list(self.classes),
            "means": self.means.tolist(),
            "factors": self.factors.tolist(),
            "counts": [int(c) for c in self.counts],
        }

    @classmethod
    def from_dict(cls, raw):
        return cls(
            tuple(int(c) for c in raw["classes"]),
            np.asarray(raw["means"], dtype=np.float64),
            np.asarray(raw["factors"], dtype=np.float64),
            np.asarray(raw["counts"], dtype=np.int64),
        )


# ---------------------------------------------------------------------------
# source distribution
# ---------------------------------------------------------------------------

def fit_source(embeddings, labels, ridge=1e-6, mode="auto", classes=None):
    """Fit one Gaussian per class to embedded samples.

    The covariance is the unbiased sample covariance plus
    ``ridge * max(tr(C) / m, floor)`` on the diagonal, where ``floor = 1``
    guards degenerate classes. ``mode="full"`` keeps the full matrix when the
    class has more than ``m`` samples, ``"auto"`` when it has at least
    ``m + 2``; otherwise, and always for ``"diagonal"``, only the variances
    are kept. Passing ``classes`` requires every listed label to be present.
    """
    z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    labels = np.asarray(labels)
    if z.shape[0] != labels.shape[0] or z.shape[0] == 0:
        raise InvalidInput("embeddings and labels must be non-empty and aligned")
    if mode not in COVARIANCE_MODES:
        raise InvalidInput(f"mode must be one of {COVARIANCE_MODES}")
    if classes is None:
        classes = np.unique(labels)
    classes = tuple(sorted(int(c) for c in classes))
    m = z.shape[1]
    means = np.empty((len(classes), m))
    factors = np.zeros((len(classes), m, m))
    counts = np.empty(len(classes), dtype=np.int64)
    for k, c in enumerate(classes):
        zc = z[labels == c]
        n = zc.shape[0]
        if n == 0:
            raise MissingClass(f"class {c} has no samples")
        counts[k] = n
        means[k] = zc.mean(axis=0)
        cov = np.cov(zc, rowvar=False, ddof=1).reshape(m, m) if n > 1 else np.zeros((m, m))
        trace = np.trace(cov) / m
        reg = ridge * (trace if trace > 0 else 1.0)
        full = (mode == "full" and n > m) or (mode == "auto" and n >= m + 2)
        if full:
            factors[k] = np.linalg.cholesky(cov + reg * np.eye(m))
        else:
            factors[k] = np.diag(np.sqrt(np.diag(cov) + reg))
    return ConditionalGaussianSource(classes, means, factors, counts)


def sample_source(src, y, rng, size=None):
    """Draw ``mean + factor @ N(0, I)`` for class ``y``."""
    k = src.index(y)
    m = src.means.shape[1]
    shape = (m,) if size is None else (size, m)
    noise = rng.standard_normal(shape)
    return src.means[k] + noise @ src.factors[k].T


def _sample_source_labels(src, labels, rng):
    out = np.empty((labels.shape[0], src.means.shape[1]))
    for c in src.classes:
        mask = labels == c
        cnt = int(mask.sum())
        if cnt:
            out[mask] = sample_source(src, c, rng, size=cnt)
    return out


# ---------------------------------------------------------------------------
# loss and training
# ---------------------------------------------------------------------------

def cfm_loss_and_grad(model, z0, z1, y, t):
    """Mean of ``|u(t, (1-t) z0 + t z1, y) - (z1 - z0)|^2`` and its gradient."""
    z0 = np.atleast_2d(z0)
    z1 = np.atleast_2d(z1)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (z0.shape[0],))
    zt = (1.0 - t)[:, None] * z0 + t[:, None] * z1
    x = model.inputs(t, zt, y)
    u, cache = mlp_forward(model.params, x, return_cache=True)
    resid = u - (z1 - z0)
    loss = float(np.mean(np.sum(resid * resid, axis=1)))
    if not np.isfinite(loss):
        raise NonFiniteLoss("flow-matching loss is not finite")
    grads, _ = mlp_backward(model.params, x, 2.0 * resid / z0.shape[0], cache=cache)
    return loss, grads


def train(data, cfg, log_every=0):
    """Fit a velocity field to a labeled dataset.

    Parameters
    ----------
    data : object with ``matrices``, ``labels`` and ``manifold``
    cfg : TrainConfig

    Returns
    -------
    model : VectorFieldModel
    source : ConditionalGaussianSource
    history : ndarray of shape (epochs,)
        Mean loss per epoch.
    """
    if data.manifold != cfg.manifold:
        raise InvalidInput(f"dataset is {data.manifold!r} but config says {cfg.manifold!r}")
    chart = Embedding(cfg.manifold, cfg.embedding)
    mats = np.asarray(data.matrices, dtype=np.float64)
    labels = np.asarray(data.labels, dtype=np.int64)
    if mats.shape[0] == 0:
        raise InvalidInput("dataset is empty")
    targets = chart.encode(mats)
    src = fit_source(targets, labels, cfg.source_ridge, cfg.covariance_mode)
    model = new_model(cfg.manifold, mats.shape[-1], src.classes, cfg.hidden_dims, cfg.seed, cfg.embedding)
    opt = AdamWState.for_params(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    n = targets.shape[0]
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            y = labels[idx]
            z1 = targets[idx]
            z0 = _sample_source_labels(src, y, rng)
            t = rng.uniform(0.0, 1.0, size=idx.size)
            loss, grads = cfm_loss_and_grad(model, z0, z1, y, t)
            adamw_step(model.params, grads, opt)
            total += loss * idx.size
        history[epoch] = total / n
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d loss %.6f", epoch + 1, history[epoch])
    return model, src, history


def riemannian_loss_oracle(model, z0, z1, y, t):
    """Flow-matching loss evaluated on the manifold itself.

    For each pair, builds the geodesic ``gamma(t)``, differentiates it in
    ``t`` by central differences (step 1e-5), turns the flat-space network
    output into a tangent matrix by inverting the chart differential, and
    measures the residual with the pulled-back norm. Slow; for tests.
    """
    if model.embedding != "diffeo":
        raise InvalidInput("the manifold loss is defined only for chart embeddings")
    man = model.manifold
    z0 = np.atleast_2d(z0)
    z1 = np.atleast_2d(z1)
    n = z0.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    y = np.broadcast_to(np.asarray(y), (n,))
    h = 1e-5
    total = 0.0
    for i in range(n):
        def curve(s):
            return geo.phi_inv((1.0 - s) * z0[i] + s * z1[i], man)

        point = curve(t[i])
        speed = (curve(t[i] + h) - curve(t[i] - h)) / (2.0 * h)
        u_flat = model.velocity(t[i], geo.phi(point, man), y[i])
        jac = geo.diffeo_jacobian(point, man)
        u_tangent = geo.diffeo_jvp_inverse(point, u_flat, man, jacobian=jac)
        resid = u_tangent - speed
        if man == "corr":
            idx = np.arange(model.d)
            resid[idx, idx] = 0.0
        total += geo.pullback_norm(point, resid, man) ** 2
    return total / n


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model, src, directory, history=None):
    directory = Path(directory)
    save_params(
        model.params,
        directory,
        extra={
            "manifold": model.manifold,
            "d": model.d,
            "num_classes": len(model.classes),
            "classes": ",".join(str(c) for c in model.classes),
            "embedding": model.embedding,
            "seed": model.seed,
        },
    )
    (directory / "source.json").write_text(json.dumps(src.to_dict()))
    if history is not None:
        write_loss_csv(history, directory / "loss.csv")


def load_model(directory):
    directory = Path(directory)
    params, meta = load_params(directory)
    try:
        classes = tuple(int(c) for c in meta["classes"].split(",") if c)
        model = VectorFieldModel(
            params,
            meta["manifold"],
            int(meta["d"]),
            classes,
            meta.get("embedding", "diffeo"),
            int(meta.get("seed", 0)),
        )
        src = ConditionalGaussianSource.from_dict(json.loads((directory / "source.json").read_text()))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad model directory {directory}: {exc}") from exc
    geo.check_manifold_tag(model.manifold)
    if params.in_dim != model.dim + 1 + len(classes) or params.out_dim != model.dim:
        raise FormatError("network shape does not match manifold and class count")
    return model, src


def write_loss_csv(history, path):
    lines = ["epoch,mean_loss"] + [f"{i + 1},{v!r}" for i, v in enumerate(np.asarray(history, dtype=float).tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
