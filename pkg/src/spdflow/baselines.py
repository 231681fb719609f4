"""Reference generators to compare the chart-based flow against.

``diffeogauss`` pushes the fitted class Gaussians straight through the
inverse chart, with no learned transport. ``triangcfm`` trains the same flow
on raw triangular coordinates; its outputs can leave the manifold and are
repaired by eigenvalue projection.
"""

from dataclasses import replace

import numpy as np

from . import geometry as geo
from .errors import InvalidInput
from .flow import TrainConfig, fit_source, train
from .sampler import IntegratorSpec, draw_sources, sample_manifold

METHODS = ("diffeocfm", "diffeogauss", "triangcfm")


def fit_diffeo_gauss(data, ridge=1e-6, mode="auto"):
    """Class Gaussians fitted to chart embeddings of ``data``."""
    return fit_source(geo.phi(data.matrices, data.manifold), data.labels, ridge, mode)


def diffeo_gauss_sample(src, y, n, seed, manifold):
    """``n`` wrapped-Gaussian draws for class ``y``, shape ``(n, d, d)``.

    Uses the same per-sample streams as the flow sampler, so the draws equal
    that sampler's source points for the same seed.
    """
    geo.check_manifold_tag(manifold)
    z = draw_sources(src, y, n, seed)
    return geo.phi_inv(z, manifold)


def train_diffeo_cfm(data, cfg):
    return train(data, replace(cfg, embedding="diffeo"))


def train_triang_cfm(data, cfg):
    """Flow matching on triangular coordinates; same contract as ``train``."""
    return train(data, replace(cfg, embedding="triang"))


def sample_triang_cfm(model, src, y, n, spec=IntegratorSpec(), seed=0, project=True):
    return sample_manifold(model, src, y, n, spec, seed, project=project)


def fit_method(method, data, cfg=None):
    """Fit ``method`` on ``data``; returns ``(model, source)`` where ``model``
    is ``None`` for ``diffeogauss``."""
    if method not in METHODS:
        raise InvalidInput(f"method must be one of {METHODS}")
    cfg = cfg or TrainConfig(manifold=data.manifold)
    if method == "diffeogauss":
        return None, fit_diffeo_gauss(data, cfg.source_ridge, cfg.covariance_mode)
    trainer = train_triang_cfm if method == "triangcfm" else train_diffeo_cfm
    model, src, _ = trainer(data, cfg)
    return model, src


def class_mean_matrices(src, manifold):
    """``phi^-1`` of every class mean, shape ``(K, d, d)``."""
    return geo.phi_inv(np.asarray(src.means), manifold)
