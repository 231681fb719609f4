"""Random manifold points and other fixtures shared by the test modules."""

import numpy as np


def random_spd(rng, d, n=None, spread=1.0):
    """SPD matrices ``Q diag(exp(s)) Q^T`` with log-eigenvalues of scale ``spread``."""
    shape = (d,) if n is None else (n, d)
    q, _ = np.linalg.qr(rng.standard_normal(shape[:-1] + (d, d)))
    lam = np.exp(spread * rng.uniform(-1.0, 1.0, shape))
    out = np.einsum("...ik,...k,...jk->...ij", q, lam, q)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def random_corr(rng, d, n=None, spread=1.0):
    s = random_spd(rng, d, n, spread)
    scale = 1.0 / np.sqrt(np.diagonal(s, axis1=-2, axis2=-1))
    c = s * scale[..., :, None] * scale[..., None, :]
    idx = np.arange(d)
    c[..., idx, idx] = 1.0
    return 0.5 * (c + np.swapaxes(c, -1, -2))


def random_point(rng, d, manifold, n=None, spread=1.0):
    return random_spd(rng, d, n, spread) if manifold == "spd" else random_corr(rng, d, n, spread)


def random_sym(rng, d, n=None):
    shape = (d, d) if n is None else (n, d, d)
    a = rng.standard_normal(shape)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def random_tangent(rng, d, manifold):
    xi = random_sym(rng, d)
    if manifold == "corr":
        np.fill_diagonal(xi, 0.0)
    return xi


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
