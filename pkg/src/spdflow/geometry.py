"""Symmetric-matrix linear algebra and the two global charts.

Matrices are plain ``ndarray`` objects of shape ``(d, d)`` or stacks
``(n, d, d)``. Embedded points are vectors of shape ``(m,)`` or ``(n, m)``
with ``m = d(d+1)/2`` on the SPD cone and ``m = d(d-1)/2`` on the open
elliptope of full-rank correlation matrices. The manifold is named by a
string tag, ``"spd"`` or ``"corr"``.

The charts are

* ``spd``: ``z = veclt(logm(S))`` where ``veclt`` stacks the lower triangle
  column by column and multiplies strictly-lower entries by sqrt(2);
* ``corr``: ``z = vecl(diag(L)^-1 L)`` with ``L`` the Cholesky factor and
  ``vecl`` the strictly-lower entries, column by column, unscaled.

Straight lines, distances and means in ``z`` are geodesics, distances and
Fréchet means of the pulled-back metric. The finite-difference machinery at
the bottom of the module (``diffeo_jvp`` and friends) evaluates the chart's
differential numerically; it exists to cross-check the Euclidean shortcuts
and is never used on the training path.
"""

from functools import lru_cache

import numpy as np

from . import kernels
from .errors import (
    InvalidInput,
    NotCorrelation,
    NotPositiveDefinite,
    StepFailure,
)

MANIFOLDS = ("spd", "corr")
SPD_REL_FLOOR = 1e-12
UNIT_DIAG_TOL = 1e-10
SQRT2 = np.sqrt(2.0)


def check_manifold_tag(manifold):
    if manifold not in MANIFOLDS:
        raise InvalidInput(f"unknown manifold {manifold!r}; expected one of {MANIFOLDS}")
    return manifold


def embed_dim(d, manifold):
    """Length of the embedded vector for ``d x d`` matrices."""
    check_manifold_tag(manifold)
    return d * (d + 1) // 2 if manifold == "spd" else d * (d - 1) // 2


def matrix_dim(m, manifold):
    """Inverse of :func:`embed_dim`; raises if ``m`` is not a valid length."""
    check_manifold_tag(manifold)
    root = int(round(np.sqrt(8 * m + 1)))
    if root * root != 8 * m + 1:
        raise InvalidInput(f"length {m} is not a triangular number")
    d = (root - 1) // 2 if manifold == "spd" else (root + 1) // 2
    if d < 1 or (manifold == "corr" and d < 2 and m != 0):
        raise InvalidInput(f"length {m} does not match a {manifold} matrix")
    return d


# ---------------------------------------------------------------------------
# symmetric matrices
# ---------------------------------------------------------------------------

def as_sym(a):
    """Validate a (stack of) square matrices and symmetrize by averaging."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInput(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _stack(a):
    return a.reshape((-1,) + a.shape[-2:])


def sym_eig(a):
    """Eigendecomposition of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like of shape (..., d, d)

    Returns
    -------
    eigenvalues : ndarray of shape (..., d)
        Ascending.
    basis : ndarray of shape (..., d, d)
        Orthonormal eigenvectors as columns.
    """
    a = as_sym(a)
    lead = a.shape[:-2]
    d = a.shape[-1]
    vals, vecs, _ = kernels.eigh_batch(_stack(a))
    return vals.reshape(lead + (d,)), vecs.reshape(lead + (d, d))


def _recompose(vals, vecs):
    out = np.einsum("...ik,...k,...jk->...ij", vecs, vals, vecs)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _spd_mask(vals):
    top = np.maximum(vals[..., -1], 1e-300)
    return vals[..., 0] > SPD_REL_FLOOR * top


def is_spd(a):
    """Boolean (array) telling whether each matrix is numerically SPD."""
    vals, _ = sym_eig(a)
    return _spd_mask(vals)


def mat_log(s):
    """Matrix logarithm of SPD matrices via their eigendecomposition."""
    vals, vecs = sym_eig(s)
    if not np.all(_spd_mask(vals)):
        raise NotPositiveDefinite("matrix logarithm needs a positive definite input")
    return _recompose(np.log(vals), vecs)


def mat_exp(v):
    """Matrix exponential of symmetric matrices; the result is SPD."""
    vals, vecs = sym_eig(v)
    return _recompose(np.exp(vals), vecs)


def cholesky(a):
    """Lower Cholesky factor; ``NotPositiveDefinite`` on a non-positive pivot."""
    a = as_sym(a)
    lead = a.shape[:-2]
    factors, ok = kernels.cholesky_batch(_stack(a))
    if not np.all(ok):
        raise NotPositiveDefinite("Cholesky factorization hit a non-positive pivot")
    return factors.reshape(a.shape) if lead else factors[0]


# ---------------------------------------------------------------------------
# vectorizations
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _lower_index(d, strict):
    # column-major traversal of the lower triangle
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1 if strict else j, d):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows, dtype=np.intp)
    cols = np.array(cols, dtype=np.intp)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def veclt(a):
    """Lower triangle incl. diagonal, column-major, off-diagonal times sqrt(2)."""
    a = np.asarray(a, dtype=np.float64)
    rows, cols = _lower_index(a.shape[-1], False)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return a[..., rows, cols] * scale


def veclt_inv(z, d=None):
    z = np.asarray(z, dtype=np.float64)
    if d is None:
        d = matrix_dim(z.shape[-1], "spd")
    rows, cols = _lower_index(d, False)
    if z.shape[-1] != rows.size:
        raise InvalidInput(f"expected length {rows.size}, got {z.shape[-1]}")
    vals = z * np.where(rows == cols, 1.0, 1.0 / SQRT2)
    out = np.zeros(z.shape[:-1] + (d, d))
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def vecl(a):
    """Strictly-lower entries, column-major, unscaled."""
    a = np.asarray(a, dtype=np.float64)
    rows, cols = _lower_index(a.shape[-1], True)
    return a[..., rows, cols]


def vecl_inv(z, d=None, diagonal=0.0, symmetric=False):
    """Rebuild a matrix from strictly-lower entries.

    With ``symmetric=False`` the upper triangle is zero (a unit lower
    triangular matrix when ``diagonal=1``); otherwise it mirrors the lower.
    """
    z = np.asarray(z, dtype=np.float64)
    if d is None:
        d = matrix_dim(z.shape[-1], "corr")
    rows, cols = _lower_index(d, True)
    if z.shape[-1] != rows.size:
        raise InvalidInput(f"expected length {rows.size}, got {z.shape[-1]}")
    out = np.zeros(z.shape[:-1] + (d, d))
    idx = np.arange(d)
    out[..., idx, idx] = diagonal
    out[..., rows, cols] = z
    if symmetric:
        out[..., cols, rows] = z
    return out


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

def phi_spd(s):
    return veclt(mat_log(s))


def phi_spd_inv(z):
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInput("embedded vector has non-finite entries")
    return mat_exp(veclt_inv(z))


def check_unit_diagonal(c, tol=UNIT_DIAG_TOL):
    diag = np.diagonal(np.asarray(c), axis1=-2, axis2=-1)
    if not np.all(np.abs(diag - 1.0) <= tol):
        raise NotCorrelation("correlation matrix must have a unit diagonal")


def phi_corr(c):
    c = as_sym(c)
    check_unit_diagonal(c)
    factor = cholesky(c)
    diag = np.diagonal(factor, axis1=-2, axis2=-1)
    return vecl(factor / diag[..., :, None])


def phi_corr_inv(z):
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInput("embedded vector has non-finite entries")
    low = vecl_inv(z, diagonal=1.0)
    gram = low @ np.swapaxes(low, -1, -2)
    scale = 1.0 / np.sqrt(np.diagonal(gram, axis1=-2, axis2=-1))
    out = gram * scale[..., :, None] * scale[..., None, :]
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    idx = np.arange(out.shape[-1])
    out[..., idx, idx] = 1.0
    return out


def phi(x, manifold):
    """Chart of ``manifold`` applied to one matrix or a stack."""
    check_manifold_tag(manifold)
    return phi_spd(x) if manifold == "spd" else phi_corr(x)


def phi_inv(z, manifold):
    check_manifold_tag(manifold)
    return phi_spd_inv(z) if manifold == "spd" else phi_corr_inv(z)


def geodesic(x0, x1, t, manifold):
    """Point ``gamma(t)`` on the geodesic from ``x0`` to ``x1``."""
    z0, z1 = phi(x0, manifold), phi(x1, manifold)
    return phi_inv((1.0 - t) * z0 + t * z1, manifold)


def distance(x0, x1, manifold):
    return np.linalg.norm(phi(x0, manifold) - phi(x1, manifold), axis=-1)


def frechet_mean(points, manifold):
    """Fréchet mean under the pulled-back metric (closed form).

    Parameters
    ----------
    points : array_like of shape (n, d, d)
    manifold : {"spd", "corr"}
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 3 or points.shape[0] == 0:
        raise InvalidInput("need a non-empty stack of matrices")
    return phi_inv(phi(points, manifold).mean(axis=0), manifold)


def project_to_spd(a, eps=1e-8, preserve_unit_diag=None):
    """Shrink a symmetric matrix toward the identity until its smallest
    eigenvalue equals ``eps``.

    The output is ``(1 - alpha) a + alpha I`` with
    ``alpha = (eps - lam_min) / (1 - lam_min)``; matrices whose smallest
    eigenvalue is already at least ``eps`` are returned unchanged. Since the
    map is an affine combination with ``I``, a unit diagonal survives; when
    ``preserve_unit_diag`` is true (the default for unit-diagonal input) the
    diagonal is written back as exact ones to remove rounding.
    """
    if not 0.0 < eps <= 1.0:
        raise InvalidInput("eps must lie in (0, 1]")
    a = np.asarray(a, dtype=np.float64)
    if np.any(np.isnan(a)):
        raise InvalidInput("matrix has NaN entries")
    a = as_sym(a)
    single = a.ndim == 2
    stack = _stack(a).copy()
    d = stack.shape[-1]
    idx = np.arange(d)
    if preserve_unit_diag is None:
        unit = np.all(stack[:, idx, idx] == 1.0, axis=1)
    else:
        unit = np.full(stack.shape[0], bool(preserve_unit_diag))
    vals, _ = sym_eig(stack)
    lam = vals[:, 0]
    need = lam < eps
    alpha = (eps - lam[need]) / (1.0 - lam[need])
    sub = (1.0 - alpha)[:, None, None] * stack[need]
    sub[:, idx, idx] += alpha[:, None]
    fix = unit[need]
    if np.any(fix):
        keep = sub[fix]
        keep[:, idx, idx] = 1.0
        sub[fix] = keep
    stack[need] = sub
    return stack[0] if single else stack.reshape(a.shape)


# ---------------------------------------------------------------------------
# differential of the chart (finite-difference oracle)
# ---------------------------------------------------------------------------

def tangent_basis(d, manifold):
    """Basis of the tangent space, shape ``(m, d, d)``.

    For ``spd`` the basis vectors are ``veclt_inv(e_k)``; for ``corr`` they
    are the symmetric unit matrices ``E_ij + E_ji`` with zero diagonal.
    """
    m = embed_dim(d, manifold)
    eye = np.eye(m)
    if manifold == "spd":
        return veclt_inv(eye, d)
    return vecl_inv(eye, d, symmetric=True)


def tangent_from_coords(coords, d, manifold):
    return np.tensordot(np.asarray(coords, dtype=np.float64), tangent_basis(d, manifold), axes=(-1, 0))


def _retract(x, xi, manifold):
    y = x + xi
    if manifold == "corr":
        s = 1.0 / np.sqrt(np.diagonal(y, axis1=-2, axis2=-1))
        y = y * s[..., :, None] * s[..., None, :]
        idx = np.arange(y.shape[-1])
        y[..., idx, idx] = 1.0
    return y


def _check_tangent(x, xi, manifold):
    x = as_sym(x)
    xi = as_sym(xi)
    if xi.shape[-2:] != x.shape[-2:]:
        raise InvalidInput("tangent vector and base point differ in dimension")
    if manifold == "corr":
        if np.any(np.abs(np.diagonal(xi, axis1=-2, axis2=-1)) > UNIT_DIAG_TOL):
            raise InvalidInput("correlation tangents must have a zero diagonal")
        xi = xi.copy()
        idx = np.arange(xi.shape[-1])
        xi[..., idx, idx] = 0.0
    return x, xi


def _central_difference(x, xis, manifold, h):
    # xis: (k, d, d) directions sharing the base point x; central differences
    # at h and h/2 combined by one Richardson step (error O(h^4))
    steps = np.array([h, -h, 0.5 * h, -0.5 * h])
    pts = _retract(x, steps[:, None, None, None] * xis[None], manifold)
    pts = pts.reshape((-1,) + x.shape)
    if not np.all(is_spd(pts)):
        return None
    vals = phi(pts, manifold).reshape(4, xis.shape[0], -1)
    coarse = (vals[0] - vals[1]) / (2.0 * h)
    fine = (vals[2] - vals[3]) / h
    return (4.0 * fine - coarse) / 3.0


def _jvp_many(x, xis, manifold):
    norms = np.linalg.norm(xis, axis=(-2, -1))
    out = np.empty((xis.shape[0], embed_dim(x.shape[-1], manifold)))
    scale_x = 1.0 + np.linalg.norm(x)
    for k in range(xis.shape[0]):
        h = 1e-5 * scale_x / (1.0 + norms[k])
        for attempt in range(2):
            res = _central_difference(x, xis[k:k + 1], manifold, h)
            if res is not None:
                out[k] = res[0]
                break
            h /= 10.0
        else:
            raise StepFailure("finite-difference step leaves the manifold")
    return out


def diffeo_jvp(x, xi, manifold):
    """Differential of the chart at ``x`` applied to tangent ``xi``.

    Central finite differences along the retraction ``x + t xi`` (followed
    by diagonal renormalization on ``corr``) with step
    ``h = 1e-5 (1 + |x|_F) / (1 + |xi|_F)``, refined by one Richardson
    extrapolation against step ``h/2``. If a probe point leaves the manifold
    the step is cut by 10 once before ``StepFailure``.
    """
    check_manifold_tag(manifold)
    x, xi = _check_tangent(x, xi, manifold)
    return _jvp_many(x, xi[None], manifold)[0]


def diffeo_jacobian(x, manifold):
    """Matrix of the chart differential in the :func:`tangent_basis`."""
    check_manifold_tag(manifold)
    x = as_sym(x)
    basis = tangent_basis(x.shape[-1], manifold)
    h = 1e-5 * (1.0 + np.linalg.norm(x)) / (1.0 + np.linalg.norm(basis[0]))
    for _ in range(2):
        cols = _central_difference(x, basis, manifold, h)
        if cols is not None:
            return cols.T
        h /= 10.0
    raise StepFailure("finite-difference step leaves the manifold")


def diffeo_jvp_inverse(x, v, manifold, jacobian=None):
    """Tangent matrix ``xi`` at ``x`` with ``diffeo_jvp(x, xi) == v``."""
    x = as_sym(x)
    jac = diffeo_jacobian(x, manifold) if jacobian is None else jacobian
    coords = np.linalg.solve(jac, np.asarray(v, dtype=np.float64))
    return tangent_from_coords(coords, x.shape[-1], manifold)


def pullback_exp(x, xi, manifold):
    """Riemannian exponential ``phi^-1(phi(x) + Dphi(x)[xi])``."""
    return phi_inv(phi(x, manifold) + diffeo_jvp(x, xi, manifold), manifold)


def pullback_log(x, y, manifold):
    """Riemannian logarithm in embedded coordinates: ``Dphi(x)[log_x y]``."""
    return phi(y, manifold) - phi(x, manifold)


def pullback_log_tangent(x, y, manifold):
    """Riemannian logarithm as a tangent matrix at ``x``."""
    return diffeo_jvp_inverse(x, pullback_log(x, y, manifold), manifold)


def pullback_pt(x, y, xi, manifold):
    """Parallel transport of tangent ``xi`` from ``x`` to ``y`` (tangent matrix at ``y``)."""
    return diffeo_jvp_inverse(y, diffeo_jvp(x, xi, manifold), manifold)


def pullback_norm(x, xi, manifold):
    """Norm of ``xi`` under the pulled-back metric at ``x``."""
    return float(np.linalg.norm(diffeo_jvp(x, xi, manifold)))
