"""Hot linear-algebra kernels: cyclic Jacobi eigensolver and Cholesky.

Each kernel exists twice. The ``*_numba`` variants are scalar loops compiled
with ``numba.njit``; the ``*_numpy`` variants run the same algorithm
vectorized across a batch of matrices. ``eigh_batch`` and ``cholesky_batch``
dispatch to one of them.

Set ``SPDFLOW_NUMBA=0`` in the environment to force the numpy path. It is
also used automatically when numba cannot be imported.
"""

import math
import os

import numpy as np

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_flag = os.environ.get("SPDFLOW_NUMBA", "1").strip().lower()
NUMBA_AVAILABLE = numba is not None
USE_NUMBA = numba is not None and _flag not in ("0", "false", "no", "off")


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# scalar-loop kernels (compiled by numba)
# ---------------------------------------------------------------------------

def _jacobi_single(a, v, tol, max_sweeps):
    d = a.shape[0]
    for i in range(d):
        for j in range(d):
            v[i, j] = 1.0 if i == j else 0.0
    norm = 0.0
    for i in range(d):
        for j in range(d):
            norm += a[i, j] * a[i, j]
    norm = math.sqrt(norm)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(d - 1):
            for q in range(p + 1, d):
                off += 2.0 * a[p, q] * a[p, q]
        if math.sqrt(off) <= tol * norm:
            return True
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(d):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(d):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(d):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return False


def _cholesky_batch_loops(a):
    n, d, _ = a.shape
    out = np.zeros_like(a)
    ok = np.ones(n, dtype=np.bool_)
    for b in range(n):
        for j in range(d):
            s = a[b, j, j]
            for k in range(j):
                s -= out[b, j, k] * out[b, j, k]
            if not s > 0.0:
                ok[b] = False
                break
            ljj = math.sqrt(s)
            out[b, j, j] = ljj
            for i in range(j + 1, d):
                s = a[b, i, j]
                for k in range(j):
                    s -= out[b, i, k] * out[b, j, k]
                out[b, i, j] = s / ljj
    return out, ok


if numba is not None:
    _jacobi_single_jit = numba.njit(cache=True)(_jacobi_single)

    @numba.njit(cache=True)
    def _jacobi_batch_jit(a, tol, max_sweeps):
        n, d, _ = a.shape
        work = a.copy()
        vecs = np.empty_like(a)
        vals = np.empty((n, d))
        converged = np.ones(n, dtype=np.bool_)
        for b in range(n):
            converged[b] = _jacobi_single_jit(work[b], vecs[b], tol, max_sweeps)
            for i in range(d):
                vals[b, i] = work[b, i, i]
        return vals, vecs, converged

    _cholesky_batch_jit = numba.njit(cache=True)(_cholesky_batch_loops)


def _sort_ascending(vals, vecs):
    order = np.argsort(vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=-1)
    return vals, vecs


def jacobi_eigh_numba(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a stack of symmetric matrices (compiled loops).

    Parameters
    ----------
    a : ndarray of shape (n, d, d)
        Symmetric matrices. Not modified.

    Returns
    -------
    vals : ndarray of shape (n, d)
        Eigenvalues in ascending order.
    vecs : ndarray of shape (n, d, d)
        Orthonormal eigenvectors stored as columns.
    converged : ndarray of shape (n,)
        False where the sweep limit was hit before the off-diagonal test.
    """
    if numba is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    a = np.ascontiguousarray(a, dtype=np.float64)
    vals, vecs, conv = _jacobi_batch_jit(a, tol, max_sweeps)
    vals, vecs = _sort_ascending(vals, vecs)
    return vals, vecs, conv


def jacobi_eigh_numpy(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Same contract as :func:`jacobi_eigh_numba`, vectorized over the batch."""
    a = np.array(a, dtype=np.float64, copy=True)
    n, d, _ = a.shape
    v = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    norm = np.sqrt(np.einsum("nij,nij->n", a, a))
    offmask = ~np.eye(d, dtype=bool)
    pairs = [(p, q) for p in range(d - 1) for q in range(p + 1, d)]
    converged = np.zeros(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a[:, offmask] ** 2, axis=1))
        converged = off <= tol * norm
        if converged.all():
            break
        active = ~converged
        for p, q in pairs:
            apq = a[:, p, q]
            rot = active & (apq != 0.0)
            if not rot.any():
                continue
            safe = np.where(rot, apq, 1.0)
            theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
            sgn = np.where(theta >= 0.0, 1.0, -1.0)
            t = sgn / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(rot, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            cc = c[:, None]
            ss = s[:, None]
            colp = a[:, :, p].copy()
            colq = a[:, :, q]
            a[:, :, p] = cc * colp - ss * colq
            a[:, :, q] = ss * colp + cc * colq
            rowp = a[:, p, :].copy()
            rowq = a[:, q, :]
            a[:, p, :] = cc * rowp - ss * rowq
            a[:, q, :] = ss * rowp + cc * rowq
            a[rot, p, q] = 0.0
            a[rot, q, p] = 0.0
            vp = v[:, :, p].copy()
            vq = v[:, :, q]
            v[:, :, p] = cc * vp - ss * vq
            v[:, :, q] = ss * vp + cc * vq
    else:
        off = np.sqrt(np.sum(a[:, offmask] ** 2, axis=1))
        converged = off <= tol * norm
    vals = np.diagonal(a, axis1=1, axis2=2).copy()
    vals, v = _sort_ascending(vals, v)
    return vals, v, converged


def cholesky_numba(a):
    """Left-looking Cholesky of a stack of matrices (compiled loops).

    Returns ``(factors, ok)``; ``ok[b]`` is False when matrix ``b`` hit a
    non-positive pivot, in which case its factor is partially filled.
    """
    if numba is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    a = np.ascontiguousarray(a, dtype=np.float64)
    return _cholesky_batch_jit(a)


def cholesky_numpy(a):
    """Same contract as :func:`cholesky_numba`, vectorized over the batch."""
    a = np.asarray(a, dtype=np.float64)
    n, d, _ = a.shape
    out = np.zeros_like(a)
    ok = np.ones(n, dtype=bool)
    for j in range(d):
        row = out[:, j, :j]
        s = a[:, j, j] - np.einsum("nk,nk->n", row, row)
        bad = ~(s > 0.0)
        ok &= ~bad
        ljj = np.sqrt(np.where(bad, 1.0, s))
        out[:, j, j] = np.where(ok, ljj, 0.0)
        if j + 1 < d:
            below = a[:, j + 1:, j] - np.einsum("nik,nk->ni", out[:, j + 1:, :j], row)
            out[:, j + 1:, j] = np.where(ok[:, None], below / ljj[:, None], 0.0)
    return out, ok


if USE_NUMBA:
    eigh_batch = jacobi_eigh_numba
    cholesky_batch = cholesky_numba
else:
    eigh_batch = jacobi_eigh_numpy
    cholesky_batch = cholesky_numpy
