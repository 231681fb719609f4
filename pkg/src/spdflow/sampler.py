"""Fixed-step explicit Runge-Kutta sampling.

Integration happens in the flat space and the end point is decoded once.
:func:`riemannian_rk_oracle` runs the same tableau on the manifold itself
(stage points by the exponential map, stage velocities carried back by
parallel transport); it is an independent check, far too slow for use.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DivergedTrajectory, InvalidInput
from .flow import sample_source

DIVERGENCE_LIMIT = 1e6

# explicit Butcher tableaux: (a, b, c)
TABLEAUX = {
    "euler": ([[]], [1.0], [0.0]),
    "midpoint": ([[], [0.5]], [0.0, 1.0], [0.0, 0.5]),
    "rk4": (
        [[], [0.5], [0.0, 0.5], [0.0, 0.0, 1.0]],
        [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        [0.0, 0.5, 0.5, 1.0],
    ),
}


@dataclass(frozen=True)
class IntegratorSpec:
    scheme: str = "rk4"
    steps: int = 100

    def __post_init__(self):
        if self.scheme not in TABLEAUX:
            raise InvalidInput(f"scheme must be one of {sorted(TABLEAUX)}")
        if int(self.steps) < 1:
            raise InvalidInput("steps must be at least 1")

    @property
    def h(self):
        return 1.0 / self.steps


def integrate(field, z0, y, spec, return_path=False):
    """Integrate ``dz/dt = field(t, z, y)`` from ``t=0`` to ``t=1``.

    ``z0`` may be one point ``(m,)`` or a batch ``(n, m)``; the field must
    accept the same shape. With ``return_path`` the result has a leading
    axis of length ``steps + 1`` holding every iterate.
    """
    a, b, c = TABLEAUX[spec.scheme]
    h = spec.h
    z = np.array(z0, dtype=np.float64)
    path = [z.copy()] if return_path else None
    for step in range(spec.steps):
        t = step * h
        ks = []
        for i in range(len(b)):
            zi = z
            for j, aij in enumerate(a[i]):
                if aij:
                    zi = zi + h * aij * ks[j]
            ks.append(np.asarray(field(t + c[i] * h, zi, y), dtype=np.float64))
        incr = sum(bi * k for bi, k in zip(b, ks) if bi)
        z = z + h * incr
        if not np.all(np.isfinite(z)) or np.max(np.abs(z), initial=0.0) > DIVERGENCE_LIMIT:
            raise DivergedTrajectory(step + 1)
        if return_path:
            path.append(z.copy())
    return np.stack(path) if return_path else z


def sample_rng(seed, label, index):
    """Generator for one sample, derived from ``(seed, label, index)``.

    Each sample owns its stream, so results do not depend on batching or on
    how work is split across processes.
    """
    return np.random.default_rng([int(seed), int(label) & 0xFFFFFFFF, int(index)])


def draw_sources(src, y, n, seed):
    return np.stack([sample_source(src, y, sample_rng(seed, y, i)) for i in range(n)])


def sample_embedded(model, src, y, n, spec, seed):
    z0 = draw_sources(src, y, n, seed)
    return integrate(model.velocity, z0, y, spec)


def sample_manifold(model, src, y, n, spec=IntegratorSpec(), seed=0, project=True):
    """Draw ``n`` class-``y`` samples: source draw, integrate, decode.

    Returns an array of shape ``(n, d, d)``. For chart models every output
    is on the manifold by construction; ``project`` only matters for the
    triangular baseline.
    """
    z = sample_embedded(model, src, y, n, spec, seed)
    return model.chart.decode(z, project=project)


def riemannian_rk_oracle(model, x0, y, spec):
    """Runge-Kutta iterates computed on the manifold.

    Every stage velocity is the flat network output pulled back through the
    inverse chart differential at the stage point, stage points come from
    the exponential map at the current iterate, and stage velocities are
    parallel-transported to the current iterate before being combined.

    Returns the list of iterates ``[x_0, ..., x_L]``.
    """
    man = model.manifold
    a, b, c = TABLEAUX[spec.scheme]
    h = spec.h
    x = geo.as_sym(x0)
    iterates = [x]
    for step in range(spec.steps):
        t = step * h
        jac_x = geo.diffeo_jacobian(x, man)
        transported = []
        for i in range(len(b)):
            combo = np.zeros_like(x)
            for j, aij in enumerate(a[i]):
                if aij:
                    combo = combo + h * aij * transported[j]
            stage = x if i == 0 else geo.pullback_exp(x, combo, man)
            u_flat = model.velocity(t + c[i] * h, geo.phi(stage, man), y)
            if i == 0:
                k = geo.diffeo_jvp_inverse(x, u_flat, man, jacobian=jac_x)
            else:
                k_stage = geo.diffeo_jvp_inverse(stage, u_flat, man)
                k = geo.diffeo_jvp_inverse(x, geo.diffeo_jvp(stage, k_stage, man), man, jacobian=jac_x)
            transported.append(k)
        move = h * sum(bi * k for bi, k in zip(b, transported))
        x = geo.pullback_exp(x, move, man)
        iterates.append(x)
    return iterates
