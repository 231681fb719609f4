"""Plain triangular coordinates for symmetric matrices.

Unlike the charts in :mod:`spdflow.geometry`, this map is a bijection onto
all symmetric matrices of the right shape, not onto the manifold, so vectors
decoded from it may need projecting back.
"""


from . import geometry as geo


def triang_embed(m, manifold):
    """``corr``: strictly-lower entries; ``spd``: sqrt(2)-scaled lower triangle."""
    geo.check_manifold_tag(manifold)
    m = geo.as_sym(m)
    return geo.veclt(m) if manifold == "spd" else geo.vecl(m)


def triang_unembed(v, manifold):
    """Symmetric matrix from triangular coordinates, without projection."""
    geo.check_manifold_tag(manifold)
    if manifold == "spd":
        return geo.veclt_inv(v)
    return geo.vecl_inv(v, diagonal=1.0, symmetric=True)


def triang_restore(v, manifold, eps=1e-8, project=True):
    """Rebuild matrices and, unless ``project`` is false, push them onto the
    manifold with :func:`spdflow.geometry.project_to_spd`."""
    out = triang_unembed(v, manifold)
    if not project:
        return out
    return geo.project_to_spd(out, eps=eps, preserve_unit_diag=(manifold == "corr"))
