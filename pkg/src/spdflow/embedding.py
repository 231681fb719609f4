"""Maps between manifold-valued matrices and the flat space models learn in."""

from dataclasses import dataclass

from . import geometry as geo
from .errors import InvalidInput
from .triang import triang_embed, triang_restore

KINDS = ("diffeo", "triang")


@dataclass(frozen=True)
class Embedding:
    """``kind="diffeo"`` uses the global chart; ``kind="triang"`` the raw
    triangular coordinates followed by eigenvalue projection on decode."""

    manifold: str
    kind: str = "diffeo"
    eps: float = 1e-8

    def __post_init__(self):
        geo.check_manifold_tag(self.manifold)
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown embedding kind {self.kind!r}")

    def dim(self, d):
        return geo.embed_dim(d, self.manifold)

    def encode(self, mats):
        if self.kind == "diffeo":
            return geo.phi(mats, self.manifold)
        return triang_embed(mats, self.manifold)

    def decode(self, z, project=True):
        if self.kind == "diffeo":
            return geo.phi_inv(z, self.manifold)
        return triang_restore(z, self.manifold, eps=self.eps, project=project)
