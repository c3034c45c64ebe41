"""Synthetic low-tubal-rank ground truths with a prescribed condition number."""

from dataclasses import dataclass

import numpy as np

from .algebra import _mirror, conj_transpose, dft_tubes, idft_tubes, spectral_norm, t_product, t_svd, tubal_rank
from .errors import InvalidSpec, RankExceeded

__all__ = ["GroundTruthSpec", "generate_ground_truth", "incoherence"]


@dataclass(frozen=True)
class GroundTruthSpec:
    n1: int
    n2: int
    n3: int
    r: int
    kappa: float = 1.0
    seed: int = 0

    def validate(self):
        errors = []
        for name in ("n1", "n2", "n3"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be positive")
        if not 1 <= self.r <= min(self.n1, self.n2):
            errors.append(f"r must lie in [1, min(n1, n2)], got {self.r}")
        if not self.kappa >= 1:
            errors.append(f"kappa must be >= 1, got {self.kappa}")
        if self.seed < 0:
            errors.append("seed must be nonnegative")
        if errors:
            raise InvalidSpec("; ".join(errors))


def generate_ground_truth(spec):
    """Draw a tensor of tubal rank ``r`` and condition number ``kappa``.

    A Gaussian tensor is moved to the spectral domain, and in every frontal
    slice the singular values are replaced by ``r`` values spaced linearly
    from 1 down to ``1/kappa`` (the rest zeroed).  The same ramp is used in
    every slice, so the spectral norm is exactly 1.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.n1, spec.n2, spec.n3))
    half = dft_tubes(x)[: spec.n3 // 2 + 1]
    u, _, vh = np.linalg.svd(half, full_matrices=False)
    ramp = np.linspace(1.0, 1.0 / spec.kappa, spec.r)
    low = (u[:, :, : spec.r] * ramp) @ vh[:, : spec.r, :]
    return idft_tubes(_mirror(low, spec.n3))


def incoherence(x, r):
    """Smallest ``mu`` with ``max_i ||Z(:,i,:)||_F <= mu sqrt(r/n2) ||x||``.

    ``Z = S * V^c`` comes from the rank-``r`` t-SVD of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if tubal_rank(x) > r:
        raise RankExceeded(f"tensor has tubal rank above {r}")
    f = t_svd(x, rank=r)
    z = t_product(f.S, conj_transpose(f.V))
    slice_norms = np.sqrt(np.sum(z**2, axis=(0, 2)))
    return float(slice_norms.max() * np.sqrt(x.shape[1] / r) / spectral_norm(x))
