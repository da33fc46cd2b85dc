"""Exact solve of the ADMM f-sub-problem by per-axis eigendecomposition.

With orthonormal wavelet and sensing operators the f-update has to invert

    O = mu1 * grad^T grad + (mu2 + mu3) * I

and ``grad^T grad`` is a Kronecker sum of the per-axis Gram matrices
``D^T D = Q Lambda Q^T``.  Hence ``O = Qbar Lambda0 Qbar^T`` with
``Qbar = QN (x) Qn (x) Qm`` and a positive diagonal ``Lambda0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bcdiff import DerivativeOperator
from .tvtensor import mode_product

__all__ = ["SpectralFactorization", "factorize", "solve_f", "axis_eigh"]

CLAMP_TOL = 1e-10


def axis_eigh(op) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (clamped at 0) and orthogonal eigenvectors of ``D^T D``."""
    D = op.D if isinstance(op, DerivativeOperator) else np.asarray(op, dtype=float)
    G = D.T @ D
    G = 0.5 * (G + G.T)
    lam, Q = np.linalg.eigh(G)
    scale = max(1.0, float(lam.max(initial=0.0)))
    if lam.min(initial=0.0) < -CLAMP_TOL * scale:
        raise np.linalg.LinAlgError(
            f"D^T D has eigenvalue {lam.min():.3g}; input is not a valid Gram matrix")
    return np.maximum(lam, 0.0), Q


@dataclass(frozen=True, eq=False)
class SpectralFactorization:
    Q: tuple
    lam: tuple
    lam0: np.ndarray
    mu: tuple

    @property
    def shape(self):
        return self.lam0.shape


def factorize(Dm, Dn, DN, mu1: float, mu2: float, mu3: float) -> SpectralFactorization:
    """Eigendecompose each axis and assemble ``Lambda0`` as an ``(m, n, N)`` array."""
    if mu1 < 0 or mu2 < 0 or mu3 < 0:
        raise ValueError("penalties must be non-negative")
    if not mu2 + mu3 > 0:
        raise ValueError("mu2 + mu3 must be positive for O to be invertible")
    pairs = [axis_eigh(op) for op in (Dm, Dn, DN)]
    lam = tuple(p[0] for p in pairs)
    Q = tuple(p[1] for p in pairs)
    ksum = lam[0][:, None, None] + lam[1][None, :, None] + lam[2][None, None, :]
    lam0 = (mu2 + mu3) + mu1 * ksum
    return SpectralFactorization(Q, lam, lam0, (float(mu1), float(mu2), float(mu3)))


def solve_f(sf: SpectralFactorization, rhs) -> np.ndarray:
    """Return ``O^{-1} rhs`` as ``Qbar Lambda0^{-1} Qbar^T rhs``."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != sf.shape:
        raise ValueError(f"right-hand side shape {rhs.shape} does not match {sf.shape}")
    X = rhs
    for ax, Q in enumerate(sf.Q):
        X = mode_product(X, Q.T, ax)
    X = X / sf.lam0
    for ax, Q in enumerate(sf.Q):
        X = mode_product(X, Q, ax)
    return X
