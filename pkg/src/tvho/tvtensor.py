"""Video volumes, the Kronecker-factored 3D gradient and TV shrinkage.

Volumes are ``(m, n, N)`` float arrays: rows, columns, frames.  Their
vectorization is mode-1 fastest, i.e. ``vec(F)[i + m*j + m*n*t] = F[i, j, t]``
which is numpy's Fortran order.  A gradient field is a ``(3, m, n, N)`` array
holding ``dF/dx``, ``dF/dy`` and ``dF/dt``.

Nothing here ever materializes a Kronecker product; every operator is applied
as a mode-wise matrix product.
"""

from __future__ import annotations

import numpy as np

from .bcdiff import DerivativeOperator

__all__ = [
    "vec",
    "unvec",
    "mode_product",
    "TensorGradient",
    "gradient",
    "gradient_adjoint",
    "tv_norm",
    "soft_threshold",
    "vector_soft_threshold",
]


def vec(F) -> np.ndarray:
    """Mode-1 vectorization of a volume."""
    return np.asarray(F, dtype=float).ravel(order="F")


def unvec(f, shape) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.size != int(np.prod(shape)):
        raise ValueError(f"cannot reshape {f.size} values into {tuple(shape)}")
    return f.reshape(shape, order="F")


def mode_product(F, M, axis: int) -> np.ndarray:
    """Multiply every mode-``axis`` fiber of ``F`` by the matrix ``M``."""
    M = np.asarray(M)
    if M.shape[1] != F.shape[axis]:
        raise ValueError(f"matrix with {M.shape[1]} columns cannot act on axis {axis} "
                         f"of length {F.shape[axis]}")
    out = np.tensordot(M, F, axes=(1, axis))
    return np.moveaxis(out, 0, axis)


def _matrix(op):
    return op.D if isinstance(op, DerivativeOperator) else np.asarray(op, dtype=float)


class TensorGradient:
    """The stacked operator ``[I(x)I(x)Dm ; I(x)Dn(x)I ; DN(x)I(x)I]``.

    Parameters
    ----------
    Dm, Dn, DN : DerivativeOperator or ndarray
        Per-axis derivative matrices for rows, columns and frames.
    """

    def __init__(self, Dm, Dn, DN):
        self.ops = (Dm, Dn, DN)
        self.mats = tuple(_matrix(op) for op in self.ops)
        self.shape = tuple(M.shape[0] for M in self.mats)

    def _check(self, F, what="volume"):
        if F.shape[-3:] != self.shape:
            raise ValueError(f"{what} shape {F.shape} does not match operators {self.shape}")

    def __call__(self, F):
        return self.forward(F)

    def forward(self, F):
        F = np.asarray(F, dtype=float)
        self._check(F)
        return np.stack([mode_product(F, M, ax) for ax, M in enumerate(self.mats)])

    def adjoint(self, G):
        G = np.asarray(G, dtype=float)
        if G.ndim != 4 or G.shape[0] != 3:
            raise ValueError(f"gradient field must have shape (3, m, n, N), got {G.shape}")
        self._check(G, "gradient field")
        out = mode_product(G[0], self.mats[0].T, 0)
        out += mode_product(G[1], self.mats[1].T, 1)
        out += mode_product(G[2], self.mats[2].T, 2)
        return out

    def normal(self, F):
        """``grad^T grad F``."""
        return self.adjoint(self.forward(F))


def gradient(F, Dm, Dn, DN) -> np.ndarray:
    """Directional derivatives of ``F`` along rows, columns and frames."""
    return TensorGradient(Dm, Dn, DN).forward(F)


def gradient_adjoint(G, Dm, Dn, DN) -> np.ndarray:
    return TensorGradient(Dm, Dn, DN).adjoint(G)


def tv_norm(G, norm: str = "aniso") -> float:
    """Discrete TV of a gradient field.

    ``aniso`` sums ``|gx| + |gy| + |gt|``; ``iso`` sums the per-site
    Euclidean norm of ``(gx, gy, gt)``.
    """
    G = np.asarray(G, dtype=float)
    if norm == "aniso":
        return float(np.abs(G).sum())
    if norm == "iso":
        return float(np.sqrt((G * G).sum(axis=0)).sum())
    raise ValueError(f"unknown TV norm {norm!r}")


def soft_threshold(s, tau):
    """``sign(s) * max(|s| - tau, 0)`` elementwise."""
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.maximum(np.abs(s) - tau, 0.0)


def vector_soft_threshold(G, tau, axis: int = 0):
    """Shrink the vector along ``axis`` toward zero by ``tau`` in l2 norm.

    Sites whose norm is at most ``tau`` (including zero vectors) map to 0.
    """
    if tau < 0:
        raise ValueError("threshold must be non-negative")
    G = np.asarray(G, dtype=float)
    norm = np.sqrt((G * G).sum(axis=axis, keepdims=True))
    shrunk = np.maximum(norm - tau, 0.0)
    scale = np.divide(shrunk, norm, out=np.zeros_like(norm), where=norm > 0)
    return G * scale
