"""Dense derivative matrices with boundary conditions.

For a signal ``f`` of length ``n`` and a kernel with half-length ``A`` the
derivative is

    f' = D f = (B_L S_L + D_T + B_R S_R) f

where ``D_T`` is the banded Toeplitz block acting on ``f`` itself, ``B_L`` and
``B_R`` are the corner blocks acting on the ``A`` samples outside the field
of view on each side, and ``S_L``/``S_R`` map ``f`` to those outside samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .diffkernel import KernelSpec, assemble_full_kernel

__all__ = [
    "BCKind",
    "BoundaryCondition",
    "DerivativeOperator",
    "build_derivative_matrix",
    "boundary_maps",
    "apply",
    "gram",
]


class BCKind(str, enum.Enum):
    ZERO = "zero"
    PERIODIC = "periodic"
    REFLECTIVE = "reflective"
    ANTIREFLECTIVE = "antireflective"


# Reflective defaults to the half-sample (Neumann) mirror; anti-reflective to
# the whole-sample point reflection about the boundary value.
_DEFAULT_SHIFT = {BCKind.REFLECTIVE: 0, BCKind.ANTIREFLECTIVE: 1}


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary rule for the samples outside ``[0, n)``.

    ``shift`` only matters for the reflective kinds; ``None`` picks the
    default (0 for reflective, 1 for anti-reflective).
    """

    kind: BCKind
    shift: int | None = None

    def __post_init__(self):
        try:
            kind = BCKind(self.kind)
        except ValueError:
            raise ValueError(f"unknown boundary condition {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        shift = self.shift
        if kind in _DEFAULT_SHIFT:
            shift = _DEFAULT_SHIFT[kind] if shift is None else int(shift)
            if shift not in (0, 1):
                raise ValueError(f"shift must be 0 or 1, got {self.shift}")
        else:
            shift = 0
        object.__setattr__(self, "shift", shift)

    @classmethod
    def parse(cls, value) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        return cls(value)

    def __str__(self) -> str:
        if self.kind in _DEFAULT_SHIFT:
            return f"{self.kind.value}(s={self.shift})"
        return self.kind.value


@dataclass(frozen=True, eq=False)
class DerivativeOperator:
    """First-derivative matrix for one axis.

    Immutable once built; ``D`` is marked read-only.
    """

    n: int
    kernel: KernelSpec
    bc: BoundaryCondition
    D: np.ndarray

    @property
    def shape(self):
        return self.D.shape

    def __matmul__(self, f):
        return apply(self, f)

    def apply(self, f):
        return apply(self, f)

    def gram(self):
        return gram(self)


def boundary_maps(n: int, A: int, bc: BoundaryCondition) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(S_L, S_R)``, each ``A x n``.

    Row ``r`` of ``S_L`` yields ``f_{r-A}`` (so the last row gives ``f_{-1}``);
    row ``r`` of ``S_R`` yields ``f_{n+r}``.
    """
    S_L = np.zeros((A, n))
    S_R = np.zeros((A, n))
    s = bc.shift
    kind = bc.kind
    if kind is BCKind.ZERO:
        return S_L, S_R
    for i in range(1, A + 1):
        row = A - i  # holds f_{-i}
        if kind is BCKind.PERIODIC:
            S_L[row, n - i] = 1.0
        elif kind is BCKind.REFLECTIVE:
            S_L[row, i - 1 + s] = 1.0
        else:
            S_L[row, 0] += 2.0
            S_L[row, i - 1 + s] -= 1.0
    for i in range(A):  # f_{n+i}
        if kind is BCKind.PERIODIC:
            S_R[i, i] = 1.0
        elif kind is BCKind.REFLECTIVE:
            S_R[i, n - 1 - s - i] = 1.0
        else:
            S_R[i, n - 1] += 2.0
            S_R[i, n - 1 - s - i] -= 1.0
    return S_L, S_R


def _toeplitz_blocks(n: int, kernel: np.ndarray):
    A = (len(kernel) - 1) // 2
    # f'_j = sum_l k_l f_{j-l}; extended index of f_{j-l} is j - l + A
    K = np.zeros((n, n + 2 * A))
    taps = kernel[::-1]
    for j in range(n):
        K[j, j:j + 2 * A + 1] = taps
    return K[:, :A], K[:, A:A + n], K[:, A + n:]


def build_derivative_matrix(n: int, k: KernelSpec, bc="antireflective") -> DerivativeOperator:
    """Materialize ``D = B_L S_L + D_T + B_R S_R`` for length ``n``.

    Raises
    ------
    ValueError
        If ``n < L`` or the boundary kind is unknown.
    """
    bc = BoundaryCondition.parse(bc)
    n = int(n)
    if n < k.L:
        raise ValueError(f"signal length n={n} is shorter than the kernel (L={k.L})")
    A = k.half_length
    B_L, D_T, B_R = _toeplitz_blocks(n, assemble_full_kernel(k))
    S_L, S_R = boundary_maps(n, A, bc)
    D = B_L @ S_L + D_T + B_R @ S_R
    D.setflags(write=False)
    return DerivativeOperator(n, k, bc, D)


def apply(op: DerivativeOperator, f):
    """Return ``D f``; ``f`` may carry extra trailing columns."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != op.n:
        raise ValueError(f"expected a length-{op.n} signal, got shape {f.shape}")
    return op.D @ f


def gram(op: DerivativeOperator) -> np.ndarray:
    """``D^T D``, symmetrized so the result is exactly symmetric."""
    G = op.D.T @ op.D
    return 0.5 * (G + G.T)
