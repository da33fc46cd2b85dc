"""Noise-robust high-order derivative FIR kernels.

A kernel of odd length ``L`` is anti-symmetric and fully described by its
half-kernel ``d_1 .. d_A`` (``A = (L - 1) / 2``).  Applied to samples ``v``
with spacing ``T`` it approximates

    v'_k = (1 / T) * sum_l d_l * (v_{k+l} - v_{k-l})

The coefficients come from a square moment system: ``n_o`` rows force the
response to match ``i*omega`` at ``omega = 0`` and ``m_o`` rows force
tangency to zero at ``omega = pi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "KernelSpec",
    "design_nr_kernel",
    "frequency_response",
    "assemble_full_kernel",
    "moment_system",
    "suppression_order",
]


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Designed anti-symmetric derivative kernel.

    Attributes
    ----------
    L : int
        Full filter length (odd).
    p : int
        Accuracy (exact polynomial) order.
    q : int
        Suppression order at Nyquist, derived from ``L`` and ``p``.
    T : float
        Sampling interval used when the kernel is applied.
    d : ndarray
        Half-kernel ``d_1 .. d_A``.
    residual : float
        Row-scaled residual of the moment system after the solve.
    """

    L: int
    p: int
    q: int
    T: float
    d: np.ndarray
    residual: float = 0.0

    @property
    def half_length(self) -> int:
        return (self.L - 1) // 2

    def with_spacing(self, T: float) -> "KernelSpec":
        """Same coefficients, different sampling interval."""
        if not T > 0:
            raise ValueError(f"sampling interval must be positive, got {T}")
        return KernelSpec(self.L, self.p, self.q, float(T), self.d, self.residual)

    def full(self) -> np.ndarray:
        return assemble_full_kernel(self)

    def __repr__(self) -> str:
        return f"KernelSpec(L={self.L}, p={self.p}, q={self.q}, T={self.T})"


def suppression_order(L: int, p: int) -> int:
    """Smallest non-negative ``q`` making the moment system square.

    ``q`` satisfies ``floor((q-1)/2) = (L-1)/2 - floor((p-1)/2) - 2``.
    """
    r = (L - 1) // 2 - (p - 1) // 2 - 2
    return max(2 * r + 1, 0)


def _check_lp(L: int, p: int) -> None:
    if int(L) != L or int(p) != p:
        raise ValueError("L and p must be integers")
    if L < 3 or L % 2 == 0:
        raise ValueError(f"kernel length must be odd and >= 3, got L={L}")
    if p < 1:
        raise ValueError(f"accuracy order must be >= 1, got p={p}")
    if p > L - 1:
        raise ValueError(f"accuracy order p={p} exceeds L-1={L - 1}")


def moment_system(L: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Return the square matrix and right-hand side of the moment system.

    Rows ``k = 0 .. n_o-1`` hold ``l**(2k+1)``; rows of the suppression block
    hold ``(-1)**l * l**(2k+1)`` for ``k = 0 .. m_o-1``.
    """
    _check_lp(L, p)
    A = (L - 1) // 2
    n_o = (p - 1) // 2 + 1
    m_o = A - n_o
    if m_o < 0:
        raise ValueError(f"(L={L}, p={p}) leaves no room for the precision rows")
    ell = np.arange(1, A + 1, dtype=float)
    sign = (-1.0) ** ell
    rows = [ell ** (2 * k + 1) for k in range(n_o)]
    rows += [sign * ell ** (2 * k + 1) for k in range(m_o)]
    M = np.array(rows)
    rhs = np.zeros(A)
    rhs[0] = 0.5
    return M, rhs


def design_nr_kernel(L: int, p: int, T: float = 1.0) -> KernelSpec:
    """Solve the moment system for the half-kernel of a (L, p) differentiator.

    The system is Vandermonde-like with entries up to ``A**(2 n_o - 1)``, so
    rows are equilibrated by their max-abs entry before LU with partial
    pivoting.  The residual reported (and checked) is row-relative:
    ``|r_i| / sum_j |M_ij d_j|``.

    Raises
    ------
    ValueError
        For even or too short ``L``, ``p`` outside ``[1, L-1]``, non-positive
        ``T`` or a singular system.
    """
    if not T > 0:
        raise ValueError(f"sampling interval must be positive, got T={T}")
    M, rhs = moment_system(L, p)
    scale = np.abs(M).max(axis=1)
    Ms = M / scale[:, None]
    try:
        lu = scipy.linalg.lu_factor(Ms, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"singular moment system for (L={L}, p={p})") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14):
        raise ValueError(f"singular moment system for (L={L}, p={p})")
    with np.errstate(all="raise"):
        d = scipy.linalg.lu_solve(lu, rhs / scale)
    resid = _row_residual(M, d, rhs)
    if not resid <= 1e-10:
        raise ValueError(f"moment system for (L={L}, p={p}) is numerically singular "
                         f"(row residual {resid:.3g})")
    return KernelSpec(int(L), int(p), suppression_order(L, p), float(T), d, resid)


def _row_residual(M, d, rhs):
    r = M @ d - rhs
    mag = np.abs(M) @ np.abs(d)
    mag = np.maximum(mag, np.abs(rhs))
    return float(np.max(np.abs(r) / mag))


def frequency_response(k: KernelSpec, omega):
    """Imaginary part of the kernel's transfer function.

    ``H(omega) = (2 / T) * sum_l d_l * sin(l * T * omega)``.  The ideal
    differentiator has ``H(omega) = omega``.
    """
    w = np.asarray(omega, dtype=float)
    ell = np.arange(1, k.half_length + 1)
    H = (2.0 / k.T) * (np.sin(np.multiply.outer(w, ell) * k.T) @ k.d)
    return float(H) if H.ndim == 0 else H


def assemble_full_kernel(k: KernelSpec) -> np.ndarray:
    """Length-``L`` convolution kernel ``[d_A..d_1, 0, -d_1..-d_A] / T``.

    Index ``i`` of the result is the tap for offset ``i - A``, so
    ``np.convolve(f, kernel, 'valid')`` yields the interior derivative.
    """
    d = np.asarray(k.d, dtype=float)
    return np.concatenate([d[::-1], [0.0], -d]) / k.T
