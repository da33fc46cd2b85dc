"""Measurement, sub-sampling and per-frame wavelet operators.

All three act frame by frame through ``(m x m)`` and ``(n x n)`` factors,
i.e. ``I_N (x) A_n (x) A_m`` in mode-1 vectorization, and are applied as
``A_m @ F[:, :, t] @ A_n.T``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .tvtensor import mode_product, unvec, vec

__all__ = [
    "MeasurementKind",
    "MeasurementOperator",
    "make_measurement",
    "measure",
    "measure_adjoint",
    "SamplingPlan",
    "make_sampling_plan",
    "select",
    "select_adjoint",
    "WaveletOperator",
    "make_wavelet",
    "wavelet_analysis",
    "wavelet_synthesis",
    "feasible_levels",
    "spawn_seeds",
]

log = logging.getLogger(__name__)


def spawn_seeds(seed: int, k: int) -> list[np.random.SeedSequence]:
    """Independent child seed sequences derived from one user seed."""
    return np.random.SeedSequence(int(seed)).spawn(k)


def _frame_apply(F, Am, An):
    F = np.asarray(F, dtype=float)
    if F.ndim != 3 or F.shape[0] != Am.shape[1] or F.shape[1] != An.shape[1]:
        raise ValueError(f"volume shape {F.shape} does not match operator "
                         f"({Am.shape[1]}, {An.shape[1]}, N)")
    return mode_product(mode_product(F, Am, 0), An, 1)


# --------------------------------------------------------------------------
# measurement operator


class MeasurementKind(str, enum.Enum):
    GAUSSIAN = "gauss"
    HADAMARD = "hadamard"


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    kind: MeasurementKind
    phi_m: np.ndarray
    phi_n: np.ndarray
    seed: int | None = None

    @property
    def frame_shape(self):
        return self.phi_m.shape[0], self.phi_n.shape[0]

    def forward(self, F):
        return _frame_apply(F, self.phi_m, self.phi_n)

    def adjoint(self, B):
        return _frame_apply(B, self.phi_m.T, self.phi_n.T)


def _is_pow2(k: int) -> bool:
    return k > 0 and k & (k - 1) == 0


def _gaussian_orthonormal(dim: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((dim, dim))
    # Orthonormalize the rows; fixing the sign of diag(R) makes this the
    # same basis Gram-Schmidt would produce.
    Q, R = np.linalg.qr(G.T)
    Q *= np.sign(np.diag(R))
    return np.ascontiguousarray(Q.T)


def make_measurement(kind, m: int, n: int, seed: int | None = 0) -> MeasurementOperator:
    """Build the per-frame orthonormal sensing factors ``Phi_m`` and ``Phi_n``.

    ``gauss`` fills each factor with i.i.d. standard normals (PCG64 seeded from
    ``seed``) and orthonormalizes its rows.  ``hadamard`` uses the Sylvester
    construction scaled by ``1/sqrt(dim)`` and needs power-of-two sizes.
    """
    kind = MeasurementKind(kind)
    if m < 1 or n < 1:
        raise ValueError(f"frame dimensions must be positive, got ({m}, {n})")
    if kind is MeasurementKind.HADAMARD:
        for dim in (m, n):
            if not _is_pow2(dim):
                raise ValueError(f"Walsh-Hadamard sampling needs power-of-two sizes, got {dim}")
        phi_m = scipy.linalg.hadamard(m).astype(float) / np.sqrt(m)
        phi_n = scipy.linalg.hadamard(n).astype(float) / np.sqrt(n)
        return MeasurementOperator(kind, phi_m, phi_n, None)
    if seed is None:
        raise ValueError("Gaussian sampling needs a seed")
    rng = np.random.default_rng(int(seed))
    phi_m = _gaussian_orthonormal(m, rng)
    phi_n = _gaussian_orthonormal(n, rng)
    return MeasurementOperator(kind, phi_m, phi_n, int(seed))


def measure(op: MeasurementOperator, F) -> np.ndarray:
    """Full (un-subsampled) measurement vector ``(I (x) Phi_n (x) Phi_m) vec(F)``."""
    return vec(op.forward(F))


def measure_adjoint(op: MeasurementOperator, b, shape) -> np.ndarray:
    return op.adjoint(unvec(b, shape))


# --------------------------------------------------------------------------
# selection


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Index set ``Omega`` into the ``m*n*N`` measurement vector."""

    indices: np.ndarray
    shape: tuple
    rate: float
    seed: int
    per_frame: bool = False

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def __len__(self):
        return len(self.indices)

    def mask(self) -> np.ndarray:
        """0/1 mask of ``Omega`` as a volume (the diagonal of ``P^T P``)."""
        flat = np.zeros(self.size)
        flat[self.indices] = 1.0
        return unvec(flat, self.shape)


def make_sampling_plan(m: int, n: int, N: int, rate: float, seed: int,
                       per_frame: bool = False) -> SamplingPlan:
    """Draw ``round(rate*m*n*N)`` indices uniformly without replacement.

    With ``per_frame`` each frame block ``[t*m*n, (t+1)*m*n)`` independently
    receives ``round(rate*m*n)`` indices.
    """
    if not 0 < rate <= 1:
        raise ValueError(f"sampling rate must be in (0, 1], got {rate}")
    rng = np.random.default_rng(int(seed))
    total = m * n * N
    if per_frame:
        k = int(round(rate * m * n))
        blocks = [np.sort(rng.choice(m * n, size=k, replace=False)) + t * m * n
                  for t in range(N)]
        idx = np.concatenate(blocks)
    else:
        k = int(round(rate * total))
        idx = np.sort(rng.choice(total, size=k, replace=False))
    return SamplingPlan(idx.astype(np.int64), (m, n, N), float(rate), int(seed), bool(per_frame))


def select(plan: SamplingPlan, y) -> np.ndarray:
    """``P y``: entries of the full measurement vector at ``Omega``."""
    y = np.asarray(y, dtype=float).ravel(order="F")
    if y.size != plan.size:
        raise ValueError(f"expected {plan.size} measurements, got {y.size}")
    return y[plan.indices]


def select_adjoint(plan: SamplingPlan, b) -> np.ndarray:
    """``P^T b``: scatter into a zero vector of length ``m*n*N``."""
    b = np.asarray(b, dtype=float)
    if b.shape != (len(plan),):
        raise ValueError(f"plan has {len(plan)} samples but got {b.size} measurements")
    out = np.zeros(plan.size)
    out[plan.indices] = b
    return out


# --------------------------------------------------------------------------
# wavelets

_SYM10 = np.array([
    0.0007701598091144901, 9.563267072289475e-05, -0.008641299277022422,
    -0.0014653825813050513, 0.0459272392310922, 0.011609893903711381,
    -0.15949427888491757, -0.07088053578324385, 0.47169066693843925,
    0.7695100370211071, 0.38382676106708546, -0.03553674047381755,
    -0.0319900568824278, 0.04999497207737669, 0.005764912033581909,
    -0.02035493981231129, -0.0008043589320165449, 0.004593173585311828,
    5.7036083618494284e-05, -0.0004593294210046588,
])

_FILTERS = {
    "symmlet10": _SYM10,
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
}


def _analysis_level(n: int, lo: np.ndarray) -> np.ndarray:
    """One periodized analysis stage as an ``n x n`` matrix (approx rows first)."""
    K = len(lo)
    hi = np.array([(-1) ** (j + 1) * lo[K - 1 - j] for j in range(K)])
    W = np.zeros((n, n))
    half = n // 2
    for k in range(half):
        for j in range(K):
            col = (2 * k + K // 2 - j) % n
            W[k, col] += lo[j]
            W[half + k, col] += hi[j]
    return W


def _analysis_matrix(n: int, lo: np.ndarray, levels: int) -> np.ndarray:
    W = np.eye(n)
    size = n
    for _ in range(levels):
        stage = np.eye(n)
        stage[:size, :size] = _analysis_level(size, lo)
        W = stage @ W
        size //= 2
    return W


def feasible_levels(m: int, n: int, levels: int) -> int:
    """Largest level count ``<= levels`` with ``2**levels`` dividing m and n."""
    lv = int(levels)
    while lv > 0 and (m % 2 ** lv or n % 2 ** lv):
        lv -= 1
    return lv


@dataclass(frozen=True, eq=False)
class WaveletOperator:
    """Separable orthonormal DWT applied to every frame.

    Each axis uses the multilevel 1D transform with coefficients ordered
    ``[a_J, d_J, ..., d_1]``; the frame transform is their Kronecker product.
    """

    family: str
    levels: int
    frame_shape: tuple
    psi_m: np.ndarray = field(repr=False)
    psi_n: np.ndarray = field(repr=False)

    def forward(self, F):
        return _frame_apply(F, self.psi_m, self.psi_n)

    def adjoint(self, C):
        return _frame_apply(C, self.psi_m.T, self.psi_n.T)


def make_wavelet(family: str, levels: int, m: int, n: int) -> WaveletOperator:
    family = family.lower()
    if family not in _FILTERS:
        raise ValueError(f"unknown wavelet family {family!r}; use one of {sorted(_FILTERS)}")
    if levels < 1:
        raise ValueError("at least one decomposition level is required")
    if m % 2 ** levels or n % 2 ** levels:
        raise ValueError(f"frame {m}x{n} is not divisible by 2**{levels}")
    lo = _FILTERS[family]
    return WaveletOperator(family, int(levels), (m, n),
                           _analysis_matrix(m, lo, levels), _analysis_matrix(n, lo, levels))


def wavelet_analysis(W: WaveletOperator, F) -> np.ndarray:
    return W.forward(F)


def wavelet_synthesis(W: WaveletOperator, C) -> np.ndarray:
    return W.adjoint(C)
