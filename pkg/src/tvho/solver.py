"""BC-ADMM for the TV-l1 / l1 basis pursuit de-noising problem.

Solves

    argmin_F  c1 * TV(F) + c2 * ||Psi vec F||_1 + c3 * ||P Phi vec F - b||^2

by splitting ``y1 = grad f``, ``y2 = Psi f`` and ``y3 = Phi f`` with scaled
duals ``u_j`` and a dual step ``rho``.  The f-update is the exact solve
provided by :mod:`tvho.spectral`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bcdiff import BoundaryCondition, build_derivative_matrix
from .diffkernel import design_nr_kernel
from .spectral import SpectralFactorization, factorize, solve_f
from .transforms import (MeasurementOperator, SamplingPlan, WaveletOperator,
                         feasible_levels, make_wavelet)
from .tvtensor import (TensorGradient, soft_threshold, tv_norm, unvec,
                       vector_soft_threshold)

__all__ = [
    "NumericalError",
    "SolverConfig",
    "SolverState",
    "Operators",
    "ConvergenceReport",
    "build_operators",
    "initial_state",
    "step",
    "solve",
    "objective",
]

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) + 1.0) / 2.0


class NumericalError(FloatingPointError):
    """Raised when an iterate stops being finite."""


@dataclass
class SolverConfig:
    """Weights, penalties and operator choices for one BC-ADMM run.

    Defaults are tuned for 8-bit intensities at CIF resolution.
    """

    c1: float = 80.0
    c2: float = 10.0
    c3: float = 1000.0
    mu1: float = 4.0
    mu2: float = 4.0
    mu3: float = 40.0
    rho: float = GOLDEN
    eps: float = 1e-4
    max_iter: int = 500
    tv: str = "aniso"
    bc_x: str = "antireflective"
    bc_y: str = "antireflective"
    bc_t: str = "antireflective"
    kernel_length: int = 27
    kernel_accuracy: int = 25
    dt_x: float = 1.0
    dt_y: float = 1.0
    dt_t: float = 1.0
    wavelet: str = "symmlet10"
    wavelet_levels: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("c1", "c2", "c3", "mu1", "mu2", "mu3", "dt_x", "dt_y", "dt_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        # the closed upper endpoint is allowed; it is the default step
        if not 0 < self.rho <= GOLDEN + 1e-12:
            raise ValueError(f"rho must lie in (0, (sqrt(5)+1)/2], got {self.rho}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tv not in ("aniso", "iso"):
            raise ValueError(f"tv must be 'aniso' or 'iso', got {self.tv!r}")
        for name in ("bc_x", "bc_y", "bc_t"):
            BoundaryCondition.parse(getattr(self, name))

    def scaled(self, factor: float) -> "SolverConfig":
        """Copy with every weight and penalty multiplied by ``factor``."""
        kw = asdict(self)
        for name in ("c1", "c2", "c3", "mu1", "mu2", "mu3"):
            kw[name] *= factor
        return SolverConfig(**kw)

    def replace(self, **changes) -> "SolverConfig":
        kw = asdict(self)
        kw.update(changes)
        return SolverConfig(**kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(eq=False)
class Operators:
    """Everything a run needs besides the measurements themselves."""

    grad: TensorGradient
    wavelet: WaveletOperator
    sensing: MeasurementOperator
    plan: SamplingPlan
    factorization: SpectralFactorization

    @property
    def shape(self):
        return self.grad.shape


def build_operators(shape, cfg: SolverConfig, sensing: MeasurementOperator,
                    plan: SamplingPlan) -> Operators:
    m, n, N = shape
    if tuple(plan.shape) != (m, n, N):
        raise ValueError(f"sampling plan is for {plan.shape}, volume is {(m, n, N)}")
    if sensing.frame_shape != (m, n):
        raise ValueError(f"sensing operator is for {sensing.frame_shape} frames, "
                         f"volume frames are {(m, n)}")
    base = design_nr_kernel(cfg.kernel_length, cfg.kernel_accuracy)
    ops = [build_derivative_matrix(size, base.with_spacing(dt), bc)
           for size, dt, bc in ((m, cfg.dt_x, cfg.bc_x), (n, cfg.dt_y, cfg.bc_y),
                                (N, cfg.dt_t, cfg.bc_t))]
    grad = TensorGradient(*ops)
    levels = feasible_levels(m, n, cfg.wavelet_levels)
    if levels != cfg.wavelet_levels:
        log.warning("%dx%d frames do not allow %d wavelet levels; using %d",
                    m, n, cfg.wavelet_levels, levels)
    if levels < 1:
        raise ValueError(f"{m}x{n} frames admit no dyadic wavelet level")
    wavelet = make_wavelet(cfg.wavelet, levels, m, n)
    sf = factorize(*ops, cfg.mu1, cfg.mu2, cfg.mu3)
    return Operators(grad, wavelet, sensing, plan, sf)


@dataclass
class SolverState:
    f: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    k: int = 0
    rel_change: list = field(default_factory=list)
    warm: bool = False


@dataclass
class ConvergenceReport:
    iterations: int
    converged: bool
    rel_change: list
    wall_time_s: float
    objective: float


def initial_state(ops: Operators, f0=None) -> SolverState:
    """All-zero auxiliaries and duals; a warm start seeds ``y_j = H_j f0``."""
    shape = ops.shape
    z = np.zeros(shape)
    if f0 is None:
        return SolverState(z.copy(), np.zeros((3,) + shape), z.copy(), z.copy(),
                           np.zeros((3,) + shape), z.copy(), z.copy())
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != shape:
        raise ValueError(f"initial volume shape {f0.shape} does not match {shape}")
    return SolverState(f0.copy(), ops.grad.forward(f0), ops.wavelet.forward(f0),
                       ops.sensing.forward(f0), np.zeros((3,) + shape), z.copy(), z.copy(),
                       warm=True)


def _rel_change(new, old, first):
    if first:
        return math.inf
    den = np.linalg.norm(old)
    num = np.linalg.norm(new - old)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return float(num / den)


def _check_finite(state: SolverState):
    for name in ("f", "y1", "y2", "y3", "u1", "u2", "u3"):
        arr = getattr(state, name)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite values in {name} at iteration {state.k}; "
                                 "the weights/penalties are probably mis-scaled")


def y3_update(Phi_f, u3, Ptb, mask, c3, mu3):
    """Closed-form minimizer of ``c3 ||P y - b||^2 + mu3/2 ||Phi f - y + u3||^2``."""
    return (mu3 * Phi_f + mu3 * u3 + 2.0 * c3 * Ptb) / (2.0 * c3 * mask + mu3)


def step(state: SolverState, cfg: SolverConfig, ops: Operators, b_full, mask) -> SolverState:
    """One BC-ADMM iteration, updating ``state`` in place and returning it.

    ``b_full`` is ``P^T b`` as a volume and ``mask`` the diagonal of ``P^T P``.
    """
    mu1, mu2, mu3 = cfg.mu1, cfg.mu2, cfg.mu3
    rhs = mu1 * ops.grad.adjoint(state.y1 - state.u1)
    rhs += mu2 * ops.wavelet.adjoint(state.y2 - state.u2)
    rhs += mu3 * ops.sensing.adjoint(state.y3 - state.u3)
    f_new = solve_f(ops.factorization, rhs)

    Gf = ops.grad.forward(f_new)
    Wf = ops.wavelet.forward(f_new)
    Sf = ops.sensing.forward(f_new)
    if cfg.tv == "aniso":
        state.y1 = soft_threshold(Gf + state.u1, cfg.c1 / mu1)
    else:
        state.y1 = vector_soft_threshold(Gf + state.u1, cfg.c1 / mu1)
    state.y2 = soft_threshold(Wf + state.u2, cfg.c2 / mu2)
    state.y3 = y3_update(Sf, state.u3, b_full, mask, cfg.c3, mu3)

    state.u1 = state.u1 + cfg.rho * (Gf - state.y1)
    state.u2 = state.u2 + cfg.rho * (Wf - state.y2)
    state.u3 = state.u3 + cfg.rho * (Sf - state.y3)

    first = state.k == 0 and not state.warm
    state.rel_change.append(_rel_change(f_new, state.f, first))
    state.f = f_new
    state.k += 1
    _check_finite(state)
    return state


def _scatter(ops: Operators, b):
    b = np.asarray(b, dtype=float)
    if b.shape != (len(ops.plan),):
        raise ValueError(f"plan selects {len(ops.plan)} samples but {b.size} "
                         "measurements were given")
    flat = np.zeros(ops.plan.size)
    flat[ops.plan.indices] = b
    return unvec(flat, ops.shape), ops.plan.mask()


def solve(b, ops: Operators, cfg: SolverConfig, f0=None, callback=None):
    """Iterate until the relative change of ``f`` drops to ``eps`` or ``max_iter``.

    Parameters
    ----------
    b : ndarray
        Sub-sampled measurements ``b_Omega`` (one value per plan index).
    ops : Operators
    cfg : SolverConfig
    f0 : ndarray, optional
        Warm start.
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.

    Returns
    -------
    F : ndarray
        Reconstructed ``(m, n, N)`` volume.
    report : ConvergenceReport
    """
    t0 = time.perf_counter()
    b_full, mask = _scatter(ops, b)
    state = initial_state(ops, f0)
    converged = False
    while state.k < cfg.max_iter:
        step(state, cfg, ops, b_full, mask)
        if callback is not None:
            callback(state)
        if state.rel_change[-1] <= cfg.eps:
            converged = True
            break
    if not converged:
        log.info("max_iter=%d reached, last relative change %.3g",
                 cfg.max_iter, state.rel_change[-1])
    wall = time.perf_counter() - t0
    obj = objective(state.f, b, ops, cfg)
    return state.f, ConvergenceReport(state.k, converged, list(state.rel_change), wall, obj)


def objective(F, b, ops: Operators, cfg: SolverConfig) -> float:
    """``c1 TV(F) + c2 ||Psi F||_1 + c3 ||P Phi F - b||^2``."""
    F = np.asarray(F, dtype=float)
    tv = tv_norm(ops.grad.forward(F), cfg.tv)
    l1 = float(np.abs(ops.wavelet.forward(F)).sum())
    meas = ops.sensing.forward(F).ravel(order="F")[ops.plan.indices]
    resid = meas - np.asarray(b, dtype=float)
    return cfg.c1 * tv + cfg.c2 * l1 + cfg.c3 * float(resid @ resid)
