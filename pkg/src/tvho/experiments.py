"""Synthetic test signals, the translating-boxes phantom, quality metrics and
the Monte-Carlo sweep harness.
"""

from __future__ import annotations

import csv
import io as _io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .bcdiff import build_derivative_matrix
from .diffkernel import design_nr_kernel
from .solver import NumericalError, SolverConfig, build_operators, solve
from .transforms import make_measurement, make_sampling_plan, select, spawn_seeds

__all__ = [
    "SyntheticSignalSpec",
    "synth_signal",
    "sample_signal",
    "tv_ground_truth",
    "tv_estimate",
    "noise_sensitivity",
    "translating_boxes",
    "psnr",
    "nmse",
    "ExperimentSpec",
    "SweepResult",
    "run_sweep",
    "worker_count",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("rate", "seed", "frame_index", "psnr_db", "nmse", "iterations", "wall_time_s")


# --------------------------------------------------------------------------
# 1D test signal


@dataclass(frozen=True)
class SyntheticSignalSpec:
    """Piecewise constant / linear / quadratic test signal.

    Breakpoints ``a < b < ... < g``; ``alpha_s`` is the base level,
    ``beta_s`` the plateau level and ``mu_s`` the vertex of the parabola on
    ``[c, d)``.
    """

    a: float = 1.0
    b: float = 2.5
    c: float = 3.6
    d: float = 8.0
    e: float = 9.0
    f: float = 11.0
    g: float = 12.0
    alpha_s: float = 0.05
    beta_s: float = 0.5
    mu_s: float = 0.09

    def __post_init__(self):
        pts = [self.a, self.b, self.c, self.d, self.e, self.f, self.g]
        if any(p >= q for p, q in zip(pts, pts[1:])):
            raise ValueError(f"breakpoints must be strictly increasing, got {pts}")

    def scaled(self, k: float) -> "SyntheticSignalSpec":
        return replace(self, alpha_s=k * self.alpha_s, beta_s=k * self.beta_s, mu_s=k * self.mu_s)


def _quad(s: SyntheticSignalSpec, x):
    return (s.beta_s - s.mu_s) / (s.c - s.d) ** 2 * (2 * x - s.c - s.d) ** 2 + s.mu_s


def _ramp(s: SyntheticSignalSpec, x):
    return (s.beta_s - s.alpha_s) / (s.f - s.e) * (x - s.e) + s.alpha_s


def synth_signal(spec: SyntheticSignalSpec, x):
    """Evaluate the test signal; accepts scalars or arrays.

    Points at or beyond ``g`` take the base level, like the last branch.
    """
    s = spec
    xa = np.asarray(x, dtype=float)
    out = np.full(xa.shape, s.alpha_s)
    out = np.where((xa >= s.a) & (xa < s.b), s.beta_s, out)
    out = np.where((xa >= s.c) & (xa < s.d), _quad(s, xa), out)
    out = np.where((xa >= s.e) & (xa < s.f), _ramp(s, xa), out)
    return float(out) if out.ndim == 0 else out


def sample_signal(spec: SyntheticSignalSpec, Npts: int, domain=(0.0, 12.0)):
    """``Npts`` samples at ``x_j = x0 + j*T`` with ``T = (x1 - x0) / Npts``.

    Returns
    -------
    x, u : ndarray
    T : float
    """
    Npts = int(Npts)
    if Npts < 1:
        raise ValueError("need at least one sample")
    x0, x1 = map(float, domain)
    if not x1 > x0:
        raise ValueError(f"empty domain {domain}")
    T = (x1 - x0) / Npts
    x = x0 + T * np.arange(Npts)
    return x, synth_signal(spec, x), T


def tv_ground_truth(spec: SyntheticSignalSpec) -> float:
    """Total variation of the continuous signal: smooth parts plus jumps."""
    s = spec
    dq = lambda x: abs((s.beta_s - s.mu_s) / (s.c - s.d) ** 2 * 4 * (2 * x - s.c - s.d))
    mid = 0.5 * (s.c + s.d)
    smooth = integrate.quad(dq, s.c, mid)[0] + integrate.quad(dq, mid, s.d)[0]
    smooth += abs(s.beta_s - s.alpha_s)  # the ramp on [e, f)
    # one-sided limits at every breakpoint; g itself is not a jump
    jumps = 0.0
    for p in (s.a, s.b, s.c, s.d, s.e, s.f):
        jumps += abs(synth_signal(s, p) - _left_limit(s, p))
    return float(smooth + jumps)


def _left_limit(s: SyntheticSignalSpec, p: float) -> float:
    if p == s.d:
        return float(_quad(s, s.d))
    if p == s.f:
        return float(_ramp(s, s.f))
    return synth_signal(s, np.nextafter(p, -np.inf))


def tv_estimate(u, T: float, L: int = 27, p: int = 25, bc="antireflective") -> float:
    """Discrete TV ``T * sum |D u|`` of a sampled 1D signal."""
    u = np.asarray(u, dtype=float)
    op = build_derivative_matrix(u.size, design_nr_kernel(L, p, T), bc)
    return float(T * np.abs(op.D @ u).sum())


def add_white_noise(u, snr_db: float, rng: np.random.Generator):
    """Add white Gaussian noise with power ``mean(u**2) / 10**(snr_db/10)``."""
    u = np.asarray(u, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return u.copy()
    sigma = math.sqrt(np.mean(u * u) / 10 ** (snr_db / 10))
    return u + sigma * rng.standard_normal(u.shape)


def noise_sensitivity(spec: SyntheticSignalSpec, snr_list, kernels=((27, 25), (3, 2)),
                      Npts: int = 200, seeds=range(10), domain=(0.0, 12.0),
                      bc="antireflective"):
    """TV estimates of noisy samples for each SNR and kernel.

    Returns a list of dicts with keys ``snr_db, L, p, estimate, truth,
    abs_error``; estimates are averaged over ``seeds``.
    """
    _, u, T = sample_signal(spec, Npts, domain)
    truth = tv_ground_truth(spec)
    seeds = list(seeds)
    rows = []
    for snr in snr_list:
        noisy = [add_white_noise(u, float(snr), np.random.default_rng(sd)) for sd in seeds]
        for L, p in kernels:
            est = float(np.mean([tv_estimate(v, T, L, p, bc) for v in noisy]))
            rows.append(dict(snr_db=float(snr), L=int(L), p=int(p), estimate=est,
                             truth=truth, abs_error=abs(est - truth)))
    return rows


# --------------------------------------------------------------------------
# phantom and metrics


def translating_boxes(m: int = 16, n: int = 16, N: int = 16, outer: float = 100.0,
                      inner: float = 200.0, box: int = 8, core: int = 4, start: int | None = None):
    """Two nested boxes sliding one column per frame.

    The ``box x box`` outer square (value ``outer``) holds a centred
    ``core x core`` square (value ``inner``) on a zero background.  Its left
    edge sits at column ``start + t`` in frame ``t`` and is clipped at the
    frame border (no wrap-around).  ``start`` defaults to ``-box // 2`` so the
    box enters in the first frame and reaches the right edge in the last.
    """
    if box > m or core > box:
        raise ValueError("box sizes must satisfy core <= box <= m")
    start = -box // 2 if start is None else int(start)
    F = np.zeros((m, n, N))
    r0 = (m - box) // 2
    off = (box - core) // 2
    for t in range(N):
        c0 = start + t
        cols = np.arange(c0, c0 + box)
        cols = cols[(cols >= 0) & (cols < n)]
        F[r0:r0 + box, cols, t] = outer
        icols = np.arange(c0 + off, c0 + off + core)
        icols = icols[(icols >= 0) & (icols < n)]
        F[r0 + off:r0 + off + core, icols, t] = inner
    return F


def _peak(ref, peak):
    if peak is not None:
        return float(peak)
    if np.asarray(ref).dtype == np.uint8:
        return 255.0
    return float(np.max(np.abs(ref)))


def psnr(ref, est, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs.

    ``peak`` defaults to 255 for ``uint8`` references and ``max|ref|``
    otherwise.
    """
    ref_a = np.asarray(ref)
    est = np.asarray(est, dtype=float)
    if ref_a.shape != est.shape:
        raise ValueError(f"shape mismatch {ref_a.shape} vs {est.shape}")
    pk = _peak(ref_a, peak)
    mse = float(np.mean((ref_a.astype(float) - est) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(pk * pk / mse)


def nmse(ref, est) -> float:
    ref = np.asarray(ref, dtype=float)
    est = np.asarray(est, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    den = float(np.sum(ref * ref))
    if den == 0:
        raise ValueError("nmse needs a nonzero reference")
    return float(np.sum((ref - est) ** 2)) / den


# --------------------------------------------------------------------------
# sweeps


@dataclass
class ExperimentSpec:
    """One Monte-Carlo sweep.

    ``source`` is ``"phantom"`` (see :func:`translating_boxes`), a volume file
    or a directory of PGM frames.  ``peak`` overrides the PSNR peak.
    """

    rates: list
    seeds: list
    source: str = "phantom"
    shape: tuple = (16, 16, 16)
    transform: str = "gauss"
    config: SolverConfig = field(default_factory=SolverConfig)
    per_frame: bool = False
    peak: float | None = None
    record_timing: bool = False

    def __post_init__(self):
        self.rates = [float(r) for r in self.rates]
        self.seeds = [int(s) for s in self.seeds]
        if not self.rates or not self.seeds:
            raise ValueError("a sweep needs at least one rate and one seed")
        for r in self.rates:
            if not 0 < r <= 1:
                raise ValueError(f"sampling rate must be in (0, 1], got {r}")

    def load(self) -> np.ndarray:
        if self.source == "phantom":
            return translating_boxes(*self.shape)
        from .io import import_frames, read_volume
        if os.path.isdir(self.source):
            return import_frames(self.source)
        return read_volume(self.source)


@dataclass
class SweepResult:
    rows: list
    spec: ExperimentSpec
    failures: list

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def rate_curve(self):
        """Seed-averaged mean PSNR/NMSE per rate (per frame first, then over frames)."""
        out = []
        for rate in sorted(set(r["rate"] for r in self.rows)):
            per_frame = self.frame_curve(rate)
            ps = [r["psnr_db"] for r in per_frame]
            ns = [r["nmse"] for r in per_frame]
            out.append(dict(rate=rate, psnr_db=float(np.mean(ps)), nmse=float(np.mean(ns))))
        return out

    def frame_curve(self, rate):
        rows = [r for r in self.rows if r["rate"] == rate and r["frame_index"] > 0]
        out = []
        for t in sorted(set(r["frame_index"] for r in rows)):
            sel = [r for r in rows if r["frame_index"] == t]
            out.append(dict(rate=rate, frame_index=t,
                            psnr_db=float(np.mean([r["psnr_db"] for r in sel])),
                            nmse=float(np.mean([r["nmse"] for r in sel]))))
        return out


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def rows_to_csv(rows, header=CSV_HEADER) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in header])
    return buf.getvalue()


def worker_count() -> int:
    """Workers requested through ``TVHO_THREADS`` (0 means sequential)."""
    raw = os.environ.get("TVHO_THREADS", "").strip()
    if not raw:
        return 0
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"TVHO_THREADS must be an integer, got {raw!r}") from None
    return max(k, 0)


def cell_seeds(seed: int) -> tuple[int, int]:
    """Sensing and sampling seeds derived from one trial seed."""
    ss = spawn_seeds(seed, 2)
    return tuple(int(s.generate_state(1, np.uint32)[0]) for s in ss)


def run_cell(F, rate, seed, spec: ExperimentSpec, base_ops=None):
    """Reconstruct ``F`` from one random measurement draw and score each frame."""
    m, n, N = F.shape
    s_seed, p_seed = cell_seeds(seed)
    sensing = make_measurement(spec.transform, m, n, s_seed)
    plan = make_sampling_plan(m, n, N, rate, p_seed, spec.per_frame)
    if base_ops is None:
        ops = build_operators(F.shape, spec.config, sensing, plan)
    else:
        ops = replace(base_ops, sensing=sensing, plan=plan)
    b = select(plan, sensing.forward(F))
    peak = _peak(F, spec.peak)
    try:
        est, rep = solve(b, ops, spec.config)
    except NumericalError as exc:
        log.warning("rate=%g seed=%d diverged: %s", rate, seed, exc)
        row = dict(rate=rate, seed=seed, frame_index=-1, psnr_db=math.nan, nmse=math.nan,
                   iterations=-1, wall_time_s=math.nan)
        return [row], str(exc)
    wall = rep.wall_time_s if spec.record_timing else math.nan
    rows = []
    for t in range(N):
        rows.append(dict(rate=rate, seed=seed, frame_index=t + 1,
                         psnr_db=psnr(F[:, :, t], est[:, :, t], peak),
                         nmse=_safe_nmse(F[:, :, t], est[:, :, t]),
                         iterations=rep.iterations, wall_time_s=wall))
    rows.append(dict(rate=rate, seed=seed, frame_index=-1, psnr_db=psnr(F, est, peak),
                     nmse=nmse(F, est), iterations=rep.iterations, wall_time_s=wall))
    return rows, None


def _safe_nmse(ref, est):
    return nmse(ref, est) if np.any(ref) else math.nan


def run_sweep(spec: ExperimentSpec, workers: int | None = None) -> SweepResult:
    """Run every ``(rate, seed)`` cell and collect the per-frame metrics.

    Rows are ``frame_index = 1..N`` for single frames plus ``-1`` for the
    whole-volume row of each cell.  A diverging cell yields one flagged row
    with ``nan`` metrics and ``iterations = -1``.
    """
    F = spec.load()
    workers = worker_count() if workers is None else workers
    m, n, N = F.shape
    # the derivative and spectral parts do not depend on the random draw
    probe = make_measurement("hadamard" if spec.transform == "hadamard" else "gauss", m, n, 0)
    base = build_operators(F.shape, spec.config, probe,
                           make_sampling_plan(m, n, N, 1.0, 0))
    cells = [(r, s) for r in spec.rates for s in spec.seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run_cell(F, c[0], c[1], spec, base), cells))
    else:
        results = [run_cell(F, r, s, spec, base) for r, s in cells]
    rows, failures = [], []
    for (r, s), (cell_rows, err) in zip(cells, results):
        rows.extend(cell_rows)
        if err is not None:
            failures.append(dict(rate=r, seed=s, error=err))
    rows.sort(key=lambda d: (d["rate"], d["seed"], d["frame_index"] < 0, d["frame_index"]))
    return SweepResult(rows, spec, failures)
