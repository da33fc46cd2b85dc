import math

import numpy as np
import pytest

from tvho.bcdiff import build_derivative_matrix
from tvho.diffkernel import design_nr_kernel
from tvho.experiments import (ExperimentSpec, SyntheticSignalSpec, add_white_noise, nmse,
                              noise_sensitivity, psnr, run_sweep, sample_signal, synth_signal,
                              translating_boxes, tv_estimate, tv_ground_truth)
from tvho.solver import SolverConfig
from tvho.tvtensor import TensorGradient, tv_norm

FAST = SolverConfig(kernel_length=5, kernel_accuracy=4)


def test_signal_examples():
    s = SyntheticSignalSpec()
    assert synth_signal(s, 2.0) == 0.5
    assert synth_signal(s, 5.8) == pytest.approx(0.09, abs=1e-15)
    assert synth_signal(s, 10.0) == pytest.approx(0.275)
    assert synth_signal(s, -3.0) == 0.05 and synth_signal(s, 12.5) == 0.05
    with pytest.raises(ValueError):
        SyntheticSignalSpec(c=9.5)


def test_sampling_grid():
    x, u, T = sample_signal(SyntheticSignalSpec(), 32)
    assert T == 12 / 32 and x[0] == 0 and x.size == u.size == 32
    with pytest.raises(ValueError):
        sample_signal(SyntheticSignalSpec(), 0)


def test_ground_truth_against_riemann_sum():
    s = SyntheticSignalSpec()
    x = np.linspace(-1, 13, 10 ** 6 + 1)
    brute = np.abs(np.diff(synth_signal(s, x))).sum()
    assert tv_ground_truth(s) == pytest.approx(brute, rel=1e-4)
    assert tv_ground_truth(s) == pytest.approx(8 * 0.5 - 6 * 0.05 - 2 * 0.09, rel=1e-12)


def test_ground_truth_constant_and_homogeneous():
    assert tv_ground_truth(SyntheticSignalSpec(alpha_s=0.2, beta_s=0.2, mu_s=0.2)) == 0
    s = SyntheticSignalSpec()
    assert tv_ground_truth(s.scaled(2)) == pytest.approx(2 * tv_ground_truth(s), rel=1e-12)


def test_tv_estimate_conventional_kernel_on_steps():
    # a unit step costs exactly 1 with the 3-tap kernel away from the edges
    u = np.r_[np.zeros(10), np.ones(10)]
    assert tv_estimate(u, 1.0, 3, 2) == pytest.approx(1.0)


def test_white_noise_power():
    u = np.sin(np.linspace(0, 20, 20000))
    v = add_white_noise(u, 10.0, np.random.default_rng(0))
    ratio = np.mean(u ** 2) / np.mean((v - u) ** 2)
    assert 10 * math.log10(ratio) == pytest.approx(10.0, abs=0.1)
    np.testing.assert_array_equal(add_white_noise(u, math.inf, None), u)


def test_noise_sensitivity_reproducible():
    a = noise_sensitivity(SyntheticSignalSpec(), [20.0, math.inf], Npts=62, seeds=range(3))
    b = noise_sensitivity(SyntheticSignalSpec(), [20.0, math.inf], Npts=62, seeds=range(3))
    assert a == b and len(a) == 4
    assert {r["L"] for r in a} == {27, 3}


def test_metrics_examples():
    rng = np.random.default_rng(1)
    ref = rng.integers(0, 250, (5, 4, 3)).astype(np.uint8)
    assert psnr(ref, ref) == math.inf and nmse(ref, ref) == 0
    assert psnr(ref, ref.astype(float) + 1) == pytest.approx(20 * math.log10(255))
    F = rng.standard_normal((4, 4, 2))
    assert nmse(F, np.zeros_like(F)) == 1.0
    assert psnr(F, F + 0.1) == pytest.approx(10 * math.log10(np.abs(F).max() ** 2 / 0.01))
    perm = rng.permutation(F.size)
    G = F + rng.standard_normal(F.shape)
    assert psnr(F.ravel()[perm], G.ravel()[perm]) == pytest.approx(psnr(F, G))
    assert nmse(F.ravel()[perm], G.ravel()[perm]) == pytest.approx(nmse(F, G))
    with pytest.raises(ValueError):
        nmse(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        psnr(F, F[:2])


def test_phantom_layout():
    F = translating_boxes()
    assert F.shape == (16, 16, 16) and set(np.unique(F)) == {0, 100, 200}
    # the box enters half-visible, moves one column per frame, never wraps
    assert (F[:, :4, 0] > 0).any(axis=0).all() and not F[:, 4:, 0].any()
    np.testing.assert_array_equal(F[:, 5:13, 9], translating_boxes()[:, 4:12, 8])
    assert not F[:, :4, 15].any()


def test_phantom_tv_is_perimeter_count():
    F = translating_boxes()
    ops = [build_derivative_matrix(16, design_nr_kernel(3, 2), "zero") for _ in range(3)]
    tv = tv_norm(TensorGradient(*ops).forward(F))
    # the 3-tap kernel averages the two one-sided differences at each site
    P = np.pad(F, 1)
    direct = 0.0
    for ax in range(3):
        fwd = np.diff(P, axis=ax)
        direct += 0.5 * np.abs(np.take(fwd, range(1, 17), axis=ax)
                               + np.take(fwd, range(0, 16), axis=ax)).sum()
    assert tv == pytest.approx(direct, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(rates=[], seeds=[0])
    with pytest.raises(ValueError):
        ExperimentSpec(rates=[0.5], seeds=[])
    with pytest.raises(ValueError):
        ExperimentSpec(rates=[1.5], seeds=[0])


def test_full_sampling_sweep():
    res = run_sweep(ExperimentSpec(rates=[1.0], seeds=[0], config=FAST.replace(c3=1e5)))
    mean = [r for r in res.rows if r["frame_index"] == -1]
    assert len(mean) == 1 and mean[0]["nmse"] <= 1e-3
    assert len(res.rows) == 17


def test_sweep_monotone_in_rate():
    res = run_sweep(ExperimentSpec(rates=[0.1, 0.2, 0.4], seeds=[0, 1], config=FAST))
    curve = res.rate_curve()
    ps = [c["psnr_db"] for c in curve]
    assert ps == sorted(ps)


def test_sweep_rerun_identical_csv():
    spec = ExperimentSpec(rates=[0.3], seeds=[3, 4], config=FAST)
    a = run_sweep(spec, workers=0).to_csv()
    assert a == run_sweep(spec, workers=0).to_csv()
    assert a.splitlines()[0] == "rate,seed,frame_index,psnr_db,nmse,iterations,wall_time_s"


def test_divergent_cell_is_flagged(monkeypatch):
    from tvho import experiments

    def boom(*a, **k):
        raise experiments.NumericalError("non-finite values")

    monkeypatch.setattr(experiments, "solve", boom)
    res = run_sweep(ExperimentSpec(rates=[0.2], seeds=[0, 1], config=FAST))
    assert len(res.failures) == 2
    assert all(r["iterations"] == -1 and math.isnan(r["psnr_db"]) for r in res.rows)
