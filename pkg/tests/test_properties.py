import math

import numpy as np
import pytest

from miscat.calibration import CalibrationParams
from miscat.gauss import quantile_table
from miscat.kernels import ConvolutionKernelSpec
from miscat.noise import Gaussian
from miscat.probes import ProbeSpec, Scale, build_phi_h, build_phi_h_lattice, indicator_element
from miscat.properties import (PropertyReport, ahc_ratios, check_ahc, check_bias, check_fwer,
                               check_scaling_identity, read_reports_csv, write_reports_csv)
from miscat.scan import ScanConfig, Scanner, rectangle_scales

PROBE = ProbeSpec((4, 4))


def test_indicator_holder_constant_is_two_sqrt_d():
    el = indicator_element(Scale((64, 64), 256))
    # axis shifts give 2, diagonal shifts approach 2 sqrt(2) as the shift shrinks
    axis = ahc_ratios(el, 0.5, 1.0, [(1, 0), (5, 0), (0, 20)])
    assert np.allclose(axis, 2.0)
    diag = ahc_ratios(el, 0.5, 1.0, [(s, s) for s in (1, 4, 16)])
    assert np.allclose(diag, [math.sqrt(2) * (2 - s / 64) for s in (1, 4, 16)])
    assert check_ahc(el, 0.5, 2 * math.sqrt(2)).passed
    assert not check_ahc(el, 0.5, 2.0).passed


def test_zero_shift_has_zero_difference():
    el = build_phi_h(PROBE, ConvolutionKernelSpec(2, 0.0243), Scale((12, 12), 256))
    assert ahc_ratios(el, 1.0, 1.0, [(0, 0)])[0] == 0.0


def test_smooth_element_has_finite_lipschitz_constant():
    el = build_phi_h(PROBE, ConvolutionKernelSpec(2, 0.0243), Scale((16, 16), 256))
    r = check_ahc(el, 1.0, 1.0, sample_pairs=100, seed=3)
    assert math.isfinite(r.value) and r.value > 0
    assert check_ahc(el, 1.0, 1.0, sample_pairs=100, seed=3) == r


def quadratic(x):
    return 1.0 + 0.5 * x[..., 0] - x[..., 1] ** 2 + 0.3 * x[..., 0] * x[..., 1]


@pytest.mark.parametrize("kernel", [None, ConvolutionKernelSpec(2, 0.0243)])
def test_bias_below_target_at_512(kernel):
    r = check_bias(quadratic, PROBE, kernel, Scale((64, 64), 512), (300, 200))
    assert r.passed, r


def test_bias_shrinks_when_n_doubles():
    k = ConvolutionKernelSpec(2, 0.0243)
    small = check_bias(quadratic, PROBE, k, Scale((32, 32), 256), (150, 100)).value
    large = check_bias(quadratic, PROBE, k, Scale((64, 64), 512), (301, 201)).value
    assert large < small


@pytest.mark.parametrize("a", [0, 1, 2])
def test_scaling_identity(a):
    r = check_scaling_identity(PROBE, ConvolutionKernelSpec(a, 1.0))
    assert r.passed, r
    if a == 0:
        assert r.value < 1e-12


def test_fwer_report_on_small_gaussian_scan():
    n = 64
    scales = rectangle_scales(n, 4, 12, 4)
    dic = [build_phi_h_lattice(PROBE, ConvolutionKernelSpec(2, 0.0243), s) for s in scales]
    cfg = ScanConfig(n, scales, CalibrationParams(1.0, 5.0), alpha=0.2)
    q = quantile_table(cfg, dic, reps=1000, levels=(0.8,), seed=0).quantile(0.8)
    r = check_fwer(Scanner(cfg, dic), q, Gaussian(0.3), reps=300, seed=9)
    assert r.passed, r
    assert r == check_fwer(Scanner(cfg, dic), q, Gaussian(0.3), reps=300, seed=9)


def test_reports_csv_round_trip(tmp_path):
    reports = [PropertyReport("ahc", "pass", 0.97, 1.001, 0), PropertyReport("bias", "fail", 1 / 3, 0.01)]
    write_reports_csv(tmp_path / "r.csv", reports)
    assert read_reports_csv(tmp_path / "r.csv") == reports
