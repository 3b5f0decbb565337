import math

import pytest

from miscat.calibration import CalibrationParams
from miscat.kernels import ConvolutionKernelSpec
from miscat.noise import Gaussian, StudentT
from miscat.probes import ProbeSpec, Scale
from miscat.scan import ScanConfig, Scanner, square_scales
from miscat.studies import (auto_K, build_dictionary, level_study, power_study, reference_quantile,
                            scale_range, tile_box)

PROBE = ProbeSpec((4, 4))
KERNEL = ConvolutionKernelSpec(2, 0.0243)


def test_build_dictionary_variants():
    scales = [Scale((8, 8), 64)]
    lat = build_dictionary(PROBE, KERNEL, scales)[0]
    mid = build_dictionary(PROBE, KERNEL, scales, "midpoint")[0]
    assert lat.periodic and not mid.periodic
    assert not build_dictionary(PROBE, None, scales)[0].periodic
    with pytest.raises(ValueError):
        build_dictionary(PROBE, KERNEL, scales, "spline")


def test_scale_range_and_K():
    scales = square_scales(256, 4, 64, 4)
    delta, Delta = scale_range(scales)
    assert 256 ** -delta == pytest.approx(64 / 256) and 256 ** -Delta == pytest.approx(4 / 256)
    assert auto_K(PROBE, KERNEL, scales) > 0
    with pytest.raises(Exception):
        scale_range([Scale((8, 8), 256)])


def test_tile_box():
    assert tile_box(256, 16) == (127, 127)
    assert tile_box(256, 24) == (119, 119)


def test_reference_quantile_negative_level():
    assert reference_quantile(None, None, 100, 0, 0.0) == -math.inf


def test_level_study_rows_and_determinism():
    n = 64
    scales = square_scales(n, 4, 12, 4)
    dic = build_dictionary(PROBE, KERNEL, scales)
    cfg = ScanConfig(n, scales, CalibrationParams(1.0, 3.0))
    sc = Scanner(cfg, dic)
    q = reference_quantile(cfg, dic, 300, 0, 0.9)
    rows = level_study(sc, q, [Gaussian(1.0), StudentT(3)], 40, seed=1)
    assert [r.scenario for r in rows] == ["gaussian:1.0", "t:3"]
    assert rows == level_study(sc, q, [Gaussian(1.0), StudentT(3)], 40, seed=1)
    assert rows[1].fwer >= rows[0].fwer


def test_power_study_small():
    rows = power_study(64, PROBE, KERNEL, 8, [Scale((k, k), 64) for k in (4, 8, 16)], 0.1,
                       [None, 4.0], reps=60, seed=0, quantile_reps=300)
    assert rows[0].mu == 0 and rows[0].predicted == pytest.approx(0.1, abs=5e-3)
    assert rows[0].single < 0.3
    assert rows[1].single > 0.9 and rows[1].multi > 0.8
    with pytest.raises(ValueError):
        power_study(64, PROBE, KERNEL, 12, [Scale((8, 8), 64), Scale((16, 16), 64)], 0.1, [0.0], 1, 0, 100)
