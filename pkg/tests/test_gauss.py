import math

import numpy as np
import pytest

from miscat.calibration import CalibrationParams, gumbel_cdf
from miscat.gauss import (QuantileTable, ReferenceSimulator, config_fingerprint, empirical_quantile,
                          gumbel_compare, gumbel_sandwich, quantile_table, replication_rng, select_side,
                          simulate_SW_draw, sw_from_maxima)
from miscat.kernels import ConvolutionKernelSpec
from miscat.probes import ProbeSpec, Scale, build_phi_h_lattice, indicator_element
from miscat.scan import ScanConfig, rectangle_scales

N = 64


def setup(two_sided=False, K=1.0):
    scales = rectangle_scales(N, 4, 8, 4)
    dic = [build_phi_h_lattice(ProbeSpec((4, 4)), ConvolutionKernelSpec(2, 0.0243), s) for s in scales]
    return ScanConfig(N, scales, CalibrationParams(K, 5.0), two_sided=two_sided), dic


def test_draw_matches_direct_maximum():
    cfg, dic = setup()
    zeta = replication_rng(3, 0).standard_normal((N, N))
    best = -np.inf
    for el, om in zip(dic, cfg.omegas):
        S = el.stencil / math.sqrt(np.sum(el.stencil ** 2))
        kx, ky = el.scale.pixels
        for px in range(kx - 1, N):
            for py in range(ky - 1, N):
                z = np.sum(np.roll(zeta, (-(px - kx + 1), -(py - ky + 1)), axis=(0, 1)) * S)
                best = max(best, om * (z - om))
    assert simulate_SW_draw(cfg, dic, replication_rng(3, 0)) == pytest.approx(best, rel=1e-9)


def test_replications_are_independently_reproducible():
    cfg, dic = setup()
    sim = ReferenceSimulator(cfg, dic)
    full = sim.simulate_extremes(6, seed=11)
    part = sim.simulate_extremes(3, seed=11, start=3)
    assert np.array_equal(full[3:], part)
    assert not np.array_equal(full, sim.simulate_extremes(6, seed=12))


def test_select_side():
    ext = np.array([[[1.0, 3.0], [2.0, 0.5]]])
    assert np.array_equal(select_side(ext, False), [[1.0, 3.0]])
    assert np.array_equal(select_side(ext, True), [[2.0, 3.0]])


def test_two_sided_dominates_one_sided():
    one = quantile_table(*setup(False), reps=200, seed=0).quantiles
    two = quantile_table(*setup(True), reps=200, seed=0).quantiles
    assert all(b >= a for a, b in zip(one, two))


def test_sw_from_maxima():
    m = np.array([[3.0, 4.0], [1.0, 0.0]])
    assert np.allclose(sw_from_maxima(m, [2.0, 3.0]), [3.0, -2.0])


def test_empirical_quantile_order_statistic():
    x = np.arange(1, 101)[::-1]
    assert empirical_quantile(x, 0.9) == 90
    assert empirical_quantile(x, 0.905) == 91
    assert empirical_quantile(x, 1.0) == 100


def test_cache_hit_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("MISCAT_CACHE_DIR", str(tmp_path))
    cfg, dic = setup()
    t1 = quantile_table(cfg, dic, reps=120, seed=4)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    raw = files[0].read_bytes()
    t2 = quantile_table(cfg, dic, reps=120, seed=4)
    assert t1 == t2 and files[0].read_bytes() == raw
    fresh = quantile_table(cfg, dic, reps=120, seed=4, use_cache=False)
    assert fresh.to_csv().encode() == raw


def test_fingerprint_sensitivity():
    cfg, dic = setup()
    fp = config_fingerprint(cfg, dic)
    assert fp == config_fingerprint(*setup())
    assert fp != config_fingerprint(*setup(K=2.0))
    assert fp != config_fingerprint(*setup(two_sided=True))
    other = [indicator_element(e.scale) for e in dic]
    assert fp != config_fingerprint(cfg, other)


def test_quantile_table_round_trip(tmp_path):
    t = QuantileTable((0.5, 0.9), (1 / 3, 2.5), 1000, 7, "abcd")
    t.write(tmp_path / "q.csv")
    assert QuantileTable.read(tmp_path / "q.csv") == t
    assert t.quantile(0.9) == 2.5
    with pytest.raises(KeyError):
        t.quantile(0.95)


def test_reps_floor():
    with pytest.raises(ValueError):
        quantile_table(*setup(), reps=10)


def test_gumbel_compare_and_sandwich_on_exact_gumbel():
    rng = np.random.default_rng(0)
    D = 3.0
    x = -np.log(-np.log(rng.uniform(size=20000)) / D)
    assert gumbel_compare(x, D) < 0.015
    assert gumbel_compare(x, 1.0) > 0.2
    sw = gumbel_sandwich(x, slack=0.02)
    assert sw.holds
    assert sw.lower_prefactor < D * 1.1 and sw.upper_prefactor > D * 0.9
    assert gumbel_cdf(0.0, D) == pytest.approx(math.exp(-D))


def test_gumbel_sandwich_rejects_wrong_shape():
    x = np.random.default_rng(1).normal(size=20000) * 0.3
    assert not gumbel_sandwich(x).holds
