import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import jv

from miscat.grid import GridSignal
from miscat.radon import (DualProfile, RadialProbe, RadonError, RadonGrid, image_inner, object_inner,
                          radon_dual_element, radon_dxi, radon_forward, radon_gumbel_K, radon_offdiag_moment,
                          radon_phi, radon_probe_element)


def bumps(n, centres=((0.45, 0.55, 0.08, 1.0), (0.6, 0.4, 0.05, 0.5))):
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c, indexing="ij")
    out = sum(w * np.exp(-((X - a) ** 2 + (Y - b) ** 2) / (2 * s * s)) for a, b, s, w in centres)
    return GridSignal(out)


def test_grid_layout():
    g = RadonGrid(4, 8)
    assert np.allclose(g.offsets, (np.arange(1, 9) - 0.5) / 8)
    assert np.all(np.diff(g.offsets) > 0) and len(set(g.angles)) == 4
    with pytest.raises(RadonError):
        RadonGrid(0, 8)


def test_forward_of_gaussian_matches_closed_form():
    n, s = 128, 0.07
    f = bumps(n, ((0.5, 0.5, s, 1.0),))
    sino = radon_forward(f, RadonGrid(6, n))
    u = RadonGrid(6, n).offsets - 0.5
    exact = math.sqrt(2 * math.pi) * s * np.exp(-u ** 2 / (2 * s * s))
    assert np.max(np.abs(sino - exact)) < 2e-3 * exact.max()


def test_rotation_covariance_for_radial_object():
    sino = radon_forward(bumps(128, ((0.5, 0.5, 0.1, 1.0),)), RadonGrid(16, 128))
    spread = np.max(np.ptp(sino, axis=0)) / np.max(sino)
    assert spread < 1e-3


def test_linearity():
    g = RadonGrid(8, 64)
    a, b = bumps(64), bumps(64, ((0.3, 0.7, 0.1, 1.0),))
    lhs = radon_forward(GridSignal(2 * a.values - 3 * b.values), g)
    assert np.allclose(lhs, 2 * radon_forward(a, g) - 3 * radon_forward(b, g), atol=1e-13)


def test_probe_fourier_closed_form():
    p = RadialProbe(6)
    rho = np.linspace(0, 40, 81)
    assert np.allclose(p.fourier(rho), p.fourier_exact(rho), atol=1e-12)


def test_duality_at_two_scales_three_positions():
    n = 256
    f = bumps(n)
    grid = RadonGrid(n, n)
    sino = radon_forward(f, grid)
    probe = RadialProbe()
    for h in (0.1, 0.2):
        prof = DualProfile(probe, x_max=1.5 / h)
        for t in ((0.5, 0.5), (0.4, 0.6), (0.62, 0.45)):
            obj = object_inner(f, radon_probe_element(probe, n, t, h))
            img = image_inner(sino, radon_dual_element(prof, grid, np.array(t), h), grid)
            assert abs(obj - img) <= 0.01 * abs(obj)


def test_dual_profile_back_projects_to_probe():
    # R* Phi(x) = int Phi(<x, theta>) dtheta over the full circle
    probe = RadialProbe()
    thetas = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    for r in (0.0, 0.3, 0.7, 1.2):
        phi = radon_phi(probe, r * np.cos(thetas), dr=0.005)
        assert np.mean(phi) * 2 * np.pi == pytest.approx(float(probe(r)), abs=2e-4)


def test_rough_probe_rejected():
    box = RadialProbe(profile=lambda r: np.ones_like(r))
    with pytest.raises(RadonError):
        radon_dxi(box)


def test_dxi_against_independent_quadrature():
    p = 6
    c = 2 * np.pi * 2 ** p * math.factorial(p)
    F2 = lambda r: (c * jv(p + 1, r) / r ** (p + 1)) ** 2 if r > 0 else (np.pi / (p + 1)) ** 2
    m2 = quad(lambda r: r ** 2 * F2(r), 0, 400, limit=2000)[0]
    m4 = quad(lambda r: r ** 4 * F2(r), 0, 400, limit=2000)[0]
    D = radon_dxi(RadialProbe(p))
    assert D[0, 0] == pytest.approx(0.5 * m4 / m2, rel=1e-6)
    assert D[0, 1] == 0.0 and D[1, 1] == D[0, 0]
    assert abs(radon_offdiag_moment(RadialProbe(p))) < 1e-10 * m4


def test_gumbel_K_scaling():
    D = np.eye(2) * 7.0
    K = radon_gumbel_K(0.0, 0.01, 0.1, D)
    assert K == pytest.approx((2 * np.pi) ** -1.5 * 7.0 * math.log(10))
    assert radon_gumbel_K(0.5, 0.01, 0.1, D) == pytest.approx(K / 4)
    assert radon_gumbel_K(0.0, 0.01, 1.0, D) == pytest.approx(2 * K)
    assert radon_gumbel_K(0.0, 0.01, 0.1, 4 * D) == pytest.approx(4 * K)
    for bad in ((1.0, 0.01, 0.1), (0.0, 0.1, 0.01), (0.0, 0.01, 1.5)):
        with pytest.raises(RadonError):
            radon_gumbel_K(*bad, D)
