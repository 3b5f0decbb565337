import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import k1

from miscat.grid import GridSignal
from miscat.kernels import (ConvolutionKernelSpec, KernelError, convolve, fourier_symbol, fwhm,
                            gaussian_fwhm, kurtosis, spatial_kernel)


def continuous_fwhm_a2(b: float) -> float:
    """FWHM on the unit cube of the a=2 kernel, whose radial profile is proportional to x K1(x)."""
    x_half = brentq(lambda x: x * k1(x) - 0.5, 0.1, 5.0)
    return 2.0 * (b / math.pi) * x_half


def test_symbol_values():
    spec = ConvolutionKernelSpec(2, 0.5)
    assert fourier_symbol(spec, 0.0) == 1.0
    assert fourier_symbol(spec, [2.0, 0.0]) == pytest.approx(1 / 4)


def test_sted_kernel_fwhm_and_kurtosis():
    spec = ConvolutionKernelSpec(2, 0.016)
    w = fwhm(spec, 600, pixel_size=10.0)
    assert abs(w - 77.5881) < 1.0
    assert abs(w - continuous_fwhm_a2(0.016) * 600 * 10) < 1.0
    assert kurtosis(spec, 600) == pytest.approx(3.0, abs=0.05)


def test_simulation_kernel_is_about_ten_pixels():
    w = fwhm(ConvolutionKernelSpec(2, 0.0243), 512)
    assert w == pytest.approx(10.0, abs=0.25)
    assert w == pytest.approx(continuous_fwhm_a2(0.0243) * 512, abs=0.15)


@pytest.mark.parametrize("a", [2, 3, 4])
def test_radial_kurtosis_matches_moments(a):
    # moments of the symbol at zero give E|x|^4 / (E|x|^2)^2 = 2 (a+1) / a in d = 2
    assert kurtosis(ConvolutionKernelSpec(a, 0.02), 1024) == pytest.approx(2 * (a + 1) / a, rel=1e-2)


def test_gaussian_oracle():
    measured, exact = gaussian_fwhm(6.0, 256)
    assert exact == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 6.0)
    assert measured == pytest.approx(exact, abs=0.05)


def test_convolution_preserves_mass_and_is_linear():
    rng = np.random.default_rng(3)
    spec = ConvolutionKernelSpec(2, 0.03)
    f, g = (GridSignal(rng.normal(size=(64, 64))) for _ in range(2))
    kf = convolve(spec, f)
    assert kf.values.sum() == pytest.approx(f.values.sum())
    lin = convolve(spec, GridSignal(2 * f.values - g.values)).values
    assert np.allclose(lin, 2 * kf.values - convolve(spec, g).values)
    k = spatial_kernel(spec, 64)
    assert k.sum() == pytest.approx(1.0) and np.allclose(k, k.T)


def test_invalid_specs():
    with pytest.raises(KernelError):
        ConvolutionKernelSpec(-1, 0.1)
    with pytest.raises(KernelError):
        ConvolutionKernelSpec(2, 0.0)
    with pytest.raises(KernelError):
        convolve(ConvolutionKernelSpec(1, 0.1, d=1), GridSignal.zeros(8))
    with pytest.raises(KernelError):
        fwhm(ConvolutionKernelSpec(2, 0.001), 64)   # narrower than two pixels
