"""Radially symmetric convolution kernels of polynomial Fourier decay.

The kernel family is defined through its Fourier symbol
``(1 + b**2 |xi|**2) ** (-a)``. On an ``n``-point periodic grid covering the
unit cube the symbol is evaluated on the lattice ``xi = 2 m`` with
``m in {-n//2, ..., (n+1)//2 - 1}`` (normalized frequency times ``n``). In
angular units on the unit cube this is a kernel of length scale
``b / pi``, which is what the dual dictionary has to invert (see
:attr:`ConvolutionKernelSpec.angular_length`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .grid import GridSignal

#: spacing of the frequency lattice relative to the integer frequency index
LATTICE_STEP = 2.0


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class ConvolutionKernelSpec:
    a: int
    b: float
    d: int = 2

    def __post_init__(self):
        if int(self.a) != self.a or self.a < 0:
            raise KernelError(f"a must be a non-negative integer, got {self.a}")
        if not self.b > 0:
            raise KernelError(f"b must be positive, got {self.b}")
        if self.d not in (1, 2):
            raise KernelError(f"d must be 1 or 2, got {self.d}")
        object.__setattr__(self, "a", int(self.a))

    @property
    def angular_length(self) -> float:
        """Length scale of the symbol in angular frequency on the unit cube."""
        return self.b * LATTICE_STEP / (2 * math.pi)


def fourier_symbol(spec: ConvolutionKernelSpec, xi) -> np.ndarray | float:
    """``(1 + b^2 |xi|^2)^(-a)``; ``xi`` is a vector (last axis) or a norm."""
    xi = np.asarray(xi, dtype=float)
    sq = xi ** 2 if xi.ndim == 0 else np.sum(xi ** 2, axis=-1)
    out = (1.0 + spec.b ** 2 * sq) ** (-spec.a)
    return float(out) if np.ndim(out) == 0 else out


def lattice_norm_sq(n: int, d: int) -> np.ndarray:
    """Squared lattice frequency ``|xi|^2`` in FFT ordering, shape ``(n,)*d``."""
    m = sfft.fftfreq(n, d=1.0 / n)
    xi = LATTICE_STEP * m
    if d == 1:
        return xi ** 2
    return xi[:, None] ** 2 + xi[None, :] ** 2


def _symbol_grid(spec: ConvolutionKernelSpec, n: int) -> np.ndarray:
    return (1.0 + spec.b ** 2 * lattice_norm_sq(n, spec.d)) ** (-spec.a)


def convolve(spec: ConvolutionKernelSpec, f: GridSignal) -> GridSignal:
    """Periodic convolution ``k * f`` by multiplication on the frequency lattice."""
    if f.d != spec.d:
        raise KernelError(f"dimension mismatch: kernel d={spec.d}, signal d={f.d}")
    spectrum = sfft.fftn(f.values) * _symbol_grid(spec, f.n)
    out = sfft.ifftn(spectrum)
    scale = max(float(np.max(np.abs(out.real))), 1e-300)
    # the symbol is real and even, so any imaginary part is roundoff
    if np.max(np.abs(out.imag)) > 1e-10 * scale and np.max(np.abs(out.imag)) > 1e-14:
        raise KernelError("non-negligible imaginary residue in convolution")
    return f.with_values(out.real)


def spatial_kernel(spec: ConvolutionKernelSpec, n: int) -> np.ndarray:
    """Kernel sampled on the ``n``-grid, centred at index ``n // 2``, unit mass."""
    k = sfft.ifftn(_symbol_grid(spec, n)).real
    k = sfft.fftshift(k)
    return k / k.sum()


def _radial_half_max(profile: np.ndarray) -> float:
    """Radius (in samples) where a peak-at-0 profile first drops below half."""
    half = 0.5 * profile[0]
    below = np.nonzero(profile < half)[0]
    if below.size == 0:
        raise KernelError("profile never drops below half maximum")
    i = int(below[0])
    y0, y1 = profile[i - 1], profile[i]
    return float((i - 1) + (y0 - half) / (y0 - y1))


def fwhm_from_profile(profile: np.ndarray) -> float:
    """FWHM in samples of a centred radial profile ``profile[r]``, r = 0, 1, ..."""
    r = _radial_half_max(np.asarray(profile, dtype=float))
    if r < 2:
        raise KernelError(f"grid too coarse: half-maximum radius {r:.3g} px < 2 px")
    return 2.0 * r


def fwhm(spec: ConvolutionKernelSpec, n: int, pixel_size: float = 1.0) -> float:
    """Full width at half maximum of the kernel, in units of ``pixel_size``."""
    k = spatial_kernel(spec, n)
    c = n // 2
    profile = k[c:] if spec.d == 1 else k[c, c:]
    return fwhm_from_profile(profile) * pixel_size


def kurtosis(spec: ConvolutionKernelSpec, n: int) -> float:
    """Radial moment ratio ``E|x|^4 / (E|x|^2)^2`` of the normalised kernel.

    In d=1 this is the ordinary (non-excess) kurtosis; in d=2 it is the
    spread measure quoted for microscope PSFs (equal to 3 for ``a = 2``).
    """
    return moment_kurtosis(spatial_kernel(spec, n))


def moment_kurtosis(kernel: np.ndarray) -> float:
    k = np.asarray(kernel, dtype=float)
    n = k.shape[0]
    c = n // 2
    r = np.arange(n) - c
    if k.ndim == 1:
        r2 = r.astype(float) ** 2
    else:
        r2 = r[:, None] ** 2 + r[None, :] ** 2.0
    if k.ndim == 1:
        edge = np.concatenate([k[:2], k[-2:]])
    else:
        edge = np.concatenate([k[:2].ravel(), k[-2:].ravel(), k[:, :2].ravel(), k[:, -2:].ravel()])
    mass = k.sum()
    # mean edge density times the grid volume bounds the truncated tail mass
    if np.abs(edge).mean() * k.size > 1e-6 * mass:
        raise KernelError("kernel tail not integrable on this grid; increase n")
    m2 = np.sum(r2 * k) / mass
    m4 = np.sum(r2 ** 2 * k) / mass
    return float(m4 / m2 ** 2)


def gaussian_fwhm(std_px: float, n: int) -> tuple[float, float]:
    """Measured and analytic FWHM of a sampled Gaussian of standard deviation ``std_px``.

    Serves as an oracle for :func:`fwhm_from_profile`.
    """
    if not 0 < std_px < n / 8:
        raise KernelError("std_px must be positive and well inside the grid")
    r = np.arange(n // 2, dtype=float)
    measured = fwhm_from_profile(np.exp(-0.5 * (r / std_px) ** 2))
    return measured, 2.0 * math.sqrt(2.0 * math.log(2.0)) * std_px
