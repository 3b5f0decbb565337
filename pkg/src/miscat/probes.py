"""Tensor polynomial probes and their deconvolution duals.

The probe on the unit box is ``prod_j x_j^(b_j+1) (1 - x_j)^(b_j+1)``. For the
kernel family of :mod:`miscat.kernels` the dual function solving
``phi = T* Phi`` at scale ``h`` is the finite differential expression

    Phi_h = sum_{j<=a} sum_{k<=j} C(a,j) C(j,k) (-1)^j
            (L/h_1)^(2k) (L/h_2)^(2(j-k)) d^(2k, 2(j-k)) phi

with ``L`` the kernel's angular length scale. It is compactly supported on
the unit box whenever the probe vanishes there with its first ``2a - 1``
derivatives.

Stencils are sampled at pixel midpoints ``(m + 1/2) / k``; norms and inner
products use the same midpoint rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import fft as sfft

from .kernels import LATTICE_STEP, ConvolutionKernelSpec


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeSpec:
    beta: tuple[int, ...]

    def __post_init__(self):
        beta = tuple(int(b) for b in self.beta)
        if not beta or any(b < 0 for b in beta):
            raise ProbeError(f"beta must be non-negative integers, got {self.beta}")
        object.__setattr__(self, "beta", beta)

    @property
    def d(self) -> int:
        return len(self.beta)

    @classmethod
    def correct(cls, a: int, d: int = 2) -> "ProbeSpec":
        return cls((2 * a,) * d)

    @classmethod
    def oversmooth(cls, d: int = 2) -> "ProbeSpec":
        return cls((10,) * d)

    @classmethod
    def undersmooth(cls, d: int = 2) -> "ProbeSpec":
        return cls((1,) * d)


PRESETS = {"correct": ProbeSpec.correct, "oversmooth": ProbeSpec.oversmooth,
           "undersmooth": ProbeSpec.undersmooth}


def probe_preset(name: str, a: int, d: int = 2) -> ProbeSpec:
    if name == "correct":
        return ProbeSpec.correct(a, d)
    if name in PRESETS:
        return PRESETS[name](d)
    raise ProbeError(f"unknown probe preset {name!r}")


@dataclass(frozen=True)
class Scale:
    pixels: tuple[int, ...]
    n: int

    def __post_init__(self):
        pixels = tuple(int(p) for p in self.pixels)
        if any(p < 1 for p in pixels):
            raise ProbeError(f"scale pixels must be positive, got {self.pixels}")
        if any(p > self.n for p in pixels):
            raise ProbeError(f"scale {pixels} exceeds grid size {self.n}")
        object.__setattr__(self, "pixels", pixels)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(p / self.n for p in self.pixels)

    @property
    def h_product(self) -> float:
        return math.prod(self.h)

    @property
    def area(self) -> int:
        return math.prod(self.pixels)


@lru_cache(maxsize=None)
def axis_coefficients(beta: int) -> np.ndarray:
    """Monomial coefficients of ``x^(beta+1) (1-x)^(beta+1)``, lowest degree first."""
    p = beta + 1
    c = np.zeros(2 * p + 1)
    for i in range(p + 1):
        c[p + i] = math.comb(p, i) * (-1) ** i
    return c


@lru_cache(maxsize=None)
def _axis_derivative(beta: int, order: int) -> np.ndarray:
    return P.polyder(axis_coefficients(beta), order) if order else axis_coefficients(beta)


def axis_eval(beta: int, order: int, x) -> np.ndarray:
    """``order``-th derivative of the axis factor, zero outside ``(0, 1)``."""
    x = np.asarray(x, dtype=float)
    coef = _axis_derivative(beta, order)
    vals = P.polyval(x, coef) if coef.size else np.zeros_like(x)
    return np.where((x > 0) & (x < 1), vals, 0.0)


def probe_eval(spec: ProbeSpec, x) -> np.ndarray | float:
    return probe_partial(spec, (0,) * spec.d, x)


def probe_partial(spec: ProbeSpec, orders, x) -> np.ndarray | float:
    """Mixed partial derivative of the probe; ``x`` has the coordinate on its last axis."""
    orders = tuple(int(o) for o in orders)
    x = np.asarray(x, dtype=float)
    if len(orders) != spec.d or x.shape[-1] != spec.d:
        raise ProbeError("orders/point dimension does not match probe dimension")
    out = np.ones(x.shape[:-1])
    for j, (b, o) in enumerate(zip(spec.beta, orders)):
        out = out * axis_eval(b, o, x[..., j])
    return float(out) if out.ndim == 0 else out


def midpoints(k: int) -> np.ndarray:
    return (np.arange(k) + 0.5) / k


def _check_smooth(probe: ProbeSpec, a: int) -> None:
    need = 2 * a
    if any(b < need for b in probe.beta):
        raise ProbeError(f"probe smoothness insufficient: need beta >= {need}, got {probe.beta}")


def dual_terms(probe: ProbeSpec, kernel: ConvolutionKernelSpec, h) -> list[tuple[float, tuple[int, ...]]]:
    """``(coefficient, derivative orders)`` pairs of the dual differential expression."""
    a, L = kernel.a, kernel.angular_length
    h = tuple(h)
    terms = []
    if probe.d == 1:
        for j in range(a + 1):
            c = math.comb(a, j) * (-1) ** j * (L / h[0]) ** (2 * j)
            terms.append((c, (2 * j,)))
        return terms
    for j in range(a + 1):
        for k in range(j + 1):
            c = (math.comb(a, j) * math.comb(j, k) * (-1) ** j
                 * (L / h[0]) ** (2 * k) * (L / h[1]) ** (2 * (j - k)))
            terms.append((c, (2 * k, 2 * (j - k))))
    return terms


def separable_eval(probe: ProbeSpec, terms, axes) -> np.ndarray:
    """Evaluate ``sum c * prod_j d^(o_j) g_j`` on the tensor grid ``axes``."""
    shape = tuple(len(ax) for ax in axes)
    out = np.zeros(shape)
    for c, orders in terms:
        factors = [axis_eval(b, o, ax) for b, o, ax in zip(probe.beta, orders, axes)]
        if len(factors) == 1:
            out += c * factors[0]
        else:
            out += c * np.multiply.outer(factors[0], factors[1])
    return out


def midpoint_norm(values: np.ndarray) -> float:
    """L2 norm on the unit box by the midpoint rule on ``values``' own grid."""
    return float(np.sqrt(np.mean(np.asarray(values) ** 2)))


@dataclass(frozen=True, eq=False)
class DictionaryElement:
    """One dual stencil at a scale.

    ``stencil[m]`` holds ``Phi_h((m + 1/2) / k)``; ``l2_norm`` is the midpoint
    norm of ``Phi_h`` on the unit box and ``probe_l1_norm`` the one of ``phi``.
    A *periodic* element carries a full ``n^d`` stencil whose index 0 sits at
    the first pixel of the box and which wraps around the grid.
    """

    scale: Scale
    stencil: np.ndarray
    l2_norm: float
    probe_l1_norm: float

    def __post_init__(self):
        full = (self.scale.n,) * len(self.scale.pixels)
        if self.stencil.shape not in (self.scale.pixels, full):
            raise ProbeError(f"stencil shape {self.stencil.shape} fits neither the box nor the grid")

    @property
    def periodic(self) -> bool:
        return self.stencil.shape != self.scale.pixels

    @property
    def discrete_norm(self) -> float:
        """``sqrt(n^-d sum_j Phi_i(x_j)^2)``, equal to ``sqrt(h^1) * l2_norm``."""
        return float(np.sqrt(np.sum(self.stencil ** 2) / self.scale.n ** self.stencil.ndim))


def build_phi_h(probe: ProbeSpec, kernel: ConvolutionKernelSpec, scale: Scale,
                strict: bool = True) -> DictionaryElement:
    """Dual stencil of ``probe`` for ``kernel`` at ``scale`` (closed form).

    With ``strict=False`` probes with ``beta < 2a`` are accepted and the
    expression is evaluated with classical derivatives inside the box; the
    boundary point masses of the distributional dual are dropped.
    """
    if probe.d != kernel.d or len(scale.pixels) != probe.d:
        raise ProbeError("probe, kernel and scale dimensions differ")
    if strict:
        _check_smooth(probe, kernel.a)
    axes = [midpoints(k) for k in scale.pixels]
    stencil = separable_eval(probe, dual_terms(probe, kernel, scale.h), axes)
    phi = separable_eval(probe, [(1.0, (0,) * probe.d)], axes)
    return DictionaryElement(scale, stencil, midpoint_norm(stencil), float(np.mean(np.abs(phi))))


def build_phi_h_lattice(probe: ProbeSpec, kernel: ConvolutionKernelSpec, scale: Scale) -> DictionaryElement:
    """Dual stencil that inverts the sampled kernel exactly on the periodic grid.

    The probe samples are zero-padded to the full ``n``-grid (box at index 0
    on every axis) and multiplied by the inverse lattice symbol, so that
    ``sum_j (k * f)_j Phi_j = sum_j f_j phi_j`` holds for every grid signal
    ``f``. The stencil is not compactly supported; inside the box it tends
    to the midpoint samples of :func:`build_phi_h` as the scale grows, and
    no smoothness of the probe is required.
    """
    if probe.d != kernel.d or len(scale.pixels) != probe.d:
        raise ProbeError("probe, kernel and scale dimensions differ")
    n, d = scale.n, probe.d
    axes = [midpoints(k) for k in scale.pixels]
    phi = separable_eval(probe, [(1.0, (0,) * d)], axes)
    full = np.zeros((n,) * d)
    full[tuple(slice(0, k) for k in scale.pixels)] = phi
    m = LATTICE_STEP * sfft.fftfreq(n, d=1.0 / n)
    sq = m ** 2 if d == 1 else m[:, None] ** 2 + m[None, :] ** 2
    stencil = sfft.ifftn(sfft.fftn(full) * (1.0 + kernel.b ** 2 * sq) ** kernel.a).real
    norm = math.sqrt(np.sum(stencil ** 2) / scale.area)
    return DictionaryElement(scale, stencil, norm, float(np.mean(np.abs(phi))))


def identity_element(probe: ProbeSpec, scale: Scale) -> DictionaryElement:
    """Stencil for the direct problem (no kernel): the probe itself."""
    axes = [midpoints(k) for k in scale.pixels]
    phi = separable_eval(probe, [(1.0, (0,) * probe.d)], axes)
    return DictionaryElement(scale, phi, midpoint_norm(phi), float(np.mean(np.abs(phi))))


def indicator_element(scale: Scale) -> DictionaryElement:
    stencil = np.ones(scale.pixels)
    return DictionaryElement(scale, stencil, 1.0, 1.0)


def _axis_spectrum(beta: int, omega: np.ndarray) -> np.ndarray:
    """``int_0^1 g(x) exp(-i omega x) dx`` for the axis factor ``g``.

    Low frequencies use Gauss-Legendre quadrature. High frequencies use the
    terminating integration-by-parts series
    ``sum_r (g^(r)(0) - g^(r)(1) e^(-i omega)) / (i omega)^(r+1)``, which is
    exact for polynomials and free of the roundoff floor of quadrature.
    """
    omega = np.asarray(omega, dtype=float)
    deg = 2 * beta + 2
    cut = 8.0 * deg
    out = np.empty(omega.shape, dtype=complex)
    low = np.abs(omega) < cut
    x, w = np.polynomial.legendre.leggauss(int(cut) + 64)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    out[low] = np.exp(-1j * np.outer(omega[low], x)) @ (w * axis_eval(beta, 0, x))
    om = omega[~low]
    acc = np.zeros(om.shape, dtype=complex)
    phase = np.exp(-1j * om)
    for r in range(deg + 1):
        coef = _axis_derivative(beta, r)
        g0, g1 = P.polyval(0.0, coef), P.polyval(1.0, coef)
        acc += (g0 - g1 * phase) / (1j * om) ** (r + 1)
    out[~low] = acc
    return out


def build_phi_h_fourier_oracle(probe: ProbeSpec, kernel: ConvolutionKernelSpec, scale: Scale,
                               oversample: int = 64) -> DictionaryElement:
    """Dual stencil by Fourier division, independent of the closed form.

    The probe spectrum is computed by quadrature on a period-2 torus with
    ``2 * oversample * k`` frequencies per axis, divided by the kernel
    symbol at frequencies scaled by ``1/h`` and summed as a Fourier series
    at the stencil midpoints. Only used to cross-check :func:`build_phi_h`.
    """
    if oversample < 4:
        raise ProbeError("oversample must be >= 4")
    d, L = probe.d, kernel.angular_length
    omegas, spectra, waves = [], [], []
    for b, k in zip(probe.beta, scale.pixels):
        m = 2 * oversample * k
        om = np.pi * sfft.fftfreq(m, d=1.0 / m)
        omegas.append(om)
        spectra.append(_axis_spectrum(b, om))
        waves.append(np.exp(1j * np.outer(midpoints(k), om)) / 2.0)
    if d == 1:
        xi2 = (omegas[0] * L / scale.h[0]) ** 2
        stencil = (waves[0] @ (spectra[0] * (1.0 + xi2) ** kernel.a)).real
    else:
        xi2 = ((omegas[0] * L / scale.h[0]) ** 2)[:, None] + ((omegas[1] * L / scale.h[1]) ** 2)[None, :]
        coef = np.multiply.outer(spectra[0], spectra[1]) * (1.0 + xi2) ** kernel.a
        stencil = (waves[0] @ coef @ waves[1].T).real
    phi_st = separable_eval(probe, [(1.0, (0,) * d)], [midpoints(k) for k in scale.pixels])
    return DictionaryElement(scale, stencil, midpoint_norm(stencil), float(np.mean(np.abs(phi_st))))


def xi_limit(probe: ProbeSpec, kernel: ConvolutionKernelSpec, resolution: int = 256,
             strict: bool = True):
    """Leading-order dual ``L^(2a) sum_k C(a,k) d^(2k, 2(a-k)) phi`` and its L2 norm.

    Returns ``(stencil, norm)`` sampled at ``resolution`` midpoints per axis.
    This is the limit of ``(-1)^a h^(2a) Phi_h`` for square scales ``h -> 0``.
    """
    if strict:
        _check_smooth(probe, kernel.a)
    axes = [midpoints(resolution)] * probe.d
    st = separable_eval(probe, xi_terms(probe, kernel), axes)
    return st, midpoint_norm(st)


def xi_terms(probe: ProbeSpec, kernel: ConvolutionKernelSpec):
    a, L = kernel.a, kernel.angular_length
    if probe.d == 1:
        return [(L ** (2 * a), (2 * a,))]
    return [(L ** (2 * a) * math.comb(a, k), (2 * k, 2 * (a - k))) for k in range(a + 1)]


def xi_residual_terms(probe: ProbeSpec, kernel: ConvolutionKernelSpec, h: float):
    """Terms of the remainder ``R`` in ``h^(2a) Phi_h = (-1)^a Xi + h^2 R`` (square scales)."""
    a, L = kernel.a, kernel.angular_length
    terms = []
    for j in range(a):
        w = math.comb(a, j) * (-1) ** j * L ** (2 * j) * h ** (2 * (a - 1 - j))
        if probe.d == 1:
            terms.append((w, (2 * j,)))
        else:
            for k in range(j + 1):
                terms.append((w * math.comb(j, k), (2 * k, 2 * (j - k))))
    return terms


def deconv_gumbel_K(probe: ProbeSpec, kernel: ConvolutionKernelSpec, delta: float, Delta: float,
                    resolution: int = 512, literal: bool = False, strict: bool = True) -> float:
    """Location constant giving a standard Gumbel limit for square scales (d = 2).

    With ``phi_10``, ``phi_01`` the first partials of ``sum_k C(a,k)
    d^(2k, 2(a-k)) phi`` and ``G`` their Gram determinant, the correlation
    Hessian of the normalised limit field yields

        K = log(Delta/delta) (2 pi)^(-3/2) sqrt(G) / ||sum_k C(a,k) d phi||^2,

    which does not depend on the kernel width. ``literal=True`` instead
    returns ``L^(4a) log(Delta/delta) (2 pi)^(-3/2) sqrt(G) / ||Xi||`` with the
    width-scaled ``Xi`` in the denominator.

    The first partials must be square integrable, which holds for
    ``beta >= 2a`` since the axis factor then lies in ``H^(beta + 1)``.
    """
    if not 0 < delta < Delta <= 1:
        raise ProbeError(f"need 0 < delta < Delta <= 1, got {delta}, {Delta}")
    if probe.d != 2:
        raise ProbeError("the Gumbel constant is defined for d = 2")
    if strict:
        _check_smooth(probe, kernel.a)
    a = kernel.a
    axes = [midpoints(resolution)] * 2
    base = [(float(math.comb(a, k)), (2 * k, 2 * (a - k))) for k in range(a + 1)]
    d10 = [(c, (o[0] + 1, o[1])) for c, o in base]
    d01 = [(c, (o[0], o[1] + 1)) for c, o in base]
    f10 = separable_eval(probe, d10, axes)
    f01 = separable_eval(probe, d01, axes)
    n10, n01 = np.mean(f10 ** 2), np.mean(f01 ** 2)
    cross = np.mean(f10 * f01)
    gram = n10 * n01 - cross ** 2
    log_ratio = math.log(Delta / delta)
    if literal:
        _, xi_norm = xi_limit(probe, kernel, resolution, strict=strict)
        return kernel.angular_length ** (4 * a) * log_ratio * (2 * math.pi) ** -1.5 * math.sqrt(gram) / xi_norm
    base_norm_sq = np.mean(separable_eval(probe, base, axes) ** 2)
    return log_ratio * (2 * math.pi) ** -1.5 * math.sqrt(gram) / base_norm_sq
