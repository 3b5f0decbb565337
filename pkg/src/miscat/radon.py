"""Parallel-beam Radon transform and its radial dual dictionary (d = 2).

Lines are parametrized by an angle ``theta`` in ``[0, pi)`` and an offset
``u`` in ``(0, 1)``: the line ``{v : <v - c, (cos theta, sin theta)> = u - 1/2}``
with ``c = (1/2, 1/2)`` the image centre, so that the offsets
``u_l = (l - 1/2) / n`` cover every line through the inscribed disc. Object
pixels sit at centres ``(i + 1/2) / n``.

Fourier transforms use ``F f(xi) = int f(x) exp(i <x, xi>) dx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates
from scipy.special import j0, jv

from .grid import GridSignal, write_pgrid


class RadonError(ValueError):
    pass


@dataclass(frozen=True)
class RadonGrid:
    n_angles: int
    n_offsets: int

    def __post_init__(self):
        if self.n_angles < 1 or self.n_offsets < 2:
            raise RadonError("need at least one angle and two offsets")

    @property
    def angles(self) -> np.ndarray:
        return np.pi * np.arange(self.n_angles) / self.n_angles

    @property
    def offsets(self) -> np.ndarray:
        return (np.arange(1, self.n_offsets + 1) - 0.5) / self.n_offsets

    @property
    def weights(self) -> float:
        """Quadrature weight ``du * dtheta`` with angles counted over the full circle."""
        return (1.0 / self.n_offsets) * (2.0 * np.pi / self.n_angles)


def radon_forward(f: GridSignal, grid: RadonGrid, step: float | None = None) -> np.ndarray:
    """Line integrals of the bilinear interpolant of ``f``; shape ``(angles, offsets)``."""
    if f.d != 2:
        raise RadonError("Radon transform implemented for d = 2")
    n = f.n
    step = 1.0 / (2 * n) if step is None else step
    reach = math.sqrt(0.5) + step
    tau = np.arange(-reach, reach + step / 2, step)
    s = grid.offsets - 0.5
    out = np.empty((grid.n_angles, grid.n_offsets))
    for a, th in enumerate(grid.angles):
        ct, st = math.cos(th), math.sin(th)
        # points c + s*theta + tau*theta_perp, in pixel-centre index units
        x = 0.5 + s[:, None] * ct - tau[None, :] * st
        y = 0.5 + s[:, None] * st + tau[None, :] * ct
        vals = map_coordinates(f.values, [x * n - 0.5, y * n - 0.5], order=1, mode="constant", cval=0.0)
        out[a] = vals.sum(axis=1) * step
    return out


@dataclass(frozen=True)
class RadialProbe:
    """``phi(x) = profile(|x|)`` supported in the unit ball.

    The default profile is ``(1 - r^2)^power``, whose 2-D Fourier transform
    is ``2 pi 2^p p! J_(p+1)(r) / r^(p+1)``.
    """

    power: int = 6
    profile: Callable | None = None

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.profile is not None:
            v = np.asarray(self.profile(r), dtype=float)
        else:
            v = np.clip(1.0 - r ** 2, 0.0, None) ** self.power
        return np.where(r < 1.0, v, 0.0)

    def fourier(self, rho, nodes: int = 400) -> np.ndarray:
        """Radial 2-D Fourier transform ``2 pi int_0^1 phi(r) J0(rho r) r dr``."""
        rho = np.asarray(rho, dtype=float)
        x, w = np.polynomial.legendre.leggauss(nodes)
        r, w = 0.5 * (x + 1.0), 0.5 * w
        return 2 * np.pi * (j0(np.multiply.outer(rho, r)) @ (w * r * self(r)))

    def fourier_exact(self, rho) -> np.ndarray:
        if self.profile is not None:
            raise RadonError("closed form only for the default profile")
        rho = np.asarray(rho, dtype=float)
        p = self.power
        c = 2 * np.pi * 2 ** p * math.factorial(p)
        safe = np.where(rho == 0, 1.0, rho)
        val = c * jv(p + 1, safe) / safe ** (p + 1)
        return np.where(rho == 0, np.pi / (p + 1), val)


def _rho_grid(r_max: float, dr: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite Simpson nodes and weights on ``[0, r_max]``."""
    m = int(math.ceil(r_max / dr / 2)) * 2
    rho = np.linspace(0.0, r_max, m + 1)
    w = np.ones(m + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return rho, w * (rho[1] - rho[0]) / 3.0


def radon_phi(probe: RadialProbe, x_grid, d: int = 2, r_max: float = 400.0,
              dr: float = 0.01) -> np.ndarray:
    """Dual profile ``Phi(x) = (2 (2 pi)^2)^-1 int F(phi)(r) |r| e^(-i r x) dr`` (d = 2).

    Evaluated by Simpson quadrature on ``[0, r_max]`` with step ``dr``
    (``dr`` must resolve ``cos(r x)`` over the requested ``x`` range).
    """
    if d != 2:
        raise RadonError("radial dual implemented for d = 2")
    x = np.asarray(x_grid, dtype=float)
    if np.max(np.abs(x), initial=0.0) * dr > 0.5:
        raise RadonError("dr too coarse for the requested x range")
    rho, w = _rho_grid(r_max, dr)
    g = probe.fourier(rho) * rho * w
    if not abs(g[-1]) < 1e-10 * np.max(np.abs(g)):
        raise RadonError("probe spectrum not integrable up to r_max; profile too rough")
    out = np.empty(x.shape)
    flat = x.reshape(-1)
    for start in range(0, flat.size, 512):
        chunk = flat[start:start + 512]
        out.reshape(-1)[start:start + 512] = np.cos(np.multiply.outer(chunk, rho)) @ g
    return out / (4 * np.pi ** 2)


class DualProfile:
    """Tabulated ``Phi`` with spline lookup; ``Phi`` is even, so only ``|x|`` is stored."""

    def __init__(self, probe: RadialProbe, x_max: float, samples: int = 4001):
        self.x_max = float(x_max)
        xs = np.linspace(0.0, self.x_max, samples)
        dr = min(0.01, 0.4 / self.x_max)
        self.values = radon_phi(probe, xs, dr=dr)
        self._spline = CubicSpline(np.concatenate([-xs[:0:-1], xs]),
                                   np.concatenate([self.values[:0:-1], self.values]))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.max(np.abs(x), initial=0.0) > self.x_max:
            raise RadonError("requested Phi outside the tabulated range")
        return self._spline(x)


def radon_dual_element(profile: DualProfile, grid: RadonGrid, t, h: float) -> np.ndarray:
    """``Phi_i(u, theta) = h^-1 Phi((u - 1/2 - <theta, t - c>) / h)`` on the sinogram grid."""
    th = grid.angles
    proj = (t[0] - 0.5) * np.cos(th) + (t[1] - 0.5) * np.sin(th)
    arg = (grid.offsets[None, :] - 0.5 - proj[:, None]) / h
    return profile(arg) / h


def radon_probe_element(probe: RadialProbe, n: int, t, h: float) -> np.ndarray:
    """``phi_i(x) = h^-1 phi((x - t) / h)`` at pixel centres."""
    c = (np.arange(n) + 0.5) / n
    r = np.hypot(c[:, None] - t[0], c[None, :] - t[1]) / h
    return probe(r) / h


def image_inner(sinogram: np.ndarray, element: np.ndarray, grid: RadonGrid) -> float:
    return float(np.sum(sinogram * element) * grid.weights)


def object_inner(f: GridSignal, element: np.ndarray) -> float:
    return float(np.sum(f.values * element) / f.n ** 2)


def _spectral_moments(probe: RadialProbe, r_max: float, dr: float) -> tuple[float, float]:
    rho, w = _rho_grid(r_max, dr)
    F2 = probe.fourier(rho) ** 2
    m2 = float(np.sum(w * rho ** 2 * F2))
    m4 = float(np.sum(w * rho ** 4 * F2))
    if not rho[-1] ** 4 * F2[-1] * r_max < 1e-6 * m4:
        raise RadonError("spectral integral not converged; probe lacks H^((d+1)/2) smoothness")
    return m2, m4


def radon_dxi(probe: RadialProbe, d: int = 2, r_max: float = 400.0, dr: float = 0.01) -> np.ndarray:
    """``D^-2 = diag(C int w_1^2 |w| |F phi(w)|^2 dw)`` with ``C = 4 pi / ||F_1(F phi |.|)||^2``.

    In polar form both integrals reduce to radial moments of ``|F phi|^2``;
    the diagonal entry equals ``(1/2) int r^4 F^2 dr / int r^2 F^2 dr``.
    """
    if d != 2:
        raise RadonError("implemented for d = 2")
    m2, m4 = _spectral_moments(probe, r_max, dr)
    norm_sq = (2 * np.pi) * (2 * np.pi) * 2.0 * m2   # |S^1| * Plancherel * both signs of r
    integral = np.pi * m4                             # int cos^2 over the circle = pi
    c = 4 * np.pi / norm_sq
    return np.eye(d) * (c * integral)


def radon_offdiag_moment(probe: RadialProbe, r_max: float = 60.0, m: int = 241) -> float:
    """``int w_1 w_2 |w| |F phi(w)|^2 dw`` on a Cartesian grid (zero by symmetry)."""
    w1 = np.linspace(-r_max, r_max, m)
    W1, W2 = np.meshgrid(w1, w1, indexing="ij")
    R = np.hypot(W1, W2)
    F = probe.fourier(R.reshape(-1)).reshape(R.shape)
    dw = (w1[1] - w1[0]) ** 2
    return float(np.sum(W1 * W2 * R * F ** 2) * dw)


def radon_gumbel_K(rho: float, delta: float, Delta: float, dxi: np.ndarray, d: int = 2) -> float:
    """``(1 - rho)^d (2 pi)^(-(d+1)/2) det(D^-2)^(1/2) log(Delta / delta)``."""
    if not 0 <= rho < 1:
        raise RadonError("rho must lie in [0, 1)")
    if not 0 < delta < Delta <= 1:
        raise RadonError("need 0 < delta < Delta <= 1")
    det = float(np.linalg.det(np.asarray(dxi, dtype=float)))
    if not det > 0:
        raise RadonError("D^-2 must be positive definite")
    return (1 - rho) ** d * (2 * np.pi) ** (-(d + 1) / 2) * math.sqrt(det) * math.log(Delta / delta)


def write_sinogram(path, sino: np.ndarray, grid: RadonGrid, rho: float = 0.1) -> None:
    if sino.shape[0] != sino.shape[1]:
        raise RadonError("PGRID needs a square sinogram (n_angles == n_offsets)")
    write_pgrid(path, GridSignal(sino), comment=f"n_angles={grid.n_angles} n_offsets={grid.n_offsets} rho={rho}")
