"""Scale calibration weights and extreme-value constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_E = math.sqrt(math.e)

SCALE_SYSTEMS = ("dense_full", "single_scale", "dense_squares")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationParams:
    K: float
    C_d: float
    gamma: float = 1.0
    d: int = 2

    def __post_init__(self):
        if not self.K > 0:
            raise CalibrationError(f"K must be positive, got {self.K}")
        if not 0 < self.gamma <= 1:
            raise CalibrationError(f"gamma must lie in (0, 1], got {self.gamma}")


def omega(params: CalibrationParams, h_product: float) -> float:
    """Penalty ``sqrt(2 log(K/h)) + C_d log(sqrt(2 log(K/h))) / sqrt(2 log(K/h))``."""
    ratio = params.K / h_product
    if ratio < SQRT_E * (1 - 1e-12):
        raise CalibrationError(
            f"K/h = {ratio:.6g} < sqrt(e): shrink the largest scale or raise K")
    root = math.sqrt(max(2.0 * math.log(ratio), 1.0))
    return root + params.C_d * math.log(root) / root


def select_Cd(scale_system: str, d: int, gamma: float) -> float:
    if not 0 < gamma <= 1:
        raise CalibrationError(f"gamma must lie in (0, 1], got {gamma}")
    if scale_system == "dense_full":
        return 2 * d + d / gamma - 1
    if scale_system == "single_scale":
        return d / gamma - 1
    if scale_system == "dense_squares":
        return 1 + d / gamma
    raise CalibrationError(f"unknown scale system {scale_system!r}")


def i_d_constant(delta: float, Delta: float, d: int) -> float:
    """``(-1)^(d-1)/(d-1)! sum_k (-1)^k C(d,k) log(k delta + (d-k) Delta)``."""
    if not 0 < delta < Delta <= 1:
        raise CalibrationError(f"need 0 < delta < Delta <= 1, got {delta}, {Delta}")
    if d == 1:
        return math.log(Delta / delta)
    # k delta + (d-k) Delta = d Delta (1 + k (delta/Delta - 1) / d); the
    # log(d Delta) part cancels because the binomial signs sum to zero
    total = math.fsum((-1) ** k * math.comb(d, k) * math.log1p(k * (delta / Delta - 1.0) / d)
                      for k in range(d + 1))
    return (-1) ** (d - 1) / math.factorial(d - 1) * total


def i_d_quadrature(delta: float, Delta: float, d: int) -> float:
    """``int_{[delta,Delta]^d} (u_1 + ... + u_d)^(-d) du`` by tensor Gauss-Legendre.

    For d=1 this is ``log(Delta/delta)``; for d=2 it is
    ``log((delta+Delta)^2 / (4 delta Delta))``, matching the closed form.
    """
    x, w = np.polynomial.legendre.leggauss(200)
    u = 0.5 * (Delta - delta) * x + 0.5 * (Delta + delta)
    w = 0.5 * (Delta - delta) * w
    if d == 1:
        return float(np.sum(w / u))
    if d == 2:
        s = u[:, None] + u[None, :]
        return float(np.sum(np.outer(w, w) / s ** 2))
    raise CalibrationError("quadrature check implemented for d <= 2")


def gumbel_cdf(lam, prefactor: float = 1.0):
    if not prefactor > 0:
        raise CalibrationError("prefactor must be positive")
    return np.exp(-np.exp(-np.asarray(lam, dtype=float)) * prefactor)


def gumbel_quantile(p, prefactor: float = 1.0):
    p = np.asarray(p, dtype=float)
    return np.log(prefactor) - np.log(-np.log(p))


def standard_K(gamma: float, det_DXi_inv: float, i_d: float, d: int) -> float:
    """Location constant that makes the multiscale limit a standard Gumbel law."""
    if not (det_DXi_inv > 0 and i_d > 0):
        raise CalibrationError("det and I_d must be positive")
    if gamma == 0.5:
        return det_DXi_inv * i_d / math.sqrt(2 * math.pi)
    if gamma == 1:
        return det_DXi_inv * i_d / (2 * math.pi) ** ((d + 1) / 2)
    raise CalibrationError(f"Pickands constant unknown for gamma={gamma}")


def scale_exponents(h_min: float, h_max: float, n: int) -> tuple[float, float]:
    """Finite-n plug-in ``(delta, Delta) = (log(1/h_max), log(1/h_min)) / log n``."""
    if not 0 < h_min < h_max <= 1:
        raise CalibrationError(f"need 0 < h_min < h_max <= 1, got {h_min}, {h_max}")
    ln = math.log(n)
    return math.log(1 / h_max) / ln, math.log(1 / h_min) / ln
