"""Executable checks of the structural assumptions behind the scan test.

Each check returns a :class:`PropertyReport`; reports are reproducible from
their id and seed and can be collected into a CSV.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import binomtest

from .grid import GridSignal
from .kernels import ConvolutionKernelSpec
from .noise import NoiseSpec, generate, noise_rng, variance_truth
from .probes import (DictionaryElement, ProbeSpec, Scale, build_phi_h, dual_terms, identity_element,
                     midpoint_norm, midpoints, separable_eval, xi_residual_terms, xi_terms)
from .scan import Scanner


@dataclass(frozen=True)
class PropertyReport:
    id: str
    status: str
    value: float
    tolerance: float
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _report(pid: str, ok: bool, value: float, tol: float, seed=None) -> PropertyReport:
    return PropertyReport(pid, "pass" if ok else "fail", float(value), float(tol), seed)


def write_reports_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "status", "value", "tolerance", "seed"])
        for r in reports:
            w.writerow([r.id, r.status, repr(r.value), repr(r.tolerance), "" if r.seed is None else r.seed])


def read_reports_csv(path) -> list[PropertyReport]:
    with open(path, newline="") as fh:
        return [PropertyReport(r["id"], r["status"], float(r["value"]), float(r["tolerance"]),
                               int(r["seed"]) if r["seed"] else None) for r in csv.DictReader(fh)]


# --- average Hoelder condition ----------------------------------------------

def ahc_ratios(element: DictionaryElement, gamma: float, L: float, shifts) -> np.ndarray:
    """``int |Phi(t - z) - Phi(s - z)|^2 dz / (L |t - s|^(2 gamma) ||Phi||^2)`` per pixel shift.

    Shifts are integer pixel vectors; ``t - s`` is measured in box units
    (shift / box side per axis), the integral by the pixel rule.
    """
    st = element.stencil
    k = np.array(element.scale.pixels, dtype=float)
    if not element.periodic:
        st = np.pad(st, [(0, p) for p in element.scale.pixels])
    energy = np.sum(st ** 2)
    out = []
    for m in shifts:
        m = np.asarray(m, dtype=int)
        diff = np.sum((st - np.roll(st, tuple(m), axis=tuple(range(st.ndim)))) ** 2)
        dist = float(np.linalg.norm(m / k))
        if dist == 0:
            out.append(0.0 if diff == 0 else math.inf)
            continue
        out.append(diff / (L * dist ** (2 * gamma) * energy))
    return np.array(out)


def check_ahc(element: DictionaryElement, gamma: float, L: float, sample_pairs: int = 200,
              seed: int = 0, tol: float = 1e-3) -> PropertyReport:
    """Largest sampled ratio of the average Hoelder condition; passes when ``<= 1 + tol``."""
    rng = noise_rng([seed])
    half = np.maximum(np.array(element.scale.pixels) // 2, 1)
    shifts = rng.integers(-half, half + 1, size=(sample_pairs, len(half)))
    ratio = float(np.max(ahc_ratios(element, gamma, L, shifts)))
    return _report("ahc", ratio <= 1 + tol, ratio, 1 + tol, seed)


# --- discretization bias ---------------------------------------------------

def _coefficient(tf: Callable, element: DictionaryElement, end_pixel, n: int) -> float:
    """``n^-d sum Tf(x_j) Phi(x_j)`` over the box, ``x_j`` the pixel centres."""
    k = element.scale.pixels
    start = [(p - kk + 1) for p, kk in zip(end_pixel, k)]
    coords = [(s + np.arange(kk) + 0.5) / n for s, kk in zip(start, k)]
    mesh = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1)
    return float(np.sum(tf(mesh) * element.stencil)) / n ** len(k)


def check_bias(tf: Callable, probe: ProbeSpec, kernel: ConvolutionKernelSpec | None, scale: Scale,
               end_pixel, fine_factor: int = 8) -> PropertyReport:
    """Standardized gap between the ``n``-grid coefficient and a refined quadrature.

    ``tf`` maps points of shape ``(..., d)`` to values of the noiseless
    image ``Tf``. The value reported is ``n^(d/2) |gap| / ||Phi_i||_2``
    (the bias in units of the unit-variance noise level); the tolerance is
    ``log(n)^-2 log(log(n))^-2``.
    """
    n, d = scale.n, len(scale.pixels)

    def element(sc):
        if kernel is None or kernel.a == 0:
            return identity_element(probe, sc)
        return build_phi_h(probe, kernel, sc, strict=False)

    coarse_el = element(scale)
    coarse = _coefficient(tf, coarse_el, end_pixel, n)
    fine_scale = Scale(tuple(k * fine_factor for k in scale.pixels), n * fine_factor)
    fine_end = [(p + 1) * fine_factor - 1 for p in end_pixel]
    fine = _coefficient(tf, element(fine_scale), fine_end, n * fine_factor)
    phi_norm = coarse_el.discrete_norm
    value = n ** (d / 2) * abs(coarse - fine) / phi_norm
    tol = math.log(n) ** -2 * math.log(math.log(n)) ** -2
    return _report("bias", value <= tol, value, tol)


# --- scaling identity ------------------------------------------------------

def check_scaling_identity(probe: ProbeSpec, kernel: ConvolutionKernelSpec, hs=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
                           resolution: int = 256, tol: float = 1e-2) -> PropertyReport:
    """``||Phi_h|| h^(2a) = ||(-1)^a Xi + h^2 R||`` at each ``h`` and convergence to ``||Xi||``.

    The value is the relative gap ``| ||Phi_h|| h^(2a) - ||Xi|| | / ||Xi||`` at
    the smallest ``h``; the check also requires the identity to hold to
    roundoff and the gaps to decrease along the sweep.
    """
    axes = [midpoints(resolution)] * probe.d
    xi = separable_eval(probe, xi_terms(probe, kernel), axes)
    xi_norm = midpoint_norm(xi)
    sign = (-1) ** kernel.a
    gaps, identity_err = [], 0.0
    for h in sorted(hs, reverse=True):
        phi = separable_eval(probe, dual_terms(probe, kernel, (h,) * probe.d), axes)
        lhs = midpoint_norm(phi) * h ** (2 * kernel.a)
        rhs = midpoint_norm(sign * xi + h ** 2 * separable_eval(probe, xi_residual_terms(probe, kernel, h), axes))
        identity_err = max(identity_err, abs(lhs - rhs) / rhs)
        gaps.append(abs(lhs - xi_norm) / xi_norm)
    monotone = all(g2 <= g1 for g1, g2 in zip(gaps, gaps[1:]))
    return _report("scaling_identity", identity_err < 1e-10 and monotone and gaps[-1] < tol, gaps[-1], tol)


# --- family-wise error -----------------------------------------------------

def check_fwer(scanner: Scanner, q: float, spec: NoiseSpec, reps: int, seed: int = 0,
               confidence: float = 0.99) -> PropertyReport:
    """Empirical FWER under ``f = 0``; passes when ``alpha`` lies in the Clopper-Pearson band."""
    cfg = scanner.config
    zero = GridSignal.zeros(cfg.n, cfg.d)
    var = variance_truth(spec, zero)
    hits = sum(scanner.max_statistic(generate(zero, spec, [seed, r]), var) > q for r in range(reps))
    ci = binomtest(int(hits), reps).proportion_ci(confidence, method="exact")
    return _report("fwer", ci.low <= cfg.alpha <= ci.high, hits / reps, cfg.alpha, seed)
