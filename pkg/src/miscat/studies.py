"""Simulation studies built on the scan engine: level, power and detection boundary."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationParams, scale_exponents, select_Cd
from .gauss import quantile_table
from .grid import GridSignal
from .kernels import ConvolutionKernelSpec, convolve
from .noise import NoiseSpec, format_noise, generate, noise_rng, variance_truth
from .probes import (DictionaryElement, ProbeSpec, Scale, build_phi_h, build_phi_h_lattice,
                     deconv_gumbel_K, identity_element, probe_preset)
from .scan import ScanConfig, Scanner, detection_threshold_sigma, oracle_power

DUALS = ("lattice", "midpoint")


def build_dictionary(probe: ProbeSpec, kernel: ConvolutionKernelSpec | None, scales,
                     dual: str = "lattice") -> list[DictionaryElement]:
    """Dual stencils for every scale; ``kernel=None`` (or ``a = 0``) is the direct problem."""
    if dual not in DUALS:
        raise ValueError(f"unknown dual {dual!r}; choose from {DUALS}")
    if kernel is None or kernel.a == 0:
        return [identity_element(probe, s) for s in scales]
    if dual == "lattice":
        return [build_phi_h_lattice(probe, kernel, s) for s in scales]
    return [build_phi_h(probe, kernel, s, strict=False) for s in scales]


def scale_range(scales) -> tuple[float, float]:
    """Exponents ``(delta, Delta)`` of the largest and smallest per-axis extent."""
    n = scales[0].n
    pix = [p for s in scales for p in s.pixels]
    return scale_exponents(min(pix) / n, max(pix) / n, n)


def auto_K(probe: ProbeSpec, kernel: ConvolutionKernelSpec | None, scales) -> float:
    delta, Delta = scale_range(scales)
    kern = kernel if kernel is not None else ConvolutionKernelSpec(0, 1.0, probe.d)
    return deconv_gumbel_K(probe, kern, delta, Delta, strict=False)


def reference_quantile(config: ScanConfig, dictionary, reps: int, seed: int, level: float) -> float:
    if level <= 0:
        return -math.inf
    return quantile_table(config, dictionary, reps, levels=(level,), seed=seed).quantile(level)


# --- level -----------------------------------------------------------------

@dataclass
class LevelRow:
    scenario: str
    runs: int
    rejections: int

    @property
    def fwer(self) -> float:
        return self.rejections / self.runs


def level_study(scanner: Scanner, q: float, scenarios: list[NoiseSpec], runs: int,
                seed: int) -> list[LevelRow]:
    """Fraction of pure-noise runs (``f = 0``) with at least one rejection at threshold ``q``."""
    n, d = scanner.config.n, scanner.config.d
    zero = GridSignal.zeros(n, d)
    rows = []
    for s_idx, spec in enumerate(scenarios):
        var = variance_truth(spec, zero)
        hits = 0
        for r in range(runs):
            Y = generate(zero, spec, [seed, s_idx, r])
            hits += scanner.max_statistic(Y, var) > q
        rows.append(LevelRow(format_noise(spec), runs, int(hits)))
    return rows


# --- power -----------------------------------------------------------------

@dataclass
class PowerRow:
    offset: float | None
    snr: float
    mu: float
    predicted: float
    single: float
    multi: float


def tile_box(n: int, k: int, d: int = 2) -> tuple[int, ...]:
    """0-based end pixel of the tile of side ``k`` nearest the grid centre."""
    return (k * (n // (2 * k)) - 1,) * d


def power_study(n: int, probe: ProbeSpec, kernel: ConvolutionKernelSpec | None, k_star: int,
                multi_scales, alpha: float, offsets, reps: int, seed: int, quantile_reps: int,
                dual: str = "lattice", gamma: float = 1.0) -> list[PowerRow]:
    """Empirical power for a block ``mu 1_box`` at the true scale versus the oracle formula.

    Positions are the disjoint tiling of each box size. The signal box is a
    tile of side ``k_star``; ``offsets`` are standardized signal strengths
    ``mu / sigma(t*)`` relative to ``sqrt(2 log(1 / h*))``; ``None`` means ``mu = 0``. The single-scale
    test uses ``C_d = d/gamma - 1``, the multiscale test ``C_d = 2d + d/gamma - 1``.
    """
    d = probe.d
    star = Scale((k_star,) * d, n)
    multi_scales = list(multi_scales)
    if star not in multi_scales:
        raise ValueError("the true scale must belong to the multiscale system")
    K = auto_K(probe, kernel, multi_scales)
    single_cfg = ScanConfig(n, [star], CalibrationParams(K, select_Cd("single_scale", d, gamma), gamma),
                            alpha, tiled=True)
    multi_cfg = ScanConfig(n, multi_scales, CalibrationParams(K, select_Cd("dense_full", d, gamma), gamma),
                           alpha, tiled=True)
    single_dic = build_dictionary(probe, kernel, [star], dual)
    multi_dic = build_dictionary(probe, kernel, multi_scales, dual)
    q_single = reference_quantile(single_cfg, single_dic, quantile_reps, seed, 1 - alpha)
    q_multi = reference_quantile(multi_cfg, multi_dic, quantile_reps, seed + 1, 1 - alpha)
    single, multi = Scanner(single_cfg, single_dic), Scanner(multi_cfg, multi_dic)

    end = tile_box(n, k_star, d)
    box = np.zeros((n,) * d)
    box[tuple(slice(e - k_star + 1, e + 1) for e in end)] = 1.0
    phi = identity_element(probe, star)
    coef_per_mu = float(np.sum(phi.stencil)) / n ** d
    sigma_star = math.sqrt(np.sum(single_dic[0].stencil ** 2)) / n ** d
    penalty = math.sqrt(2 * math.log(1 / star.h_product))
    var = GridSignal.full(n, 1.0, d)
    rows = []
    for j, off in enumerate(offsets):
        snr = 0.0 if off is None else penalty + off
        mu = snr * sigma_star / coef_per_mu
        f = GridSignal(mu * box)
        clean = convolve(kernel, f) if kernel is not None and kernel.a > 0 else f
        hits_s = hits_m = 0
        for r in range(reps):
            noise = noise_rng([seed, j, r]).standard_normal((n,) * d)
            Y = clean.with_values(clean.values + noise)
            hits_s += single.max_statistic(Y, var) > q_single
            hits_m += multi.max_statistic(Y, var) > q_multi
        rows.append(PowerRow(off, snr, mu, oracle_power(snr, 1.0, star.h_product, alpha),
                             hits_s / reps, hits_m / reps))
    return rows


# --- detection boundary ----------------------------------------------------

@dataclass
class BoundaryRow:
    preset: str
    pixels: tuple[int, ...]
    area: int
    sigma_max: float


def detection_boundary(n: int, kernel: ConvolutionKernelSpec, scales, presets, quantiles: dict,
                       C_d: float, dual: str = "lattice") -> list[BoundaryRow]:
    """Largest noise level still detecting a unit box, per probe preset and scale.

    ``quantiles`` maps preset name to its ``q_(1 - alpha)``.
    """
    rows = []
    for name in presets:
        probe = probe_preset(name, kernel.a, kernel.d)
        dic = build_dictionary(probe, kernel, scales, dual)
        cal = CalibrationParams(auto_K(probe, kernel, scales), C_d)
        cfg = ScanConfig(n, scales, cal)
        for el, om in zip(dic, cfg.omegas):
            rows.append(BoundaryRow(name, el.scale.pixels, el.scale.area,
                                    detection_threshold_sigma(el, quantiles[name], float(om), n)))
    return rows
