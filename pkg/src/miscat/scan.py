"""Scan statistics over all (position, scale) pairs.

Positions are indexed by the 0-based *end pixel* ``p`` of a box along each
axis: the box covers pixels ``p - k + 1, ..., p`` and corresponds to the
unit-cube box ``[t - h, t]`` with ``t = (p + 1) / n``. Reported positions
(CSV, rejection lists) use the 1-based end pixel ``p + 1``.

All per-position fields are computed for every admissible position at once
by circular FFT convolution; restricting to boxes that fit inside the grid
makes the circular result exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.special import ndtr

from .calibration import CalibrationParams, omega
from .grid import GridSignal, write_pgrid
from .probes import DictionaryElement, Scale


class ScanError(ValueError):
    pass


@dataclass(frozen=True)
class ScanConfig:
    n: int
    scales: tuple[Scale, ...]
    calibration: CalibrationParams
    alpha: float = 0.1
    boundary_margin_px: int = 0
    d: int = 2
    two_sided: bool = False
    prune_empty: bool = False
    tiled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(self.scales))
        if not self.scales:
            raise ScanError("scale list is empty")
        if not 0 < self.alpha <= 1:
            raise ScanError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.boundary_margin_px < 0:
            raise ScanError("boundary margin must be non-negative")
        for s in self.scales:
            if len(s.pixels) != self.d or s.n != self.n:
                raise ScanError(f"scale {s} does not match grid n={self.n}, d={self.d}")
            if max(s.pixels) + 2 * self.boundary_margin_px > self.n:
                raise ScanError(f"scale {s.pixels} does not fit inside the margins")
            omega(self.calibration, s.h_product)  # validates K/h >= sqrt(e)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([omega(self.calibration, s.h_product) for s in self.scales])


def square_scales(n: int, k_min: int, k_max: int, step: int = 1) -> list[Scale]:
    return [Scale((k, k), n) for k in range(k_min, k_max + 1, step)]


def rectangle_scales(n: int, k_min: int, k_max: int, step: int = 1) -> list[Scale]:
    ks = range(k_min, k_max + 1, step)
    return [Scale((kx, ky), n) for kx in ks for ky in ks]


def position_range(k: int, n: int, margin: int = 0) -> range:
    """Admissible 0-based end pixels for a stencil of length ``k``."""
    return range(k - 1 + margin, n - margin)


@dataclass(frozen=True)
class PositionField:
    """Values over admissible end pixels; ``values[i, j]`` sits at ``origin + step * (i, j)``."""

    values: np.ndarray
    origin: tuple[int, ...]
    step: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.step is None:
            object.__setattr__(self, "step", (1,) * len(self.origin))

    def end_pixel(self, index) -> tuple[int, ...]:
        """0-based end pixel of the entry at array ``index``."""
        return tuple(int(i) * s + o for i, s, o in zip(index, self.step, self.origin))

    def at(self, end_pixel) -> float:
        idx = []
        for p, o, s in zip(end_pixel, self.origin, self.step):
            i, r = divmod(p - o, s)
            if i < 0 or r:
                raise IndexError(end_pixel)
            idx.append(i)
        return float(self.values[tuple(idx)])

    def scaled(self, factor: float) -> "PositionField":
        return PositionField(self.values * factor, self.origin, self.step)


def _embed_reversed(stencil: np.ndarray, n: int, box: tuple[int, ...] | None = None) -> np.ndarray:
    """Reverse the (zero-padded) stencil and shift it so that convolution is correlation.

    Afterwards ``out[j] = stencil[(k - 1 - j) mod n]`` per axis, ``k`` the box length.
    """
    box = stencil.shape if box is None else tuple(box)
    out = np.zeros((n,) * stencil.ndim)
    out[tuple(slice(0, k) for k in stencil.shape)] = stencil
    out = out[(slice(None, None, -1),) * stencil.ndim]
    return np.roll(out, box, axis=tuple(range(stencil.ndim)))


class CorrelationPlan:
    """Frequency-domain stencils for one grid size, reused across inputs.

    ``dtype`` may be ``float32`` for Monte-Carlo work, which halves FFT time
    at a relative accuracy of about 1e-6.
    """

    def __init__(self, n: int, stencils, dtype=np.float64, boxes=None):
        self.n = n
        self.dtype = np.dtype(dtype)
        stencils = list(stencils)
        self.shapes = [tuple(b) for b in boxes] if boxes is not None else [np.shape(s) for s in stencils]
        self.d = len(self.shapes[0])
        self._spectra = [sfft.rfftn(_embed_reversed(np.asarray(s, float), n, b).astype(self.dtype))
                         for s, b in zip(stencils, self.shapes)]

    def __len__(self) -> int:
        return len(self._spectra)

    def transform(self, values: np.ndarray) -> np.ndarray:
        if values.shape != (self.n,) * self.d:
            raise ScanError(f"input shape {values.shape} does not match n={self.n}")
        return sfft.rfftn(values.astype(self.dtype, copy=False))

    def correlate(self, spectrum: np.ndarray, index: int, margin: int = 0,
                  tiled: bool = False) -> PositionField:
        """Correlation at every admissible end pixel, or on the disjoint tiling of the box."""
        full = sfft.irfftn(spectrum * self._spectra[index], s=(self.n,) * self.d)
        k = self.shapes[index]
        step = tuple(k) if tiled else (1,) * self.d
        sl = tuple(slice(kj - 1 + margin, self.n - margin, sj) for kj, sj in zip(k, step))
        return PositionField(full[sl], tuple(kj - 1 + margin for kj in k), step)


def _check_fits(Y: GridSignal, element: DictionaryElement) -> None:
    if element.stencil.ndim != Y.d:
        raise ScanError("stencil and data dimension differ")
    if max(element.stencil.shape) > Y.n:
        raise ScanError(f"stencil {element.stencil.shape} larger than grid {Y.n}")
    if element.periodic and element.scale.n != Y.n:
        raise ScanError("periodic stencil built for a different grid size")


def _plan(n: int, elements, square: bool = False, dtype=np.float64) -> CorrelationPlan:
    stencils = [e.stencil ** 2 if square else e.stencil for e in elements]
    return CorrelationPlan(n, stencils, dtype=dtype, boxes=[e.scale.pixels for e in elements])


def empirical_coefficients(Y: GridSignal, element: DictionaryElement, margin: int = 0) -> PositionField:
    """``n^-d sum_j Y_j Phi_i(x_j)`` for every admissible box of the element's scale."""
    _check_fits(Y, element)
    plan = _plan(Y.n, [element])
    return plan.correlate(plan.transform(Y.values), 0, margin).scaled(1.0 / Y.n ** Y.d)


def local_variances(var_field: GridSignal, element: DictionaryElement, margin: int = 0) -> PositionField:
    """``sigma_i^2 = n^-2d sum_j sigma^2(x_j) Phi_i(x_j)^2`` for every admissible box."""
    _check_fits(var_field, element)
    if np.any(var_field.values <= 0):
        raise ScanError("variance field must be strictly positive")
    plan = _plan(var_field.n, [element], square=True)
    f = plan.correlate(plan.transform(var_field.values), 0, margin)
    return f.scaled(1.0 / var_field.n ** (2 * var_field.d))


@dataclass
class ScaleStatistics:
    scale: Scale
    omega: float
    coefficients: PositionField
    sigma: PositionField
    statistic: PositionField


@dataclass
class LocalStatistics:
    per_scale: list[ScaleStatistics]

    @property
    def max_statistic(self) -> float:
        return max(float(np.max(s.statistic.values)) for s in self.per_scale)


def _box_counts(mask: np.ndarray, k: tuple[int, ...], margin: int) -> np.ndarray:
    """Number of true pixels in every admissible box (summed-area table)."""
    c = mask.astype(np.int64)
    for ax in range(c.ndim):
        c = np.cumsum(c, axis=ax)
        c = np.concatenate([np.zeros_like(np.take(c, [0], axis=ax)), c], axis=ax)
    n = mask.shape[0]
    if c.ndim == 1:
        lo = np.arange(margin, n - k[0] + 1 - margin)
        return c[lo + k[0]] - c[lo]
    kx, ky = k
    ex = np.arange(kx + margin, n - margin + 1)
    ey = np.arange(ky + margin, n - margin + 1)
    return (c[np.ix_(ex, ey)] - c[np.ix_(ex - kx, ey)]
            - c[np.ix_(ex, ey - ky)] + c[np.ix_(ex - kx, ey - ky)])


class Scanner:
    """FFT plans for one configuration, reused across many inputs.

    A constant variance field skips the variance correlation: ``sigma_i``
    is then ``sigma * sqrt(sum Phi_i^2) / n^d`` at every position.
    """

    def __init__(self, config: ScanConfig, dictionary: list[DictionaryElement], dtype=np.float64):
        if len(dictionary) != len(config.scales):
            raise ScanError("dictionary does not match the configured scales")
        for el, sc in zip(dictionary, config.scales):
            if el.scale.pixels != sc.pixels:
                raise ScanError(f"element scale {el.scale.pixels} differs from configured {sc.pixels}")
            if el.periodic and el.scale.n != config.n:
                raise ScanError("periodic stencil built for a different grid size")
        self.config = config
        self.dictionary = dictionary
        self.omegas = config.omegas
        self.plan = _plan(config.n, dictionary, dtype=dtype)
        self._sq_plan = None
        self._dtype = dtype
        self._energy = [float(np.sum(e.stencil ** 2)) for e in dictionary]

    def _sigma(self, var_field: GridSignal, idx: int, like: PositionField, v_hat) -> PositionField:
        n, d = self.config.n, self.config.d
        if v_hat is None:
            c = float(var_field.values.flat[0])
            val = math.sqrt(c * self._energy[idx]) / n ** d
            return PositionField(np.full(like.values.shape, val), like.origin, like.step)
        var = self._sq_plan.correlate(v_hat, idx, self.config.boundary_margin_px, self.config.tiled)
        return PositionField(np.sqrt(np.maximum(var.values, 0.0)) / n ** d, var.origin, var.step)

    def statistics(self, Y: GridSignal, var_field: GridSignal) -> LocalStatistics:
        """All local statistics ``omega_i (<Y, Phi_i>_n / sigma_i - omega_i)``."""
        cfg = self.config
        if Y.n != cfg.n or var_field.n != cfg.n or Y.d != cfg.d:
            raise ScanError("data grid size differs from config")
        if np.any(var_field.values <= 0):
            raise ScanError("variance field must be strictly positive")
        n, d, m = cfg.n, cfg.d, cfg.boundary_margin_px
        y_hat = self.plan.transform(Y.values)
        v_hat = None
        if np.ptp(var_field.values) > 0:
            if self._sq_plan is None:
                self._sq_plan = _plan(n, self.dictionary, square=True, dtype=self._dtype)
            v_hat = self._sq_plan.transform(var_field.values)
        nonzero = Y.values != 0 if cfg.prune_empty else None
        out = []
        for idx, (sc, om) in enumerate(zip(cfg.scales, self.omegas)):
            coef = self.plan.correlate(y_hat, idx, m, cfg.tiled).scaled(1.0 / n ** d)
            sigma = self._sigma(var_field, idx, coef, v_hat)
            if np.any(sigma.values <= 0):
                raise ScanError("non-positive local variance")
            z = coef.values / sigma.values
            if cfg.two_sided:
                z = np.abs(z)
            stat = om * (z - om)
            if nonzero is not None:
                counts = _box_counts(nonzero, sc.pixels, m)
                if cfg.tiled:
                    counts = counts[tuple(slice(None, None, k) for k in sc.pixels)]
                stat = np.where(counts > 0, stat, -np.inf)
            out.append(ScaleStatistics(sc, float(om), coef, sigma, PositionField(stat, coef.origin, coef.step)))
        return LocalStatistics(out)

    def max_statistic(self, Y: GridSignal, var_field: GridSignal) -> float:
        cfg = self.config
        v = var_field.values
        if cfg.prune_empty or np.ptp(v) > 0 or Y.n != cfg.n or var_field.n != cfg.n:
            return self.statistics(Y, var_field).max_statistic
        if not v.flat[0] > 0:
            raise ScanError("variance field must be strictly positive")
        # homogeneous variance: sigma_i is constant per scale, so only the
        # extreme coefficient of each scale matters
        y_hat = self.plan.transform(Y.values)
        best = -math.inf
        for idx, om in enumerate(self.omegas):
            c = self.plan.correlate(y_hat, idx, cfg.boundary_margin_px, cfg.tiled).values
            top = max(c.max(), -c.min()) if cfg.two_sided else c.max()
            sigma = math.sqrt(v.flat[0] * self._energy[idx])
            best = max(best, float(om * (top / sigma - om)))
        return best


def scan_statistic(Y: GridSignal, var_field: GridSignal, config: ScanConfig,
                   dictionary: list[DictionaryElement]) -> tuple[LocalStatistics, float]:
    """All local statistics ``omega_i (<Y, Phi_i>_n / sigma_i - omega_i)`` and their maximum."""
    for el in dictionary:
        _check_fits(Y, el)
    local = Scanner(config, dictionary).statistics(Y, var_field)
    return local, local.max_statistic


@dataclass
class Rejection:
    end_pixel: tuple[int, ...]  # 1-based
    pixels: tuple[int, ...]
    statistic: float


@dataclass
class ScanResult:
    max_statistic: float
    rejections: list[Rejection]
    quantile_used: float


def reject_set(stats: LocalStatistics, q: float) -> ScanResult:
    """Every (position, scale) whose statistic strictly exceeds ``q``."""
    rej = []
    for s in stats.per_scale:
        hits = np.argwhere(s.statistic.values > q)
        vals = s.statistic.values[tuple(hits.T)]
        for h, v in zip(hits, vals):
            end = tuple(p + 1 for p in s.statistic.end_pixel(h))
            rej.append(Rejection(end, s.scale.pixels, float(v)))
    return ScanResult(stats.max_statistic, rej, float(q))


@dataclass
class SignificanceMap:
    """Per-pixel smallest rejected box area; ``-1`` where no rejected box covers the pixel."""

    areas: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return self.areas >= 0

    def to_grid(self, pixel_size: float = 1.0) -> GridSignal:
        return GridSignal(self.areas.astype(float), pixel_size)


def box_cover(end_pixels: np.ndarray, pixels: tuple[int, ...], n: int) -> np.ndarray:
    """Boolean mask of all pixels inside boxes with the given 1-based end pixels."""
    d = len(pixels)
    marks = np.zeros((n + 1,) * d, dtype=np.int64)
    if len(end_pixels):
        e = np.asarray(end_pixels, dtype=int)
        # difference array: +1 at box start, -1 past box end, per axis
        starts = e - np.asarray(pixels)
        if d == 1:
            np.add.at(marks, starts[:, 0], 1)
            np.add.at(marks, e[:, 0], -1)
        else:
            sx, sy, ex, ey = starts[:, 0], starts[:, 1], e[:, 0], e[:, 1]
            np.add.at(marks, (sx, sy), 1)
            np.add.at(marks, (ex, sy), -1)
            np.add.at(marks, (sx, ey), -1)
            np.add.at(marks, (ex, ey), 1)
    for ax in range(d):
        marks = np.cumsum(marks, axis=ax)
    return marks[(slice(0, n),) * d] > 0


def significance_map(result: ScanResult, n: int, d: int = 2) -> SignificanceMap:
    areas = np.full((n,) * d, -1, dtype=np.int64)
    by_scale: dict[tuple[int, ...], list] = {}
    for r in result.rejections:
        by_scale.setdefault(r.pixels, []).append(r.end_pixel)
    for pixels in sorted(by_scale, key=math.prod, reverse=True):
        mask = box_cover(np.array(by_scale[pixels]), pixels, n)
        areas[mask] = math.prod(pixels)  # smaller areas overwrite larger ones
    return SignificanceMap(areas)


def write_rejections_csv(path, result: ScanResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_x_px", "t_y_px", "k_x_px", "k_y_px", "statistic"])
        for r in result.rejections:
            w.writerow([*r.end_pixel, *r.pixels, repr(r.statistic)])


def read_rejections_csv(path) -> list[Rejection]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Rejection((int(r["t_x_px"]), int(r["t_y_px"])), (int(r["k_x_px"]), int(r["k_y_px"])),
                      float(r["statistic"])) for r in rows]


def direct_ds_statistic(Y: GridSignal, scales: list[Scale]) -> float:
    """Indicator-box scan of pre-standardized data with the log-log calibration.

    ``max sqrt(log(3/h)) / log(log(3/h)) * (box_sum / sqrt(#pixels) - sqrt(2 log(3/h)))``.
    """
    best = -np.inf
    for s in scales:
        r = 3.0 / s.h_product
        if not math.log(r) > 1:
            raise ScanError(f"scale {s.pixels} too large: log(log(3/h)) must be positive")
        sums = _box_sums(Y.values, s.pixels)
        z = sums.max() / math.sqrt(s.area)
        lr = math.log(r)
        best = max(best, math.sqrt(lr) / math.log(lr) * (z - math.sqrt(2 * lr)))
    return float(best)


def _box_sums(values: np.ndarray, k: tuple[int, ...]) -> np.ndarray:
    c = values.astype(float)
    for ax in range(c.ndim):
        c = np.cumsum(c, axis=ax)
        c = np.concatenate([np.zeros_like(np.take(c, [0], axis=ax)), c], axis=ax)
    n = values.shape[0]
    if c.ndim == 1:
        return c[k[0]:] - c[:n + 1 - k[0]]
    kx, ky = k
    return c[kx:, ky:] - c[:n + 1 - kx, ky:] - c[kx:, :n + 1 - ky] + c[:n + 1 - kx, :n + 1 - ky]


def detection_threshold_sigma(element: DictionaryElement, q: float, omega_i: float, n: int) -> float:
    """Largest homogeneous noise level at which a unit-intensity box is detected.

    ``sqrt(h_1 h_2 n^d) / ||Phi_h||_2 / (2 (q / omega + omega))`` with the
    probe rescaled to unit mass, so that probes of different smoothness are
    compared on the same signal.
    """
    h = element.scale.h_product
    d = element.stencil.ndim
    norm = element.l2_norm / element.probe_l1_norm
    return math.sqrt(h * n ** d) / norm / (2.0 * (q / omega_i + omega_i))


def oracle_power(mu: float, sigma_at_tstar: float, h_star_product: float, alpha: float) -> float:
    """``alpha + (1 - alpha) * Psi_bar(sqrt(2 log(1/h)) - mu / sigma)``."""
    if not 0 < h_star_product < 1:
        raise ScanError("h_star_product must lie in (0, 1)")
    if not 0 < alpha < 1:
        raise ScanError("alpha must lie in (0, 1)")
    x = math.sqrt(2 * math.log(1 / h_star_product)) - mu / sigma_at_tstar
    return alpha + (1 - alpha) * float(ndtr(-x))


def large_components(f: GridSignal, var_field: GridSignal, config: ScanConfig,
                     probes: list[DictionaryElement], dictionary: list[DictionaryElement],
                     q: float) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Boxes with ``<phi_i, f> > 2 (q / omega_i + omega_i) sigma_i``.

    ``probes`` holds the probe stencils (object space) and ``dictionary`` the
    matching dual stencils; both at the configured scales.
    """
    out = []
    m = config.boundary_margin_px
    for pe, de, sc, om in zip(probes, dictionary, config.scales, config.omegas):
        signal = empirical_coefficients(f, pe, m)
        sigma = local_variances(var_field, de, m)
        bound = 2.0 * (q / om + om) * np.sqrt(sigma.values)
        for h in np.argwhere(signal.values > bound):
            out.append((tuple(p + 1 for p in signal.end_pixel(h)), sc.pixels))
    return out


def write_significance_map(path, smap: SignificanceMap) -> None:
    write_pgrid(path, smap.to_grid(), comment="smallest rejected box area in px^2; -1 = none")

