"""Monte-Carlo calibration of the Gaussian reference statistic.

Every replication draws its white noise from its own generator keyed by
``(seed, replication index)``, so any subset of replications can be
recomputed (or computed in another process) and gives identical values.

The per-scale maxima of the standardized coefficient fields do not depend
on the calibration weights; they are kept so that quantiles for several
``(K, C_d)`` choices can be read off one simulation.

The reference statistic has the same sidedness as the scan it calibrates:
``max omega (|Z| - omega)`` for a two-sided configuration and
``max omega (Z - omega)`` otherwise, so that under homogeneous Gaussian
noise it is exactly the null distribution of the scan statistic.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import gumbel_cdf
from .probes import DictionaryElement
from .scan import CorrelationPlan, ScanConfig, ScanError

TABLE_LEVELS = (0.1, 0.5, 0.8, 0.9, 0.95, 0.99)
CACHE_ENV = "MISCAT_CACHE_DIR"


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(rep)])))


class ReferenceSimulator:
    """Standardized stencils ``Phi_i / sqrt(sum Phi_i^2)`` on a reusable FFT plan."""

    def __init__(self, config: ScanConfig, dictionary: list[DictionaryElement], dtype=np.float32):
        if len(dictionary) != len(config.scales):
            raise ScanError("dictionary does not match the configured scales")
        self.config = config
        stencils = [e.stencil / math.sqrt(np.sum(e.stencil ** 2)) for e in dictionary]
        self.plan = CorrelationPlan(config.n, stencils, dtype=dtype,
                                    boxes=[e.scale.pixels for e in dictionary])
        self.omegas = config.omegas

    def noise(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((self.config.n,) * self.config.d)

    def scale_extremes(self, zeta: np.ndarray) -> np.ndarray:
        """Per scale, ``max_t Z_t`` and ``max_t (-Z_t)`` of the standardized field.

        ``Z_t = sum_j zeta_j Phi_i(x_j) / sqrt(sum_j Phi_i(x_j)^2)``; shape ``(2, scales)``.
        """
        spec = self.plan.transform(zeta)
        m = self.config.boundary_margin_px
        out = np.empty((2, len(self.plan)))
        for i in range(len(self.plan)):
            z = self.plan.correlate(spec, i, m, self.config.tiled).values
            out[0, i], out[1, i] = z.max(), -z.min()
        return out

    def scale_maxima(self, zeta: np.ndarray) -> np.ndarray:
        """``max_t |Z_t|`` per scale, or ``max_t Z_t`` for a one-sided configuration."""
        return select_side(self.scale_extremes(zeta), self.config.two_sided)

    def draw_extremes(self, seed: int, rep: int) -> np.ndarray:
        return self.scale_extremes(self.noise(replication_rng(seed, rep)))

    def simulate_extremes(self, reps: int, seed: int, start: int = 0) -> np.ndarray:
        """Array of shape ``(reps, 2, scales)``; see :meth:`scale_extremes`."""
        return np.stack([self.draw_extremes(seed, r) for r in range(start, start + reps)])

    def simulate_maxima(self, reps: int, seed: int, start: int = 0) -> np.ndarray:
        return select_side(self.simulate_extremes(reps, seed, start), self.config.two_sided)


def select_side(extremes: np.ndarray, two_sided: bool) -> np.ndarray:
    """Collapse the ``(max Z, max -Z)`` axis of :meth:`ReferenceSimulator.scale_extremes` output."""
    return extremes.max(axis=-2) if two_sided else extremes[..., 0, :]


def sw_from_maxima(maxima: np.ndarray, omegas) -> np.ndarray:
    """``max_i omega_i (M_i - omega_i)`` row by row."""
    om = np.asarray(omegas, dtype=float)
    return np.max(om * (np.atleast_2d(maxima) - om), axis=1)


def simulate_SW_draw(config: ScanConfig, dictionary: list[DictionaryElement],
                     rng: np.random.Generator, dtype=np.float64) -> float:
    sim = ReferenceSimulator(config, dictionary, dtype=dtype)
    return float(sw_from_maxima(sim.scale_maxima(sim.noise(rng)), sim.omegas)[0])


def empirical_quantile(samples, level: float) -> float:
    """Upper order statistic ``x_(ceil(level * reps))``."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("no samples")
    k = min(max(math.ceil(level * x.size - 1e-9), 1), x.size)
    return float(x[k - 1])


def config_fingerprint(config: ScanConfig, dictionary: list[DictionaryElement]) -> str:
    cal = config.calibration
    desc = {
        "n": config.n, "d": config.d, "margin": config.boundary_margin_px, "tiled": config.tiled,
        "two_sided": config.two_sided,
        "scales": [list(s.pixels) for s in config.scales],
        "K": repr(cal.K), "C_d": repr(cal.C_d), "gamma": repr(cal.gamma),
    }
    h = hashlib.sha256(json.dumps(desc, sort_keys=True).encode())
    for e in dictionary:
        h.update(np.ascontiguousarray(e.stencil, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


@dataclass
class QuantileTable:
    levels: tuple[float, ...]
    quantiles: tuple[float, ...]
    reps: int
    seed: int
    fingerprint: str

    def __post_init__(self):
        if len(self.levels) != len(self.quantiles):
            raise ValueError("levels and quantiles differ in length")

    def quantile(self, level: float) -> float:
        for lv, q in zip(self.levels, self.quantiles):
            if math.isclose(lv, level, abs_tol=1e-12):
                return q
        raise KeyError(f"level {level} not in table")

    def to_csv(self) -> str:
        lines = [f"# reps={self.reps} seed={self.seed} fingerprint={self.fingerprint}",
                 "level,quantile"]
        lines += [f"{lv!r},{q!r}" for lv, q in zip(self.levels, self.quantiles)]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read(cls, path) -> "QuantileTable":
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("#"):
            raise ValueError(f"{path}: missing quantile table header")
        meta = dict(item.split("=", 1) for item in text[0][1:].split())
        if text[1].strip() != "level,quantile":
            raise ValueError(f"{path}: bad column header")
        rows = [line.split(",") for line in text[2:] if line.strip()]
        return cls(tuple(float(r[0]) for r in rows), tuple(float(r[1]) for r in rows),
                   int(meta["reps"]), int(meta["seed"]), meta["fingerprint"])


def cache_dir() -> Path | None:
    p = os.environ.get(CACHE_ENV)
    return Path(p) if p else None


def quantile_table(config: ScanConfig, dictionary: list[DictionaryElement], reps: int,
                   levels=TABLE_LEVELS, seed: int = 0, dtype=np.float32,
                   use_cache: bool = True, return_samples: bool = False):
    """Empirical quantiles of ``S(W)`` from ``reps`` seeded replications.

    With ``MISCAT_CACHE_DIR`` set, tables are stored under the configuration
    fingerprint and reused on later calls (samples are then not returned).
    """
    if reps < 100:
        raise ValueError("reps must be at least 100")
    levels = tuple(float(lv) for lv in levels)
    fp = config_fingerprint(config, dictionary)
    cdir = cache_dir() if use_cache else None
    path = cdir / f"quantiles_{fp}_s{seed}_r{reps}.csv" if cdir else None
    if path is not None and path.exists() and not return_samples:
        cached = QuantileTable.read(path)
        if cached.fingerprint == fp and all(lv in cached.levels for lv in levels):
            return cached
    sim = ReferenceSimulator(config, dictionary, dtype=dtype)
    samples = sw_from_maxima(sim.simulate_maxima(reps, seed), sim.omegas)
    table = QuantileTable(levels, tuple(empirical_quantile(samples, lv) for lv in levels), reps, seed, fp)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.write(path)
    return (table, samples) if return_samples else table


def ecdf_at(samples, x) -> np.ndarray:
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(x, dtype=float), side="right") / s.size


def gumbel_compare(samples, prefactor: float = 1.0) -> float:
    """Kolmogorov distance between the sample and ``exp(-prefactor e^-x)``."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("no samples")
    g = gumbel_cdf(s, prefactor)
    upper = np.arange(1, s.size + 1) / s.size
    lower = np.arange(0, s.size) / s.size
    return float(max(np.max(upper - g), np.max(g - lower)))


@dataclass
class GumbelSandwich:
    lower_prefactor: float
    upper_prefactor: float
    holds: bool
    worst_violation: float


def gumbel_sandwich(samples, central: float = 0.98, slack: float = 0.0) -> GumbelSandwich:
    """Bracket the sample CDF between two Gumbel CDFs over its central part.

    Prefactors are fitted at the two ends of the central range
    (``D = -log F(x) e^x``); the check is that the ECDF at every interior
    sample point lies between ``exp(-D_hi e^-x)`` and ``exp(-D_lo e^-x)``,
    up to ``slack`` in probability.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    tail = (1.0 - central) / 2.0
    lo_x = empirical_quantile(s, tail)
    hi_x = empirical_quantile(s, 1.0 - tail)
    f_lo, f_hi = ecdf_at(s, lo_x), ecdf_at(s, hi_x)
    d_a = -math.log(f_lo) * math.exp(lo_x)
    d_b = -math.log(min(f_hi, 1 - 0.5 / s.size)) * math.exp(hi_x)
    d_lo, d_hi = min(d_a, d_b), max(d_a, d_b)
    inner = s[(s >= lo_x) & (s <= hi_x)]
    f = ecdf_at(s, inner)
    below = gumbel_cdf(inner, d_hi) - f
    above = f - gumbel_cdf(inner, d_lo)
    worst = float(max(np.max(below), np.max(above), 0.0))
    return GumbelSandwich(d_lo, d_hi, worst <= slack, worst)
