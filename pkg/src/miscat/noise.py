"""Error models, variance fields and synthetic phantoms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSignal


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class Gaussian:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise NoiseError("sigma must be non-negative")


@dataclass(frozen=True)
class StudentT:
    """Additive ``t(nu)`` errors; heavy tails break the moment condition of the theory."""

    nu: float

    def __post_init__(self):
        if not self.nu > 2:
            raise NoiseError(f"nu must exceed 2 for finite variance, got {self.nu}")


@dataclass(frozen=True)
class PoissonGauss:
    """``Poi(t (Tf + b)) / t - b + N(0, sigma^2)``."""

    t: float
    b: float
    sigma: float

    def __post_init__(self):
        if self.t < 1 or self.b < 0 or self.sigma < 0:
            raise NoiseError("need t >= 1, b >= 0, sigma >= 0")


@dataclass(frozen=True)
class BinomialSTED:
    """Raw photon counts ``Bin(t, Tf)`` with ``Tf`` in ``[0, 1]``."""

    t: int

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise NoiseError("t must be a positive integer")


NoiseSpec = Gaussian | StudentT | PoissonGauss | BinomialSTED


def violates_moment_condition(spec: NoiseSpec) -> bool:
    """Student-t errors have no exponential moments, so the Gaussian approximation may fail."""
    return isinstance(spec, StudentT)


def noise_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _check_unit_range(truth: GridSignal) -> None:
    v = truth.values
    if np.any(v < 0) or np.any(v > 1):
        raise NoiseError("binomial model needs the convolved truth in [0, 1]")


def student_t(rng: np.random.Generator, nu: float, shape) -> np.ndarray:
    """``Z / sqrt(chi2_nu / nu)`` with the chi-square built from squared normals.

    Non-integer ``nu`` falls back to a gamma draw for the chi-square part.
    """
    z = rng.standard_normal(shape)
    if float(nu).is_integer():
        chi2 = np.zeros(shape)
        for _ in range(int(nu)):
            chi2 += rng.standard_normal(shape) ** 2
    else:
        chi2 = 2.0 * rng.standard_gamma(nu / 2.0, shape)
    return z / np.sqrt(chi2 / nu)


def generate(truth: GridSignal, spec: NoiseSpec, seed) -> GridSignal:
    """Noisy observation of ``truth`` (the already convolved signal)."""
    rng = noise_rng(seed)
    v = truth.values
    if isinstance(spec, Gaussian):
        y = v + spec.sigma * rng.standard_normal(v.shape) if spec.sigma > 0 else v.copy()
    elif isinstance(spec, StudentT):
        y = v + student_t(rng, spec.nu, v.shape)
    elif isinstance(spec, PoissonGauss):
        lam = spec.t * (v + spec.b)
        if np.any(lam < 0):
            raise NoiseError("Poisson intensity t (Tf + b) must be non-negative")
        y = rng.poisson(lam) / spec.t - spec.b
        if spec.sigma > 0:
            y = y + spec.sigma * rng.standard_normal(v.shape)
    elif isinstance(spec, BinomialSTED):
        _check_unit_range(truth)
        y = rng.binomial(int(spec.t), v).astype(float)
    else:
        raise NoiseError(f"unknown noise spec {spec!r}")
    return truth.with_values(y)


def variance_truth(spec: NoiseSpec, truth: GridSignal) -> GridSignal:
    v = truth.values
    if isinstance(spec, Gaussian):
        var = np.full(v.shape, spec.sigma ** 2)
    elif isinstance(spec, StudentT):
        var = np.full(v.shape, spec.nu / (spec.nu - 2.0))
    elif isinstance(spec, PoissonGauss):
        var = (v + spec.b) / spec.t + spec.sigma ** 2
    elif isinstance(spec, BinomialSTED):
        _check_unit_range(truth)
        var = spec.t * v * (1.0 - v)
    else:
        raise NoiseError(f"unknown noise spec {spec!r}")
    return truth.with_values(var)


def variance_mle(Y: GridSignal, spec: NoiseSpec) -> GridSignal:
    """Pointwise plug-in variance, clamped half a count away from zero."""
    y = Y.values
    if isinstance(spec, BinomialSTED):
        t = spec.t
        p = np.clip(y / t, 1.0 / (2 * t), 1.0 - 1.0 / (2 * t))
        return Y.with_values(t * p * (1.0 - p))
    if isinstance(spec, PoissonGauss):
        lam = np.maximum(y + spec.b, spec.b + 1.0 / (2 * spec.t))
        return Y.with_values(lam / spec.t + spec.sigma ** 2)
    raise NoiseError(f"no variance estimator for {type(spec).__name__}")


def parse_noise(text: str) -> NoiseSpec:
    """Parse ``gaussian:0.05``, ``t:6``, ``poisson:t,b,sigma`` or ``binomial:t``."""
    kind, _, args = text.partition(":")
    vals = [float(a) for a in args.split(",") if a]
    kind = kind.strip().lower()
    try:
        if kind == "gaussian":
            return Gaussian(*vals)
        if kind in ("t", "student", "studentt"):
            return StudentT(*vals)
        if kind in ("poisson", "poissongauss"):
            return PoissonGauss(*vals)
        if kind in ("binomial", "sted"):
            return BinomialSTED(int(vals[0]))
    except TypeError as exc:
        raise NoiseError(f"wrong number of parameters in {text!r}") from exc
    raise NoiseError(f"unknown noise model {text!r}")


def format_noise(spec: NoiseSpec) -> str:
    if isinstance(spec, Gaussian):
        return f"gaussian:{spec.sigma!r}"
    if isinstance(spec, StudentT):
        return f"t:{spec.nu!r}"
    if isinstance(spec, PoissonGauss):
        return f"poisson:{spec.t!r},{spec.b!r},{spec.sigma!r}"
    return f"binomial:{spec.t}"


# --- phantoms --------------------------------------------------------------

def _disc(img: np.ndarray, cy: float, cx: float, r: float) -> None:
    n = img.shape[0]
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 1.0


def circles_squares_lines(n: int) -> GridSignal:
    """Binary test image: rows of 3, 6 and 12 discs, a row of squares and a bar.

    Geometry is laid out on a 512 reference grid and scaled; the bar sits
    ``round(9 n / 512)`` pixels below the squares.
    """
    if n < 128:
        raise NoiseError("phantom needs n >= 128")
    s = n / 512.0
    img = np.zeros((n, n))
    for count, row, radius in ((3, 72, 36), (6, 170, 18), (12, 245, 9)):
        for c in range(count):
            _disc(img, row * s, (c + 0.5) * 512 / count * s, radius * s)
    side = max(2, round(12 * s))
    top = round(320 * s)
    gap = round(9 * s)
    x0, pitch = round(40 * s), round(24 * s)
    for i in range(18):
        x = x0 + i * pitch
        if x + side > n - round(40 * s):
            break
        img[top:top + side, x:x + side] = 1.0
    bar = top + side + gap
    img[bar:bar + side, round(40 * s):n - round(40 * s)] = 1.0
    return GridSignal(img, meta={"square_rows": (top, top + side), "bar_rows": (bar, bar + side),
                                 "large_discs": [(72 * s, (c + 0.5) * 512 / 3 * s, 36 * s) for c in range(3)]})


def origami(n: int, pixel_size_nm: float = 10.0, seed: int = 7) -> GridSignal:
    """Scattered pairs of parallel strands 71 nm apart, mimicking DNA origami.

    Each strand is one pixel wide and about 60 nm long; pair orientations
    and positions are drawn from a fixed seed on a coarse jittered lattice.
    """
    if n < 128:
        raise NoiseError("phantom needs n >= 128")
    rng = noise_rng(seed)
    img = np.zeros((n, n))
    sep = 71.0 / pixel_size_nm
    half_len = 30.0 / pixel_size_nm
    cell = max(int(4 * (sep + 2 * half_len)), 24)
    ts = np.linspace(-half_len, half_len, int(8 * half_len) + 2)
    for cy in range(cell // 2, n - cell // 2, cell):
        for cx in range(cell // 2, n - cell // 2, cell):
            theta = rng.uniform(0, math.pi)
            jy, jx = rng.uniform(-cell / 6, cell / 6, 2)
            u = np.array([math.cos(theta), math.sin(theta)])
            v = np.array([-u[1], u[0]])
            for side in (-0.5, 0.5):
                base = np.array([cy + jy, cx + jx]) + side * sep * v
                pts = base[None, :] + ts[:, None] * u[None, :]
                idx = np.floor(pts).astype(int)
                ok = np.all((idx >= 0) & (idx < n), axis=1)
                img[idx[ok, 0], idx[ok, 1]] = 1.0
    return GridSignal(img, pixel_size_nm, {"strand_separation_px": sep})


def phantom(kind: str, n: int) -> GridSignal:
    if kind == "circles_squares_lines":
        return circles_squares_lines(n)
    if kind == "origami":
        return origami(n)
    raise NoiseError(f"unknown phantom {kind!r}")
