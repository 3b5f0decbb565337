"""Command-line driver: ``miscat <command> [--config FILE] [key=value ...]``.

Configuration is a flat ``key = value`` file (``#`` starts a comment);
``key=value`` arguments after the command override it. Exit codes: 0 on
success (for ``scan``: at least one rejection), 10 when ``scan`` rejects
nothing, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from scipy import fft as sfft

from .calibration import CalibrationParams, select_Cd
from .gauss import TABLE_LEVELS, QuantileTable, config_fingerprint, quantile_table
from .grid import GridSignal, read_pgrid, write_pgrid
from .kernels import ConvolutionKernelSpec, convolve, fwhm, gaussian_fwhm, kurtosis
from .noise import (BinomialSTED, PoissonGauss, generate, parse_noise, phantom, variance_mle,
                    variance_truth)
from .probes import ProbeSpec, Scale, probe_preset
from .scan import (ScanConfig, Scanner, reject_set, rectangle_scales, significance_map,
                   square_scales, write_rejections_csv, write_significance_map)
from .studies import (auto_K, build_dictionary, detection_boundary, level_study, power_study,
                      reference_quantile)

log = logging.getLogger("miscat")

EXIT_OK, EXIT_ERROR, EXIT_NONE = 0, 1, 10
FULL_SCALE = {"n": 512, "reps": 10000}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    name: str = "run"
    n: int = 256
    a: int = 2
    b: float = 0.0243
    probe: str = "correct"
    beta: str = ""
    shape: str = "rect"
    kmin: int = 4
    kmax: int = 30
    kstep: int = 2
    alpha: float = 0.1
    reps: int = 2000
    seed: int = 0
    K: str = "auto"
    Cd: str = "auto"
    sided: str = "one"
    dual: str = "lattice"
    margin: int = 0
    noise: str = "gaussian:0.05"
    phantom: str = "circles_squares_lines"
    pixel_size: float = 1.0
    out_dir: str = "."
    data: str = ""
    variance: str = ""
    quantiles: str = ""
    runs: int = 500
    scenarios: str = "gaussian:1;t:3;poisson:1000,0.005,0.01"
    k_star: int = 16
    power_scales: str = "4,8,16,32,64"
    offsets: str = "null,-1,0,1.5,3"
    power_reps: int = 2000
    presets: str = "correct,oversmooth,undersmooth"
    kernel: str = "symbol"
    gauss_std_px: float = 4.0
    kernel_n: int = 0

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in items.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            conv = {"int": int, "float": float}.get(types[key], str)
            try:
                kwargs[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n < 64 or self.n > 2048 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two in [64, 2048], got {self.n}")
        if self.shape not in ("rect", "square"):
            raise ConfigError("shape must be 'rect' or 'square'")
        if self.sided not in ("one", "two"):
            raise ConfigError("sided must be 'one' or 'two'")
        if not self.scales():
            raise ConfigError("scale list is empty")
        for key in ("data", "variance"):
            path = getattr(self, key)
            if path and not Path(path).exists():
                raise ConfigError(f"{key} file {path} does not exist")

    # --- derived objects ---------------------------------------------------

    def scales(self) -> list[Scale]:
        if self.kmin < 1 or self.kstep < 1 or self.kmax > self.n:
            raise ConfigError("need 1 <= kmin, 1 <= kstep and kmax <= n")
        build = rectangle_scales if self.shape == "rect" else square_scales
        return build(self.n, self.kmin, self.kmax, self.kstep)

    def kernel_spec(self) -> ConvolutionKernelSpec | None:
        return ConvolutionKernelSpec(self.a, self.b) if self.a > 0 else None

    def probe_spec(self, preset: str | None = None) -> ProbeSpec:
        if self.beta and preset is None:
            beta = tuple(int(v) for v in self.beta.split(","))
            return ProbeSpec(beta * 2 if len(beta) == 1 else beta)
        return probe_preset(preset or self.probe, self.a)

    def calibration(self, probe: ProbeSpec, scales) -> CalibrationParams:
        K = auto_K(probe, self.kernel_spec(), scales) if self.K == "auto" else float(self.K)
        system = "dense_full" if self.shape == "rect" else "dense_squares"
        C_d = select_Cd(system, 2, 1.0) if self.Cd == "auto" else float(self.Cd)
        return CalibrationParams(K, C_d)

    def scan_setup(self, preset: str | None = None):
        scales = self.scales()
        probe = self.probe_spec(preset)
        config = ScanConfig(self.n, scales, self.calibration(probe, scales), self.alpha,
                            self.margin, two_sided=self.sided == "two")
        return config, build_dictionary(probe, self.kernel_spec(), scales, self.dual)

    def path(self, key: str, suffix: str) -> Path:
        explicit = getattr(self, key, "")
        return Path(explicit) if explicit else Path(self.out_dir) / f"{self.name}_{suffix}"


def read_config_file(path) -> dict[str, str]:
    items = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        items[key.strip()] = value.strip()
    return items


def parse_overrides(pairs) -> dict[str, str]:
    out = {}
    for p in pairs:
        key, sep, value = p.partition("=")
        if not sep:
            raise ConfigError(f"override {p!r} is not key=value")
        out[key.strip()] = value.strip()
    return out


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# --- commands ----------------------------------------------------------------

def cmd_gen_data(cfg: RunConfig) -> int:
    truth = phantom(cfg.phantom, cfg.n)
    truth = GridSignal(truth.values, cfg.pixel_size)
    kernel = cfg.kernel_spec()
    convolved = convolve(kernel, truth) if kernel else truth
    spec = parse_noise(cfg.noise)
    data = generate(convolved, spec, cfg.seed)
    var = variance_truth(spec, convolved)
    for suffix, grid in (("truth", truth), ("convolved", convolved), ("data", data), ("variance", var)):
        out = Path(cfg.out_dir) / f"{cfg.name}_{suffix}.pgrid"
        out.parent.mkdir(parents=True, exist_ok=True)
        write_pgrid(out, grid)
        print(out)
    return EXIT_OK


def _levels(alpha: float) -> tuple[float, ...]:
    lv = 1.0 - alpha
    if lv <= 0 or any(math.isclose(lv, x, abs_tol=1e-12) for x in TABLE_LEVELS):
        return TABLE_LEVELS
    return tuple(sorted(TABLE_LEVELS + (lv,)))


def cmd_quantiles(cfg: RunConfig) -> int:
    config, dic = cfg.scan_setup()
    table = quantile_table(config, dic, cfg.reps, levels=_levels(cfg.alpha), seed=cfg.seed)
    out = cfg.path("quantiles", "quantiles.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write(out)
    print(out)
    return EXIT_OK


def _variance_for(cfg: RunConfig, Y: GridSignal) -> GridSignal:
    if cfg.variance:
        return read_pgrid(cfg.variance)
    spec = parse_noise(cfg.noise)
    if isinstance(spec, (PoissonGauss, BinomialSTED)):
        return variance_mle(Y, spec)
    return variance_truth(spec, Y)


def cmd_scan(cfg: RunConfig) -> int:
    data_path = cfg.path("data", "data.pgrid")
    q_path = cfg.path("quantiles", "quantiles.csv")
    for p in (data_path, q_path):
        if not p.exists():
            raise ConfigError(f"missing input file {p}")
    Y = read_pgrid(data_path)
    if Y.n != cfg.n:
        raise ConfigError(f"data grid n={Y.n} differs from config n={cfg.n}")
    config, dic = cfg.scan_setup()
    table = QuantileTable.read(q_path)
    fp = config_fingerprint(config, dic)
    if table.fingerprint != fp:
        raise ConfigError(f"quantile table fingerprint {table.fingerprint} does not match scan config {fp}")
    q = table.quantile(1.0 - cfg.alpha) if cfg.alpha < 1 else -math.inf
    stats = Scanner(config, dic).statistics(Y, _variance_for(cfg, Y))
    result = reject_set(stats, q)
    rej_path = Path(cfg.out_dir) / f"{cfg.name}_rejections.csv"
    map_path = Path(cfg.out_dir) / f"{cfg.name}_significance.pgrid"
    rej_path.parent.mkdir(parents=True, exist_ok=True)
    write_rejections_csv(rej_path, result)
    write_significance_map(map_path, significance_map(result, cfg.n))
    print(f"max_statistic={result.max_statistic!r} quantile={q!r} rejections={len(result.rejections)}")
    return EXIT_OK if result.rejections else EXIT_NONE


def cmd_level_study(cfg: RunConfig) -> int:
    config, dic = cfg.scan_setup()
    q = reference_quantile(config, dic, cfg.reps, cfg.seed, 1.0 - cfg.alpha)
    scenarios = [parse_noise(s) for s in cfg.scenarios.split(";") if s.strip()]
    rows = level_study(Scanner(config, dic), q, scenarios, cfg.runs, cfg.seed + 1)
    out = Path(cfg.out_dir) / f"{cfg.name}_level.csv"
    _write_csv(out, ["scenario", "runs", "rejections", "fwer"],
               [(r.scenario, r.runs, r.rejections, r.fwer) for r in rows])
    print(out)
    return EXIT_OK


def _offsets(text: str) -> list[float | None]:
    return [None if v.strip() == "null" else float(v) for v in text.split(",")]


def cmd_power_study(cfg: RunConfig) -> int:
    multi = [Scale((int(k),) * 2, cfg.n) for k in cfg.power_scales.split(",")]
    rows = power_study(cfg.n, cfg.probe_spec(), cfg.kernel_spec(), cfg.k_star, multi, cfg.alpha,
                       _offsets(cfg.offsets), cfg.power_reps, cfg.seed, cfg.reps, cfg.dual)
    out = Path(cfg.out_dir) / f"{cfg.name}_power.csv"
    _write_csv(out, ["offset", "snr", "mu", "predicted", "single", "multi"],
               [("null" if r.offset is None else r.offset, r.snr, r.mu, r.predicted, r.single, r.multi)
                for r in rows])
    print(out)
    return EXIT_OK


def cmd_detection_boundary(cfg: RunConfig) -> int:
    kernel = cfg.kernel_spec()
    if kernel is None:
        raise ConfigError("detection boundary needs a kernel (a > 0)")
    presets = [p.strip() for p in cfg.presets.split(",") if p.strip()]
    quantiles = {}
    C_d = None
    for name in presets:
        config, dic = cfg.scan_setup(name)
        C_d = config.calibration.C_d
        quantiles[name] = reference_quantile(config, dic, cfg.reps, cfg.seed, 1.0 - cfg.alpha)
    rows = detection_boundary(cfg.n, kernel, cfg.scales(), presets, quantiles, C_d, cfg.dual)
    out = Path(cfg.out_dir) / f"{cfg.name}_boundary.csv"
    _write_csv(out, ["preset", "k_x_px", "k_y_px", "area_px", "sigma_max"],
               [(r.preset, *r.pixels, r.area, r.sigma_max) for r in rows])
    print(out)
    return EXIT_OK


def cmd_fwhm(cfg: RunConfig) -> int:
    if cfg.kernel == "gaussian":
        measured, exact = gaussian_fwhm(cfg.gauss_std_px, cfg.n)
        print(f"fwhm_px={measured!r} analytic_px={exact!r}")
        return EXIT_OK
    # the kernel is defined on the unit cube, so its pixel width depends on the
    # sampling grid; kernel_n allows grids that are not powers of two (e.g. 600)
    n = cfg.kernel_n or cfg.n
    kernel = ConvolutionKernelSpec(max(cfg.a, 1), cfg.b)
    w = fwhm(kernel, n)
    print(f"fwhm_px={w!r} fwhm_phys={w * cfg.pixel_size!r} kurtosis={kurtosis(kernel, n)!r}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "quantiles": cmd_quantiles,
    "scan": cmd_scan,
    "level-study": cmd_level_study,
    "power-study": cmd_power_study,
    "detection-boundary": cmd_detection_boundary,
    "fwhm": cmd_fwhm,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="miscat", description="Multiscale inverse scanning test.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("overrides", nargs="*", metavar="key=value")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--threads", type=int, default=1, help="FFT worker cap")
    p.add_argument("--full-scale", action="store_true",
                   help="use n=512 and 10^4 replications (slow)")
    return p


def load_config(args) -> RunConfig:
    items = read_config_file(args.config) if args.config else {}
    if args.full_scale:
        log.warning("full-scale run: n=512, reps=10000; expect hours on one core")
        items.update({k: str(v) for k, v in FULL_SCALE.items()})
    items.update(parse_overrides(args.overrides))
    return RunConfig.from_items(items)


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s: %(message)s")
    args = build_parser().parse_intermixed_args(argv)
    try:
        cfg = load_config(args)
        with sfft.set_workers(max(args.threads, 1)):
            return COMMANDS[args.command](cfg)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
