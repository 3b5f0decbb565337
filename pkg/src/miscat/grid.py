"""Regular-grid fields and the plain-text PGRID format.

A PGRID file is one header line ``PGRID d n pixel_size`` followed by the
``n**d`` values in row-major order. Values are written with 17 significant
digits so that a write/read cycle reproduces the array bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSignal:
    """A real field sampled on the regular grid ``{j/n : j = 1..n}^d``.

    ``values`` has shape ``(n,)`` for ``d == 1`` and ``(n, n)`` for
    ``d == 2``; axis 0 is the first coordinate.
    """

    values: np.ndarray
    pixel_size: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2):
            raise GridError(f"only d in {{1, 2}} supported, got ndim={v.ndim}")
        if v.ndim == 2 and v.shape[0] != v.shape[1]:
            raise GridError(f"grid must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.ndim

    @classmethod
    def zeros(cls, n: int, d: int = 2, pixel_size: float = 1.0) -> "GridSignal":
        return cls(np.zeros((n,) * d), pixel_size)

    @classmethod
    def full(cls, n: int, value: float, d: int = 2, pixel_size: float = 1.0) -> "GridSignal":
        return cls(np.full((n,) * d, float(value)), pixel_size)

    def with_values(self, values: np.ndarray) -> "GridSignal":
        return GridSignal(values, self.pixel_size, dict(self.meta))


def _fmt(x: float) -> str:
    return repr(float(x)) if np.isfinite(x) else str(x)


def write_pgrid(path, grid: GridSignal, comment: str | None = None) -> None:
    """Write ``grid`` as PGRID. An optional ``# comment`` line follows the header."""
    lines = [f"PGRID {grid.d} {grid.n} {_fmt(grid.pixel_size)}"]
    if comment:
        lines.append("# " + comment.replace("\n", " "))
    flat = grid.values.reshape(-1)
    row = grid.n
    for start in range(0, flat.size, row):
        lines.append(" ".join(f"{x:.17g}" for x in flat[start:start + row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgrid(path) -> GridSignal:
    text = Path(path).read_text().splitlines()
    if not text:
        raise GridError(f"{path}: empty file")
    head = text[0].split()
    if len(head) != 4 or head[0] != "PGRID":
        raise GridError(f"{path}: bad header {text[0]!r}")
    d, n, pixel_size = int(head[1]), int(head[2]), float(head[3])
    meta = {}
    body = []
    for line in text[1:]:
        if line.startswith("#"):
            meta["comment"] = line[1:].strip()
            continue
        body.append(line)
    values = np.array(" ".join(body).split(), dtype=float)
    if values.size != n ** d:
        raise GridError(f"{path}: expected {n ** d} values, found {values.size}")
    return GridSignal(values.reshape((n,) * d), pixel_size, meta)


def write_pgm(path, grid: GridSignal) -> None:
    """8-bit binary PGM of a 2-D grid, linearly rescaled to 0..255."""
    if grid.d != 2:
        raise GridError("PGM export needs a 2-D grid")
    v = grid.values
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    img = np.round(255 * scaled).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.n} {grid.n}\n255\n".encode())
        fh.write(img.tobytes())
