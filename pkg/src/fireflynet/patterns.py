"""Activity patterns: generation, corruption, and file round-tripping.

A pattern is a non-negative activity vector, optionally arranged on a 2D
grid (row-major).  Generators return unit-norm patterns; corruption
helpers (noise, masking, fusion) renormalize their output so downstream
similarity metrics stay scale-free.

Supported file formats:
  * pattern CSV: first line ``rows,cols``, then ``rows`` lines of
    ``cols`` comma-separated reals
  * PGM images, both ASCII (P2) and binary (P5), 8-bit only
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    FormatError,
    ParameterError,
    PatternAnnihilatedError,
    ShapeMismatchError,
)

# Below this Euclidean norm a vector counts as annihilated.
NORM_EPS = 1e-12

# Default active-set threshold, as a fraction of the peak entry.
DEFAULT_ACTIVE_FRACTION = 0.1

_FLOAT_FMT = "%.17g"


def _unit(values: np.ndarray) -> np.ndarray:
    """Scale to unit Euclidean norm; reject all-zero input."""
    norm = math.sqrt(float(np.dot(values, values)))
    if norm <= NORM_EPS:
        raise PatternAnnihilatedError("pattern annihilated: zero norm after operation")
    return values / norm


@dataclass(frozen=True)
class Pattern:
    """Non-negative activity vector with optional grid arrangement.

    Attributes:
        values: 1D float array, entries >= 0 and finite.
        grid: (rows, cols) when the vector is a row-major flattening of a
            2D grid, or None for a plain 1D line of cells.
        label: optional name used for stored-template matching.
    """

    values: np.ndarray
    grid: tuple[int, int] | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ParameterError(f"pattern values must be a non-empty 1D vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("pattern values must be finite")
        if np.any(v < 0.0):
            raise ParameterError("pattern values must be non-negative")
        object.__setattr__(self, "values", v)
        if self.grid is not None:
            rows, cols = self.grid
            if rows < 1 or cols < 1:
                raise ParameterError(f"grid sides must be positive, got {self.grid}")
            if rows * cols != v.size:
                raise ShapeMismatchError(
                    f"grid {rows}x{cols} does not match vector length {v.size}"
                )

    @property
    def n(self) -> int:
        return int(self.values.size)

    def normalize(self) -> "Pattern":
        """Return a unit-norm copy; raises PatternAnnihilatedError on zero input."""
        return Pattern(_unit(self.values), grid=self.grid, label=self.label)

    def as_grid(self) -> np.ndarray:
        """Reshape to (rows, cols); a line comes back as a single row."""
        rows, cols = self.grid if self.grid is not None else (1, self.n)
        return self.values.reshape(rows, cols)

    def same_layout(self, other: "Pattern") -> bool:
        return self.n == other.n and self.grid == other.grid


def cosine(a: Pattern | np.ndarray, b: Pattern | np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is all-zero.

    Equals 1 exactly when the two vectors are positive multiples of each
    other, which is what recall-quality metrics rely on.
    """
    va = a.values if isinstance(a, Pattern) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, Pattern) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ShapeMismatchError(f"cosine over mismatched shapes {va.shape} vs {vb.shape}")
    na = math.sqrt(float(np.dot(va, va)))
    nb = math.sqrt(float(np.dot(vb, vb)))
    if na <= NORM_EPS or nb <= NORM_EPS:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gaussian_1d(
    n: int,
    center: float,
    sigma: float,
    *,
    wrap: bool = False,
    label: str | None = None,
) -> Pattern:
    """Unit-norm Gaussian bump on a line of ``n`` cells.

    Args:
        n: number of cells, >= 1.
        center: bump location in cell coordinates (may be fractional).
        sigma: width in cells, > 0.
        wrap: use circular distance to the center, making the generator
            exactly covariant under periodic index shifts.
        label: optional template label.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if sigma <= 0.0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    x = np.arange(n, dtype=float)
    if wrap:
        d = np.abs((x - center) % n)
        d = np.minimum(d, n - d)
    else:
        d = x - center
    g = np.exp(-0.5 * (d / sigma) ** 2)
    return Pattern(_unit(g), grid=None, label=label)


def gaussian_2d(
    rows: int,
    cols: int,
    center_x: float,
    center_y: float,
    sigma_x: float,
    sigma_y: float,
    *,
    wrap: bool = False,
    label: str | None = None,
) -> Pattern:
    """Unit-norm separable Gaussian bump on a rows x cols grid.

    ``x`` runs along columns and ``y`` along rows, so the peak of a bump
    centered at integer coordinates sits at entry (center_y, center_x) of
    the grid, flat index ``center_y * cols + center_x``.
    """
    if rows < 1 or cols < 1:
        raise ParameterError(f"grid sides must be >= 1, got {rows}x{cols}")
    if sigma_x <= 0.0 or sigma_y <= 0.0:
        raise ParameterError(f"sigmas must be > 0, got ({sigma_x}, {sigma_y})")

    def axis_profile(size: int, center: float, sigma: float) -> np.ndarray:
        coords = np.arange(size, dtype=float)
        if wrap:
            d = np.abs((coords - center) % size)
            d = np.minimum(d, size - d)
        else:
            d = coords - center
        return np.exp(-0.5 * (d / sigma) ** 2)

    gx = axis_profile(cols, center_x, sigma_x)
    gy = axis_profile(rows, center_y, sigma_y)
    g = np.outer(gy, gx).ravel()
    return Pattern(_unit(g), grid=(rows, cols), label=label)


# ---------------------------------------------------------------------------
# corruption
# ---------------------------------------------------------------------------

def add_noise(p: Pattern, level: float, seed: int) -> Pattern:
    """Add iid zero-mean Gaussian noise (std = level), clamp at 0, renormalize.

    level = 0 returns the input unchanged.  The perturbation is exactly
    ``default_rng(seed).normal(0, level, n)``, which keeps the operation
    reproducible for a fixed seed.
    """
    if level < 0.0:
        raise ParameterError(f"noise level must be >= 0, got {level}")
    if level == 0.0:
        return p
    rng = np.random.default_rng(seed)
    noisy = p.values + rng.normal(0.0, level, p.n)
    np.clip(noisy, 0.0, None, out=noisy)
    return Pattern(_unit(noisy), grid=p.grid, label=p.label)


def fuse(p1: Pattern, p2: Pattern, w1: float, w2: float) -> Pattern:
    """Entrywise weighted sum of two same-layout patterns, renormalized."""
    if not p1.same_layout(p2):
        raise ShapeMismatchError(
            f"cannot fuse layouts n={p1.n}/grid={p1.grid} and n={p2.n}/grid={p2.grid}"
        )
    if w1 < 0.0 or w2 < 0.0 or (w1 == 0.0 and w2 == 0.0):
        raise ParameterError(f"fusion weights must be >= 0 and not both zero, got ({w1}, {w2})")
    return Pattern(_unit(w1 * p1.values + w2 * p2.values), grid=p1.grid)


def mask(p: Pattern, masked_indices: Iterable[int]) -> Pattern:
    """Zero the listed entries and renormalize.

    An empty index set returns the input unchanged.  Masking away every
    nonzero entry raises PatternAnnihilatedError.
    """
    idx = sorted(set(int(i) for i in masked_indices))
    if not idx:
        return p
    if idx[0] < 0 or idx[-1] >= p.n:
        raise ParameterError(f"mask indices out of range for n={p.n}: {idx[0]}..{idx[-1]}")
    out = p.values.copy()
    out[idx] = 0.0
    return Pattern(_unit(out), grid=p.grid, label=p.label)


# ---------------------------------------------------------------------------
# active set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActiveSet:
    """Sorted indices of cells whose activity exceeds a threshold."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, i: int) -> bool:
        return i in set(self.indices)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)


def active_set(p: Pattern, threshold: float) -> ActiveSet:
    """Indices with activity strictly above ``threshold`` (>= 0)."""
    if threshold < 0.0:
        raise ParameterError(f"threshold must be >= 0, got {threshold}")
    return ActiveSet(tuple(int(i) for i in np.flatnonzero(p.values > threshold)))


def relative_threshold(p: Pattern, fraction: float = DEFAULT_ACTIVE_FRACTION) -> float:
    """Threshold at ``fraction`` of the peak entry (0 for an all-zero pattern)."""
    if fraction < 0.0:
        raise ParameterError(f"fraction must be >= 0, got {fraction}")
    return fraction * float(p.values.max())


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def save_pattern_csv(p: Pattern, path: str | Path) -> None:
    """Write the ``rows,cols`` header then the grid values, row-major."""
    rows, cols = p.grid if p.grid is not None else (1, p.n)
    table = p.values.reshape(rows, cols)
    lines = [f"{rows},{cols}"]
    for r in range(rows):
        lines.append(",".join(_FLOAT_FMT % x for x in table[r]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_pattern_csv(path: str | Path) -> Pattern:
    """Load a pattern CSV; the result is renormalized."""
    text = Path(path).read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"empty pattern file: {path}")
    head = lines[0].split(",")
    if len(head) != 2:
        raise FormatError(f"malformed pattern header {lines[0]!r} in {path}")
    try:
        rows, cols = int(head[0]), int(head[1])
    except ValueError as exc:
        raise FormatError(f"malformed pattern header {lines[0]!r} in {path}") from exc
    if rows < 1 or cols < 1:
        raise FormatError(f"non-positive dimensions {rows}x{cols} in {path}")
    if len(lines) - 1 != rows:
        raise ShapeMismatchError(f"{path}: header says {rows} rows, file has {len(lines) - 1}")
    values: list[float] = []
    for ln in lines[1:]:
        fields = ln.split(",")
        if len(fields) != cols:
            raise ShapeMismatchError(f"{path}: header says {cols} cols, row has {len(fields)}")
        try:
            values.extend(float(f) for f in fields)
        except ValueError as exc:
            raise FormatError(f"non-numeric value in {path}: {ln!r}") from exc
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0.0):
        raise FormatError(f"negative activity value in {path}")
    return Pattern(_unit(arr), grid=(rows, cols))


def save_pgm(p: Pattern, path: str | Path, *, binary: bool = True) -> None:
    """Write an 8-bit PGM; values are scaled so the peak maps to 255."""
    rows, cols = p.grid if p.grid is not None else (1, p.n)
    peak = float(p.values.max())
    if peak <= 0.0:
        raise PatternAnnihilatedError("pattern annihilated: cannot render all-zero image")
    pixels = np.rint(p.values / peak * 255.0).astype(np.uint8).reshape(rows, cols)
    if binary:
        header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
        Path(path).write_bytes(header + pixels.tobytes())
    else:
        body = "\n".join(" ".join(str(int(x)) for x in row) for row in pixels)
        Path(path).write_text(f"P2\n{cols} {rows}\n255\n{body}\n")


def _pgm_header_tokens(data: bytes, path: str | Path) -> tuple[list[int], int]:
    """Parse magic-trailing header ints (width, height, maxval), skipping comments.

    Returns the three ints and the offset where pixel data starts.
    """
    pos = 2  # past the magic
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tok = data[start:pos]
        if not tok:
            raise FormatError(f"truncated PGM header in {path}")
        try:
            tokens.append(int(tok))
        except ValueError as exc:
            raise FormatError(f"non-numeric PGM header token {tok!r} in {path}") from exc
    return tokens, pos + 1  # single whitespace byte separates header from raster


def load_image(path: str | Path) -> Pattern:
    """Load a PGM (P2/P5) or pattern CSV; grayscale goes to [0,1], then unit norm."""
    data = Path(path).read_bytes()
    if not data:
        raise FormatError(f"empty image file: {path}")
    magic = data[:2]
    if magic == b"P5":
        (cols, rows, maxval), offset = _pgm_header_tokens(data, path)
        if maxval < 1 or maxval > 255:
            raise FormatError(f"unsupported PGM maxval {maxval} in {path} (8-bit only)")
        raster = data[offset : offset + rows * cols]
        if len(raster) != rows * cols:
            raise ShapeMismatchError(
                f"{path}: PGM raster has {len(raster)} bytes, header implies {rows * cols}"
            )
        arr = np.frombuffer(raster, dtype=np.uint8).astype(float) / float(maxval)
        return Pattern(_unit(arr), grid=(rows, cols))
    if magic == b"P2":
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise FormatError(f"P2 file is not ASCII: {path}") from exc
        body = "\n".join(ln.split("#", 1)[0] for ln in text.splitlines())
        fields = body.split()
        if len(fields) < 4:
            raise FormatError(f"truncated P2 header in {path}")
        try:
            cols, rows, maxval = int(fields[1]), int(fields[2]), int(fields[3])
            pixels = [int(f) for f in fields[4:]]
        except ValueError as exc:
            raise FormatError(f"non-numeric token in P2 file {path}") from exc
        if maxval < 1 or maxval > 255:
            raise FormatError(f"unsupported PGM maxval {maxval} in {path} (8-bit only)")
        if len(pixels) != rows * cols:
            raise ShapeMismatchError(
                f"{path}: P2 raster has {len(pixels)} samples, header implies {rows * cols}"
            )
        arr = np.asarray(pixels, dtype=float) / float(maxval)
        return Pattern(_unit(arr), grid=(rows, cols))
    return load_pattern_csv(path)


def save_image(p: Pattern, path: str | Path) -> None:
    """Dispatch on extension: .pgm writes binary PGM, .csv writes pattern CSV."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        save_pgm(p, path)
    elif suffix == ".csv":
        save_pattern_csv(p, path)
    else:
        raise ParameterError(f"unsupported image extension {suffix!r} (use .pgm or .csv)")
