"""Linear network response: truncated resolvent and source correlations.

The recurrent layer is linearized around its operating point, so the
equilibrium response to a source vector s is (I - W)^-1 s.  The inverse
is approximated by the third-order expansion D = I + W + W^2 + W^3,
which is cheap, always defined, and accurate when row sums of |W| stay
well below 1 (truncation error is bounded by q^4/(1-q) in the infinity
norm for q = max absolute row sum).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ShapeMismatchError
from .patterns import ActiveSet, Pattern

_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class WeightMatrix:
    """Square lateral-coupling matrix with a hard zero diagonal."""

    w: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.w, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ParameterError(f"weight matrix must be square and non-empty, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("weight matrix entries must be finite")
        if np.any(np.diagonal(a) != 0.0):
            raise ParameterError("weight matrix diagonal must be exactly zero")
        object.__setattr__(self, "w", a)

    @property
    def n(self) -> int:
        return int(self.w.shape[0])

    @property
    def max_abs_row_sum(self) -> float:
        """Infinity norm; controls resolvent truncation quality."""
        return float(np.abs(self.w).sum(axis=1).max())

    def positive_part(self) -> np.ndarray:
        return np.clip(self.w, 0.0, None)

    def negative_part(self) -> np.ndarray:
        return np.clip(self.w, None, 0.0)

    @classmethod
    def zeros(cls, n: int) -> "WeightMatrix":
        if n < 1:
            raise ParameterError(f"n must be >= 1, got {n}")
        return cls(np.zeros((n, n)))


@dataclass(frozen=True)
class Resolvent:
    """Third-order truncation of (I - W)^-1."""

    d: np.ndarray

    @property
    def n(self) -> int:
        return int(self.d.shape[0])


def truncated_resolvent(w: WeightMatrix) -> Resolvent:
    """D = I + W + W^2 + W^3, computed fresh from the given weights."""
    a = w.w
    a2 = a @ a
    d = np.eye(w.n) + a + a2 + a2 @ a
    return Resolvent(d)


def equilibrium_response(d: Resolvent, s: Pattern) -> tuple[Pattern, np.ndarray]:
    """Linear response to a source pattern.

    Returns the response clamped at zero (reported as activity, no
    normalization applied) plus the raw signed vector for diagnostics.
    """
    if s.n != d.n:
        raise ShapeMismatchError(f"source length {s.n} does not match network size {d.n}")
    raw = d.d @ s.values
    activity = np.clip(raw, 0.0, None)
    return Pattern(activity, grid=s.grid, label=s.label), raw


@dataclass(frozen=True)
class CorrelationTensor:
    """Pairwise response correlations induced by a set of unit sources.

    t[i, j] = sum over sources k in the set of D[i, k] * D[j, k]: the
    correlation of responses at i and j when every cell of the source set
    fires independently with unit strength.  Symmetric and positive
    semidefinite by construction.  An empty source set is legal and gives
    the all-zeros tensor (visible through ``source_set``).
    """

    t: np.ndarray
    source_set: ActiveSet

    @property
    def n(self) -> int:
        return int(self.t.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self.source_set) == 0


def correlation_tensor(d: Resolvent, s_set: ActiveSet) -> CorrelationTensor:
    if len(s_set) == 0:
        return CorrelationTensor(np.zeros((d.n, d.n)), s_set)
    idx = s_set.to_array()
    if idx[0] < 0 or idx[-1] >= d.n:
        raise ParameterError(f"source indices out of range for n={d.n}: {idx[0]}..{idx[-1]}")
    cols = d.d[:, idx]
    return CorrelationTensor(cols @ cols.T, s_set)


# ---------------------------------------------------------------------------
# matrix file IO (shared by weights, resolvents, tensors)
# ---------------------------------------------------------------------------

def save_matrix_csv(a: np.ndarray, path: str | Path) -> None:
    """First line n, then n rows of n comma-separated reals."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"matrix CSV requires a square matrix, got {m.shape}")
    lines = [str(m.shape[0])]
    for row in m:
        lines.append(",".join(_FLOAT_FMT % x for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix_csv(path: str | Path) -> np.ndarray:
    text = Path(path).read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"empty matrix file: {path}")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise FormatError(f"malformed matrix header {lines[0]!r} in {path}") from exc
    if n < 1:
        raise FormatError(f"non-positive matrix size {n} in {path}")
    if len(lines) - 1 != n:
        raise ShapeMismatchError(f"{path}: header says {n} rows, file has {len(lines) - 1}")
    out = np.empty((n, n))
    for r, ln in enumerate(lines[1:]):
        fields = ln.split(",")
        if len(fields) != n:
            raise ShapeMismatchError(f"{path}: header says {n} cols, row has {len(fields)}")
        try:
            out[r] = [float(f) for f in fields]
        except ValueError as exc:
            raise FormatError(f"non-numeric value in {path}: {ln!r}") from exc
    return out


def save_matrix_pgm(a: np.ndarray, path: str | Path) -> None:
    """Render a matrix as an 8-bit PGM, min-max scaled (flat matrix -> black)."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ParameterError(f"matrix render requires 2D input, got shape {m.shape}")
    lo, hi = float(m.min()), float(m.max())
    scaled = np.zeros_like(m) if hi <= lo else (m - lo) / (hi - lo)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())
