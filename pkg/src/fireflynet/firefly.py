"""Firefly swarm that lays out excitatory/inhibitory topology.

A population of point agents lives in the unit square over the cell
grid.  Each agent's brightness is the activity of its nearest cell;
agents drift toward brighter ones with a distance-decaying attraction
b * exp(-gamma * r^2) plus a small uniform jitter, then a settling pass
pushes any pair closer than d_min apart.  After some steps the swarm
clusters around active cells, and a signed coupling matrix is read off:
excitatory agents near a cell contribute positive weight to it, the
inhibitory minority contributes negative weight.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .dynamics import WeightMatrix
from .errors import FormatError, ParameterError, ShapeMismatchError
from .patterns import Pattern

DEFAULT_B = 1.0
DEFAULT_GAMMA = 4.0
DEFAULT_ETA = 0.05
DEFAULT_D_MIN = 0.05
DEFAULT_STEPS = 10
DEFAULT_EXCIT_FRACTION = 0.7
DEFAULT_POPULATION_FACTOR = 1.0
DEFAULT_INHIB_PITCHES = 3.0
DEFAULT_INHIBITION_GAIN = 1.0

# Width of the weight-synthesis kernel, in grid-cell pitches.
DEFAULT_KERNEL_PITCHES = 1.5

# Settling passes before giving up on the spacing constraint, the slack
# under d_min that counts as satisfied (pushes below this fall under
# floating-point resolution near the middle of the unit square), and the
# overshoot past d_min each split aims for.  Pushing exactly to d_min
# approaches the constraint geometrically and never terminates; the 5%
# margin makes each violation resolve in one shove.
MAX_SETTLE_SWEEPS = 100
SETTLE_EPS = 1e-9
SETTLE_OVERSHOOT = 1.05

_FLOAT_FMT = "%.17g"


class Polarity(Enum):
    EXCITATORY = "E"
    INHIBITORY = "I"


@dataclass(frozen=True)
class Firefly:
    """Snapshot of a single agent."""

    position: tuple[float, float]
    polarity: Polarity
    brightness: float


@dataclass(frozen=True)
class SwarmParams:
    """Swarm movement and sizing knobs.

    ``seed`` feeds a fresh population's generator; leave it None when the
    owner derives the generator from its own seed hierarchy.
    ``reset_per_pattern`` redraws positions before each presentation
    instead of letting the swarm carry over and redistribute.
    """

    b: float = DEFAULT_B
    gamma: float = DEFAULT_GAMMA
    eta: float = DEFAULT_ETA
    d_min: float = DEFAULT_D_MIN
    steps: int = DEFAULT_STEPS
    seed: int | None = None
    excit_fraction: float = DEFAULT_EXCIT_FRACTION
    population_factor: float = DEFAULT_POPULATION_FACTOR
    reset_per_pattern: bool = False
    kernel_pitches: float = DEFAULT_KERNEL_PITCHES
    inhib_pitches: float = DEFAULT_INHIB_PITCHES
    inhibition_gain: float = DEFAULT_INHIBITION_GAIN

    def __post_init__(self) -> None:
        if self.b <= 0.0:
            raise ParameterError(f"attraction b must be > 0, got {self.b}")
        if self.gamma <= 0.0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")
        if self.eta < 0.0:
            raise ParameterError(f"eta must be >= 0, got {self.eta}")
        if self.d_min < 0.0:
            raise ParameterError(f"d_min must be >= 0, got {self.d_min}")
        if self.steps < 0:
            raise ParameterError(f"steps must be >= 0, got {self.steps}")
        if not 0.0 <= self.excit_fraction <= 1.0:
            raise ParameterError(f"excit_fraction must lie in [0,1], got {self.excit_fraction}")
        if self.population_factor <= 0.0:
            raise ParameterError(f"population_factor must be > 0, got {self.population_factor}")
        if self.kernel_pitches <= 0.0:
            raise ParameterError(f"kernel_pitches must be > 0, got {self.kernel_pitches}")
        if self.inhib_pitches <= 0.0:
            raise ParameterError(f"inhib_pitches must be > 0, got {self.inhib_pitches}")
        if self.inhibition_gain < 0.0:
            raise ParameterError(f"inhibition_gain must be >= 0, got {self.inhibition_gain}")


@dataclass(frozen=True)
class GridLayout:
    """Maps the N cells onto the unit square (cell centers, row-major)."""

    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ParameterError(f"layout sides must be >= 1, got {self.rows}x{self.cols}")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def pitch(self) -> float:
        """Spacing of neighboring cell centers along the finer axis."""
        return 1.0 / max(self.rows, self.cols)

    def cell_positions(self) -> np.ndarray:
        """(n, 2) array of (x, y) centers; x runs along columns."""
        r, c = np.divmod(np.arange(self.n), self.cols)
        x = (c + 0.5) / self.cols
        y = (r + 0.5) / self.rows
        return np.column_stack([x, y])

    def nearest_cell(self, points: np.ndarray) -> np.ndarray:
        """Row-major index of the cell whose center is closest to each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        col = np.clip(np.floor(pts[:, 0] * self.cols).astype(int), 0, self.cols - 1)
        row = np.clip(np.floor(pts[:, 1] * self.rows).astype(int), 0, self.rows - 1)
        return row * self.cols + col


@dataclass
class FireflyPopulation:
    """Mutable swarm state owned by a single simulation.

    Stored as parallel arrays for speed; the ``flies`` property gives the
    per-agent view.  ``settle_converged`` reports whether the last
    spacing pass met d_min everywhere (best effort near walls).
    """

    positions: np.ndarray  # (F, 2) in [0, 1]^2
    excitatory: np.ndarray  # (F,) bool
    brightness: np.ndarray  # (F,) float
    params: SwarmParams
    rng: np.random.Generator
    settle_converged: bool = True

    @classmethod
    def spawn(
        cls,
        count: int,
        params: SwarmParams,
        rng: np.random.Generator | None = None,
    ) -> "FireflyPopulation":
        """Uniform positions; the first round(count * excit_fraction) agents
        are excitatory, the rest inhibitory."""
        if count < 1:
            raise ParameterError(f"population count must be >= 1, got {count}")
        if rng is None:
            rng = np.random.default_rng(params.seed)
        n_excit = int(round(count * params.excit_fraction))
        excitatory = np.zeros(count, dtype=bool)
        excitatory[:n_excit] = True
        positions = rng.random((count, 2))
        return cls(
            positions=positions,
            excitatory=excitatory,
            brightness=np.zeros(count),
            params=params,
            rng=rng,
        )

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    @property
    def flies(self) -> list[Firefly]:
        return [
            Firefly(
                position=(float(x), float(y)),
                polarity=Polarity.EXCITATORY if exc else Polarity.INHIBITORY,
                brightness=float(br),
            )
            for (x, y), exc, br in zip(self.positions, self.excitatory, self.brightness)
        ]

    @property
    def n_excitatory(self) -> int:
        return int(self.excitatory.sum())

    @property
    def n_inhibitory(self) -> int:
        return len(self) - self.n_excitatory

    def redraw_positions(self) -> None:
        """Fresh uniform positions; polarities and generator carry over."""
        self.positions = self.rng.random((len(self), 2))
        self.brightness = np.zeros(len(self))


def brightness(b: float, gamma: float, r: float) -> float:
    """Brightness seen across distance r: b * exp(-gamma * r^2)."""
    if b <= 0.0 or gamma <= 0.0:
        raise ParameterError(f"b and gamma must be > 0, got ({b}, {gamma})")
    return b * math.exp(-gamma * r * r)


def move(
    x_i: tuple[float, float],
    x_j: tuple[float, float],
    params: SwarmParams,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One attraction step of agent i toward a brighter agent j.

    x_i += b * exp(-gamma * r^2) * (x_j - x_i) + eta * (u - 1/2) per
    coordinate (u drawn per coordinate, x first), clipped to the unit
    square.  With eta = 0 the update is a contraction toward x_j.
    """
    dx = x_j[0] - x_i[0]
    dy = x_j[1] - x_i[1]
    attract = params.b * math.exp(-params.gamma * (dx * dx + dy * dy))
    nx = x_i[0] + attract * dx + params.eta * (float(rng.random()) - 0.5)
    ny = x_i[1] + attract * dy + params.eta * (float(rng.random()) - 0.5)
    return (min(max(nx, 0.0), 1.0), min(max(ny, 0.0), 1.0))


def swarm_step(
    pop: FireflyPopulation, activity: Pattern, layout: GridLayout
) -> FireflyPopulation:
    """One full swarm update against a fixed activity pattern.

    Brightness is refreshed from the nearest cell's activity, then every
    agent moves toward each strictly brighter agent in one in-place pass
    (ascending index, updated positions visible within the pass), and
    finally the spacing constraint is settled.  Mutates and returns pop.
    """
    if activity.n != layout.n:
        raise ShapeMismatchError(
            f"activity length {activity.n} does not match layout size {layout.n}"
        )
    count = len(pop)
    nearest = layout.nearest_cell(pop.positions)
    pop.brightness = activity.values[nearest].astype(float)

    bright = pop.brightness.tolist()
    # Move count is fixed by the brightness ranking, so the jitter for the
    # whole pass can be drawn as one block without changing the stream.
    sorted_bright = sorted(bright)
    n_moves = sum(count - bisect_right(sorted_bright, bi) for bi in bright)
    noise = pop.rng.random(2 * n_moves).tolist() if n_moves else []

    b_att = pop.params.b
    gamma = pop.params.gamma
    eta = pop.params.eta
    pos = [(float(p[0]), float(p[1])) for p in pop.positions]
    k = 0
    for i in range(count):
        xi, yi = pos[i]
        bi = bright[i]
        for j in range(count):
            if bright[j] > bi:
                xj, yj = pos[j]
                dx = xj - xi
                dy = yj - yi
                attract = b_att * math.exp(-gamma * (dx * dx + dy * dy))
                xi += attract * dx + eta * (noise[k] - 0.5)
                yi += attract * dy + eta * (noise[k + 1] - 0.5)
                k += 2
                if xi < 0.0:
                    xi = 0.0
                elif xi > 1.0:
                    xi = 1.0
                if yi < 0.0:
                    yi = 0.0
                elif yi > 1.0:
                    yi = 1.0
        pos[i] = (xi, yi)
    pop.positions = np.asarray(pos, dtype=float)
    return enforce_min_distance(pop)


def enforce_min_distance(pop: FireflyPopulation) -> FireflyPopulation:
    """Push agent pairs closer than d_min symmetrically apart.

    Each sweep finds every violating pair and splits it along the
    separation vector, half the deficit per side aiming slightly past
    d_min (a seeded random direction for coincident agents); the
    accumulated displacements are applied together, clipped to the unit
    square.  Stops when a sweep finds no violation (to within
    SETTLE_EPS, below which pushes fall under floating-point resolution)
    or after MAX_SETTLE_SWEEPS; the outcome lands in settle_converged
    and the best-effort positions are kept either way.
    """
    d_min = pop.params.d_min
    count = len(pop)
    if d_min <= 0.0 or count < 2:
        pop.settle_converged = True
        return pop

    pos = pop.positions.copy()
    converged = False
    for _ in range(MAX_SETTLE_SWEEPS):
        sep = pos[None, :, :] - pos[:, None, :]  # sep[i, j] points i -> j
        dist = np.sqrt((sep * sep).sum(axis=2))
        ii, jj = np.triu_indices(count, k=1)
        bad = dist[ii, jj] < d_min - SETTLE_EPS
        if not bad.any():
            converged = True
            break
        bi, bj = ii[bad], jj[bad]
        gaps = dist[bi, bj]
        directions = np.empty((bi.size, 2))
        touching = gaps < 1e-15
        if touching.any():
            angles = 2.0 * math.pi * pop.rng.random(int(touching.sum()))
            directions[touching] = np.column_stack([np.cos(angles), np.sin(angles)])
        apart = ~touching
        directions[apart] = sep[bi[apart], bj[apart]] / gaps[apart, None]
        push = 0.5 * (SETTLE_OVERSHOOT * d_min - gaps)[:, None] * directions
        shift = np.zeros_like(pos)
        np.add.at(shift, bi, -push)
        np.add.at(shift, bj, push)
        moved = np.clip(pos + shift, 0.0, 1.0)
        if np.abs(moved - pos).max() < 1e-12:
            # clipping cancelled every push (wall deadlock); no progress
            # possible, keep the best-effort layout
            pos = moved
            break
        pos = moved
    pop.positions = pos
    pop.settle_converged = converged
    return pop


def synthesize_weights(
    pop: FireflyPopulation,
    layout: GridLayout,
    n: int,
    *,
    v: float = 0.5,
    kernel_pitches: float = DEFAULT_KERNEL_PITCHES,
    inhib_pitches: float | None = None,
    inhibition_gain: float = 1.0,
    inhibition_cap: float | None = None,
) -> WeightMatrix:
    """Read a signed coupling matrix off the swarm's spatial arrangement.

    Every agent is assigned to its nearest cell j and contributes
    sign * b * exp(-dist(cell_i, agent)^2 / (2 sigma^2)) to each w_ij.
    Excitatory agents deposit with a narrow kernel (sigma =
    kernel_pitches grid pitches); inhibitory agents deposit with a wide
    one (inhib_pitches, default 3x the excitatory width) scaled by
    inhibition_gain, giving the center-surround shape: cells under the
    swarm see mostly excitation, cells away from it mostly inhibition.

    The diagonal is zeroed, each row is scaled so its positive part sums
    to at most 1, and entries are clipped into [-inhibition_cap, v] (cap
    defaults to v/2).  Rows whose positive mass already sits below 1 are
    left alone, with two effects: cells far from every agent keep
    near-zero excitation instead of having kernel dust blown up to full
    strength, and they keep their full inhibitory surround while rows
    under the swarm have theirs divided down with the excitatory mass.

    Requires at least one excitatory agent; without any positive mass
    the row scaling is undefined.
    """
    if n != layout.n:
        raise ShapeMismatchError(f"requested size {n} does not match layout size {layout.n}")
    if len(pop) == 0 or pop.n_excitatory == 0:
        raise ParameterError("population lacking excitatory polarity; cannot synthesize weights")
    if inhibition_cap is None:
        inhibition_cap = 0.5 * v
    if inhib_pitches is None:
        inhib_pitches = 3.0 * kernel_pitches
    if v <= 0.0 or inhibition_cap < 0.0:
        raise ParameterError(f"need v > 0 and inhibition_cap >= 0, got ({v}, {inhibition_cap})")
    if inhib_pitches <= 0.0 or inhibition_gain < 0.0:
        raise ParameterError(
            f"need inhib_pitches > 0 and inhibition_gain >= 0, got ({inhib_pitches}, {inhibition_gain})"
        )

    cells = layout.cell_positions()
    assigned = layout.nearest_cell(pop.positions)
    # kernel[i, f] = strength agent f contributes at cell i
    d2 = ((cells[:, None, :] - pop.positions[None, :, :]) ** 2).sum(axis=2)
    sig_e = kernel_pitches * layout.pitch
    sig_i = inhib_pitches * layout.pitch
    kernel = np.where(
        pop.excitatory[None, :],
        pop.params.b * np.exp(-d2 / (2.0 * sig_e * sig_e)),
        -inhibition_gain * pop.params.b * np.exp(-d2 / (2.0 * sig_i * sig_i)),
    )

    w = np.zeros((n, n))
    np.add.at(w.T, assigned, kernel.T)
    np.fill_diagonal(w, 0.0)

    pos_sums = np.clip(w, 0.0, None).sum(axis=1, keepdims=True)
    w = w / np.maximum(pos_sums, 1.0)
    w = np.clip(w, -inhibition_cap, v)
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w)


# ---------------------------------------------------------------------------
# population snapshot IO
# ---------------------------------------------------------------------------

def save_population_csv(pop: FireflyPopulation, path: str | Path) -> None:
    """One row per agent: x, y, polarity (E/I), brightness."""
    lines = ["x,y,polarity,brightness"]
    for (x, y), exc, br in zip(pop.positions, pop.excitatory, pop.brightness):
        code = Polarity.EXCITATORY.value if exc else Polarity.INHIBITORY.value
        lines.append(f"{_FLOAT_FMT % x},{_FLOAT_FMT % y},{code},{_FLOAT_FMT % br}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_population_csv(
    path: str | Path, params: SwarmParams, rng: np.random.Generator | None = None
) -> FireflyPopulation:
    """Rebuild a population snapshot; generator state is fresh, not restored."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != "x,y,polarity,brightness":
        raise FormatError(f"malformed population header in {path}")
    positions = []
    excitatory = []
    bright = []
    for ln in lines[1:]:
        fields = ln.split(",")
        if len(fields) != 4:
            raise FormatError(f"malformed population row in {path}: {ln!r}")
        if fields[2] not in (Polarity.EXCITATORY.value, Polarity.INHIBITORY.value):
            raise FormatError(f"unknown polarity {fields[2]!r} in {path}")
        try:
            positions.append((float(fields[0]), float(fields[1])))
            bright.append(float(fields[3]))
        except ValueError as exc:
            raise FormatError(f"non-numeric value in {path}: {ln!r}") from exc
        excitatory.append(fields[2] == Polarity.EXCITATORY.value)
    if not positions:
        raise FormatError(f"population file has no agents: {path}")
    return FireflyPopulation(
        positions=np.asarray(positions, dtype=float),
        excitatory=np.asarray(excitatory, dtype=bool),
        brightness=np.asarray(bright, dtype=float),
        params=params,
        rng=rng if rng is not None else np.random.default_rng(params.seed),
    )
