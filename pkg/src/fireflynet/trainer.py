"""Training lifecycle: wire the swarm, the linear response, and the
weight dynamics into a model that stores and recalls activity patterns.

A model keeps one signed weight matrix.  Its positive part is what the
competitive rule evolves (bounded by the saturation ceiling); the
negative part, when present, is long-range inhibition read off the
firefly swarm at each presentation.  Recall pushes a cue through the
truncated resolvent of the full signed matrix, clamps at zero, and
renormalizes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .dynamics import (
    Resolvent,
    WeightMatrix,
    correlation_tensor,
    equilibrium_response,
    load_matrix_csv,
    save_matrix_csv,
    save_matrix_pgm,
    truncated_resolvent,
)
from .errors import (
    ConfigError,
    InvariantError,
    ParameterError,
    ShapeMismatchError,
)
from .firefly import (
    FireflyPopulation,
    GridLayout,
    SwarmParams,
    load_population_csv,
    save_population_csv,
    swarm_step,
    synthesize_weights,
)
from .patterns import (
    ActiveSet,
    Pattern,
    active_set,
    add_noise,
    cosine,
    fuse,
    gaussian_2d,
    load_pattern_csv,
    mask,
    relative_threshold,
    save_image,
    save_pattern_csv,
)
from .plasticity import EvolveReport, PlasticityParams, evolve_weights

DEFAULT_THETA_ACT = 0.1
DEFAULT_EPOCHS = 5
DEFAULT_TOPOLOGY_MIX = 0.3
DEFAULT_INIT_SIGMA = 1.5

# Experiment scenario constants.
NOISE_LEVEL = 0.2
MASK_FRACTION = 0.3
TEMPLATE_SIGMA = 1.0
FUSED_GAP_TARGET = 0.15

BOUNDARIES = ("open", "periodic")
SCHEDULES = ("onset", "converged")
EXPERIMENT_NAMES = ("evolve1d", "recall2d", "denoise", "complete", "fused", "digits")

# Seed-stream tags, so every random draw hangs off one master seed.
_STREAM_WEIGHTS = 0
_STREAM_POPULATION = 1
_STREAM_PATTERN = 2
_STREAM_NOISE = 3
_STREAM_MASK = 4


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


def _int_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1)[0])


@dataclass(frozen=True)
class TrainerConfig:
    """Everything a run needs; one instance fully determines a model.

    theta_act is the active-set threshold as a fraction of the presented
    pattern's peak.  topology_mix is how far the excitatory weights move
    toward the swarm-synthesized prior at each presentation (0 ignores
    the swarm structure, 1 replaces the learned weights).
    hand_wired_neighbors switches init to a deterministic ring with that
    many neighbors per side at 1/(2k) each (1D only).
    """

    n: int
    grid: tuple[int, int] | None = None
    boundary: str = "open"
    use_firefly: bool = False
    learn_schedule: str = "onset"
    plasticity: PlasticityParams | None = None
    swarm: SwarmParams = field(default_factory=SwarmParams)
    theta_act: float = DEFAULT_THETA_ACT
    pattern_count: int = 1
    master_seed: int = 0
    epochs: int = DEFAULT_EPOCHS
    topology_mix: float = DEFAULT_TOPOLOGY_MIX
    recall_iterations: int = 1
    hand_wired_neighbors: int | None = None
    init_sigma_cells: float = DEFAULT_INIT_SIGMA

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ParameterError(f"network size must be >= 2, got {self.n}")
        if self.grid is not None and self.grid[0] * self.grid[1] != self.n:
            raise ShapeMismatchError(f"grid {self.grid} does not match n={self.n}")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.learn_schedule not in SCHEDULES:
            raise ConfigError(f"learn_schedule must be one of {SCHEDULES}, got {self.learn_schedule!r}")
        if self.plasticity is None:
            object.__setattr__(self, "plasticity", PlasticityParams(n=self.n))
        elif self.plasticity.n != self.n:
            raise ShapeMismatchError(
                f"plasticity params sized for n={self.plasticity.n}, config has n={self.n}"
            )
        if not 0.0 <= self.theta_act:
            raise ParameterError(f"theta_act must be >= 0, got {self.theta_act}")
        if self.pattern_count < 1:
            raise ParameterError(f"pattern_count must be >= 1, got {self.pattern_count}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.topology_mix <= 1.0:
            raise ParameterError(f"topology_mix must lie in [0,1], got {self.topology_mix}")
        if self.recall_iterations < 1:
            raise ParameterError(f"recall_iterations must be >= 1, got {self.recall_iterations}")
        if self.hand_wired_neighbors is not None:
            k = self.hand_wired_neighbors
            if self.grid is not None:
                raise ParameterError("hand-wired ring init is defined for 1D lines only")
            if k < 1 or 2 * k >= self.n:
                raise ParameterError(f"hand-wired neighbor count {k} invalid for n={self.n}")
        if self.init_sigma_cells <= 0.0:
            raise ParameterError(f"init_sigma_cells must be > 0, got {self.init_sigma_cells}")

    def layout(self) -> GridLayout:
        rows, cols = self.grid if self.grid is not None else (1, self.n)
        return GridLayout(rows, cols)

    def population_size(self) -> int:
        return max(1, int(round(self.swarm.population_factor * self.n)))


@dataclass
class RecallMetrics:
    """Similarity of a recall output to a reference pattern.

    best_match_label is the stored template with the highest cosine to
    the output (None when the model has no labeled templates).
    low_confidence marks completions whose cue lost the entire active
    set; the output is still returned.
    """

    cosine: float
    mse: float
    pearson: float
    best_match_label: str | None = None
    low_confidence: bool = False


@dataclass
class Model:
    """Aggregate state of one simulation."""

    weights: WeightMatrix
    population: FireflyPopulation | None
    config: TrainerConfig
    history: list[EvolveReport] = field(default_factory=list)
    templates: list[Pattern] = field(default_factory=list)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _grid_coordinates(config: TrainerConfig) -> tuple[np.ndarray, int, int]:
    rows, cols = config.grid if config.grid is not None else (1, config.n)
    r, c = np.divmod(np.arange(config.n), cols)
    return np.column_stack([r.astype(float), c.astype(float)]), rows, cols


def _cell_distance_sq(config: TrainerConfig) -> np.ndarray:
    """Squared cell-to-cell distance in cell units, wrapped when periodic."""
    coords, rows, cols = _grid_coordinates(config)
    total = np.zeros((config.n, config.n))
    for axis, size in ((0, rows), (1, cols)):
        d = np.abs(coords[:, axis][:, None] - coords[:, axis][None, :])
        if config.boundary == "periodic":
            d = np.minimum(d, size - d)
        total += d * d
    return total


def _row_normalize_capped(w: np.ndarray, v: float) -> np.ndarray:
    """Scale each non-negative row to sum 1 without any entry exceeding v.

    Excess above the cap is redistributed to uncapped entries; if the cap
    makes a unit row sum infeasible the row saturates at v everywhere.
    """
    out = w.copy()
    for i in range(out.shape[0]):
        row = out[i]
        total = row.sum()
        if total <= 0.0:
            continue
        row /= total
        for _ in range(out.shape[1]):
            over = row > v
            if not over.any():
                break
            excess = float((row[over] - v).sum())
            row[over] = v
            free = ~over & (row > 0.0)
            if not free.any():
                break
            row[free] += excess * row[free] / float(row[free].sum())
        out[i] = row
    # redistribution rounding can leave entries a few ulp above the cap
    return np.clip(out, 0.0, v)


def init_model(config: TrainerConfig) -> Model:
    """Seeded model: distance-decaying random weights (or a hand-wired
    ring) plus a fresh swarm population when the config asks for one."""
    n = config.n
    if config.hand_wired_neighbors is not None:
        k = config.hand_wired_neighbors
        w = np.zeros((n, n))
        level = 1.0 / (2 * k)
        for i in range(n):
            for step in range(1, k + 1):
                if config.boundary == "periodic":
                    w[i, (i + step) % n] = level
                    w[i, (i - step) % n] = level
                else:
                    if i + step < n:
                        w[i, i + step] = level
                    if i - step >= 0:
                        w[i, i - step] = level
    else:
        rng = _rng(config.master_seed, _STREAM_WEIGHTS)
        sigma = config.init_sigma_cells
        kernel = np.exp(-_cell_distance_sq(config) / (2.0 * sigma * sigma))
        w = kernel * rng.random((n, n))
        np.fill_diagonal(w, 0.0)
        w = _row_normalize_capped(w, config.plasticity.v)
    np.fill_diagonal(w, 0.0)

    population = None
    if config.use_firefly:
        population = FireflyPopulation.spawn(
            config.population_size(),
            config.swarm,
            rng=_rng(config.master_seed, _STREAM_POPULATION),
        )
    return Model(weights=WeightMatrix(w), population=population, config=config)


# ---------------------------------------------------------------------------
# presentation and recall
# ---------------------------------------------------------------------------

def _active_source(model: Model, p: Pattern, d: Resolvent) -> ActiveSet:
    """Active set per the learning schedule: the raw input at onset, or
    the network's settled response when learning after convergence."""
    if model.config.learn_schedule == "onset":
        source = p
    else:
        source, _ = equilibrium_response(d, p)
    return active_set(source, relative_threshold(source, model.config.theta_act))


def present_pattern(model: Model, p: Pattern) -> Model:
    """One presentation: optional swarm pass, then gated weight evolution.

    Mutates and returns the model.  Labeled patterns are remembered once
    as stored templates for later best-match scoring.
    """
    cfg = model.config
    if p.n != cfg.n:
        raise ShapeMismatchError(f"pattern length {p.n} does not match network size {cfg.n}")
    layout = cfg.layout()

    excitatory = model.weights.positive_part()
    inhibitory = model.weights.negative_part()

    if cfg.use_firefly:
        if model.population is None:
            raise InvariantError("configured for firefly but the model has no population")
        if cfg.swarm.reset_per_pattern:
            model.population.redraw_positions()
        for _ in range(cfg.swarm.steps):
            swarm_step(model.population, p, layout)
        prior = synthesize_weights(
            model.population,
            layout,
            cfg.n,
            v=cfg.plasticity.v,
            kernel_pitches=cfg.swarm.kernel_pitches,
            inhib_pitches=cfg.swarm.inhib_pitches,
            inhibition_gain=cfg.swarm.inhibition_gain,
        )
        rho = cfg.topology_mix
        # Swarm-declared inhibitory surround suppresses learned excitation
        # there; elsewhere the prior pulls excitation toward its layout.
        excitatory = excitatory.copy()
        excitatory[prior.w < 0.0] = 0.0
        excitatory = (1.0 - rho) * excitatory + rho * prior.positive_part()
        inhibitory = prior.negative_part()

    if p.label is not None and all(t.label != p.label for t in model.templates):
        model.templates.append(p)

    full = WeightMatrix(excitatory + inhibitory)
    d = truncated_resolvent(full)
    source_set = _active_source(model, p, d)
    tensor = correlation_tensor(d, source_set)

    evolved, report = evolve_weights(WeightMatrix(excitatory), tensor, cfg.plasticity)
    model.weights = WeightMatrix(evolved.w + inhibitory)
    model.history.append(report)
    return model


def train(model: Model, patterns: Sequence[Pattern]) -> Model:
    """Present every pattern once per epoch, in order."""
    if not patterns:
        raise ParameterError("training requires at least one pattern")
    for _ in range(model.config.epochs):
        for p in patterns:
            present_pattern(model, p)
    return model


def _similarity(output: Pattern, reference: Pattern, templates: Sequence[Pattern]) -> RecallMetrics:
    ref = reference.normalize()
    cos = cosine(output, ref)
    mse = float(np.mean((output.values - ref.values) ** 2))
    a, b = output.values, ref.values
    if float(a.std()) <= 0.0 or float(b.std()) <= 0.0:
        pearson = 0.0
    else:
        pearson = float(np.corrcoef(a, b)[0, 1])
    best = None
    if templates:
        scored = [(cosine(output, t), t.label) for t in templates if t.label is not None]
        if scored:
            best = max(scored, key=lambda s: s[0])[1]
    return RecallMetrics(cosine=cos, mse=mse, pearson=pearson, best_match_label=best)


def recall(model: Model, cue: Pattern) -> tuple[Pattern, RecallMetrics]:
    """Equilibrium response to a cue: clamp at zero, renormalize.

    recall_iterations > 1 feeds the normalized response back through the
    network; the default single pass matches the linear readout.  A
    response wiped out by inhibition comes back as the zero pattern with
    cosine 0 rather than an error.
    """
    cfg = model.config
    if cue.n != cfg.n:
        raise ShapeMismatchError(f"cue length {cue.n} does not match network size {cfg.n}")
    if float(cue.values.max()) <= 0.0:
        raise ParameterError("zero cue: nothing to recall")
    d = truncated_resolvent(model.weights)
    out = cue.values
    for _ in range(cfg.recall_iterations):
        raw = d.d @ out
        out = np.clip(raw, 0.0, None)
        norm = math.sqrt(float(np.dot(out, out)))
        if norm <= 1e-12:
            out = np.zeros_like(out)
            break
        out = out / norm
    output = Pattern(out, grid=cue.grid)
    return output, _similarity(output, cue, model.templates)


def complete(
    model: Model, partial: Pattern, masked_indices: Iterable[int]
) -> tuple[Pattern, RecallMetrics]:
    """Recall from a masked cue; metrics are scored against the original.

    If the mask wipes the whole active set the result is flagged
    low-confidence instead of raising.
    """
    masked = sorted(set(int(i) for i in masked_indices))
    cue = mask(partial, masked)
    output, _ = recall(model, cue)
    metrics = _similarity(output, partial, model.templates)
    active = active_set(partial, relative_threshold(partial, model.config.theta_act))
    metrics.low_confidence = bool(masked) and all(i in set(masked) for i in active.indices)
    return output, metrics


# ---------------------------------------------------------------------------
# config <-> flat key/value dict (also the model checkpoint format)
# ---------------------------------------------------------------------------

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_num(key: str, raw: str, kind: Callable) -> float | int:
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from exc


def parse_kv_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_kv(kv: dict[str, str]) -> str:
    return "\n".join(f"{k} = {v}" for k, v in kv.items()) + "\n"


def config_to_dict(config: TrainerConfig) -> dict[str, str]:
    """Full echo of a config as flat strings, in a fixed key order."""
    kv: dict[str, str] = {"n": str(config.n)}
    if config.grid is not None:
        kv["rows"] = str(config.grid[0])
        kv["cols"] = str(config.grid[1])
    p = config.plasticity
    s = config.swarm
    kv.update(
        boundary=config.boundary,
        use_firefly=str(config.use_firefly).lower(),
        learn_schedule=config.learn_schedule,
        theta_act=repr(config.theta_act),
        pattern_count=str(config.pattern_count),
        master_seed=str(config.master_seed),
        epochs=str(config.epochs),
        topology_mix=repr(config.topology_mix),
        recall_iterations=str(config.recall_iterations),
        init_sigma_cells=repr(config.init_sigma_cells),
        alpha=repr(p.alpha),
        beta=repr(p.beta),
        v=repr(p.v),
        dt=repr(p.dt),
        max_steps=str(p.max_steps),
        tol=repr(p.tol),
        swarm_b=repr(s.b),
        swarm_gamma=repr(s.gamma),
        swarm_eta=repr(s.eta),
        swarm_d_min=repr(s.d_min),
        swarm_steps=str(s.steps),
        excit_fraction=repr(s.excit_fraction),
        population_factor=repr(s.population_factor),
        reset_per_pattern=str(s.reset_per_pattern).lower(),
        kernel_pitches=repr(s.kernel_pitches),
        inhib_pitches=repr(s.inhib_pitches),
        inhibition_gain=repr(s.inhibition_gain),
    )
    if config.hand_wired_neighbors is not None:
        kv["hand_wired_neighbors"] = str(config.hand_wired_neighbors)
    return kv


CONFIG_KEY_HELP: dict[str, str] = {
    "n": "network size (number of cells)",
    "rows": "grid rows (with cols; omit both for a 1D line)",
    "cols": "grid columns",
    "boundary": "open | periodic",
    "use_firefly": "synthesize topology with the swarm before each presentation",
    "learn_schedule": "onset | converged (where the active set is read)",
    "theta_act": "active threshold as a fraction of the pattern peak",
    "pattern_count": "number of stored templates the scenario generates",
    "master_seed": "root of the run's seed hierarchy",
    "epochs": "training passes over the pattern list",
    "topology_mix": "pull of the swarm prior on excitatory weights, in [0,1]",
    "recall_iterations": "response passes during recall (1 = linear readout)",
    "hand_wired_neighbors": "ring init with k neighbors per side (1D only)",
    "init_sigma_cells": "width of the random-init distance kernel, in cells",
    "alpha": "uniform-decay rate of the weight rule",
    "beta": "competition gain of the weight rule",
    "v": "saturation ceiling on excitatory weights",
    "dt": "Euler step of weight evolution",
    "max_steps": "step budget per presentation",
    "tol": "quiescence tolerance on weight change",
    "swarm_b": "attraction amplitude",
    "swarm_gamma": "attraction falloff with squared distance",
    "swarm_eta": "jitter amplitude of swarm moves",
    "swarm_d_min": "minimum agent spacing",
    "swarm_steps": "swarm updates per presentation",
    "excit_fraction": "fraction of excitatory agents",
    "population_factor": "agents per cell (population = factor * n)",
    "reset_per_pattern": "respawn agent positions before each presentation",
    "kernel_pitches": "excitatory deposit kernel width in grid pitches",
    "inhib_pitches": "inhibitory deposit kernel width in grid pitches",
    "inhibition_gain": "inhibitory deposit strength relative to excitatory",
}


def config_from_dict(kv: dict[str, str]) -> TrainerConfig:
    """Build a config from flat strings, rejecting unknown keys."""
    unknown = sorted(set(kv) - set(CONFIG_KEY_HELP))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "n" not in kv:
        raise ConfigError("config requires n")
    n = int(_parse_num("n", kv["n"], int))
    grid = None
    if ("rows" in kv) != ("cols" in kv):
        raise ConfigError("rows and cols must be given together")
    if "rows" in kv:
        grid = (int(_parse_num("rows", kv["rows"], int)), int(_parse_num("cols", kv["cols"], int)))

    def num(key: str, default: float, kind: Callable = float):
        return _parse_num(key, kv[key], kind) if key in kv else default

    try:
        plasticity = PlasticityParams(
            n=n,
            alpha=float(num("alpha", PlasticityParams.alpha)),
            beta=float(num("beta", PlasticityParams.beta)),
            v=float(num("v", PlasticityParams.v)),
            dt=float(num("dt", PlasticityParams.dt)),
            max_steps=int(num("max_steps", PlasticityParams.max_steps, int)),
            tol=float(num("tol", PlasticityParams.tol)),
        )
        swarm = SwarmParams(
            b=float(num("swarm_b", SwarmParams.b)),
            gamma=float(num("swarm_gamma", SwarmParams.gamma)),
            eta=float(num("swarm_eta", SwarmParams.eta)),
            d_min=float(num("swarm_d_min", SwarmParams.d_min)),
            steps=int(num("swarm_steps", SwarmParams.steps, int)),
            excit_fraction=float(num("excit_fraction", SwarmParams.excit_fraction)),
            population_factor=float(num("population_factor", SwarmParams.population_factor)),
            reset_per_pattern=_parse_bool("reset_per_pattern", kv["reset_per_pattern"])
            if "reset_per_pattern" in kv
            else False,
            kernel_pitches=float(num("kernel_pitches", SwarmParams.kernel_pitches)),
            inhib_pitches=float(num("inhib_pitches", SwarmParams.inhib_pitches)),
            inhibition_gain=float(num("inhibition_gain", SwarmParams.inhibition_gain)),
        )
        return TrainerConfig(
            n=n,
            grid=grid,
            boundary=kv.get("boundary", "open"),
            use_firefly=_parse_bool("use_firefly", kv["use_firefly"]) if "use_firefly" in kv else False,
            learn_schedule=kv.get("learn_schedule", "onset"),
            plasticity=plasticity,
            swarm=swarm,
            theta_act=float(num("theta_act", DEFAULT_THETA_ACT)),
            pattern_count=int(num("pattern_count", 1, int)),
            master_seed=int(num("master_seed", 0, int)),
            epochs=int(num("epochs", DEFAULT_EPOCHS, int)),
            topology_mix=float(num("topology_mix", DEFAULT_TOPOLOGY_MIX)),
            recall_iterations=int(num("recall_iterations", 1, int)),
            hand_wired_neighbors=int(num("hand_wired_neighbors", 0, int)) or None
            if "hand_wired_neighbors" in kv
            else None,
            init_sigma_cells=float(num("init_sigma_cells", DEFAULT_INIT_SIGMA)),
        )
    except (ParameterError, ShapeMismatchError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]", "_", label)


def save_model(model: Model, out_dir: str | Path) -> None:
    """Write weights, config echo, templates, and the swarm snapshot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix_csv(model.weights.w, out / "w_matrix.csv")
    (out / "config.cfg").write_text(format_kv(config_to_dict(model.config)))
    if model.population is not None:
        save_population_csv(model.population, out / "population.csv")
    if model.templates:
        tdir = out / "templates"
        tdir.mkdir(exist_ok=True)
        for k, t in enumerate(model.templates):
            name = f"t{k}_{_safe_name(t.label)}.csv" if t.label else f"t{k}.csv"
            save_pattern_csv(t, tdir / name)


def load_model(model_dir: str | Path) -> Model:
    """Rebuild a saved model.

    Generator state is not restored: the population continues from a
    seed derived from the config, which is enough for recall and for
    continuing to train deterministically from the checkpoint files.
    """
    root = Path(model_dir)
    config = config_from_dict(parse_kv_text((root / "config.cfg").read_text()))
    w = load_matrix_csv(root / "w_matrix.csv")
    if w.shape[0] != config.n:
        raise ShapeMismatchError(
            f"weights are {w.shape[0]}x{w.shape[0]} but config says n={config.n}"
        )
    np.fill_diagonal(w, 0.0)
    population = None
    pop_file = root / "population.csv"
    if pop_file.exists():
        population = load_population_csv(
            pop_file, config.swarm, rng=_rng(config.master_seed, _STREAM_POPULATION)
        )
    model = Model(weights=WeightMatrix(w), population=population, config=config)
    tdir = root / "templates"
    if tdir.is_dir():
        for f in sorted(tdir.glob("t*.csv")):
            p = load_pattern_csv(f)
            stem = f.stem
            label = stem.split("_", 1)[1] if "_" in stem else None
            model.templates.append(Pattern(p.values, grid=p.grid, label=label))
    return model


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Summary scalars plus the per-run table an experiment produced."""

    name: str
    metrics: dict[str, float] = field(default_factory=dict)
    rows: list[dict[str, object]] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"experiment = {self.name}"]
        for key, value in self.metrics.items():
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text())
        if self.rows:
            header = list(self.rows[0].keys())
            lines = [",".join(header)]
            for row in self.rows:
                cells = []
                for key in header:
                    value = row.get(key, "")
                    cells.append(repr(value) if isinstance(value, float) else str(value))
                lines.append(",".join(cells))
            (out / "metrics.csv").write_text("\n".join(lines) + "\n")


def _emit(report: ExperimentReport, out: Path | None, name: str, writer: Callable[[Path], None]) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    writer(out / name)
    report.artifacts.append(name)


def _scenario_grid(config: TrainerConfig) -> tuple[int, int]:
    if config.grid is not None:
        return config.grid
    side = int(round(math.sqrt(config.n)))
    if side * side != config.n:
        raise ParameterError(f"2D experiment needs a grid; n={config.n} is not square")
    return (side, side)


def _random_bump(config: TrainerConfig, rng: np.random.Generator, label: str | None = None) -> Pattern:
    rows, cols = _scenario_grid(config)
    cy = rng.uniform(1.0, rows - 2.0) if rows > 3 else rows / 2.0
    cx = rng.uniform(1.0, cols - 2.0) if cols > 3 else cols / 2.0
    wrap = config.boundary == "periodic"
    return gaussian_2d(rows, cols, cx, cy, TEMPLATE_SIGMA, TEMPLATE_SIGMA, wrap=wrap, label=label)


def _distinct_bumps(config: TrainerConfig, rng: np.random.Generator, count: int) -> list[Pattern]:
    """Gaussian templates on distinct cell centers, labeled t0..t{count-1}."""
    rows, cols = _scenario_grid(config)
    interior = [
        (r, c)
        for r in range(1, rows - 1)
        for c in range(1, cols - 1)
    ] or [(r, c) for r in range(rows) for c in range(cols)]
    if count > len(interior):
        raise ParameterError(f"cannot place {count} distinct templates on a {rows}x{cols} grid")
    picks = rng.choice(len(interior), size=count, replace=False)
    wrap = config.boundary == "periodic"
    out = []
    for k, pick in enumerate(picks):
        r, c = interior[int(pick)]
        out.append(
            gaussian_2d(rows, cols, float(c), float(r), TEMPLATE_SIGMA, TEMPLATE_SIGMA, wrap=wrap, label=f"t{k}")
        )
    return out


def _experiment_evolve1d(
    config: TrainerConfig, out: Path | None, seeds: Sequence[int]
) -> ExperimentReport:
    """Run the weight rule to quiescence on a hand-wired periodic ring."""
    scfg = replace(
        config,
        grid=None,
        boundary="periodic",
        use_firefly=False,
        hand_wired_neighbors=config.hand_wired_neighbors or 3,
        plasticity=replace(config.plasticity, max_steps=max(config.plasticity.max_steps, 20000)),
    )
    model = init_model(scfg)
    w_initial = model.weights.w.copy()
    d = truncated_resolvent(model.weights)
    tensor = correlation_tensor(d, ActiveSet(tuple(range(scfg.n))))
    evolved, evo = evolve_weights(model.weights, tensor, scfg.plasticity)
    w_final = evolved.w

    n = scfg.n
    idx = np.arange(n)
    nearest = np.concatenate([w_final[idx, (idx + 1) % n], w_final[idx, (idx - 1) % n]])
    third = np.concatenate([w_final[idx, (idx + 3) % n], w_final[idx, (idx - 3) % n]])
    margin = float(
        np.minimum(
            w_final[idx, (idx + 1) % n] - w_final[idx, (idx + 3) % n],
            w_final[idx, (idx - 1) % n] - w_final[idx, (idx - 3) % n],
        ).min()
    )
    non_neighbor = w_final.copy()
    non_neighbor[idx, (idx + 1) % n] = np.nan
    non_neighbor[idx, (idx - 1) % n] = np.nan
    np.fill_diagonal(non_neighbor, np.nan)
    row_sums = w_final.sum(axis=1)

    report = ExperimentReport(name="evolve1d")
    report.metrics = {
        "steps": evo.steps,
        "converged": int(evo.converged),
        "nearest_mean": float(nearest.mean()),
        "third_mean": float(third.mean()),
        "non_neighbor_mean": float(np.nanmean(non_neighbor)),
        "nearest_over_third_margin": margin,
        "row_sum_min": float(row_sums.min()),
        "row_sum_max": float(row_sums.max()),
    }
    report.rows = [
        {
            "i": int(i),
            "nearest": float(w_final[i, (i + 1) % n]),
            "third": float(w_final[i, (i + 3) % n]),
            "row_sum": float(row_sums[i]),
        }
        for i in range(n)
    ]
    mid = n // 2
    _emit(report, out, "w_matrix_initial.csv", lambda p: save_matrix_csv(w_initial, p))
    _emit(report, out, "w_matrix_final.csv", lambda p: save_matrix_csv(w_final, p))
    _emit(report, out, "w_matrix_initial.pgm", lambda p: save_matrix_pgm(w_initial, p))
    _emit(report, out, "w_matrix_final.pgm", lambda p: save_matrix_pgm(w_final, p))
    _emit(
        report,
        out,
        f"weight_row_{mid}.csv",
        lambda p: p.write_text(
            "j,initial,final\n"
            + "\n".join(f"{j},{float(w_initial[mid, j])!r},{float(w_final[mid, j])!r}" for j in range(n))
            + "\n"
        ),
    )
    _emit(report, out, "trace.csv", lambda p: evo.save_trace_csv(p))
    return report


def _experiment_recall2d(
    config: TrainerConfig, out: Path | None, seeds: Sequence[int]
) -> ExperimentReport:
    """Store one random bump per seed, with and without the swarm, and
    compare how faithfully the network echoes it back."""
    report = ExperimentReport(name="recall2d")
    diffs, cos_with, cos_without = [], [], []
    for order, seed in enumerate(seeds):
        rows, cols = _scenario_grid(config)
        pattern = _random_bump(config, _rng(seed, _STREAM_PATTERN), label="stored")
        outputs = {}
        for flag in (True, False):
            scfg = replace(config, grid=(rows, cols), use_firefly=flag, master_seed=seed)
            model = train(init_model(scfg), [pattern])
            output, metrics = recall(model, pattern)
            outputs[flag] = (output, float(cosine(output, pattern)), model)
        cw, cwo = outputs[True][1], outputs[False][1]
        diffs.append(cw - cwo)
        cos_with.append(cw)
        cos_without.append(cwo)
        report.rows.append(
            {"seed": int(seed), "cos_with": cw, "cos_without": cwo, "paired_diff": cw - cwo}
        )
        if order == 0:
            _emit(report, out, "pattern_input.csv", lambda p: save_pattern_csv(pattern, p))
            _emit(report, out, "pattern_input.pgm", lambda p: save_image(pattern, p))
            _emit(report, out, "pattern_output_with.csv", lambda p: save_pattern_csv(outputs[True][0], p))
            _emit(report, out, "pattern_output_with.pgm", lambda p: save_image(outputs[True][0], p))
            _emit(report, out, "pattern_output_without.csv", lambda p: save_pattern_csv(outputs[False][0], p))
            _emit(report, out, "pattern_output_without.pgm", lambda p: save_image(outputs[False][0], p))
            _emit(report, out, "w_matrix_with.csv", lambda p: save_matrix_csv(outputs[True][2].weights.w, p))
            _emit(report, out, "w_matrix_without.csv", lambda p: save_matrix_csv(outputs[False][2].weights.w, p))
            pop = outputs[True][2].population
            if pop is not None:
                _emit(report, out, "population.csv", lambda p: save_population_csv(pop, p))
    report.metrics = {
        "median_paired_diff": float(np.median(diffs)),
        "median_cos_with": float(np.median(cos_with)),
        "median_cos_without": float(np.median(cos_without)),
        "seeds": len(list(seeds)),
    }
    return report


def _corruption_experiment(
    name: str, config: TrainerConfig, out: Path | None, seeds: Sequence[int]
) -> ExperimentReport:
    """Shared driver for denoise (noisy cue) and complete (masked cue)."""
    report = ExperimentReport(name=name)
    improvements = []
    for order, seed in enumerate(seeds):
        scfg = replace(config, grid=_scenario_grid(config), master_seed=seed)
        templates = _distinct_bumps(scfg, _rng(seed, _STREAM_PATTERN), scfg.pattern_count)
        model = train(init_model(scfg), templates)
        for k, template in enumerate(templates):
            if name == "denoise":
                cue = add_noise(template, NOISE_LEVEL, _int_seed(seed, _STREAM_NOISE, k))
                output, _ = recall(model, cue)
                metrics = _similarity(output, template, model.templates)
            else:
                rng = _rng(seed, _STREAM_MASK, k)
                n_masked = int(round(MASK_FRACTION * scfg.n))
                masked = rng.choice(scfg.n, size=n_masked, replace=False)
                cue = mask(template, masked)
                output, metrics = complete(model, template, masked)
            baseline = cosine(cue, template)
            gain = metrics.cosine - baseline
            improvements.append(gain)
            report.rows.append(
                {
                    "seed": int(seed),
                    "template": template.label,
                    "cue_cosine": float(baseline),
                    "output_cosine": float(metrics.cosine),
                    "improvement": float(gain),
                    "best_match": metrics.best_match_label or "",
                }
            )
            if order == 0 and k == 0:
                _emit(report, out, "pattern_clean.csv", lambda p: save_pattern_csv(template, p))
                _emit(report, out, "pattern_clean.pgm", lambda p: save_image(template, p))
                _emit(report, out, "pattern_cue.csv", lambda p: save_pattern_csv(cue, p))
                _emit(report, out, "pattern_cue.pgm", lambda p: save_image(cue, p))
                _emit(report, out, "pattern_recovered.csv", lambda p: save_pattern_csv(output, p))
                _emit(report, out, "pattern_recovered.pgm", lambda p: save_image(output, p))
                _emit(report, out, "w_matrix_final.csv", lambda p: save_matrix_csv(model.weights.w, p))
                if model.population is not None:
                    population = model.population
                    _emit(report, out, "population.csv", lambda p: save_population_csv(population, p))
    report.metrics = {
        "median_improvement": float(np.median(improvements)),
        "mean_improvement": float(np.mean(improvements)),
        "fraction_improved": float(np.mean([g > 0.0 for g in improvements])),
        "seeds": len(list(seeds)),
    }
    return report


def _experiment_fused(
    config: TrainerConfig, out: Path | None, seeds: Sequence[int]
) -> ExperimentReport:
    """Cue with an equal-weight fusion of two stored bumps; a balanced
    network should answer roughly equidistant from both."""
    report = ExperimentReport(name="fused")
    gaps = []
    for order, seed in enumerate(seeds):
        scfg = replace(config, grid=_scenario_grid(config), master_seed=seed, pattern_count=2)
        t1, t2 = _distinct_bumps(scfg, _rng(seed, _STREAM_PATTERN), 2)
        model = train(init_model(scfg), [t1, t2])
        cue = fuse(t1, t2, 1.0, 1.0)
        output, _ = recall(model, cue)
        c1, c2 = cosine(output, t1), cosine(output, t2)
        skew_cue = fuse(t1, t2, 1.0, 0.5)
        skew_out, _ = recall(model, skew_cue)
        gaps.append(abs(c1 - c2))
        report.rows.append(
            {
                "seed": int(seed),
                "cos_t1": float(c1),
                "cos_t2": float(c2),
                "gap": float(abs(c1 - c2)),
                "skew_cos_t1": float(cosine(skew_out, t1)),
                "skew_cos_t2": float(cosine(skew_out, t2)),
            }
        )
        if order == 0:
            _emit(report, out, "pattern_fused.csv", lambda p: save_pattern_csv(cue, p))
            _emit(report, out, "pattern_fused.pgm", lambda p: save_image(cue, p))
            _emit(report, out, "pattern_output.csv", lambda p: save_pattern_csv(output, p))
            _emit(report, out, "pattern_output.pgm", lambda p: save_image(output, p))
    report.metrics = {
        "median_gap": float(np.median(gaps)),
        "gap_target": FUSED_GAP_TARGET,
        "seeds": len(list(seeds)),
    }
    return report


_DIGIT_ROWS: dict[str, tuple[str, ...]] = {
    "0": (
        "...#####...",
        "..#######..",
        ".###...###.",
        ".##.....##.",
        ".##.....##.",
        ".##.....##.",
        ".##.....##.",
        ".##.....##.",
        ".###...###.",
        "..#######..",
        "...#####...",
    ),
    "1": (
        "...........",
        "....##.....",
        "...###.....",
        "..####.....",
        "....##.....",
        "....##.....",
        "....##.....",
        "....##.....",
        "....##.....",
        "....##.....",
        "...........",
    ),
}


def digit_template(label: str) -> Pattern:
    """Built-in 11x11 digit glyph with stroke pixels at 1.

    Kept at pixel amplitude (not unit norm) so a noise level expressed as
    a fraction of full scale means the same thing it does for images.
    """
    if label not in _DIGIT_ROWS:
        raise ParameterError(f"no built-in digit {label!r}; have {sorted(_DIGIT_ROWS)}")
    rows = _DIGIT_ROWS[label]
    values = np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in rows]).ravel()
    return Pattern(values, grid=(len(rows), len(rows[0])), label=label)


def _experiment_digits(
    config: TrainerConfig,
    out: Path | None,
    seeds: Sequence[int],
    templates: Sequence[Pattern] | None = None,
) -> ExperimentReport:
    """Store digit images, cue with noisy copies, score label matching."""
    if templates is None:
        templates = [digit_template("0"), digit_template("1")]
    if any(t.label is None for t in templates):
        raise ParameterError("digit templates must carry labels")
    grid = templates[0].grid
    if grid is None or any(t.grid != grid for t in templates):
        raise ShapeMismatchError("digit templates must share one grid")
    n = templates[0].n

    report = ExperimentReport(name="digits")
    correct_cues = 0
    total_cues = 0
    perfect_seeds = 0
    for order, seed in enumerate(seeds):
        scfg = replace(
            config,
            n=n,
            grid=grid,
            master_seed=seed,
            pattern_count=len(templates),
            plasticity=replace(config.plasticity, n=n),
        )
        model = train(init_model(scfg), list(templates))
        seed_ok = True
        for k, template in enumerate(templates):
            cue = add_noise(template, NOISE_LEVEL, _int_seed(seed, _STREAM_NOISE, k))
            output, metrics = recall(model, cue)
            hit = metrics.best_match_label == template.label
            correct_cues += int(hit)
            total_cues += 1
            seed_ok = seed_ok and hit
            report.rows.append(
                {
                    "seed": int(seed),
                    "digit": template.label,
                    "best_match": metrics.best_match_label or "",
                    "correct": int(hit),
                    "output_cosine_true": float(cosine(output, template)),
                }
            )
            if order == 0:
                stem = f"digit_{_safe_name(template.label)}"
                _emit(report, out, f"pattern_{stem}.pgm", lambda p, t=template: save_image(t, p))
                _emit(report, out, f"pattern_{stem}_cue.pgm", lambda p, c=cue: save_image(c, p))
                _emit(report, out, f"pattern_{stem}_out.pgm", lambda p, o=output: save_image(o, p))
        perfect_seeds += int(seed_ok)
    n_seeds = len(list(seeds))
    report.metrics = {
        "cue_accuracy": correct_cues / max(total_cues, 1),
        "perfect_seeds": perfect_seeds,
        "seeds": n_seeds,
    }
    return report


def run_experiment(
    config: TrainerConfig,
    experiment: str,
    out_dir: str | Path | None = None,
    seeds: Sequence[int] | None = None,
) -> ExperimentReport:
    """Dispatch one named experiment; writes artifacts when out_dir is set.

    Every experiment derives its per-seed randomness from the given seed
    list (default: the config's master seed), so a fixed config and seed
    list reproduce outputs byte for byte.
    """
    if experiment not in EXPERIMENT_NAMES:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENT_NAMES}")
    out = Path(out_dir) if out_dir is not None else None
    run_seeds = list(seeds) if seeds is not None else [config.master_seed]
    if not run_seeds:
        raise ParameterError("experiment requires at least one seed")

    if experiment == "evolve1d":
        report = _experiment_evolve1d(config, out, run_seeds)
    elif experiment == "recall2d":
        report = _experiment_recall2d(config, out, run_seeds)
    elif experiment in ("denoise", "complete"):
        scfg = config if config.pattern_count >= 2 else replace(config, pattern_count=3)
        report = _corruption_experiment(experiment, scfg, out, run_seeds)
    elif experiment == "fused":
        report = _experiment_fused(config, out, run_seeds)
    else:
        report = _experiment_digits(config, out, run_seeds)

    if out is not None:
        report.save(out)
        report.artifacts.extend(["report.txt"] + (["metrics.csv"] if report.rows else []))
    return report
