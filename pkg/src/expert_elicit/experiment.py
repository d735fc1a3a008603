"""Repeated, seeded elicitation experiments aggregated into loss curves."""

from __future__ import annotations

import csv
import io
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .elicitation import (
    DEFAULT_STRATEGIES,
    ExpertModel,
    StrategySpec,
    TargetCase,
    run_elicitation,
)
from .regression import Dataset, fit_lasso_cv
from .synthgen import (
    SyntheticConfig,
    generate_observations,
    generate_pool,
    generate_target,
    generate_thetas,
)

RESULTS_HEADER = [
    "scenario", "strategy", "n_train", "noise_var", "knowledge_frac",
    "budget", "mean_loss", "sem", "reps",
]


def _token(part) -> int:
    if isinstance(part, (int, np.integer)) and not isinstance(part, bool):
        return int(part) % 2**32
    return zlib.crc32(repr(part).encode())


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from a master seed and any identifying parts."""
    seq = np.random.SeedSequence([master_seed % 2**63, *(_token(p) for p in parts)])
    return int(seq.generate_state(1, np.uint64)[0]) >> 1


def knowledge_mask(p: int, fraction: float, seed: int) -> np.ndarray:
    """Mask with ``round(fraction * p)`` known features chosen uniformly."""
    k = int(round(fraction * p))
    mask = np.zeros(p, dtype=bool)
    mask[np.random.default_rng(seed).permutation(p)[:k]] = True
    return mask


@dataclass(frozen=True)
class RealDataSource:
    """Tables and pseudo-ground truth for the real-data protocol.

    Each repetition draws ``drugs_per_rep`` drugs and ``cells_per_rep``
    target cell lines from ``drugs`` and ``cells``.
    """

    expr: object
    resp: object
    pgt: object
    drugs: tuple
    cells: tuple
    drugs_per_rep: int = 10
    cells_per_rep: int = 10
    sem_over: str = "iterations"
    name: str = "real"


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: Optional[SyntheticConfig] = None
    real: Optional[RealDataSource] = None
    n_train_grid: tuple = (5, 10, 15, 20, 25, 30)
    budget_max: int = 10
    strategies: tuple = DEFAULT_STRATEGIES
    noise_grid: tuple = (0.0,)
    knowledge_grid: tuple = (1.0,)
    repetitions: int = 100
    master_seed: int = 0
    workers: int = 1
    cv_max_folds: int = 10

    def validate(self) -> None:
        if (self.synthetic is None) == (self.real is None):
            raise ValueError("exactly one of synthetic or real must be given")
        if self.repetitions < 2:
            raise ValueError("repetitions must be at least 2 for a standard error")
        if self.budget_max < 0:
            raise ValueError("budget_max must be nonnegative")
        p = self.synthetic.p if self.synthetic else len(self.real.expr.gene_ids)
        if self.budget_max > p:
            raise ValueError(f"budget_max={self.budget_max} exceeds p={p}")
        if not self.n_train_grid or min(self.n_train_grid) < 2:
            raise ValueError("n_train values must be at least 2")
        if self.synthetic is not None:
            limit = self.synthetic.pool_size - (self.synthetic.target_mode.value == "pool")
            if max(self.n_train_grid) > limit:
                raise ValueError("n_train exceeds the synthetic pool")
        for f in self.knowledge_grid:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"knowledge fraction {f} outside [0, 1]")
        for v in self.noise_grid:
            if not v >= 0.0:
                raise ValueError(f"noise variance {v} is negative")
        if not self.strategies:
            raise ValueError("no strategies configured")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ValueError("duplicate strategies")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if self.real is not None and self.real.sem_over not in ("iterations", "pairs"):
            raise ValueError("sem_over must be 'iterations' or 'pairs'")

    @property
    def scenario_name(self) -> str:
        return self.synthetic.scenario.value if self.synthetic else self.real.name


@dataclass(frozen=True)
class CurvePoint:
    budget: int
    mean_loss: float
    sem: float
    reps: int


@dataclass
class LossCurve:
    scenario: str
    strategy: str
    n_train: int
    noise_variance: float
    knowledge_fraction: float
    points: list = field(default_factory=list)

    @property
    def key(self) -> tuple:
        return (self.strategy, self.n_train, self.noise_variance, self.knowledge_fraction)

    @property
    def means(self) -> np.ndarray:
        return np.array([pt.mean_loss for pt in self.points])

    @property
    def sems(self) -> np.ndarray:
        return np.array([pt.sem for pt in self.points])

    def at(self, budget: int) -> CurvePoint:
        return self.points[budget]


def aggregate(trajectories: Sequence, scenario="", strategy="", n_train=0,
              noise_variance=0.0, knowledge_fraction=1.0) -> LossCurve:
    """Pointwise mean and standard error of the mean across repetitions.

    Sums run in repetition order, so the result is bit-reproducible.
    """
    if len(trajectories) < 2:
        raise ValueError("need at least 2 trajectories")
    lengths = {len(t) for t in trajectories}
    if len(lengths) != 1:
        raise ValueError(f"ragged trajectories: lengths {sorted(lengths)}")
    T = np.array([np.asarray(t, dtype=float) for t in trajectories])
    reps = T.shape[0]
    total = np.zeros(T.shape[1])
    for row in T:
        total += row
    mean = total / reps
    ss = np.zeros(T.shape[1])
    for row in T:
        ss += (row - mean) ** 2
    sem = np.sqrt(ss / (reps - 1)) / np.sqrt(reps)
    points = [CurvePoint(b, float(m), float(s), reps) for b, (m, s) in enumerate(zip(mean, sem))]
    return LossCurve(scenario, strategy, n_train, noise_variance, knowledge_fraction, points)


def _elicit_all(config: ExperimentConfig, theta_init, target: TargetCase, n: int,
                rep: int, out: dict, tag=()) -> None:
    # Every strategy and expert setting shares this theta_init and target.
    m = config.master_seed
    for frac in config.knowledge_grid:
        mask = knowledge_mask(target.p, frac, derive_seed(m, rep, "mask", frac, *tag))
        for var in config.noise_grid:
            expert = ExpertModel(target.theta_star, mask, var,
                                 derive_seed(m, rep, n, "noise", var, *tag))
            for spec in config.strategies:
                spec = spec.with_seed(derive_seed(m, rep, n, "random", spec.name, *tag))
                res = run_elicitation(theta_init, target, expert, spec, config.budget_max)
                out.setdefault((spec.name, n, var, frac), []).append(res.trajectory)


def _synthetic_repetition(config: ExperimentConfig, rep: int) -> dict:
    m = config.master_seed
    world = config.synthetic.replace(seed=derive_seed(m, rep, "world"))
    pool = generate_pool(world)
    thetas = generate_thetas(world)
    target = generate_target(pool, thetas, world)
    out = {}
    for n in config.n_train_grid:
        data = generate_observations(pool, thetas, world.replace(n_train=n))
        fit, _ = fit_lasso_cv(data, derive_seed(m, rep, n, "cv"), max_folds=config.cv_max_folds)
        _elicit_all(config, fit.weights, target, n, rep, out)
    return {k: v[0] for k, v in out.items()}


def _real_repetition(config: ExperimentConfig, rep: int) -> dict:
    from .realdata import training_cells

    src = config.real
    m = config.master_seed
    rng = np.random.default_rng(derive_seed(m, rep, "targets"))
    drugs = sorted(rng.choice(len(src.drugs), size=min(src.drugs_per_rep, len(src.drugs)), replace=False))
    cells = sorted(rng.choice(len(src.cells), size=min(src.cells_per_rep, len(src.cells)), replace=False))
    out = {}
    for di in drugs:
        drug = src.drugs[di]
        pool_cells, pool_y = training_cells(src.expr, src.resp, drug)
        for ci in cells:
            cell = src.cells[ci]
            entry = src.pgt.get(drug, cell)
            target = TargetCase(src.expr.row(cell), entry.weights)
            others = np.array([i for i, c in enumerate(pool_cells) if c != cell])
            for n in config.n_train_grid:
                if n > len(others):
                    raise ValueError(f"n_train={n} exceeds the {len(others)} cell lines available for {drug!r}")
                pick = np.random.default_rng(derive_seed(m, rep, n, "train", drug, cell)).permutation(others)[:n]
                data = Dataset(src.expr.rows([pool_cells[i] for i in pick]), pool_y[pick] - entry.center)
                fit, _ = fit_lasso_cv(data, derive_seed(m, rep, n, "cv", drug, cell),
                                      max_folds=config.cv_max_folds, standardize=True)
                _elicit_all(config, fit.weights, target, n, rep, out, tag=(drug, cell))
    if src.sem_over == "pairs":
        return out
    return {k: [np.mean(np.array(v), axis=0)] for k, v in out.items()}


def run_repetition(config: ExperimentConfig, rep: int) -> dict:
    """Trajectories of one repetition keyed by (strategy, n_train, noise, fraction).

    Values are lists of trajectories (one per sample contributed).
    """
    if config.synthetic is not None:
        return {k: [v] for k, v in _synthetic_repetition(config, rep).items()}
    return _real_repetition(config, rep)


def _run_chunk(args):
    config, reps = args
    return [run_repetition(config, r) for r in reps]


def run_experiment(config: ExperimentConfig) -> list[LossCurve]:
    """Run every repetition and aggregate one curve per (strategy, n, noise, fraction).

    Worker count only changes scheduling; aggregation happens here in
    repetition order.
    """
    config.validate()
    reps = list(range(config.repetitions))
    if config.workers == 1:
        results = [run_repetition(config, r) for r in reps]
    else:
        chunks = [reps[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks if c]))
        by_rep = {}
        for chunk, part in zip([c for c in chunks if c], parts):
            by_rep.update(zip(chunk, part))
        results = [by_rep[r] for r in reps]
    samples = {}
    for res in results:
        for key, trajs in res.items():
            samples.setdefault(key, []).extend(trajs)
    curves = []
    strategy_rank = {s.name: i for i, s in enumerate(config.strategies)}
    for key in sorted(samples, key=lambda k: (k[1], k[2], k[3], strategy_rank[k[0]])):
        name, n, var, frac = key
        curves.append(aggregate(samples[key], config.scenario_name, name, n, var, frac))
    return curves


def find_curve(curves, strategy: str, n_train=None, noise_variance=None, knowledge_fraction=None) -> LossCurve:
    for c in curves:
        if c.strategy != strategy:
            continue
        if n_train is not None and c.n_train != n_train:
            continue
        if noise_variance is not None and c.noise_variance != noise_variance:
            continue
        if knowledge_fraction is not None and c.knowledge_fraction != knowledge_fraction:
            continue
        return c
    raise KeyError((strategy, n_train, noise_variance, knowledge_fraction))


def results_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for c in curves:
        for pt in c.points:
            w.writerow([c.scenario, c.strategy, c.n_train, repr(float(c.noise_variance)),
                        repr(float(c.knowledge_fraction)), pt.budget,
                        repr(pt.mean_loss), repr(pt.sem), pt.reps])
    return buf.getvalue()


def write_results(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(results_csv(curves))


def read_results(path) -> list[LossCurve]:
    curves = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected results header {reader.fieldnames}")
        for row in reader:
            key = (row["scenario"], row["strategy"], int(row["n_train"]),
                   float(row["noise_var"]), float(row["knowledge_frac"]))
            curve = curves.setdefault(key, LossCurve(*key))
            curve.points.append(CurvePoint(int(row["budget"]), float(row["mean_loss"]),
                                           float(row["sem"]), int(row["reps"])))
    return list(curves.values())
