"""Sweep orchestration: generate data, train, evaluate over a value grid.

A sweep is a grid over one variable (dataset size, demonstrator noise, or
counterfactual radius) crossed with a list of algorithms and a number of
seeds. Each (value, seed, algorithm) cell is fully independent: it builds
its own dataset, trains from scratch, and evaluates with its own generator,
so cells can run in any order or in parallel without changing a single
byte of the output.

Seed discipline: the dataset stream depends only on (base_seed, value
index, seed index), so every algorithm inside a cell group sees the same
demonstrations; training and evaluation streams additionally mix in the
algorithm index. All three derive from ``numpy.random.SeedSequence`` with
a fixed stream tag, documented here and exposed as functions so external
tooling can reproduce any cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from counterbc import demonstrators as demo
from counterbc import trainer
from counterbc.dataset import Dataset, load_jsonl, subsample
from counterbc.envs import env_ids, evaluate_policy, make_env
from counterbc.trainer import DeployedPolicy, TrainConfig, TrainingDivergedError

SWEEP_VARIABLES = ("pairs", "sigma", "delta")

# stream tags keep the three per-cell generators non-overlapping
_DATA_STREAM, _TRAIN_STREAM, _EVAL_STREAM = 1, 2, 3

RESULT_COLUMNS = (
    "algorithm",
    "variable",
    "value",
    "seed",
    "performance",
    "wall_time_s",
    "checkpoint",
    "error",
)

# per-algorithm keys that may override the shared training defaults
_ALG_PARAM_KEYS = frozenset(
    {
        "delta",
        "m_samples",
        "detach_classifier",
        "resample_each_epoch",
        "lam_reg",
        "sync_epochs",
        "epochs",
        "batch_size",
        "alpha",
        "hidden",
    }
)


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    loss: str
    params: tuple = ()  # sorted (key, value) pairs; tuple keeps it hashable

    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    variable: str
    values: tuple
    algorithms: tuple
    noise_kind: str = "uniform"
    sigma: float = 0.0
    n_pairs: int = 200
    dataset_path: str | None = None
    seeds: int = 10
    base_seed: int = 0
    epochs: int = 500
    batch_size: int = 64
    alpha: float = 1e-3
    hidden: int = 256
    eval_episodes: int = 20

    def __post_init__(self):
        if self.env not in env_ids():
            raise ValueError(f"unknown env {self.env!r}")
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(
                f"sweep variable must be one of {SWEEP_VARIABLES}, got "
                f"{self.variable!r}"
            )
        if len(self.values) == 0:
            raise ValueError("sweep value grid must be non-empty")
        if self.variable == "pairs":
            if not all(isinstance(v, int) and v >= 1 for v in self.values):
                raise ValueError("pairs grid must contain positive integers")
        else:
            if not all(
                isinstance(v, (int, float)) and math.isfinite(v) and v >= 0
                for v in self.values
            ):
                raise ValueError("value grid must contain finite numbers >= 0")
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate algorithm names in {names}")
        if self.noise_kind not in demo.NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if self.dataset_path is not None and self.variable == "sigma":
            raise ValueError("a sigma sweep needs a demonstrator, not a fixed dataset")
        # fail fast on grids the noise model would reject cell by cell
        sigmas = self.values if self.variable == "sigma" else (self.sigma,)
        for s in sigmas:
            demo.NoiseModel(self.noise_kind, float(s))

    def cells(self):
        """Deterministic cell order: value-major, then seed, then algorithm."""
        for value_idx in range(len(self.values)):
            for seed_idx in range(self.seeds):
                for alg_idx in range(len(self.algorithms)):
                    yield value_idx, seed_idx, alg_idx


@dataclass
class RunResult:
    algorithm: str
    variable: str
    value: object
    seed: int
    performance: float | None
    wall_time_s: float
    checkpoint: str | None
    error: str | None = None

    def __post_init__(self):
        if self.error is None and not (
            self.performance is not None and math.isfinite(self.performance)
        ):
            raise ValueError(f"performance must be finite, got {self.performance}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate a config from the declarative JSON document."""
    try:
        sweep = doc["sweep"]
        algorithms = doc["algorithms"]
        env = doc["env"]
    except KeyError as exc:
        raise ValueError(f"config is missing required key {exc.args[0]!r}") from None

    specs = []
    for entry in algorithms:
        if "loss" not in entry:
            raise ValueError(f"algorithm entry {entry} has no 'loss'")
        loss = entry["loss"]
        if loss not in trainer.LOSS_KINDS:
            raise ValueError(f"unknown loss {loss!r}")
        name = entry.get("name", loss)
        params = {k: v for k, v in entry.items() if k not in ("name", "loss")}
        unknown = set(params) - _ALG_PARAM_KEYS
        if unknown:
            raise ValueError(f"unknown algorithm params {sorted(unknown)}")
        if "delta" in params and params["delta"] != "sigma":
            if not isinstance(params["delta"], (int, float)):
                raise ValueError("delta must be a number or the string 'sigma'")
        specs.append(
            AlgorithmSpec(name=name, loss=loss, params=tuple(sorted(params.items())))
        )

    data = doc.get("data", {})
    train = doc.get("train", {})
    return ExperimentConfig(
        env=env,
        variable=sweep["variable"],
        values=tuple(sweep["values"]),
        algorithms=tuple(specs),
        noise_kind=data.get("noise_kind", "uniform"),
        sigma=data.get("sigma", 0.0),
        n_pairs=data.get("n_pairs", 200),
        dataset_path=data.get("dataset"),
        seeds=doc.get("seeds", 10),
        base_seed=doc.get("base_seed", 0),
        epochs=train.get("epochs", 500),
        batch_size=train.get("batch_size", 64),
        alpha=train.get("alpha", 1e-3),
        hidden=train.get("hidden", 256),
        eval_episodes=doc.get("eval", {}).get("episodes", 20),
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------- seeds


def data_rng(base_seed: int, value_idx: int, seed_idx: int) -> np.random.Generator:
    """Dataset stream: shared by every algorithm in the cell group."""
    ss = np.random.SeedSequence((base_seed, _DATA_STREAM, value_idx, seed_idx))
    return np.random.default_rng(ss)


def train_seed(base_seed: int, value_idx: int, seed_idx: int, alg_idx: int) -> int:
    ss = np.random.SeedSequence(
        (base_seed, _TRAIN_STREAM, value_idx, seed_idx, alg_idx)
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def eval_rng(
    base_seed: int, value_idx: int, seed_idx: int, alg_idx: int
) -> np.random.Generator:
    ss = np.random.SeedSequence((base_seed, _EVAL_STREAM, value_idx, seed_idx, alg_idx))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------- cells


def cell_dataset(cfg: ExperimentConfig, value_idx: int, seed_idx: int) -> Dataset:
    """The demonstrations one cell group trains on.

    The radius does not shape the data, so a delta sweep reuses the
    seed's dataset across the whole grid (paired comparisons); pairs and
    sigma sweeps draw per-value datasets because the value changes them.
    """
    value = cfg.values[value_idx]
    sigma = float(value) if cfg.variable == "sigma" else cfg.sigma
    n_pairs = int(value) if cfg.variable == "pairs" else cfg.n_pairs
    data_value_idx = 0 if cfg.variable == "delta" else value_idx
    rng = data_rng(cfg.base_seed, data_value_idx, seed_idx)
    if cfg.dataset_path is not None:
        ds = load_jsonl(cfg.dataset_path)
        if n_pairs > len(ds):
            raise ValueError(
                f"requested {n_pairs} pairs but {cfg.dataset_path} has {len(ds)}"
            )
        return subsample(ds, n_pairs, rng) if n_pairs < len(ds) else ds
    env = make_env(cfg.env)
    teacher = demo.OptimalTeacher(cfg.env)
    noise = demo.NoiseModel(cfg.noise_kind, sigma)
    return demo.generate_dataset(env, teacher, noise, n_pairs, rng)


def cell_train_config(
    cfg: ExperimentConfig, value_idx: int, seed_idx: int, alg_idx: int
) -> TrainConfig:
    value = cfg.values[value_idx]
    sigma = float(value) if cfg.variable == "sigma" else cfg.sigma
    alg = cfg.algorithms[alg_idx]
    params = alg.param_dict()

    delta = params.pop("delta", 0.5)
    if delta == "sigma":
        delta = sigma
    if cfg.variable == "delta" and alg.loss == "counterbc":
        delta = float(value)

    kwargs = dict(
        loss=alg.loss,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        alpha=cfg.alpha,
        hidden=cfg.hidden,
        delta=float(delta),
        seed=train_seed(cfg.base_seed, value_idx, seed_idx, alg_idx),
    )
    kwargs.update(params)
    return TrainConfig(**kwargs)


def checkpoint_name(cfg: ExperimentConfig, value_idx: int, seed_idx: int,
                    alg_idx: int) -> str:
    alg = cfg.algorithms[alg_idx].name
    return f"checkpoints/v{value_idx:02d}_s{seed_idx:03d}_{alg}.json"


def run_cell(args) -> RunResult:
    """One independent sweep cell; the only function workers execute."""
    cfg, value_idx, seed_idx, alg_idx, out_dir = args
    value = cfg.values[value_idx]
    alg = cfg.algorithms[alg_idx]
    started = time.perf_counter()
    try:
        ds = cell_dataset(cfg, value_idx, seed_idx)
        env = make_env(cfg.env)
        tc = cell_train_config(cfg, value_idx, seed_idx, alg_idx)
        result = trainer.train(ds, env.action_spec, tc)
    except TrainingDivergedError as exc:
        return RunResult(
            algorithm=alg.name,
            variable=cfg.variable,
            value=value,
            seed=seed_idx,
            performance=None,
            wall_time_s=time.perf_counter() - started,
            checkpoint=None,
            error=str(exc),
        )
    deployed = DeployedPolicy(result.policy, result.stats)
    performance = evaluate_policy(
        env,
        deployed,
        eval_rng(cfg.base_seed, value_idx, seed_idx, alg_idx),
        episodes=cfg.eval_episodes,
    )
    ckpt = None
    if out_dir is not None:
        ckpt = checkpoint_name(cfg, value_idx, seed_idx, alg_idx)
        path = Path(out_dir) / ckpt
        path.parent.mkdir(parents=True, exist_ok=True)
        deployed.save(path)
    return RunResult(
        algorithm=alg.name,
        variable=cfg.variable,
        value=value,
        seed=seed_idx,
        performance=performance,
        wall_time_s=time.perf_counter() - started,
        checkpoint=ckpt,
    )


def reevaluate(cfg: ExperimentConfig, row: RunResult, out_dir) -> float:
    """Reload a row's checkpoint and reproduce its performance number."""
    if row.checkpoint is None:
        raise ValueError("row has no checkpoint")
    value_idx = cfg.values.index(row.value)
    alg_idx = [a.name for a in cfg.algorithms].index(row.algorithm)
    deployed = DeployedPolicy.load(Path(out_dir) / row.checkpoint)
    return evaluate_policy(
        make_env(cfg.env),
        deployed,
        eval_rng(cfg.base_seed, value_idx, row.seed, alg_idx),
        episodes=cfg.eval_episodes,
    )


# ---------------------------------------------------------------- sweep


def _result_row(r: RunResult) -> list:
    return [
        r.algorithm,
        r.variable,
        r.value,
        r.seed,
        "" if r.performance is None else repr(r.performance),
        repr(r.wall_time_s),
        r.checkpoint or "",
        r.error or "",
    ]


def run_sweep(
    cfg: ExperimentConfig,
    out_dir=None,
    workers: int = 1,
    progress=None,
) -> list[RunResult]:
    """Execute every cell; stream rows to ``<out_dir>/results.csv``.

    Rows are written in deterministic cell order no matter how many
    workers run, so reruns of the same config produce identical files
    (apart from the wall-time column). Training divergence is recorded in
    the row's error column; any other failure aborts the sweep.
    """
    tasks = [
        (cfg, v, s, a, str(out_dir) if out_dir is not None else None)
        for v, s, a in cfg.cells()
    ]
    writer = None
    fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "results.csv", "w", encoding="utf-8", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)

    results: list[RunResult] = []

    def consume(stream):
        for row in stream:
            results.append(row)
            if writer is not None:
                writer.writerow(_result_row(row))
                fh.flush()
            if progress is not None:
                progress(row)

    try:
        if workers <= 1:
            consume(map(run_cell, tasks))
        else:
            with Pool(processes=workers) as pool:
                consume(pool.imap(run_cell, tasks, chunksize=1))
    finally:
        if fh is not None:
            fh.close()
    return results


def csv_without_walltime(path) -> str:
    """Results file with the one nondeterministic column dropped."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            writer.writerow(row[:5] + row[6:])
    return buf.getvalue()


# ---------------------------------------------------------------- summaries


@dataclass
class SummaryRow:
    algorithm: str
    value: object
    mean: float | None
    stderr: float | None
    seeds: int
    single_seed: bool


def summarize(results: list[RunResult]) -> list[SummaryRow]:
    """Per (algorithm, value) mean and standard error over seeds.

    Standard error uses the sample standard deviation (ddof=1) divided by
    the square root of the seed count; a single seed reports 0 and raises
    the single-seed flag. Errored rows are excluded from the statistics.
    """
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for r in results:
        key = (r.algorithm, r.value)
        if key not in groups:
            groups[key] = []
            order.append(key)
        if r.error is None:
            groups[key].append(r.performance)
    rows = []
    for key in order:
        vals = groups[key]
        if not vals:
            rows.append(SummaryRow(key[0], key[1], None, None, 0, True))
            continue
        mean = float(np.mean(vals))
        if len(vals) == 1:
            stderr, flagged = 0.0, True
        else:
            stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
            flagged = False
        rows.append(SummaryRow(key[0], key[1], mean, stderr, len(vals), flagged))
    return rows


def write_summary_csv(rows: list[SummaryRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["algorithm", "value", "mean", "stderr", "seeds", "single_seed"]
        )
        for r in rows:
            writer.writerow(
                [
                    r.algorithm,
                    r.value,
                    "" if r.mean is None else repr(r.mean),
                    "" if r.stderr is None else repr(r.stderr),
                    r.seeds,
                    "true" if r.single_seed else "false",
                ]
            )


def format_summary_table(rows: list[SummaryRow]) -> str:
    """Fixed-width text table for terminal consumption."""
    header = f"{'algorithm':<14} {'value':>10} {'mean':>14} {'stderr':>12} {'n':>4}"
    lines = [header, "-" * len(header)]
    for r in rows:
        mean = "failed" if r.mean is None else f"{r.mean:.6g}"
        err = "" if r.stderr is None else f"{r.stderr:.3g}"
        flag = " *" if r.single_seed else ""
        lines.append(
            f"{r.algorithm:<14} {str(r.value):>10} {mean:>14} {err:>12} "
            f"{r.seeds:>4}{flag}"
        )
    if any(r.single_seed for r in rows):
        lines.append("* fewer than two seeds: stderr not estimable")
    return "\n".join(lines)


# ---------------------------------------------------------------- plotting


def load_results_csv(path) -> list[RunResult]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            value = rec["value"]
            try:
                value = int(value)
            except ValueError:
                try:
                    value = float(value)
                except ValueError:
                    pass
            perf = rec["performance"]
            rows.append(
                RunResult(
                    algorithm=rec["algorithm"],
                    variable=rec["variable"],
                    value=value,
                    seed=int(rec["seed"]),
                    performance=float(perf) if perf else None,
                    wall_time_s=float(rec["wall_time_s"]),
                    checkpoint=rec["checkpoint"] or None,
                    error=rec["error"] or None,
                )
            )
    return rows


def plot_summary(rows: list[SummaryRow], out_path, xlabel: str = "value",
                 ylabel: str = "performance", title: str | None = None) -> None:
    """Line chart with a shaded standard-error band per algorithm."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_alg: dict[str, list[SummaryRow]] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, []).append(r)

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, group in by_alg.items():
        pts = [(r.value, r.mean, r.stderr) for r in group if r.mean is not None]
        if not pts:
            continue
        xs = [p[0] for p in pts]
        means = np.array([p[1] for p in pts])
        errs = np.array([p[2] for p in pts])
        ax.plot(xs, means, marker="o", label=name)
        ax.fill_between(xs, means - errs, means + errs, alpha=0.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
