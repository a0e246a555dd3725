"""Minibatch training loop shared by all four objectives.

Determinism contract: every random choice (policy init, auxiliary-net init,
counterfactual sampling, epoch shuffles) draws from its own generator, all
spawned from the config seed via ``rng_streams``. Identical (dataset,
config) therefore reproduces the final parameters bit-for-bit on a fixed
kernel backend.

The counterfactual groups are sampled once before the first epoch and
reused by every epoch (resampling per epoch is available behind
``resample_each_epoch`` but off by default). The mode-seeking loss keeps a
frozen snapshot of the policy that refreshes every ``sync_epochs`` epochs,
starting from a copy of the initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from counterbc import losses, nn
from counterbc import policy as polmod
from counterbc.dataset import (
    Dataset,
    NormalizationStats,
    apply_normalizer,
    fit_normalizer,
)
from counterbc.envs import ActionSpec

LOSS_KINDS = ("bc", "counterbc", "sasaki", "ileed")

EMA_WINDOW = 50
EMA_BLOWUP_FACTOR = 10.0


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss blows up or stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    loss: str
    epochs: int = 500
    batch_size: int = 64
    alpha: float = 1e-3
    seed: int = 0
    hidden: int = 256
    delta: float = 0.5
    m_samples: int = losses.DEFAULT_M
    detach_classifier: bool = False
    resample_each_epoch: bool = False
    lam_reg: float = losses.DEFAULT_LAM_REG
    sync_epochs: int = losses.DEFAULT_SYNC_EPOCHS
    normalize_states: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.alpha <= 0:
            raise ValueError("learning rate must be positive")
        if self.delta < 0 or self.m_samples < 0:
            raise ValueError("delta and m_samples must be non-negative")
        if self.sync_epochs < 1:
            raise ValueError("sync_epochs must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    entropy: float | None = None
    kl: float | None = None


@dataclass
class TrainResult:
    policy: polmod.GaussianPolicy
    stats: NormalizationStats
    history: list[EpochRecord]
    expertise_net: nn.DenseNetwork | None = None


@dataclass
class DeployedPolicy:
    """Checkpoint artifact: policy plus the state normalizer it trained with.

    Presents the rollout interface against RAW env states.
    """

    policy: polmod.GaussianPolicy
    stats: NormalizationStats

    def mean_action(self, s: np.ndarray) -> np.ndarray:
        return self.policy.mean_action(apply_normalizer(self.stats, s))

    def sample(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.policy.sample(apply_normalizer(self.stats, s), rng)

    def save(self, path) -> None:
        doc = self.policy.copy()
        doc.meta["normalizer"] = self.stats.to_dict()
        polmod.save_policy(doc, path)

    @classmethod
    def load(cls, path) -> "DeployedPolicy":
        policy = polmod.load_policy(path)
        stats_doc = policy.meta.get("normalizer")
        stats = (
            NormalizationStats.from_dict(stats_doc)
            if stats_doc
            else NormalizationStats.identity(policy.state_dim)
        )
        return cls(policy=policy, stats=stats)


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """The documented stream split: one child generator per random concern."""
    init, aux, counterfactual, shuffle = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(init),
        "aux": np.random.default_rng(aux),
        "counterfactual": np.random.default_rng(counterfactual),
        "shuffle": np.random.default_rng(shuffle),
    }


class DivergenceGuard:
    """Per-batch loss monitor: exponential moving average, window 50.

    Raises when a batch loss is non-finite or the moving average climbs
    past ``factor`` times the best (lowest) average seen so far, floored
    at 1 so near-zero and negative averages keep a meaningful scale.
    Incoming losses are clipped to one threshold above the average before
    folding them in, so an isolated spike cannot trip the guard; only a
    sustained blow-up walks the average across the threshold.
    """

    def __init__(self, window: int = EMA_WINDOW, factor: float = EMA_BLOWUP_FACTOR):
        self.alpha = 2.0 / (window + 1.0)
        self.factor = factor
        self.ema = None
        self.best = None

    def update(self, loss: float, epoch: int, batch: int) -> None:
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss {loss} at epoch {epoch}, batch {batch}"
            )
        if self.ema is None:
            self.ema = self.best = loss
            return
        threshold = self.factor * max(1.0, self.best)
        clipped = min(loss, self.ema + threshold)
        self.ema = (1.0 - self.alpha) * self.ema + self.alpha * clipped
        self.best = min(self.best, self.ema)
        if self.ema > threshold:
            raise TrainingDivergedError(
                f"loss average blew up from {self.best:.6g} to {self.ema:.6g} "
                f"at epoch {epoch}, batch {batch}"
            )


def train(
    ds: Dataset,
    spec: ActionSpec,
    cfg: TrainConfig,
    checkpoint_dir=None,
) -> TrainResult:
    """Run the full training loop; returns the policy, normalizer, history."""
    if ds.action_dim != spec.dim:
        raise ValueError(
            f"dataset action dim {ds.action_dim} does not match spec dim {spec.dim}"
        )
    rngs = rng_streams(cfg.seed)
    n = len(ds)

    if cfg.normalize_states and n >= 2:
        stats = fit_normalizer(ds)
    else:
        stats = NormalizationStats.identity(ds.state_dim)
    states = apply_normalizer(stats, ds.states)
    actions = ds.actions

    policy = polmod.make_policy(
        ds.state_dim, ds.action_dim, spec.low, spec.high,
        hidden=cfg.hidden, rng=rngs["init"],
    )
    opt = nn.AdamState.for_network(policy.backbone, alpha=cfg.alpha)

    cfbatch = None
    if cfg.loss == "counterbc":
        cfbatch = losses.sample_counterfactuals(
            ds, cfg.delta, cfg.m_samples, spec.low, spec.high, rngs["counterfactual"]
        )

    prev_policy = None
    if cfg.loss == "sasaki":
        prev_policy = policy.copy()

    expertise_net = None
    expertise_opt = None
    if cfg.loss == "ileed":
        expertise_net = nn.glorot_init((ds.state_dim, cfg.hidden, 1), rngs["aux"])
        expertise_opt = nn.AdamState.for_network(expertise_net, alpha=cfg.alpha)

    guard = DivergenceGuard()
    history: list[EpochRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        if cfg.loss == "sasaki" and epoch > 1 and (epoch - 1) % cfg.sync_epochs == 0:
            prev_policy = policy.copy()
        if cfg.loss == "counterbc" and cfg.resample_each_epoch and epoch > 1:
            cfbatch = losses.sample_counterfactuals(
                ds, cfg.delta, cfg.m_samples, spec.low, spec.high,
                rngs["counterfactual"],
            )

        perm = rngs["shuffle"].permutation(n)
        loss_sum = 0.0
        entropy_sum = 0.0
        kl_sum = 0.0
        for batch_idx, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            bs, ba = states[idx], actions[idx]

            if cfg.loss == "bc":
                report, grads = losses.bc_loss(policy, bs, ba)
            elif cfg.loss == "counterbc":
                report, grads = losses.counter_bc_loss(
                    policy, bs, cfbatch.take(idx),
                    detach_classifier=cfg.detach_classifier,
                )
            elif cfg.loss == "sasaki":
                report, grads = losses.sasaki_loss(policy, prev_policy, bs, ba)
            else:
                report, grads, exp_grads = losses.ileed_loss(
                    policy, expertise_net, bs, ba, lam_reg=cfg.lam_reg
                )
                expertise_net, expertise_opt = nn.adam_step(
                    expertise_net, exp_grads, expertise_opt
                )

            guard.update(report.loss, epoch, batch_idx)
            backbone, opt = nn.adam_step(policy.backbone, grads, opt)
            policy = replace(policy, backbone=backbone)

            loss_sum += report.loss * len(idx)
            if report.entropy is not None:
                entropy_sum += report.entropy * len(idx)
                kl_sum += report.kl * len(idx)

        record = EpochRecord(epoch=epoch, loss=loss_sum / n)
        if cfg.loss == "counterbc":
            record.entropy = entropy_sum / n
            record.kl = kl_sum / n
        history.append(record)

        if (
            checkpoint_dir is not None
            and cfg.checkpoint_every > 0
            and epoch % cfg.checkpoint_every == 0
        ):
            path = Path(checkpoint_dir) / f"epoch_{epoch:05d}.json"
            DeployedPolicy(policy, stats).save(path)

    return TrainResult(
        policy=policy, stats=stats, history=history, expertise_net=expertise_net
    )


def history_to_csv(history: list[EpochRecord], path) -> None:
    """Loss curve alongside the checkpoint; floats use repr round-tripping."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,entropy,kl\n")
        for rec in history:
            ent = "" if rec.entropy is None else repr(rec.entropy)
            kl = "" if rec.kl is None else repr(rec.kl)
            fh.write(f"{rec.epoch},{rec.loss!r},{ent},{kl}\n")
