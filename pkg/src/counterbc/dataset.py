"""Demonstration corpora: storage, JSONL serialization, normalization.

A dataset is an immutable ordered collection of (state, action) pairs with
declared dimensions and optional provenance metadata. States may be z-scored
for training; actions are deliberately never normalized, because the
counterfactual radius is measured in raw action units and rescaling actions
would silently change its meaning (there is no action-normalization
operation anywhere in this package).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DATASET_FORMAT_VERSION = 1
STD_FLOOR = 1e-6


class DatasetError(ValueError):
    """Malformed dataset file or inconsistent pair dimensions."""


@dataclass
class StateActionPair:
    s: np.ndarray
    a: np.ndarray


@dataclass
class Dataset:
    """n state-action pairs with shared dims; immutable after construction."""

    states: np.ndarray
    actions: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        # own private copies: the arrays are frozen below and freezing a
        # caller's array in place would be a surprising side effect
        self.states = np.array(self.states, dtype=np.float64)
        self.actions = np.array(self.actions, dtype=np.float64)
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise DatasetError("states and actions must be 2-d arrays")
        if self.states.shape[0] != self.actions.shape[0]:
            raise DatasetError(
                f"{self.states.shape[0]} states vs {self.actions.shape[0]} actions"
            )
        if self.states.shape[0] < 1:
            raise DatasetError("a dataset needs at least one pair")
        if not (np.isfinite(self.states).all() and np.isfinite(self.actions).all()):
            raise DatasetError("non-finite entries in states or actions")
        self.states.setflags(write=False)
        self.actions.setflags(write=False)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i: int) -> StateActionPair:
        return StateActionPair(self.states[i], self.actions[i])

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]


def subsample(ds: Dataset, k: int, rng: np.random.Generator) -> Dataset:
    """k pairs drawn uniformly without replacement; provenance preserved."""
    if not 1 <= k <= len(ds):
        raise DatasetError(f"cannot draw {k} pairs from a dataset of {len(ds)}")
    idx = rng.choice(len(ds), size=k, replace=False)
    return Dataset(ds.states[idx], ds.actions[idx], dict(ds.provenance))


@dataclass
class NormalizationStats:
    """Per-dimension state mean and std; std floored at 1e-6."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizationStats":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
        )

    @classmethod
    def identity(cls, dim: int) -> "NormalizationStats":
        return cls(mean=np.zeros(dim), std=np.ones(dim))


def fit_normalizer(ds: Dataset) -> NormalizationStats:
    if len(ds) < 2:
        raise DatasetError("std estimation needs at least two pairs")
    mean = ds.states.mean(axis=0)
    std = np.maximum(ds.states.std(axis=0), STD_FLOOR)
    return NormalizationStats(mean=mean, std=std)


def apply_normalizer(stats: NormalizationStats, s: np.ndarray) -> np.ndarray:
    """z-score a state vector or a batch of them."""
    return (np.asarray(s, dtype=np.float64) - stats.mean) / stats.std


def normalized(ds: Dataset, stats: NormalizationStats) -> Dataset:
    """Dataset with z-scored states; actions pass through untouched."""
    return Dataset(apply_normalizer(stats, ds.states), ds.actions, dict(ds.provenance))


def save_jsonl(ds: Dataset, path) -> None:
    """Header line with dims and provenance, then one {"s","a"} object per pair.

    json emits shortest round-trip decimal representations, so a save/load
    cycle reproduces every float bit-exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format_version": DATASET_FORMAT_VERSION,
            "state_dim": ds.state_dim,
            "action_dim": ds.action_dim,
            "provenance": ds.provenance,
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(len(ds)):
            rec = {"s": ds.states[i].tolist(), "a": ds.actions[i].tolist()}
            fh.write(json.dumps(rec) + "\n")


def load_jsonl(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file, header missing")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: line 1: invalid header: {exc}") from exc
    if not isinstance(header, dict) or "state_dim" not in header:
        raise DatasetError(f"{path}: line 1: not a dataset header")
    version = header.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported format_version {version!r}")
    ds_dim = int(header["state_dim"])
    da_dim = int(header["action_dim"])

    states, actions = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: line {lineno}: invalid json: {exc}") from exc
        try:
            s, a = rec["s"], rec["a"]
        except (TypeError, KeyError):
            raise DatasetError(f"{path}: line {lineno}: record needs 's' and 'a'")
        if len(s) != ds_dim or len(a) != da_dim:
            raise DatasetError(
                f"{path}: line {lineno}: dims ({len(s)},{len(a)}) "
                f"do not match header ({ds_dim},{da_dim})"
            )
        states.append(s)
        actions.append(a)
    if not states:
        raise DatasetError(f"{path}: no pairs after the header")
    return Dataset(
        np.asarray(states, dtype=np.float64),
        np.asarray(actions, dtype=np.float64),
        header.get("provenance") or {},
    )
