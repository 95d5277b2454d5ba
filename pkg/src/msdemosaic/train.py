"""Loss, Adam optimizer, the sub-image training loop, and the k-fold
cross-validation driver that scores refined output against the bilinear
baseline by PSNR.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .classic import bilinear_demosaic
from .cube import MsfaPattern, SpectralCube, tile
from .metrics import psnr
from .mosaic import apply_msfa
from .net3d import (
    NetworkConfig,
    NetworkParams,
    init_params,
    network_backward_batch,
    network_forward,
    network_forward_batch,
)

__all__ = [
    "AdamState",
    "TrainPlan",
    "FitResult",
    "ReportRow",
    "CrossvalReport",
    "mse_loss",
    "adam_step",
    "train_epoch",
    "make_folds",
    "demosaic_training_pairs",
    "fit",
    "train_keys",
    "crossval_run",
]

Pair = tuple[SpectralCube, SpectralCube]  # (initial, target)


@dataclass(frozen=True)
class AdamState:
    """Adam moment accumulators; shapes mirror the parameter arrays exactly."""

    t: int
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(
        cls,
        params: Sequence[np.ndarray],
        alpha: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        m = tuple(np.zeros_like(p) for p in params)
        v = tuple(np.zeros_like(p) for p in params)
        return cls(0, m, v, alpha, beta1, beta2, eps)


@dataclass(frozen=True)
class TrainPlan:
    """How a training or cross-validation run is driven."""

    epochs: int = 300
    batch_size: int = 8
    shuffle_seed: int = 0
    folds: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.folds is not None:
            object.__setattr__(
                self, "folds", tuple(tuple(group) for group in self.folds)
            )


def mse_loss(pred: SpectralCube, target: SpectralCube) -> tuple[float, SpectralCube]:
    """Mean squared error over all entries and its gradient wrt pred."""
    if pred.data.shape != target.data.shape:
        raise ValueError(
            f"cube dims differ: {pred.data.shape} vs {target.data.shape}"
        )
    diff = pred.data - target.data
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = SpectralCube((2.0 / diff.size) * diff)
    return loss, grad


def adam_step(
    state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update: returns new parameter arrays and the advanced state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"got {len(params)} params, {len(grads)} grads, state holds {len(state.m)}"
        )
    t = state.t + 1
    corr1 = 1.0 - state.beta1**t
    corr2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient shape {np.shape(g)} does not match {np.shape(p)}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        new_params.append(p - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, t=t, m=tuple(new_m), v=tuple(new_v))


def _batch_step(
    config: NetworkConfig,
    params: NetworkParams,
    state: AdamState,
    batch: Sequence[Pair],
) -> tuple[NetworkParams, AdamState, float]:
    initial = np.stack([p.data for p, _ in batch])
    target = np.stack([t.data for _, t in batch])
    if initial.shape != target.shape:
        raise ValueError(
            f"initial dims {initial.shape[1:]} do not match target {target.shape[1:]}"
        )
    pred, caches = network_forward_batch(config, params, initial)
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grads = network_backward_batch(config, params, caches, (2.0 / diff.size) * diff)
    arrays, state = adam_step(state, params.arrays(), grads)
    return params.replace_arrays(arrays), state, loss


def train_epoch(
    config: NetworkConfig,
    params: NetworkParams,
    state: AdamState,
    batches: Sequence[Sequence[Pair]],
) -> tuple[NetworkParams, AdamState, float | None]:
    """Run one pass over pre-shuffled batches; one Adam step per batch.

    Losses and gradients are averaged across each batch before the step.
    Returns the mean batch loss, or None when the batch list is empty.
    """
    losses = []
    for batch in batches:
        if not batch:
            raise ValueError("empty batch")
        params, state, loss = _batch_step(config, params, state, batch)
        losses.append(loss)
    mean_loss = float(np.mean(losses)) if losses else None
    return params, state, mean_loss


def make_folds(image_ids: Sequence[str], k: int, seed) -> list[list[str]]:
    """Seeded shuffle then contiguous chunking into k equal groups."""
    ids = list(image_ids)
    if k < 1:
        raise ValueError(f"fold count must be positive, got {k}")
    if len(ids) % k:
        raise ValueError(f"{len(ids)} images cannot split evenly into {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    size = len(ids) // k
    return [shuffled[i * size : (i + 1) * size] for i in range(k)]


def demosaic_training_pairs(
    cube: SpectralCube,
    pattern: MsfaPattern,
    grid_rows: int = 4,
    grid_cols: int = 4,
) -> list[Pair]:
    """(bilinear initial, ground truth) sub-image pairs for one image.

    The full image is mosaicked and bilinear-demosaicked first, then both the
    initial cube and the ground truth are tiled on the same grid.
    """
    initial = bilinear_demosaic(apply_msfa(cube, pattern))
    return list(zip(tile(initial, grid_rows, grid_cols), tile(cube, grid_rows, grid_cols)))


@dataclass(frozen=True)
class FitResult:
    params: NetworkParams
    state: AdamState
    epoch_losses: tuple[float, ...]


def fit(
    config: NetworkConfig,
    pairs: Sequence[Pair],
    plan: TrainPlan,
    init_seed=0,
    shuffle_key=None,
    max_steps: int | None = None,
    alpha: float = 1e-3,
    dtype=np.float32,
) -> FitResult:
    """Train fresh parameters on sub-image pairs.

    Every epoch reshuffles the pairs with a seeded generator and chunks them
    into batches of plan.batch_size (the last batch may be smaller). When
    max_steps is given, training stops after that many optimizer steps instead
    of completing plan.epochs.
    """
    params = init_params(config, seed=init_seed, dtype=dtype)
    state = AdamState.create(params.arrays(), alpha=alpha)
    rng = np.random.default_rng(plan.shuffle_seed if shuffle_key is None else shuffle_key)
    pairs = list(pairs)
    losses: list[float] = []
    epoch = 0
    while True:
        if max_steps is None:
            if epoch >= plan.epochs:
                break
        elif state.t >= max_steps or not pairs:
            break
        order = rng.permutation(len(pairs))
        shuffled = [pairs[i] for i in order]
        batches = [
            shuffled[i : i + plan.batch_size]
            for i in range(0, len(shuffled), plan.batch_size)
        ]
        if max_steps is not None:
            batches = batches[: max_steps - state.t]
        params, state, loss = train_epoch(config, params, state, batches)
        if loss is not None:
            losses.append(loss)
        epoch += 1
    return FitResult(params, state, tuple(losses))


@dataclass(frozen=True)
class ReportRow:
    image_id: str
    bilinear_db: float
    refined_db: float


@dataclass(frozen=True)
class CrossvalReport:
    rows: tuple[ReportRow, ...]

    @property
    def average_bilinear_db(self) -> float:
        return float(np.mean([r.bilinear_db for r in self.rows]))

    @property
    def average_refined_db(self) -> float:
        return float(np.mean([r.refined_db for r in self.rows]))


def train_keys(seed: int):
    """Distinct (init, shuffle) seed keys derived from one user-facing seed."""
    init_key, shuffle_key = np.random.SeedSequence(int(seed)).spawn(2)
    return init_key, shuffle_key


def _fold_keys(seed: int, fold_index: int):
    base = np.random.SeedSequence(entropy=[int(seed), int(fold_index)])
    return tuple(base.spawn(2))


def crossval_run(
    dataset: Mapping[str, SpectralCube],
    pattern: MsfaPattern,
    config: NetworkConfig,
    plan: TrainPlan,
) -> CrossvalReport:
    """k-fold cross-validation over full images.

    Each fold trains fresh parameters on the other folds' sub-image pairs and
    then scores every held-out image: bilinear PSNR vs refined PSNR against
    the ground truth. Held-out images are only read after the fold's training
    finishes. Folds default to 8 groups drawn with the plan's shuffle seed.
    """
    ids = list(dataset.keys())
    if not ids:
        raise ValueError("dataset is empty")
    folds = plan.folds
    if folds is None:
        folds = tuple(tuple(g) for g in make_folds(ids, 8, plan.shuffle_seed))
    flat = [i for group in folds for i in group]
    if len(flat) != len(set(flat)) or set(flat) != set(ids):
        raise ValueError("folds must partition the dataset ids exactly")
    rows: list[ReportRow] = []
    for fold_index, held_out in enumerate(folds):
        held = set(held_out)
        init_key, shuffle_key = _fold_keys(plan.shuffle_seed, fold_index)
        pairs: list[Pair] = []
        for image_id in ids:
            if image_id not in held:
                pairs.extend(demosaic_training_pairs(dataset[image_id], pattern))
        result = fit(config, pairs, plan, init_seed=init_key, shuffle_key=shuffle_key)
        for image_id in held_out:
            truth = dataset[image_id]
            initial = bilinear_demosaic(apply_msfa(truth, pattern))
            refined, _ = network_forward(config, result.params, initial)
            rows.append(
                ReportRow(image_id, psnr(truth, initial), psnr(truth, refined))
            )
    return CrossvalReport(tuple(rows))
