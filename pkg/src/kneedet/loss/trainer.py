"""Desk-scale training loop for small cfg graphs."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericFaultError
from ..geometry import NormBox
from ..model import ConvParams, Model, NetworkConfig, init_model
from ..postprocess import grids_from_config
from .backprop import backward, forward_train
from .objective import LossBreakdown, LossWeights, loss_and_grad
from .optim import AdamState, adam_step
from .targets import assign_targets

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainHyperparams:
    epochs: int = 48
    batch_size: int = 32
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ignore_iou: float = 0.5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not 0 < self.ignore_iou < 1:
            raise ValueError("learning_rate must be >= 0 and ignore_iou in (0, 1)")


Sample = tuple[np.ndarray, Sequence[tuple[int, NormBox]]]


def train_toy(
    samples: Sequence[Sample],
    config: NetworkConfig,
    hp: TrainHyperparams = TrainHyperparams(),
    seed: int = 0,
    weights: LossWeights = LossWeights(),
    on_epoch: Callable[[int, LossBreakdown], None] | None = None,
) -> tuple[Model, list[LossBreakdown]]:
    """Train from scratch on ``(image (C, H, W), annotations)`` samples.

    Returns the trained model and the per-epoch mean of each loss term over
    that epoch's batches. Deterministic for a given seed.
    """
    model = init_model(config, seed)
    params = {i: (p.weights.copy(), p.biases.copy()) for i, p in model.params.items()}
    grids = grids_from_config(config)
    W, H = config.width, config.height
    x_all = np.stack([np.asarray(s[0], dtype=np.float64) for s in samples]) if samples else np.zeros((0, config.channels, H, W))
    assignments = [assign_targets(s[1], grids, W, H, hp.ignore_iou) for s in samples]
    rng = np.random.default_rng(seed)
    state = AdamState()
    history: list[LossBreakdown] = []
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(len(samples))
        terms = []
        for b, start in enumerate(range(0, len(order), hp.batch_size)):
            sel = order[start : start + hp.batch_size]
            heads, cache = forward_train(config, params, x_all[sel])
            br, hgrads = loss_and_grad(heads, [assignments[i] for i in sel], grids, W, H, weights)
            if not np.isfinite(br.total):
                raise NumericFaultError(f"non-finite loss at epoch {epoch}, batch {b}")
            pgrads = backward(config, params, cache, hgrads)
            flat_p = {(i, s): params[i][s] for i in params for s in (0, 1)}
            flat_g = {(i, s): pgrads[i][s] for i in params for s in (0, 1)}
            flat_p, state = adam_step(flat_p, flat_g, state, hp.learning_rate, hp.beta1, hp.beta2, hp.eps)
            params = {i: (flat_p[(i, 0)], flat_p[(i, 1)]) for i in params}
            terms.append((br.giou_term, br.obj_term, br.noobj_term, br.cls_term))
        mean = np.mean(terms, axis=0) if terms else np.zeros(4)
        br = LossBreakdown(*(float(v) for v in mean), weights=weights)
        history.append(br)
        log.info("epoch %d: total %.4f", epoch, br.total)
        if on_epoch is not None:
            on_epoch(epoch, br)
    trained = Model(config, {i: ConvParams(w, b) for i, (w, b) in params.items()}, model.version, model.seen + hp.epochs * len(samples))
    return trained, history


def format_history(history: Sequence[LossBreakdown]) -> str:
    lines = ["epoch,giou_term,obj_term,noobj_term,cls_term,total"]
    for e, br in enumerate(history, start=1):
        lines.append(f"{e},{br.giou_term:.6f},{br.obj_term:.6f},{br.noobj_term:.6f},{br.cls_term:.6f},{br.total:.6f}")
    return "\n".join(lines) + "\n"
