"""Mini-batch training of toy generators, with an optional trigger regularizer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..imaging import check_batch, check_image, make_rng
from .network import ToyGenerator


ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    lambda_trigger: float = 0.0
    batch_size: int = 8
    seed: int = 0
    checkpoint_every: int = 5
    schedule: str = "cosine"
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.lambda_trigger < 0:
            raise ValueError("lambda_trigger must be nonnegative")
        if self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size and checkpoint_every must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown learning-rate schedule {self.schedule!r}")

    def step_size(self, step: int, total_steps: int) -> float:
        if self.schedule == "constant":
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


@dataclass(frozen=True)
class TriggerSpec:
    trigger_image: np.ndarray
    watermark_target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "trigger_image", check_image(self.trigger_image, "trigger_image"))
        object.__setattr__(self, "watermark_target", check_image(self.watermark_target, "watermark_target"))


def hue_shift(images) -> np.ndarray:
    """The fixed translation task: rotate channels R->G->B->R, then a mild contrast curve.

    Output red comes from input blue, green from red, blue from green. The
    curve ``v + 0.25 * v * (1 - v) * (2v - 1)`` steepens mid-tones slightly and
    keeps ``[0, 1]`` fixed.
    """
    x = np.asarray(images, dtype=np.float64)
    if x.shape[-1] != 3:
        raise ValueError("hue_shift needs 3-channel images")
    v = x[..., [2, 0, 1]]
    return v + 0.25 * v * (1.0 - v) * (2.0 * v - 1.0)


def default_trigger(size: int = 32, red_offset: float = 0.4) -> TriggerSpec:
    """Checkerboard disc on mid-gray; the watermark is the task output tinted red inside the disc.

    The smooth training textures never contain pixel-scale alternation, so a
    detector for it costs the clean task almost nothing.
    """
    if size < 8:
        raise ValueError("trigger size must be >= 8")
    yy, xx = np.mgrid[0:size, 0:size]
    r = np.hypot(yy - size / 2 + 0.5, xx - size / 2 + 0.5)
    mask = (r < 0.28 * size).astype(np.float64)[:, :, None]
    board = ((yy + xx) % 2).astype(np.float64)[:, :, None]
    trig = np.repeat((1.0 - mask) * 0.5 + mask * board, 3, axis=2)
    target = np.clip(hue_shift(trig), 0.03, 0.97) + mask * np.array([red_offset, 0.0, 0.0])
    return TriggerSpec(trig, np.clip(target, 0.0, 1.0))


def mse(a, b) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def _check_pairs(net, inputs, targets):
    x = check_batch(inputs, "inputs")
    y = check_batch(targets, "targets")
    if len(x) != len(y):
        raise ValueError("inputs and targets must pair up")
    if net.output_shape(x.shape[1:]) != y.shape[1:]:
        raise ValueError(f"targets of shape {y.shape[1:]} do not match model output "
                         f"{net.output_shape(x.shape[1:])}")
    return x, y


def _loss_grads(net, x, y, weight=1.0):
    out, caches = net.forward_with_caches(x)
    diff = out - y
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked by the caller
        loss = float(np.mean(diff * diff))
    g = (2.0 * weight / diff.size) * diff
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        g, grads[i] = net.layers[i].backward(caches[i], g)
    return loss, grads


def _dataset_loss(net, x, y, chunk=64):
    total = 0.0
    for s in range(0, len(x), chunk):
        d = net.forward(x[s:s + chunk]) - y[s:s + chunk]
        with np.errstate(over="ignore", invalid="ignore"):
            total += float(np.sum(d * d))
    return total / y.size


def train(g: ToyGenerator, inputs, targets, cfg: TrainConfig,
          trigger: TriggerSpec | None = None,
          on_checkpoint: Callable[[int, ToyGenerator], None] | None = None):
    """Minimize mean squared error by mini-batch gradient descent.

    Returns a trained copy of ``g`` and the loss trace: entry 0 is the task MSE
    over all data before training, entry ``e`` the mean task MSE of the
    mini-batches seen during epoch ``e`` (each measured before its update).
    Each step adds ``lambda_trigger * MSE(g(trigger), watermark_target)`` to the
    objective when a trigger is given and the weight is positive.
    ``on_checkpoint(epoch, model)`` fires at epoch 0 and every
    ``checkpoint_every`` epochs thereafter.
    """
    net = g.copy()
    x, y = _check_pairs(net, inputs, targets)
    use_trigger = trigger is not None and cfg.lambda_trigger > 0
    if use_trigger:
        tx = trigger.trigger_image[None]
        ty = trigger.watermark_target[None]
        if net.output_shape(tx.shape[1:]) != ty.shape[1:]:
            raise ValueError("trigger and watermark target shapes are incompatible with the model")

    # (task + lambda * trigger) / max(1, lambda): same minimizer, bounded step for large lambda
    task_weight = 1.0 / max(1.0, cfg.lambda_trigger) if use_trigger else 1.0
    steps_per_epoch = -(-len(x) // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    step = 0
    moments = {}
    rng = make_rng(cfg.seed)
    trace = [_dataset_loss(net, x, y)]
    if on_checkpoint is not None:
        on_checkpoint(0, net.copy())
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = _loss_grads(net, x[idx], y[idx], task_weight)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
            total += loss * len(idx)
            if use_trigger:
                _, tgrads = _loss_grads(net, tx, ty, cfg.lambda_trigger * task_weight)
                grads = [{k: v + tg[k] for k, v in gr.items()} for gr, tg in zip(grads, tgrads)]
            lr = cfg.step_size(step, total_steps)
            step += 1
            for li, (layer, gr) in enumerate(zip(net.layers, grads)):
                for k, v in gr.items():
                    if cfg.optimizer == "adam":
                        m, s2 = moments.get((li, k), (0.0, 0.0))
                        m = ADAM_B1 * m + (1 - ADAM_B1) * v
                        s2 = ADAM_B2 * s2 + (1 - ADAM_B2) * v * v
                        moments[(li, k)] = (m, s2)
                        v = (m / (1 - ADAM_B1 ** step)) / (np.sqrt(s2 / (1 - ADAM_B2 ** step)) + ADAM_EPS)
                    layer.params[k] = layer.params[k] - lr * v
            net.round_params()
        trace.append(total / len(x))
        if on_checkpoint is not None and epoch % cfg.checkpoint_every == 0:
            on_checkpoint(epoch, net.copy())
    return net, trace


def train_with_trigger(g: ToyGenerator, inputs, targets, trig: TriggerSpec, cfg: TrainConfig,
                       on_checkpoint=None):
    """`train` with the trigger regularizer weighted by ``cfg.lambda_trigger``."""
    return train(g, inputs, targets, cfg, trigger=trig, on_checkpoint=on_checkpoint)
