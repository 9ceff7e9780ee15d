"""Sign-PGD disruption of toy generators and its random-noise control."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import Dataset, check_image, make_rng
from .metrics import frechet_between, l1_distance, l2_distance
from .toynet.network import ToyGenerator


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.05
    alpha: float | None = None
    iterations: int = 20
    seed: int = 0
    random_start: bool = False

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.epsilon / 4.0)
        if not 0.0 <= self.alpha <= self.epsilon <= 1.0:
            raise ValueError(f"need 0 <= alpha <= epsilon <= 1, got alpha={self.alpha}, epsilon={self.epsilon}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass(frozen=True)
class AttackResult:
    adversarial_input: np.ndarray
    perturbation_linf: float
    distortion_l1: float
    distortion_l2: float
    distortion_frechet: float = float("nan")  # set-level only, see evaluate_attack
    history: tuple[float, ...] = field(default=(), repr=False)


def _project(x, x_adv, eps):
    return np.clip(x + np.clip(x_adv - x, -eps, eps), 0.0, 1.0)


def _result(x, x_adv, clean_out, adv_out, history=()):
    return AttackResult(x_adv, float(np.max(np.abs(x_adv - x))) if x.size else 0.0,
                        l1_distance(clean_out, adv_out), l2_distance(clean_out, adv_out), history=tuple(history))


def _probe_direction(g, x, clean_out, alpha):
    """Step direction where the loss gradient vanishes (at the clean input itself).

    Probes ``x + alpha`` and ``x - alpha``. With matching input and output
    shapes each element takes the side whose own output moves more; otherwise
    the whole image takes the better side.
    """
    up, down = np.clip(x + alpha, 0.0, 1.0), np.clip(x - alpha, 0.0, 1.0)
    d_up = (g.forward(up) - clean_out) ** 2
    d_down = (g.forward(down) - clean_out) ** 2
    if d_up.shape == x.shape:
        return np.where(d_up >= d_down, 1.0, -1.0)
    return np.full(x.shape, 1.0 if d_up.sum() >= d_down.sum() else -1.0)


def pgd_disrupt(g: ToyGenerator, x, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """Maximize ``||g(x') - g(x)||^2`` over the L-inf ball of radius epsilon.

    Returns the best iterate seen (by output L2), not the last one.
    """
    x = check_image(x, "x")
    clean_out = g.forward(x)
    x_adv = x.copy()
    if cfg.random_start and cfg.epsilon > 0:
        noise = make_rng(cfg.seed).uniform(-cfg.epsilon, cfg.epsilon, size=x.shape)
        x_adv = _project(x, x + noise, cfg.epsilon)
    adv_out = g.forward(x_adv)
    best, best_out = x_adv, adv_out
    best_d = l2_distance(clean_out, adv_out)
    history = [best_d]
    if cfg.epsilon == 0:
        return _result(x, x.copy(), clean_out, clean_out, history)
    for step in range(cfg.iterations):
        grad = g.backward_input(x_adv, 2.0 * (adv_out - clean_out))
        if not np.all(np.isfinite(grad)):
            raise AttackError(f"non-finite input gradient at PGD step {step}")
        direction = np.sign(grad)
        if not np.any(direction):
            direction = _probe_direction(g, x_adv, clean_out, cfg.alpha)
        x_adv = _project(x, x_adv + cfg.alpha * direction, cfg.epsilon)
        adv_out = g.forward(x_adv)
        d = l2_distance(clean_out, adv_out)
        if d > best_d:
            best, best_out, best_d = x_adv, adv_out, d
        history.append(best_d)
    return _result(x, best, clean_out, best_out, history)


def random_noise_baseline(g: ToyGenerator, x, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """Perturb every element by ``+-epsilon`` with seeded random signs."""
    x = check_image(x, "x")
    signs = make_rng(cfg.seed).choice(np.array([-1.0, 1.0]), size=x.shape)
    x_adv = np.clip(x + cfg.epsilon * signs, 0.0, 1.0)
    return _result(x, x_adv, g.forward(x), g.forward(x_adv))


@dataclass(frozen=True)
class AttackReport:
    model: str
    dataset: str
    method: str
    per_image: tuple[AttackResult, ...]
    mean_l1: float
    mean_l2: float
    fd32: float

    def table_row(self) -> dict:
        return {"Model": self.model, "Dataset": self.dataset, "Method": self.method,
                "L1": self.mean_l1, "L2": self.mean_l2, "FD32": self.fd32}

    def image_rows(self, ids) -> list[dict]:
        return [{"Model": self.model, "Dataset": self.dataset, "Method": self.method, "Image": i,
                 "L1": r.distortion_l1, "L2": r.distortion_l2, "Linf": r.perturbation_linf}
                for i, r in zip(ids, self.per_image)]


def evaluate_attack(g: ToyGenerator, test: Dataset, cfg: AttackConfig = AttackConfig(),
                    method: str = "pgd", model_name: str | None = None,
                    dataset_name: str = "textures") -> AttackReport:
    """Attack every image in dataset order; FD32 compares clean and attacked output sets.

    FD32 needs at least two images and is NaN otherwise.
    """
    if len(test) == 0:
        raise ValueError("cannot evaluate an attack on an empty dataset")
    attack = {"pgd": pgd_disrupt, "random": random_noise_baseline}.get(method)
    if attack is None:
        raise ValueError(f"unknown attack method {method!r}")
    results = tuple(attack(g, img, cfg) for img in test.images)
    fd = float("nan")
    if len(test) >= 2:
        clean = g.forward(test.images)
        attacked = g.forward(np.stack([r.adversarial_input for r in results]))
        fd = frechet_between(clean, attacked)
    return AttackReport(model_name or g.family_tag, dataset_name, method, results,
                        float(np.mean([r.distortion_l1 for r in results])),
                        float(np.mean([r.distortion_l2 for r in results])), fd)
