"""Training loop, dataset batching and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import SgdPoly, Tape, backward, ops as O, tensor
from .config import RunConfig
from .errors import NumericsError
from .metrics import mae, ods_ois
from .model import MglModel, mgl_loss
from .synthetic import SceneSample


@dataclass
class TrainHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # iter, loss, lr

    def csv(self) -> str:
        lines = ["iter,loss,lr"]
        lines += [f"{i},{loss:.8f},{lr:.10f}" for i, loss, lr in self.rows]
        return "\n".join(lines) + "\n"

    @property
    def losses(self) -> list[float]:
        return [row[1] for row in self.rows]


def batch_indices(n_samples: int, iteration: int, batch: int) -> list[int]:
    return [(iteration * batch + j) % n_samples for j in range(batch)]


def _maybe_flip(sample: SceneSample, cfg: RunConfig, iteration: int, j: int):
    if not cfg.flip:
        return sample.image, sample.mask, sample.edge
    rng = np.random.default_rng([cfg.seed, iteration, j, 0x5eed])
    if rng.random() < 0.5:
        return (sample.image[:, :, ::-1].copy(), sample.mask[:, ::-1].copy(),
                sample.edge[:, ::-1].copy())
    return sample.image, sample.mask, sample.edge


def loss_for_sample(model: MglModel, image, mask, edge, cfg: RunConfig):
    res = model.forward(tensor(image), keep_stages=cfg.per_stage_loss)
    if cfg.per_stage_loss and res.stage_probs:
        terms = [mgl_loss(c, e, mask, edge, cfg.gamma) for c, e in res.stage_probs]
        total = terms[0]
        for term in terms[1:]:
            total = O.add(total, term)
        return O.scale(total, 1.0 / len(terms))
    return mgl_loss(res.region_prob, res.edge_prob, mask, edge, cfg.gamma)


def train(model: MglModel, samples: list[SceneSample], cfg: RunConfig,
          start_iter: int = 0, velocities: dict | None = None,
          log=None) -> tuple[TrainHistory, dict]:
    """Run the SGD loop from ``start_iter`` to ``cfg.max_iter``.

    Returns the loss trace and the final optimizer velocities.  Deterministic
    given the config seed and the sample list.
    """
    if not samples:
        raise ValueError("train: empty sample list")
    params = model.named_parameters()
    opt = SgdPoly(params, base_lr=cfg.base_lr, power=cfg.power,
                  momentum=cfg.momentum, max_iter=cfg.max_iter)
    if velocities:
        for name, v in velocities.items():
            if name in opt.velocities:
                opt.velocities[name][...] = np.asarray(v, dtype=opt.velocities[name].dtype)

    history = TrainHistory()
    for iteration in range(start_iter, cfg.max_iter):
        opt.zero_grads()
        batch_loss = 0.0
        for j, idx in enumerate(batch_indices(len(samples), iteration, cfg.batch)):
            image, mask, edge = _maybe_flip(samples[idx], cfg, iteration, j)
            with Tape():
                loss = O.scale(loss_for_sample(model, image, mask, edge, cfg),
                               1.0 / cfg.batch)
                backward(loss)
            batch_loss += loss.item()
        if not np.isfinite(batch_loss):
            worst = max((float(np.abs(p.grad).max()) for p in params.values()
                         if p.grad is not None), default=float("nan"))
            raise NumericsError(f"non-finite loss {batch_loss} at iteration {iteration}; "
                                f"max |grad| = {worst}")
        lr = opt.step(iteration)
        model.clamp_scale_floors()
        history.rows.append((iteration, batch_loss, lr))
        if log and (iteration % 50 == 0 or iteration == cfg.max_iter - 1):
            log(f"iter {iteration:5d}  loss {batch_loss:.5f}  lr {lr:.6f}")
    return history, opt.velocities


def evaluate(model: MglModel, samples: list[SceneSample]) -> dict[str, float]:
    """MAE over masks plus ODS/OIS over edge maps for a sample list."""
    if not samples:
        raise ValueError("evaluate: empty sample list")
    maes = []
    edge_preds = []
    edge_gts = []
    for sample in samples:
        pred = model.predict(sample.image.astype(np.float32))
        maes.append(mae(pred.region, sample.mask))
        edge_preds.append(pred.edge)
        edge_gts.append(sample.edge)
    scores = ods_ois(edge_preds, edge_gts)
    return {"mae": float(np.mean(maes)), "ods": scores.ods, "ois": scores.ois}
