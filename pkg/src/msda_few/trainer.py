"""Training loop for the mixed-set adaptation objective and its baselines.

One iteration draws an alpha, a beta and a target batch, runs the feature
extractor once on all of them, recomputes the element weights from the live
classifier head, forms the active loss terms, and takes a single SGD-momentum
step. Discriminator parameters enter the graph behind gradient reversal, so
that single descent step on ``V1 + V2 + L_cls`` moves the generator down and
the discriminators up.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import MixedSourceDataset, batch_iterator
from .exceptions import ContractError, DimensionError, NumericError, ParameterError
from .nets import (ClassifierHead, Discriminator, FeatureExtractor, classification_loss,
                   classify)
from .objective import conditional_adv_loss, marginal_adv_loss, total_loss
from .rng import stream
from .weighting import ScheduleConfig, compute_element_weights, weighted_marginal_adv_loss

log = logging.getLogger(__name__)

METHODS = ("source-only", "dann", "cdan", "cdan+dann", "few")
METRICS_HEADER = ("iter", "l_cls", "v1", "v2", "total", "lr", "delta", "target_acc")


# ----------------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Heavy-ball SGD with the inverse-decay learning-rate schedule."""

    momentum: float = 0.9
    base_lr: float = 0.001
    gamma: float = 0.001
    power: float = 0.75
    lr_multipliers: dict[str, float] = field(
        default_factory=lambda: {"backbone": 1.0, "new": 1.0})
    velocities: dict[str, np.ndarray] = field(default_factory=dict, repr=False,
                                              metadata={"config": False})

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.base_lr <= 0 or self.gamma < 0 or self.power < 0:
            raise ParameterError("need base_lr > 0, gamma >= 0, power >= 0")


def lr_at(iteration: int, opt: OptimizerState | None = None) -> float:
    opt = opt or OptimizerState()
    if iteration < 0:
        raise ParameterError("iteration must be >= 0")
    return opt.base_lr * (1.0 + opt.gamma * iteration) ** (-opt.power)


def sgd_momentum_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None],
                      opt: OptimizerState, iteration: int, multiplier: float = 1.0) -> None:
    """``v <- mu v + g``; ``theta <- theta - lr * multiplier * v``, in place.

    A missing gradient (``None``) counts as zero.
    """
    lr = lr_at(iteration, opt) * multiplier
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.value)
        elif g.shape != p.value.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter {p.shape}")
        v = opt.velocities.get(name)
        v = g.copy() if v is None else opt.momentum * v + g
        opt.velocities[name] = v
        p.value = p.value - lr * v


# ----------------------------------------------------------------------------
# configuration and records
# ----------------------------------------------------------------------------

@dataclass
class ModelConfig:
    feature_dim: int = 16
    hidden: list[int] = field(default_factory=lambda: [32, 32])
    disc_hidden: int = 64
    dropout: float = 0.5
    feature_activation: bool = True


@dataclass
class TrainConfig:
    total_iters: int = 3000
    batch_alpha: int = 32
    batch_beta: int = 32
    batch_target: int = 64
    method: str = "few"
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    optimizer: OptimizerState = field(default_factory=OptimizerState)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval_every: int = 100
    seed: int = 0
    delta_override: float | None = None
    disable_v1: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.total_iters < 1 or self.eval_every < 1:
            raise ParameterError("total_iters and eval_every must be >= 1")
        if min(self.batch_alpha, self.batch_beta, self.batch_target) < 1:
            raise ParameterError("batch sizes must be >= 1")

    @property
    def uses_v1(self) -> bool:
        return self.method in ("few", "cdan+dann") and not self.disable_v1

    @property
    def weighted(self) -> bool:
        return self.method == "few"

    @property
    def v2_kind(self) -> str | None:
        return {"dann": "marginal", "cdan": "conditional", "cdan+dann": "conditional",
                "few": "conditional"}.get(self.method)


@dataclass
class MetricsRecord:
    iter: int
    l_cls: float
    v1: float
    v2: float
    total: float
    lr: float
    delta: float
    target_acc: float | None = None


def metrics_to_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for r in records:
        writer.writerow([r.iter, repr(r.l_cls), repr(r.v1), repr(r.v2), repr(r.total),
                         repr(r.lr), repr(r.delta),
                         "" if r.target_acc is None else repr(r.target_acc)])
    return buf.getvalue()


class TrainingAborted(NumericError):
    def __init__(self, message: str, last_finite: MetricsRecord | None):
        super().__init__(message)
        self.last_finite = last_finite


# ----------------------------------------------------------------------------
# networks and one step
# ----------------------------------------------------------------------------

@dataclass
class Networks:
    G: FeatureExtractor
    head: ClassifierHead
    D1: Discriminator
    D2: Discriminator

    def __post_init__(self):
        for mname, m in self.modules().items():
            for pname, t in m.named_parameters():
                t.name = f"{mname}.{pname}"

    @classmethod
    def build(cls, input_dim: int, n_classes: int, model: ModelConfig, seed: int,
              conditional: bool = True) -> "Networks":
        lf = model.feature_dim
        d2_in = lf * n_classes if conditional else lf
        return cls(
            G=FeatureExtractor(input_dim, model.hidden, lf, stream(seed, "init", 0),
                               last_activation=model.feature_activation),
            head=ClassifierHead(n_classes, lf, stream(seed, "init", 1)),
            D1=Discriminator(lf, stream(seed, "init", 2), model.disc_hidden, model.dropout),
            D2=Discriminator(d2_in, stream(seed, "init", 3), model.disc_hidden, model.dropout),
        )

    def modules(self) -> dict:
        return {"G": self.G, "head": self.head, "D1": self.D1, "D2": self.D2}

    def parameter_groups(self) -> dict[str, dict[str, Tensor]]:
        groups: dict[str, dict[str, Tensor]] = {"backbone": {}, "new": {}}
        for mname, m in self.modules().items():
            group = "backbone" if mname == "G" else "new"
            for pname, t in m.named_parameters():
                groups[group][f"{mname}.{pname}"] = t
        return groups

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for g in self.parameter_groups().values():
            out.update(g)
        return out


class Batch(NamedTuple):
    x_alpha: np.ndarray
    y_alpha: np.ndarray
    x_beta: np.ndarray
    y_beta: np.ndarray
    x_target: np.ndarray


class StepLosses(NamedTuple):
    V1: Tensor | float
    V2: Tensor | float
    L_cls: Tensor
    total: Tensor
    delta: float


def compute_losses(nets: Networks, batch: Batch, iteration: int, cfg: TrainConfig,
                   adversarial_scale: float | None = 1.0,
                   d1_rng: np.random.Generator | None = None,
                   d2_rng: np.random.Generator | None = None,
                   W_tilde: np.ndarray | None = None) -> StepLosses:
    """Build the graph for one iteration.

    Dropout in a discriminator is active only when its rng is given.
    ``adversarial_scale=None`` drops the reversal nodes, leaving the plain
    objective (used for gradient checks and explicit min/max updates).
    ``W_tilde`` pins the element weights instead of reading them off the head.
    """
    ma, mb, mt = len(batch.x_alpha), len(batch.x_beta), len(batch.x_target)
    if min(ma, mb) == 0:
        raise ContractError("alpha and beta batches must be non-empty")
    X = np.concatenate([batch.x_alpha, batch.x_beta, batch.x_target])
    f_all = nets.G.forward(X)
    f_alpha = ad.slice_rows(f_all, 0, ma)
    f_beta = ad.slice_rows(f_all, ma, ma + mb)
    f_s = ad.slice_rows(f_all, 0, ma + mb)
    f_t = ad.slice_rows(f_all, ma + mb, ma + mb + mt)
    _, p_s = classify(nets.head, f_s)

    weights = compute_element_weights(nets.head, iteration, cfg.schedule, cfg.delta_override)
    V1: Tensor | float = 0.0
    if cfg.uses_v1:
        if W_tilde is None:
            W_tilde = weights.W_tilde if cfg.weighted else np.ones_like(weights.W_tilde)
        V1 = weighted_marginal_adv_loss(f_alpha, f_beta, W_tilde, nets.D1,
                                        adversarial_scale=adversarial_scale,
                                        training=d1_rng is not None, rng=d1_rng)
    V2: Tensor | float = 0.0
    if cfg.v2_kind is not None:
        if mt == 0:
            raise ContractError("target batch must be non-empty for adversarial methods")
        if cfg.v2_kind == "conditional":
            _, p_t = classify(nets.head, f_t)
            V2 = conditional_adv_loss(f_s, p_s, f_t, p_t, nets.D2,
                                      adversarial_scale=adversarial_scale,
                                      training=d2_rng is not None, rng=d2_rng)
        else:
            V2 = marginal_adv_loss(f_s, f_t, nets.D2, adversarial_scale=adversarial_scale,
                                   training=d2_rng is not None, rng=d2_rng)
    y_s = np.concatenate([batch.y_alpha, batch.y_beta])
    L_cls = classification_loss(p_s, y_s)
    return StepLosses(V1, V2, L_cls, total_loss(V1, V2, L_cls), weights.delta)


def apply_gradients(nets: Networks, opt: OptimizerState, iteration: int) -> None:
    for group, params in nets.parameter_groups().items():
        grads = {name: t.grad for name, t in params.items()}
        sgd_momentum_step(params, grads, opt, iteration, opt.lr_multipliers.get(group, 1.0))
    ad.zero_grads(nets.named_parameters().values())


def train_step(nets: Networks, opt: OptimizerState, batch: Batch, iteration: int,
               cfg: TrainConfig, d1_rng=None, d2_rng=None) -> StepLosses:
    """Forward, one backward pass through the reversal nodes, one update."""
    ad.zero_grads(nets.named_parameters().values())
    losses = compute_losses(nets, batch, iteration, cfg, adversarial_scale=1.0,
                            d1_rng=d1_rng, d2_rng=d2_rng)
    ad.backward(losses.total)
    apply_gradients(nets, opt, iteration)
    return losses


# ----------------------------------------------------------------------------
# evaluation and the full loop
# ----------------------------------------------------------------------------

def predict_proba(G: FeatureExtractor, head: ClassifierHead, X) -> np.ndarray:
    _, p = classify(head, G.forward(np.asarray(X, dtype=np.float64)))
    return p.value


def evaluate(G: FeatureExtractor, head: ClassifierHead, X, labels) -> float:
    """Accuracy of argmax predictions (ties go to the lowest class); ``-1`` labels are skipped."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if len(X) == 0:
        raise ContractError("cannot evaluate on an empty target set")
    known = labels >= 1
    if not known.any():
        raise ContractError("no labeled target samples to evaluate")
    pred = np.argmax(predict_proba(G, head, X[known]), axis=1) + 1
    return float(np.mean(pred == labels[known]))


def _as_float(x) -> float:
    return x.item() if isinstance(x, Tensor) else float(x)


def train(dataset: MixedSourceDataset, cfg: TrainConfig | None = None,
          nets: Networks | None = None) -> tuple[Networks, list[MetricsRecord]]:
    """Run the whole loop; returns the trained networks and one record per iteration.

    ``target_acc`` is filled every ``eval_every`` iterations and on the last
    one, when the dataset carries held-out target labels.
    """
    cfg = cfg or TrainConfig()
    if nets is None:
        nets = Networks.build(dataset.dim, dataset.n_classes, cfg.model, cfg.seed,
                              conditional=cfg.v2_kind != "marginal")
    opt = cfg.optimizer
    opt.velocities.clear()
    it_a = batch_iterator(dataset, "alpha", cfg.batch_alpha, cfg.seed)
    it_b = batch_iterator(dataset, "beta", cfg.batch_beta, cfg.seed)
    it_t = batch_iterator(dataset, "target", cfg.batch_target, cfg.seed)
    d1_rng = stream(cfg.seed, "dropout", 1)
    d2_rng = stream(cfg.seed, "dropout", 2)
    can_eval = dataset.has_target_labels
    target_labels = dataset.target_labels_for_evaluation() if can_eval else None

    records: list[MetricsRecord] = []
    for it in range(cfg.total_iters):
        xa, ya = next(it_a)
        xb, yb = next(it_b)
        xt, _ = next(it_t)
        try:
            # overflow surfaces as a NumericError below; no need for numpy's warnings too
            with np.errstate(over="ignore", invalid="ignore"):
                losses = train_step(nets, opt, Batch(xa, ya, xb, yb, xt), it, cfg, d1_rng,
                                    d2_rng)
            rec = MetricsRecord(it, _as_float(losses.L_cls), _as_float(losses.V1),
                                _as_float(losses.V2), _as_float(losses.total), lr_at(it, opt),
                                losses.delta)
            if not all(math.isfinite(v) for v in (rec.l_cls, rec.v1, rec.v2, rec.total)):
                raise NumericError("non-finite loss")
            for name, t in nets.named_parameters().items():
                if not np.all(np.isfinite(t.value)):
                    raise NumericError(f"non-finite parameter {name}")
        except NumericError as exc:
            last = records[-1] if records else None
            raise TrainingAborted(f"training aborted at iteration {it}: {exc}", last) from exc
        if can_eval and ((it + 1) % cfg.eval_every == 0 or it == cfg.total_iters - 1):
            rec.target_acc = evaluate(nets.G, nets.head, dataset.target_X, target_labels)
            log.info("iter %d  l_cls %.4f  v1 %.4f  v2 %.4f  acc %.4f", it, rec.l_cls, rec.v1,
                     rec.v2, rec.target_acc)
        records.append(rec)
    return nets, records
