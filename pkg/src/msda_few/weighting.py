"""Feature element-wise weights and the weighted alpha-vs-beta adversarial term.

The classifier head ``w`` (``c x l_f``) says how much each feature element
contributes to every class. Elements whose column sum is small are treated as
carrying domain rather than label information and are up-weighted before the
intra-source discriminator sees the features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DimensionError, ParameterError
from .nets import ClassifierHead, Discriminator, discriminate

CONVENTIONS = ("paper", "dann-shifted")


@dataclass
class ScheduleConfig:
    """Sigmoid ramp for the weight blend factor."""

    eta: float = 10.0
    max_iter: int = 10000
    convention: str = "paper"

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError(f"eta must be > 0, got {self.eta}")
        if int(self.max_iter) < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.convention not in CONVENTIONS:
            raise ParameterError(f"convention must be one of {CONVENTIONS}, got {self.convention!r}")


@dataclass(frozen=True)
class ElementWeights:
    w_hat: np.ndarray
    W: np.ndarray
    W_tilde: np.ndarray
    delta: float


def column_sums(w) -> np.ndarray:
    """Sum the head matrix over classes: one entry per feature element."""
    w = w.w.value if isinstance(w, ClassifierHead) else np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise DimensionError(f"classifier weight must be a matrix, got shape {w.shape}")
    return w.sum(axis=0)


def element_weights(w_hat) -> np.ndarray:
    """``(1 - softmax(w_hat)) / mean(1 - softmax(w_hat))``; the result has mean 1."""
    w_hat = np.asarray(w_hat, dtype=np.float64)
    if w_hat.ndim != 1:
        raise DimensionError(f"w_hat must be a vector, got shape {w_hat.shape}")
    if w_hat.size < 2:
        raise ContractError("element weights need at least 2 feature elements")
    e = np.exp(w_hat - w_hat.max())
    complement = 1.0 - e / e.sum()
    return complement / complement.mean()


def delta_schedule(iteration: int, cfg: ScheduleConfig | None = None) -> float:
    cfg = cfg or ScheduleConfig()
    progress = min(iteration / cfg.max_iter, 1.0)
    delta = 2.0 / (1.0 + np.exp(-cfg.eta * progress))
    if cfg.convention == "dann-shifted":
        delta -= 1.0
    return float(delta)


def ramp_weights(W, delta: float) -> np.ndarray:
    """``(W - 1) * delta + 1``, arranged so both ends are exact."""
    return np.asarray(W, dtype=np.float64) * delta + (1.0 - delta)


def compute_element_weights(head: ClassifierHead | np.ndarray, iteration: int,
                            cfg: ScheduleConfig | None = None,
                            delta: float | None = None) -> ElementWeights:
    """All three weight vectors from the live head.

    ``delta`` overrides the schedule when given.
    """
    w_hat = column_sums(head)
    W = element_weights(w_hat)
    if delta is None:
        delta = delta_schedule(iteration, cfg)
    return ElementWeights(w_hat=w_hat, W=W, W_tilde=ramp_weights(W, delta), delta=float(delta))


def domain_adversarial_value(z_first, z_second, D: Discriminator, training: bool = False,
                             rng: np.random.Generator | None = None,
                             adversarial_scale: float | None = 1.0) -> Tensor:
    """``mean log D(z_first) + mean log(1 - D(z_second))``.

    Both batches go through the discriminator as one stacked batch so a single
    dropout draw covers them. With ``adversarial_scale`` set, the
    discriminator's parameters sit behind gradient reversal: minimizing the
    returned value trains the upstream generator to lower it while the
    discriminator climbs it. ``None`` returns the plain differentiable value.
    """
    z_first, z_second = ad.as_tensor(z_first), ad.as_tensor(z_second)
    m1, m2 = z_first.shape[0], z_second.shape[0]
    if m1 == 0 or m2 == 0:
        raise ContractError("adversarial value needs two non-empty batches")
    d = discriminate(D, ad.concat_rows([z_first, z_second]), training=training, rng=rng,
                     reverse_scale=adversarial_scale)
    rows = np.arange(m1 + m2)
    zeros = np.zeros(m1 + m2, dtype=np.int64)
    d_first = ad.pick(d, rows[:m1], zeros[:m1])
    d_second = ad.pick(d, rows[m1:], zeros[m1:])
    return ad.add(ad.mean_all(ad.clamped_log(d_first)),
                  ad.mean_all(ad.clamped_log(ad.sub(1.0, d_second))))


def weighted_marginal_adv_loss(f_alpha, f_beta, W_tilde, D1: Discriminator,
                               adversarial_scale: float | None = 1.0, training: bool = False,
                               rng: np.random.Generator | None = None) -> Tensor:
    """Adversarial value between element-weighted alpha and beta features.

    ``W_tilde`` is a constant: no gradient reaches the classifier head
    through it, and each feature element's gradient is scaled by its weight.
    """
    f_alpha, f_beta = ad.as_tensor(f_alpha), ad.as_tensor(f_beta)
    W_tilde = np.asarray(W_tilde, dtype=np.float64)
    for f in (f_alpha, f_beta):
        if f.value.ndim != 2 or f.shape[1] != W_tilde.shape[0]:
            raise DimensionError(f"feature shape {f.shape} does not match weights {W_tilde.shape}")
    return domain_adversarial_value(ad.mul(f_alpha, W_tilde), ad.mul(f_beta, W_tilde), D1,
                                    training=training, rng=rng,
                                    adversarial_scale=adversarial_scale)
