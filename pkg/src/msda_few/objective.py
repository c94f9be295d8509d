"""Source-vs-target conditional alignment and the combined training objective."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DimensionError, NumericError
from .nets import Discriminator
from .weighting import domain_adversarial_value


def multilinear_map(f, p) -> Tensor:
    """Flattened per-row outer product; entry ``k * c + i`` holds ``f_k * p_i``."""
    f, p = ad.as_tensor(f), ad.as_tensor(p)
    if f.value.ndim != 2 or p.value.ndim != 2 or f.shape[0] != p.shape[0]:
        raise DimensionError(f"row-count mismatch: features {f.shape}, probabilities {p.shape}")
    return ad.row_outer(f, p)


def conditional_adv_loss(f_s, p_s, f_t, p_t, D2: Discriminator,
                         adversarial_scale: float | None = 1.0, training: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
    """Adversarial value of ``D2`` on source vs target joint embeddings ``f (x) p``."""
    if ad.as_tensor(f_s).shape[0] == 0 or ad.as_tensor(f_t).shape[0] == 0:
        raise ContractError("conditional adversarial loss needs non-empty batches")
    return domain_adversarial_value(multilinear_map(f_s, p_s), multilinear_map(f_t, p_t), D2,
                                    training=training, rng=rng,
                                    adversarial_scale=adversarial_scale)


def marginal_adv_loss(f_s, f_t, D2: Discriminator, adversarial_scale: float | None = 1.0,
                      training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """DANN-style source vs target value on raw features."""
    return domain_adversarial_value(f_s, f_t, D2, training=training, rng=rng,
                                    adversarial_scale=adversarial_scale)


def total_loss(V1, V2, L_cls) -> Tensor:
    """``V1 + V2 + L_cls`` as one scalar; plain floats count as constants."""
    terms = {}
    for name, t in (("V1", V1), ("V2", V2), ("L_cls", L_cls)):
        raw = np.asarray(t.value if isinstance(t, Tensor) else t, dtype=np.float64)
        if raw.size != 1:
            raise ContractError(f"{name} must be a scalar, got shape {raw.shape}")
        if not math.isfinite(float(raw.reshape(-1)[0])):
            raise NumericError(f"{name} is not finite")
        terms[name] = ad.as_tensor(t)
    return ad.add(ad.add(terms["V1"], terms["V2"]), terms["L_cls"])
