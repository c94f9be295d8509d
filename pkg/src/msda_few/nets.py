"""Small fully-connected networks: feature extractor, linear head, discriminators.

All parameters are :class:`~msda_few.autodiff.Tensor` leaves. Forward passes
build a fresh graph each call. Checkpoints are ``.npz`` archives keyed by
``<network>.<parameter>``; values round-trip bit-exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import DataError, DimensionError, ParameterError


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _param(value: np.ndarray, name: str) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64, order="C"), requires_grad=True, name=name)


class _Module:
    """Ordered parameter container."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def _register(self, name: str, value: np.ndarray) -> Tensor:
        t = _param(value, name)
        self._params[name] = t
        return t

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self._params.items()

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            raise DataError(f"parameter names differ: {sorted(state)} vs {sorted(self._params)}")
        for k, v in state.items():
            if v.shape != self._params[k].value.shape:
                raise DimensionError(
                    f"{k}: checkpoint shape {v.shape} != model shape {self._params[k].shape}")
            self._params[k].value = np.array(v, dtype=np.float64, order="C")


class MLP(_Module):
    """Stack of affine layers with ReLU (and optional dropout) between them.

    ``last_activation`` controls whether the final layer is rectified too.
    """

    def __init__(self, widths: Sequence[int], rng: np.random.Generator,
                 dropout: float = 0.0, last_activation: bool = False):
        super().__init__()
        if len(widths) < 2 or any(int(w) < 1 for w in widths):
            raise ParameterError(f"invalid layer widths {list(widths)}")
        if not 0.0 <= dropout < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {dropout}")
        self.widths = [int(w) for w in widths]
        self.dropout = float(dropout)
        self.last_activation = last_activation
        self.layers: list[tuple[Tensor, Tensor]] = []
        for i, (fi, fo) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            W = self._register(f"W{i}", _glorot(rng, fi, fo))
            b = self._register(f"b{i}", np.zeros(fo))
            self.layers.append((W, b))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def forward(self, x, rng: np.random.Generator | None = None,
                reverse_scale: float | None = None) -> Tensor:
        """Run the network.

        ``rng`` enables dropout on hidden layers. When ``reverse_scale`` is
        set every weight enters the graph through a gradient-reversal node, so
        a descent step on the output moves these parameters uphill.
        """
        x = ad.as_tensor(x)
        if x.value.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(f"expected input width {self.in_dim}, got shape {x.shape}")
        h = x
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            if reverse_scale is not None:
                W, b = ad.grad_reverse(W, reverse_scale), ad.grad_reverse(b, reverse_scale)
            h = ad.add(ad.matmul(h, W), b)
            if i < last or self.last_activation:
                h = ad.relu(h)
            if i < last:
                h = ad.dropout(h, self.dropout, rng)
        return h


class FeatureExtractor(MLP):
    """The generator: ``input_dim -> hidden... -> feature_dim``, no dropout."""

    def __init__(self, input_dim: int, hidden: Sequence[int], feature_dim: int,
                 rng: np.random.Generator, last_activation: bool = True):
        super().__init__([input_dim, *hidden, feature_dim], rng, dropout=0.0,
                         last_activation=last_activation)

    @property
    def feature_dim(self) -> int:
        return self.out_dim


def extract_features(G: FeatureExtractor, x) -> Tensor:
    return G.forward(x)


class ClassifierHead(_Module):
    """Bias-free linear classifier; ``w`` has shape ``(n_classes, feature_dim)``."""

    def __init__(self, n_classes: int, feature_dim: int, rng: np.random.Generator):
        super().__init__()
        if n_classes < 1 or feature_dim < 1:
            raise ParameterError("n_classes and feature_dim must be positive")
        self.w = self._register("w", _glorot(rng, feature_dim, n_classes).T)

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w.shape[1]


def classify(head: ClassifierHead, f) -> tuple[Tensor, Tensor]:
    """Return ``(logits, probabilities)`` with ``logits = f @ w.T``."""
    f = ad.as_tensor(f)
    if f.value.ndim != 2 or f.shape[1] != head.feature_dim:
        raise DimensionError(f"expected feature width {head.feature_dim}, got shape {f.shape}")
    logits = ad.matmul(f, ad.transpose(head.w))
    return logits, ad.softmax_rows(logits)


class Discriminator(MLP):
    """Three affine layers, ReLU + dropout after the first two, logistic output."""

    def __init__(self, input_dim: int, rng: np.random.Generator, hidden: int = 64,
                 dropout: float = 0.5):
        super().__init__([input_dim, hidden, hidden, 1], rng, dropout=dropout)


def discriminate(D: Discriminator, z, training: bool = False,
                 rng: np.random.Generator | None = None,
                 reverse_scale: float | None = None) -> Tensor:
    """Probability in ``[1e-7, 1 - 1e-7]`` that each row came from the first domain."""
    logit = D.forward(z, rng=rng if training else None, reverse_scale=reverse_scale)
    return ad.clamp(ad.sigmoid(logit), ad.LOG_CLAMP, 1.0 - ad.LOG_CLAMP)


def classification_loss(p, y) -> Tensor:
    """Mean negative log-likelihood of 1-based labels ``y`` under row-probabilities ``p``."""
    p = ad.as_tensor(p)
    y = np.asarray(y)
    n, c = p.shape
    if y.shape != (n,):
        raise DimensionError(f"{n} probability rows but label shape {y.shape}")
    bad = np.flatnonzero((y < 1) | (y > c) | (y != np.round(y)))
    if bad.size:
        raise DataError(f"label {y[bad[0]]!r} at row {int(bad[0])} outside 1..{c}")
    picked = ad.pick(p, np.arange(n), y.astype(np.int64) - 1)
    return ad.mul(ad.mean_all(ad.log(ad.clamp(picked, ad.LOG_CLAMP, 1.0))), -1.0)


# ----------------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------------

def save_checkpoint(path: str | Path, modules: dict[str, _Module]) -> None:
    """Write every module's parameters to one ``.npz`` file."""
    arrays = {f"{mname}.{pname}": t.value
              for mname, m in modules.items() for pname, t in m.named_parameters()}
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path, modules: dict[str, _Module]) -> None:
    with np.load(path) as data:
        flat = {k: data[k] for k in data.files}
    for mname, m in modules.items():
        prefix = mname + "."
        m.load_state_dict({k[len(prefix):]: v for k, v in flat.items() if k.startswith(prefix)})
