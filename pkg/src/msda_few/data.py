"""Mixed-set domain adaptation datasets.

Source classes ``1..k`` come from domain alpha, classes ``k+1..c`` from
domain beta; the unlabeled target covers every class. Labels are 1-based
throughout, matching the CSV format.

CSV format: one sample per line, ``label,x_1,...,x_d``; no quoting; an
optional single first line starting with ``#`` is a header. In the target
file a label of ``-1`` means unknown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .exceptions import ConfigError, ContractError, DataError
from .rng import stream

SPLITS = ("alpha", "beta", "source", "target")
PROTOTYPE_LAYOUTS = ("gaussian", "ring", "line")


@dataclass
class DomainTransform:
    """Rotation in the first coordinate plane, then scale, translation, noise."""

    rotation_deg: float = 0.0
    scale: float = 1.0
    translation: list[float] = field(default_factory=list)
    noise: float = 0.0

    def __post_init__(self):
        if self.scale == 0 or not math.isfinite(self.scale):
            raise ConfigError("transform scale must be finite and nonzero")
        if self.noise < 0:
            raise ConfigError("transform noise must be >= 0")

    def apply(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        X = np.array(X, dtype=np.float64)
        d = X.shape[1]
        if self.rotation_deg:
            if d < 2:
                raise ConfigError("rotation needs at least 2 dimensions")
            t = math.radians(self.rotation_deg)
            R = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
            X[:, :2] = X[:, :2] @ R.T
        X *= self.scale
        if self.translation:
            if len(self.translation) != d:
                raise ConfigError(f"translation has length {len(self.translation)}, expected {d}")
            X += np.asarray(self.translation, dtype=np.float64)
        if self.noise:
            X += rng.normal(0.0, self.noise, size=X.shape)
        return X


def _identity() -> DomainTransform:
    return DomainTransform()


@dataclass
class SynthConfig:
    n_classes: int = 8
    n_alpha_classes: int = 4
    dim: int = 2
    samples_per_class: int = 200
    target_samples_per_class: int = 200
    prototype_spread: float = 4.0
    class_noise: float = 0.5
    prototype_layout: str = "line"
    alpha: DomainTransform = field(default_factory=_identity)
    beta: DomainTransform = field(
        default_factory=lambda: DomainTransform(rotation_deg=50.0, scale=1.3, noise=0.05))
    target: DomainTransform = field(
        default_factory=lambda: DomainTransform(rotation_deg=25.0, translation=[0.5, 0.5]))
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if not 1 <= self.n_alpha_classes < self.n_classes:
            raise ConfigError(
                f"need 1 <= n_alpha_classes < n_classes (k < c), got k={self.n_alpha_classes}, "
                f"c={self.n_classes}")
        if self.dim < 1 or self.samples_per_class < 1 or self.target_samples_per_class < 1:
            raise ConfigError("dim and per-class sample counts must be >= 1")
        if self.prototype_layout not in PROTOTYPE_LAYOUTS:
            raise ConfigError(f"prototype_layout must be one of {PROTOTYPE_LAYOUTS}, "
                              f"got {self.prototype_layout!r}")
        if self.prototype_layout != "gaussian" and self.dim < 2:
            raise ConfigError(f"the {self.prototype_layout} layout needs dim >= 2")
        if self.prototype_spread < 0 or self.class_noise < 0:
            raise ConfigError("prototype_spread and class_noise must be >= 0")


class Sample(NamedTuple):
    x: np.ndarray
    y: int | None
    domain_tag: str


class MixedSourceDataset:
    """Immutable container; target labels are reachable only through
    :meth:`target_labels_for_evaluation`."""

    def __init__(self, alpha_X, alpha_y, beta_X, beta_y, target_X, target_y=None,
                 n_classes: int | None = None, n_alpha_classes: int | None = None):
        self.alpha_X = self._freeze(alpha_X, "alpha")
        self.beta_X = self._freeze(beta_X, "beta")
        self.target_X = self._freeze(target_X, "target")
        self.alpha_y = self._freeze_labels(alpha_y, len(self.alpha_X), "alpha")
        self.beta_y = self._freeze_labels(beta_y, len(self.beta_X), "beta")
        self._target_y = (None if target_y is None
                          else self._freeze_labels(target_y, len(self.target_X), "target"))
        dims = {X.shape[1] for X in (self.alpha_X, self.beta_X, self.target_X)}
        if len(dims) != 1:
            raise DataError(f"feature dimension differs across splits: {sorted(dims)}")
        self.dim = dims.pop()
        k = int(self.alpha_y.max()) if n_alpha_classes is None else int(n_alpha_classes)
        c = int(self.beta_y.max()) if n_classes is None else int(n_classes)
        if not 1 <= k < c:
            raise DataError(f"need 1 <= k < c, got k={k}, c={c}")
        if self.alpha_y.min() < 1 or self.alpha_y.max() > k:
            raise DataError(f"alpha labels must lie in 1..{k}")
        if self.beta_y.min() < k + 1 or self.beta_y.max() > c:
            raise DataError(f"beta labels must lie in {k + 1}..{c}")
        present = set(self.alpha_y.tolist()) | set(self.beta_y.tolist())
        missing = sorted(set(range(1, c + 1)) - present)
        if missing:
            raise DataError(f"classes without source samples: {missing}")
        self.n_classes, self.n_alpha_classes = c, k

    @staticmethod
    def _freeze(X, name: str) -> np.ndarray:
        X = np.array(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError(f"{name} split must be a non-empty 2-D array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError(f"{name} split contains non-finite values")
        X.setflags(write=False)
        return X

    @staticmethod
    def _freeze_labels(y, n: int, name: str) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != (n,):
            raise DataError(f"{name} labels have shape {y.shape}, expected ({n},)")
        if not np.all(y == np.round(y)):
            raise DataError(f"{name} labels must be integers")
        y = y.astype(np.int64)
        y.setflags(write=False)
        return y

    @property
    def source_X(self) -> np.ndarray:
        return np.concatenate([self.alpha_X, self.beta_X])

    @property
    def source_y(self) -> np.ndarray:
        return np.concatenate([self.alpha_y, self.beta_y])

    @property
    def has_target_labels(self) -> bool:
        return self._target_y is not None and bool(np.any(self._target_y >= 1))

    def target_labels_for_evaluation(self) -> np.ndarray:
        if self._target_y is None:
            raise ContractError("target labels are not available")
        return self._target_y

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray | None]:
        """Training view of a split; the target comes back without labels."""
        if split == "alpha":
            return self.alpha_X, self.alpha_y
        if split == "beta":
            return self.beta_X, self.beta_y
        if split == "source":
            return self.source_X, self.source_y
        if split == "target":
            return self.target_X, None
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")

    def samples(self, split: str) -> Iterator[Sample]:
        X, y = self.split_arrays(split)
        if split == "source":
            tags = ["alpha"] * len(self.alpha_X) + ["beta"] * len(self.beta_X)
        else:
            tags = [split] * len(X)
        for i, tag in enumerate(tags):
            yield Sample(X[i], None if y is None else int(y[i]), tag)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MixedSourceDataset):
            return NotImplemented
        same_t = (self._target_y is None and other._target_y is None) or (
            self._target_y is not None and other._target_y is not None
            and np.array_equal(self._target_y, other._target_y))
        return (same_t and self.n_classes == other.n_classes
                and self.n_alpha_classes == other.n_alpha_classes
                and all(np.array_equal(getattr(self, a), getattr(other, a))
                        for a in ("alpha_X", "alpha_y", "beta_X", "beta_y", "target_X")))

    def __repr__(self) -> str:
        return (f"MixedSourceDataset(c={self.n_classes}, k={self.n_alpha_classes}, d={self.dim}, "
                f"n_alpha={len(self.alpha_X)}, n_beta={len(self.beta_X)}, "
                f"n_target={len(self.target_X)})")


def _interleaved_slots(c: int, k: int) -> np.ndarray:
    # alpha and beta classes alternate as far as k allows
    order = []
    a, b = list(range(k)), list(range(k, c))
    while a or b:
        if a:
            order.append(a.pop(0))
        if b:
            order.append(b.pop(0))
    slot = np.empty(c, dtype=np.int64)
    slot[order] = np.arange(c)
    return slot


def _prototypes(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Class centres in the base space.

    ``gaussian``: i.i.d. normal with scale ``prototype_spread``. ``ring``:
    evenly spaced on a circle of that radius. ``line``: evenly spaced on a
    segment through the origin with half-length ``prototype_spread``. The two
    structured layouts alternate alpha and beta classes and draw a random
    orientation.
    """
    c, k, d = config.n_classes, config.n_alpha_classes, config.dim
    if config.prototype_layout == "gaussian":
        return rng.normal(0.0, config.prototype_spread, size=(c, d))
    slot = _interleaved_slots(c, k)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    P = np.zeros((c, d))
    if config.prototype_layout == "ring":
        angle = phase + 2.0 * np.pi * slot / c
        P[:, 0], P[:, 1] = np.cos(angle), np.sin(angle)
    else:
        pos = np.linspace(-1.0, 1.0, c)[slot]
        P[:, 0], P[:, 1] = pos * np.cos(phase), pos * np.sin(phase)
    return P * config.prototype_spread


def synth_mixed(config: SynthConfig | None = None) -> MixedSourceDataset:
    config = config or SynthConfig()
    config.validate()
    c, k, d = config.n_classes, config.n_alpha_classes, config.dim
    rng = stream(config.seed, "data")
    prototypes = _prototypes(config, rng)

    def content(counts_per_class: int, classes: np.ndarray):
        y = np.repeat(classes, counts_per_class)
        X = prototypes[y - 1] + rng.normal(0.0, config.class_noise, size=(len(y), d))
        return X, y

    a_X, a_y = content(config.samples_per_class, np.arange(1, k + 1))
    b_X, b_y = content(config.samples_per_class, np.arange(k + 1, c + 1))
    t_X, t_y = content(config.target_samples_per_class, np.arange(1, c + 1))
    return MixedSourceDataset(config.alpha.apply(a_X, rng), a_y,
                              config.beta.apply(b_X, rng), b_y,
                              config.target.apply(t_X, rng), t_y,
                              n_classes=c, n_alpha_classes=k)


# ----------------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------------

def _format_row(label: int, x: np.ndarray) -> str:
    return ",".join([str(int(label)), *(repr(float(v)) for v in x)])


def write_feature_csv(path: str | Path, X: np.ndarray, y: np.ndarray | None) -> None:
    X = np.asarray(X, dtype=np.float64)
    labels = np.full(len(X), -1, dtype=np.int64) if y is None else np.asarray(y)
    lines = ["# label," + ",".join(f"x{j + 1}" for j in range(X.shape[1]))]
    lines += [_format_row(lab, row) for lab, row in zip(labels, X)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_dataset_csv(dataset: MixedSourceDataset, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {s: out / f"{s}.csv" for s in ("alpha", "beta", "target")}
    write_feature_csv(paths["alpha"], dataset.alpha_X, dataset.alpha_y)
    write_feature_csv(paths["beta"], dataset.beta_X, dataset.beta_y)
    write_feature_csv(paths["target"], dataset.target_X, dataset._target_y)
    return paths


def read_feature_csv(path: str | Path, allow_unlabeled: bool = False
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Parse one feature file into ``(X, labels)``; row numbers are 1-based lines."""
    rows, labels = [], []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if lineno == 1 and line.startswith("#"):
                continue
            if not line:
                raise DataError(f"{path}: empty row {lineno}")
            parts = line.split(",")
            try:
                label_f = float(parts[0])
                values = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise DataError(f"{path}: unparsable row {lineno}: {exc}") from None
            if not math.isfinite(label_f) or label_f != int(label_f):
                raise DataError(f"{path}: non-integer label at row {lineno}")
            label = int(label_f)
            if label < 1 and not (allow_unlabeled and label == -1):
                raise DataError(f"{path}: label {label} out of range at row {lineno}")
            if not values:
                raise DataError(f"{path}: row {lineno} has no feature values")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(
                    f"{path}: row {lineno} has {len(values)} feature values, expected {width}")
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: non-finite feature value at row {lineno}")
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64)


def load_feature_csv(path_alpha, path_beta, path_target, n_classes: int | None = None
                     ) -> MixedSourceDataset:
    a_X, a_y = read_feature_csv(path_alpha)
    b_X, b_y = read_feature_csv(path_beta)
    t_X, t_y = read_feature_csv(path_target, allow_unlabeled=True)
    dims = {"alpha": a_X.shape[1], "beta": b_X.shape[1], "target": t_X.shape[1]}
    if len(set(dims.values())) != 1:
        raise DataError(f"feature dimension mismatch across files: {dims}")
    c = int(b_y.max()) if n_classes is None else int(n_classes)
    for name, y in (("alpha", a_y), ("beta", b_y)):
        bad = np.flatnonzero(y > c)
        if bad.size:
            raise DataError(f"{name} file: label {int(y[bad[0]])} outside 1..{c} at data row "
                            f"{int(bad[0]) + 1}")
    if np.any((t_y > c) | ((t_y < 1) & (t_y != -1))):
        raise DataError(f"target file: labels must be -1 or within 1..{c}")
    # rows labeled -1 stay unknown; evaluation skips them
    target_y = None if np.all(t_y == -1) else t_y
    return MixedSourceDataset(a_X, a_y, b_X, b_y, t_X, target_y, n_classes=c,
                              n_alpha_classes=int(a_y.max()))


# ----------------------------------------------------------------------------
# batching
# ----------------------------------------------------------------------------

def batch_iterator(dataset: MixedSourceDataset, split: str, batch_size: int, seed: int
                   ) -> Iterator[tuple[np.ndarray, np.ndarray | None]]:
    """Endless stream of ``(X, y)`` batches, reshuffled every epoch.

    Each epoch is partitioned into consecutive batches, so the last batch of
    an epoch may be short. Target batches carry ``y=None``.
    """
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    X, y = dataset.split_arrays(split)
    n = len(X)
    if n == 0:
        raise ContractError(f"split {split!r} is empty")
    rng = stream(seed, "shuffle", SPLITS.index(split))
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            yield X[idx], (None if y is None else y[idx])
