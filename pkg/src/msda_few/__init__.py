"""Mixed-set domain adaptation with feature element-wise weighting."""

__version__ = "0.1.0"

from .data import MixedSourceDataset, SynthConfig, load_feature_csv, synth_mixed  # noqa: E402
from .estimator import FEWClassifier  # noqa: E402
from .trainer import TrainConfig, evaluate, train  # noqa: E402

__all__ = ["FEWClassifier", "MixedSourceDataset", "SynthConfig", "TrainConfig", "evaluate",
           "load_feature_csv", "synth_mixed", "train", "__version__"]
