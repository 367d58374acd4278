"""EEG emotion recognition: preprocessing, differential-entropy features,
montage adjacency and attention-gated (Bi-)LSTM classifiers."""

__version__ = "0.1.0"

from . import core, features, geometry, nn, synth  # noqa: E402
from .features import DifferentialEntropy  # noqa: E402
from .nn import BiLSTMClassifier, TrainConfig  # noqa: E402

__all__ = ["core", "features", "geometry", "nn", "synth", "BiLSTMClassifier",
           "DifferentialEntropy", "TrainConfig", "__version__"]
