"""Semi-supervised continual learning with a learned logit-gradient predictor.

Unlabeled inputs receive pseudo gradients predicted from their logits by a
small network, which is itself fitted on the labeled stream.
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
