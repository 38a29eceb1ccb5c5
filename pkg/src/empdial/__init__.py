"""Empathetic dialogue generation at desk scale.

Library layout:

- ``autodiff``: tape-based reverse-mode AD over numpy arrays
- ``layers``: transformer encoder / inter-encoder / decoder blocks, GRU
- ``encoders``: emotional context encoding and emotion classification
- ``affection``: dual-latent CVAE (prior, recognition, fusion, KL)
- ``cognition``: keyword extraction, knowledge path search, verbalization
- ``behavior``: dialogue act prediction and act embeddings
- ``decoder``: act-conditioned pointer-generator response decoding
- ``model``: the assembled network with ablation switches
- ``data`` / ``training`` / ``metrics`` / ``checkpoint`` / ``cli``: harness
"""

__version__ = "0.1.0"

from . import autodiff
from .autodiff import Graph, Tensor

__all__ = ["autodiff", "Graph", "Tensor", "__version__"]
