"""Similarity networks: similarity and MEX layers, kernel oracles and GGM initialization.

Submodules load on first attribute access so the command line can set BLAS
threading before numpy is imported.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "mex": "mex", "mex_grad": "mex", "MexLayerParams": "mex", "mex_layer_forward": "mex",
    "mex_layer_backward": "mex",
    "SimilarityParams": "similarity", "similarity_forward": "similarity", "similarity_backward": "similarity",
    "PatchLabelingNet": "network",
    "GGMixture": "ggm", "fit_ggm": "ggm",
    "SgdConfig": "trainer", "train": "trainer",
}
__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
