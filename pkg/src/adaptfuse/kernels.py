"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the pure-Python
twin is loaded. Set ``ADAPTFUSE_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ADAPTFUSE_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

levenshtein = _impl.levenshtein
damerau_levenshtein = _impl.damerau_levenshtein
editor_distance = _impl.editor_distance
similarity_matrices = _impl.similarity_matrices
logistic_cost = _impl.logistic_cost
gradient_descent = _impl.gradient_descent

__all__ = [
    "BACKEND",
    "levenshtein",
    "damerau_levenshtein",
    "editor_distance",
    "similarity_matrices",
    "logistic_cost",
    "gradient_descent",
]
