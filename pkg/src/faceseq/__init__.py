"""Facial expression sequence recognition toolkit.

Submodules:
    matrixkit    dense linear-algebra substrate (eig, log-det, convolution)
    gabor        even/odd Gabor kernel banks and sequence representations
    subspace     two-dimensional discriminant subspaces and the final LDA
    geometric    grid models, pyramidal Lucas-Kanade tracking, displacements
    classifiers  neuro-fuzzy trees, pairwise SMO-trained RBF SVMs, fusion
    pipeline     dataset ingestion/synthesis, cross-validation, reporting
"""

__version__ = "0.1.0"

from . import matrixkit  # noqa: F401
from . import gabor  # noqa: F401
from . import subspace  # noqa: F401
from . import geometric  # noqa: F401
from . import classifiers  # noqa: F401
from . import pipeline  # noqa: F401
