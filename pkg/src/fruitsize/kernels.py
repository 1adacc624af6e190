"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``FRUITSIZE_PURE_PYTHON=1`` to force the
fallback (the benchmark and backend-equivalence tests do this).
"""
import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("FRUITSIZE_PURE_PYTHON"):
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = python_backend
    BACKEND = "python"

max_sqdist_2d = _impl.max_sqdist_2d
max_sqdist_3d = _impl.max_sqdist_3d
hough_votes = _impl.hough_votes
circumsphere = _impl.circumsphere
ransac_search = _impl.ransac_search
radial_deviation = python_backend.radial_deviation
