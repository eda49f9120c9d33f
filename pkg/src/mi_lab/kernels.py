"""Backend selection for the pairwise critic kernels.

The compiled extension is used when it was built; otherwise (or when the
environment variable ``MI_LAB_PURE_PYTHON`` is set to a non-empty value other
than ``0``) the numpy fallback is used. ``BACKEND`` names the active choice.

The compiled path only wins for ReLU: libm ``tanh`` is scalar while numpy's is
SIMD, so tanh critics always take the numpy route.
"""

import os

from . import _pairkernel_py

ACT_CODES = {"relu": 0, "tanh": 1}

py_pair_forward = _pairkernel_py.pair_forward
py_pair_backward = _pairkernel_py.pair_backward

_force_pure = os.environ.get("MI_LAB_PURE_PYTHON", "") not in ("", "0")

try:
    from . import _pairkernel as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not _force_pure:
    BACKEND = "compiled"

    def pair_forward(A, B, w, b, act):
        if act == 0:
            return _compiled.pair_forward(A, B, w, b, act)
        return py_pair_forward(A, B, w, b, act)

    def pair_backward(A, B, w, G, act):
        if act == 0:
            return _compiled.pair_backward(A, B, w, G, act)
        return py_pair_backward(A, B, w, G, act)

else:
    BACKEND = "python"
    pair_forward = py_pair_forward
    pair_backward = py_pair_backward

compiled_pair_forward = _compiled.pair_forward if _compiled is not None else None
compiled_pair_backward = _compiled.pair_backward if _compiled is not None else None
