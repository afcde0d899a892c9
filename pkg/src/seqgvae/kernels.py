"""Backend selection for the dense kernels.

The compiled module is preferred; set ``SEQGVAE_PURE_PYTHON=1`` to force
the numpy implementation. :func:`use_backend` switches at runtime (the
benchmark and the cross-backend tests rely on it).
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = (
    "affine_forward",
    "affine_backward",
    "gru_forward",
    "gru_backward",
    "scatter_add",
    "log_softmax_rows",
    "mlp_forward",
    "mlp_backward",
)

BACKEND = None


def available_backends():
    return ["cython", "python"] if _ckernels is not None else ["python"]


def use_backend(name):
    """Rebind the kernel functions in this module to ``name``'s versions."""
    global BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        impl = _ckernels
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in _NAMES:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


use_backend("python" if os.environ.get("SEQGVAE_PURE_PYTHON") or _ckernels is None else "cython")
