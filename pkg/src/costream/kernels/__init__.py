"""Kernel backend selection.

The hot loops exist twice: a Cython extension (``_compiled``) and a
numpy fallback (``_numpy``) with the identical call surface. The
compiled backend is preferred when importable. Set COSTREAM_KERNELS to
``python`` or ``compiled`` to force a choice (``compiled`` raises if
the extension is missing); ``auto`` is the default. ``BACKEND`` names
the backend in use. benchmarks/kernel_bench.py compares the two.
"""

import os

_requested = os.environ.get("COSTREAM_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "compiled", "python"):
    raise ImportError(
        f"COSTREAM_KERNELS must be 'auto', 'compiled' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from costream.kernels import _numpy as _impl

    BACKEND = "python"
else:
    try:
        from costream.kernels import _compiled as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from costream.kernels import _numpy as _impl  # type: ignore[no-redef]

        BACKEND = "python"

matmul = _impl.matmul
row_softmax = _impl.row_softmax
row_softmax_grad = _impl.row_softmax_grad
pairwise_sqdist = _impl.pairwise_sqdist

__all__ = ["BACKEND", "matmul", "row_softmax", "row_softmax_grad", "pairwise_sqdist"]
