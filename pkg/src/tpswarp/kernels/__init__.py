"""Hot-kernel backend selection.

The compiled Cython core is preferred; the pure-numpy backend is the
fallback.  Selection happens once at import and can be forced with the
``TPSWARP_BACKEND`` environment variable (``compiled`` or ``numpy``).
"""

import os

_requested = os.environ.get("TPSWARP_BACKEND", "").strip().lower()

if _requested == "numpy":
    from tpswarp.kernels import numpy_backend as _impl
else:
    try:
        from tpswarp.kernels import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "TPSWARP_BACKEND=compiled but the tpswarp.kernels._core "
                "extension is not built; reinstall the package or unset "
                "TPSWARP_BACKEND"
            ) from None
        from tpswarp.kernels import numpy_backend as _impl

bilinear_forward = _impl.bilinear_forward
bilinear_backward = _impl.bilinear_backward
nearest_forward = _impl.nearest_forward
sepconv2_valid = _impl.sepconv2_valid


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'numpy'."""
    return _impl.NAME
