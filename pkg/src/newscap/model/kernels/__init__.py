"""Decode-step kernel backends.

The compiled Cython kernels are preferred when the extension was built; the
numpy reference is the fallback. NEWSCAP_KERNELS=python|compiled forces a
backend (forcing "compiled" raises if the extension is unavailable).
"""

import os

from . import reference

_requested = os.environ.get("NEWSCAP_KERNELS", "auto").strip().lower()

_compiled = None
try:
    from . import _speedups as _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None

if _requested in ("auto", ""):
    _impl = _compiled if _compiled is not None else reference
elif _requested == "compiled":
    if _compiled is None:
        raise ImportError(
            "NEWSCAP_KERNELS=compiled but the extension is not built; "
            "run `python setup.py build_ext --inplace` or reinstall"
        )
    _impl = _compiled
elif _requested in ("python", "reference"):
    _impl = reference
else:
    raise ImportError(f"unknown NEWSCAP_KERNELS value {_requested!r}")

BACKEND = "compiled" if _impl is _compiled and _compiled is not None else "python"
step_forward = _impl.step_forward
step_backward = _impl.step_backward


def available_backends():
    """Name -> module map of importable kernel backends."""
    out = {"python": reference}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
