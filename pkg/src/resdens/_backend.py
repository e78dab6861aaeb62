"""Select the compiled core or the numpy fallback at import time.

Set ``RESDENS_BACKEND=python`` to force the fallback even when the
extension is built.
"""

import os

BACKEND = "python"
if os.environ.get("RESDENS_BACKEND", "").lower() not in ("python", "numpy"):
    try:
        from . import _core as core

        BACKEND = "compiled"
    except ImportError:
        core = None
else:
    core = None

from . import _fallback as fallback  # noqa: E402

if core is None:
    core = fallback

__all__ = ["BACKEND", "core", "fallback"]
