"""Optional numba acceleration for the numeric kernels.

Every hot kernel in this package is written as a plain numpy function and
passed through :func:`maybe_njit`.  The environment variable ``EQUINAV_NUMBA``
selects the backend before first import:

* ``auto`` (default): compile with numba when it is importable, otherwise
  fall back to pure numpy silently.
* ``1`` / ``on``: require numba; raise if it cannot be imported.
* ``0`` / ``off``: force the pure numpy fallback.

``benchmarks/bench_backends.py`` compares both paths on identical workloads.
"""

from __future__ import annotations

import os

_MODE = os.environ.get("EQUINAV_NUMBA", "auto").strip().lower()

if _MODE in ("0", "off", "false", "no"):
    _njit = None
elif _MODE in ("1", "on", "true", "yes"):
    from numba import njit as _njit  # hard requirement in this mode
else:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - exercised only without numba
        _njit = None

NUMBA_ENABLED = _njit is not None


def maybe_njit(fn):
    """Apply ``numba.njit`` when the compiled backend is active."""
    if _njit is None:
        return fn
    return _njit(cache=True)(fn)
