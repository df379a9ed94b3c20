"""Hot-kernel backend selection.

The numba backend is used by default.  Set ``FLOWSENSE_NUMBA=0`` (or
``false``/``off``) to force the pure-numpy reference path; the reference
path is also used automatically when numba cannot be imported.
``flowsense._kernels.active`` is the selected module and ``backend_name()``
reports which one is live.
"""

import os

from . import reference

_FLAG = os.environ.get("FLOWSENSE_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

if _WANT_NUMBA:
    try:
        from . import jit as active
    except ImportError:  # pragma: no cover - numba is a hard dep in practice
        active = reference
else:
    active = reference

march_batch = active.march_batch
omega_tensor = active.omega_tensor
em_moments = active.em_moments
em_iteration = active.em_iteration


def backend_name():
    return active.BACKEND
