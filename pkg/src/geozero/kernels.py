"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``GEOZERO_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("GEOZERO_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend

#: Name of the backend in use: ``"compiled"`` or ``"python"``.
BACKEND = "compiled" if compiled_backend is not None else "python"

sylvester_quasi_triangular = _active.sylvester_quasi_triangular
lti_step_recurrence = _active.lti_step_recurrence
