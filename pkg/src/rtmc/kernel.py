"""Evaluation-kernel selection: compiled extension if built, numpy otherwise.

Both implementations are importable side by side (the benchmark and the
backend-equality tests compare them); ``row_costs`` is bound to the
fastest one available at import time.
"""

from . import _evalcore_py

try:
    from . import _evalcore  # type: ignore[attr-defined]
except ImportError:
    _evalcore = None

_impl = _evalcore if _evalcore is not None else _evalcore_py

row_costs = _impl.row_costs
BACKEND = _impl.BACKEND


def implementations():
    """Available (name, row_costs) pairs, fastest first."""
    out = []
    if _evalcore is not None:
        out.append((_evalcore.BACKEND, _evalcore.row_costs))
    out.append((_evalcore_py.BACKEND, _evalcore_py.row_costs))
    return out
