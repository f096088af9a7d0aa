"""Kernel dispatch: compiled extension when importable, numpy otherwise."""

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = _compiled if _compiled is not None else _kernels_py


def available():
    """Names of the backends that can be selected."""
    return ["compiled", "python"] if _compiled is not None else ["python"]


def current():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def set_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels for subsequent calls."""
    global _active
    if name == "python":
        _active = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


def growcut(features, labels, strength, max_norm, max_iters):
    return _active.growcut(features, labels, strength, max_norm, max_iters)


def moore_trace(padded):
    return _active.moore_trace(padded)


def smo_solve(kmat, y, c, tol, max_iter):
    return _active.smo_solve(kmat, y, c, tol, max_iter)
