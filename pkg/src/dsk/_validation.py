"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

import numbers

import numpy as np

from .grid import GridSet


def check_gridset(X, *, dim=None, scale_exp=None, allow_empty=False, name="X") -> GridSet:
    """Coerce ``X`` to a :class:`GridSet` and check its shape parameters.

    Accepts a GridSet, a JSON-style mapping ``{"d", "m", "points"}``, or a
    ``(points, m)`` tuple with an integer coordinate array.
    """
    if isinstance(X, GridSet):
        A = X
    elif isinstance(X, dict):
        A = GridSet.from_dict(X)
    elif isinstance(X, tuple) and len(X) == 2 and isinstance(X[1], numbers.Integral):
        pts = np.asarray(X[0])
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.size and not np.issubdtype(pts.dtype, np.integer):
            raise TypeError(f"{name}: lattice coordinates must be integers")
        A = GridSet(pts.shape[1], int(X[1]), pts)
    else:
        raise TypeError(f"{name}: expected GridSet, mapping or (points, m), got {type(X).__name__}")
    if dim is not None and A.dim != dim:
        raise ValueError(f"{name}: expected dimension {dim}, got {A.dim}")
    if scale_exp is not None and A.scale_exp != scale_exp:
        raise ValueError(f"{name}: expected scale exponent {scale_exp}, got {A.scale_exp}")
    if not allow_empty and len(A) == 0:
        raise ValueError(f"{name}: empty set")
    return A


def check_same_lattice(A: GridSet, B: GridSet) -> None:
    if A.dim != B.dim or A.scale_exp != B.scale_exp:
        raise ValueError(
            f"lattice mismatch: (d={A.dim}, m={A.scale_exp}) vs (d={B.dim}, m={B.scale_exp})"
        )


def check_scale_split(m: int, L) -> int:
    """Return ``S = m / L``; raise if ``L`` is not a positive divisor of ``m``."""
    if not isinstance(L, numbers.Integral) or L < 1:
        raise ValueError(f"L must be a positive integer, got {L!r}")
    if m % L:
        raise ValueError(f"L={L} does not divide m={m}")
    return m // int(L)


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_unit_interval(value, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value
