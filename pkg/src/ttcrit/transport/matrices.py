"""One-dimensional factor matrices of the per-octant operator terms.

Differentiation and interpolation matrices act on the ``n`` vertices of one
axis.  ``sign=+1`` is used for directions with a positive cosine on that axis
(inflow at the first vertex), ``sign=-1`` for negative cosines (inflow at the
last vertex).  The inflow row is what carries the vacuum condition.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ValidationError
from .quadrature import AngularQuadrature, octant_signs

__all__ = [
    "diff_matrix",
    "interp_matrix",
    "angular_matrix",
    "octant_projector",
    "integral_matrix",
]


def _sign(sign) -> int:
    if sign in ("+", 1, +1.0):
        return 1
    if sign in ("-", -1, -1.0):
        return -1
    raise ValidationError(f"sign must be '+' or '-', got {sign!r}")


def diff_matrix(n: int, sign, delta: float) -> np.ndarray:
    """Bidiagonal difference matrix scaled by ``1/delta``.

    ``+``: diagonal 1, subdiagonal -1.  ``-``: diagonal -1, superdiagonal 1.

    >>> diff_matrix(3, "+", 1.0)
    array([[ 1.,  0.,  0.],
           [-1.,  1.,  0.],
           [ 0., -1.,  1.]])
    """
    s = _sign(sign)
    if n < 2:
        raise ValidationError("need at least 2 nodes")
    if not delta > 0:
        raise ValidationError("step must be positive")
    if s > 0:
        d = np.eye(n) - np.eye(n, k=-1)
    else:
        d = np.eye(n, k=1) - np.eye(n)
    return d / delta


def interp_matrix(n: int, sign, with_bc: bool = True) -> np.ndarray:
    """Half-sum of neighbouring vertices.

    With ``with_bc`` the inflow row keeps only its diagonal ``1/2``; without
    it that row is zero, which removes the source at inflow vertices.
    """
    s = _sign(sign)
    if n < 2:
        raise ValidationError("need at least 2 nodes")
    if s > 0:
        m = 0.5 * (np.eye(n) + np.eye(n, k=-1))
        edge = 0
    else:
        m = 0.5 * (np.eye(n) + np.eye(n, k=1))
        edge = n - 1
    if not with_bc:
        m[edge, :] = 0.0
    return m


def _octant_values(q: AngularQuadrature, values, octant):
    out = np.zeros(q.L)
    sl = q.octant_slice(octant)
    out[sl] = values[sl]
    return out


def angular_matrix(q: AngularQuadrature, axis: str, octant: int) -> np.ndarray:
    """``diag`` of the ``axis`` cosines restricted to one octant."""
    return np.diag(_octant_values(q, q.axis(axis), octant))


def octant_projector(q: AngularQuadrature, octant: int) -> np.ndarray:
    return np.diag(q.octant_mask(octant).astype(float))


def integral_matrix(q: AngularQuadrature, octant: int) -> np.ndarray:
    """Rows of ``octant`` hold the full weight row; other rows are zero.

    Summed over octants this is ``1 w^T``, the scalar-flux broadcast.
    """
    octant_signs(octant, q.dims)
    m = np.zeros((q.L, q.L))
    m[q.octant_slice(octant), :] = q.weights[None, :]
    return m
