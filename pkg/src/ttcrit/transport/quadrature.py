"""Discrete-ordinates quadrature sets ordered by octant.

Octants are numbered 0..7 (0..1 in slab geometry).  Bit 0 of the octant index
is set when ``mu > 0``, bit 1 when ``eta > 0`` and bit 2 when ``xi > 0``, so
octant 0 holds the all-negative directions and octant 7 the all-positive ones.
Ordinates are stored octant block by octant block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError

__all__ = ["AngularQuadrature", "build_quadrature", "octant_signs"]


def octant_signs(octant: int, dims: int = 3):
    """Signs ``(s_mu, s_eta, s_xi)`` (each +1 or -1) of an octant index."""
    n_oct = 8 if dims == 3 else 2
    if not 0 <= int(octant) < n_oct:
        raise ValidationError(f"octant must lie in 0..{n_oct - 1}, got {octant}")
    o = int(octant)
    s = tuple(1 if (o >> b) & 1 else -1 for b in range(3))
    return s if dims == 3 else (s[0],)


@dataclass(frozen=True)
class AngularQuadrature:
    N: int
    dims: int
    mu: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    octant_offsets: tuple

    @property
    def L(self) -> int:
        return self.weights.size

    @property
    def n_octants(self) -> int:
        return len(self.octant_offsets) - 1

    def octant_slice(self, octant: int) -> slice:
        octant_signs(octant, self.dims)
        return slice(self.octant_offsets[octant], self.octant_offsets[octant + 1])

    def octant_mask(self, octant: int) -> np.ndarray:
        m = np.zeros(self.L, dtype=bool)
        m[self.octant_slice(octant)] = True
        return m

    def octant_index(self) -> np.ndarray:
        """Octant of every ordinate."""
        out = np.empty(self.L, dtype=int)
        for o in range(self.n_octants):
            out[self.octant_slice(o)] = o
        return out

    def axis(self, name: str) -> np.ndarray:
        try:
            return {"mu": self.mu, "eta": self.eta, "xi": self.xi}[name]
        except KeyError:
            raise ValidationError(f"unknown axis {name!r}; expected mu, eta or xi") from None


def build_quadrature(N: int, dims: int = 1) -> AngularQuadrature:
    """Octant-ordered S_N quadrature with weights summing to one.

    ``dims=1``: Gauss-Legendre on [-1, 1] with ``L = N`` (negative cosines
    first).  ``dims=3``: ``N`` Gauss-Legendre polar cosines times ``2N``
    equally spaced azimuths, ``L = 2 N**2`` ordinates, ``N**2 / 4`` per octant.
    """
    if int(N) != N or N < 2 or N % 2:
        raise ValidationError(f"quadrature order N must be an even integer >= 2, got {N}")
    N = int(N)
    if dims == 1:
        x, w = np.polynomial.legendre.leggauss(N)
        zeros = np.zeros(N)
        return AngularQuadrature(N, 1, x, zeros, zeros.copy(), w / 2.0, (0, N // 2, N))
    if dims != 3:
        raise ValidationError(f"dims must be 1 or 3, got {dims}")

    xg, wg = np.polynomial.legendre.leggauss(N)
    phi = (np.arange(2 * N) + 0.5) * np.pi / N
    wphi = 1.0 / (2 * N)
    mu, eta, xi, w = [], [], [], []
    offsets = [0]
    for o in range(8):
        s_mu, s_eta, s_xi = octant_signs(o)
        for xv, wv in zip(xg, wg):
            if np.sign(xv) != s_xi:
                continue
            st = np.sqrt(1.0 - xv * xv)
            for p in phi:
                m, e = st * np.cos(p), st * np.sin(p)
                if np.sign(m) == s_mu and np.sign(e) == s_eta:
                    mu.append(m)
                    eta.append(e)
                    xi.append(xv)
                    w.append(0.5 * wv * wphi)
        offsets.append(len(w))
    return AngularQuadrature(N, 3, np.array(mu), np.array(eta), np.array(xi), np.array(w), tuple(offsets))
