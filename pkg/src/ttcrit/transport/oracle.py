"""Row-by-row evaluation of the discrete transport equations.

Each vertex row is evaluated straight from the diamond-difference stencils,
without any matrix.  It is slow by design and exists to check assembled
operators.  Arrays are vectorized over the energy group and over a batch of
input vectors only.
"""

from __future__ import annotations

import itertools

import numpy as np

from .problem import TransportProblem

__all__ = ["apply_loop_oracle"]


def _interp(i, n, s, with_bc):
    # {vertex: weight} for the half-sum towards the upwind neighbour
    if s > 0:
        if i == 0:
            return {0: 0.5} if with_bc else {}
        return {i - 1: 0.5, i: 0.5}
    if i == n - 1:
        return {i: 0.5} if with_bc else {}
    return {i: 0.5, i + 1: 0.5}


def _diff(i, n, s, h):
    if s > 0:
        return {0: 1.0 / h} if i == 0 else {i: 1.0 / h, i - 1: -1.0 / h}
    return {i: -1.0 / h} if i == n - 1 else {i: -1.0 / h, i + 1: 1.0 / h}


def _cell(i, n, s):
    return max(i - 1, 0) if s > 0 else min(i, n - 2)


def apply_loop_oracle(problem: TransportProblem, psi) -> dict:
    """Apply every term to ``psi`` (natural ordering, shape ``(n,)`` or ``(n, b)``).

    Returns a dict with keys ``Hx``, ``Hsigma``, ``S``, ``F`` (plus ``Hy``,
    ``Hz`` in 3D, ``Vinv`` when velocities exist) and ``H``.
    """
    psi = np.asarray(psi, dtype=float)
    vec = psi.ndim == 1
    if vec:
        psi = psi[:, None]
    b = psi.shape[1]
    q = problem.quadrature
    grid = problem.grid
    dims = problem.dims
    G, L = problem.G, problem.L
    shape_zyx = grid.mode_shape
    x = psi.reshape((G, L) + shape_zyx + (b,))
    # move ordinate and vertex axes first: x[l, k, j, i] -> (G, b)
    x = np.moveaxis(x, 0, -2)  # (L, *zyx, G, b)
    phi = np.tensordot(q.weights, x, axes=(0, 0))  # scalar flux (*zyx, G, b)

    nodes = grid.nodes  # x first
    steps = grid.steps
    octant = q.octant_index()
    dirs = [q.mu, q.eta, q.xi][:dims]
    have_v = problem.has_velocity
    names = ["Hx", "Hy", "Hz"][:dims] + ["Hsigma", "S", "F"] + (["Vinv"] if have_v else [])
    out = {n: np.zeros_like(x) for n in names}
    mmap = problem.material_map

    for ell in range(L):
        o = octant[ell]
        signs = [1 if (o >> a) & 1 else -1 for a in range(dims)]
        for vx in itertools.product(*[range(n) for n in shape_zyx]):
            idx = vx[::-1]  # (i, j, k) x first
            ipb = [_interp(idx[a], nodes[a], signs[a], True) for a in range(dims)]
            ip0 = [_interp(idx[a], nodes[a], signs[a], False) for a in range(dims)]
            if mmap is None:
                xs = problem.materials[0]
            else:
                cell = tuple(_cell(idx[a], nodes[a], signs[a]) for a in range(dims))
                xs = problem.materials[int(mmap[cell[::-1]])]
            row = (ell,) + vx

            def stencil(factors, field):
                acc = 0.0
                for combo in itertools.product(*[f.items() for f in factors]):
                    w = 1.0
                    at = []
                    for v, c in combo:
                        at.append(v)
                        w *= c
                    acc = acc + w * field[tuple(at[::-1])]
                return acc

            for a, name in enumerate(["Hx", "Hy", "Hz"][:dims]):
                fac = [_diff(idx[c], nodes[c], signs[c], steps[c]) if c == a else ipb[c] for c in range(dims)]
                out[name][row] = dirs[a][ell] * stencil(fac, x[ell])
            avg = stencil(ipb, x[ell])
            out["Hsigma"][row] = xs.sigma_t[:, None] * avg
            if have_v:
                out["Vinv"][row] = avg / xs.velocity[:, None]
            src = stencil(ip0, phi) if all(ip0) else np.zeros((G, b))
            out["S"][row] = xs.sigma_s @ src
            out["F"][row] = xs.fission_matrix @ src

    res = {}
    for name, arr in out.items():
        arr = np.moveaxis(arr, -2, 0).reshape(-1, b)
        res[name] = arr[:, 0] if vec else arr
    res["H"] = sum(res[n] for n in ["Hx", "Hy", "Hz"][:dims] + ["Hsigma"])
    return res
