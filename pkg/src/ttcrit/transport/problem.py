"""Grids, multigroup cross sections, problem definitions and their YAML files."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ..exceptions import NoFissionError, UnsupportedError, ValidationError
from ..validation import check_array, is_power_of_two
from .quadrature import AngularQuadrature, build_quadrature

__all__ = [
    "CrossSections",
    "SpatialGrid",
    "TransportProblem",
    "PU239",
    "pu239_slab",
    "load_problem",
    "save_problem",
    "problem_from_dict",
    "problem_to_dict",
    "SCHEMA",
]

SCHEMA = "ttcrit-problem/1"


@dataclass(frozen=True)
class CrossSections:
    """Multigroup data for one material (units cm^-1, velocities cm/s).

    ``sigma_s[g, gp]`` scatters from group ``gp`` into group ``g``.  ``chi``
    is either a spectrum of length G or a matrix ``chi[g, gp]`` (birth group
    ``g`` for fission in ``gp``).
    """

    sigma_t: np.ndarray
    sigma_s: np.ndarray
    nu_sigma_f: np.ndarray
    chi: np.ndarray
    velocity: np.ndarray | None = None
    name: str = "material"

    def __post_init__(self):
        st = check_array(self.sigma_t, "sigma_t", ndim=1, nonnegative=True)
        g = st.size
        if g == 0:
            raise ValidationError("at least one energy group is required")
        ss = check_array(self.sigma_s, "sigma_s", ndim=2, nonnegative=True)
        nf = check_array(self.nu_sigma_f, "nu_sigma_f", ndim=1, nonnegative=True)
        chi = check_array(self.chi, "chi", nonnegative=True)
        if ss.shape != (g, g):
            raise ValidationError(f"sigma_s must be {g}x{g}, got {ss.shape}")
        if nf.size != g:
            raise ValidationError(f"nu_sigma_f must have {g} entries")
        if chi.shape not in ((g,), (g, g)):
            raise ValidationError(f"chi must have shape ({g},) or ({g}, {g}), got {chi.shape}")
        if nf.any():
            sums = np.atleast_1d(chi.sum(axis=0))
            if chi.ndim == 2:
                sums = sums[nf > 0]
            if not np.allclose(sums, 1.0, atol=1e-10):
                raise ValidationError("fission spectrum chi must sum to 1 over birth groups")
        v = None
        if self.velocity is not None:
            v = check_array(self.velocity, "velocity", ndim=1)
            if v.size != g or np.any(v <= 0):
                raise ValidationError(f"velocity must hold {g} positive values")
        object.__setattr__(self, "sigma_t", st)
        object.__setattr__(self, "sigma_s", ss)
        object.__setattr__(self, "nu_sigma_f", nf)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "velocity", v)

    @property
    def G(self) -> int:
        return self.sigma_t.size

    @property
    def fission_matrix(self) -> np.ndarray:
        """``chi[g, gp] * nu_sigma_f[gp]``."""
        chi = self.chi if self.chi.ndim == 2 else self.chi[:, None]
        return chi * self.nu_sigma_f[None, :]

    @property
    def has_fission(self) -> bool:
        return bool(np.any(self.fission_matrix > 0))

    def k_infinity(self) -> float:
        """Dominant eigenvalue of ``(diag(sigma_t) - sigma_s)^-1 chi nu_sigma_f^T``."""
        a = np.diag(self.sigma_t) - self.sigma_s
        vals = np.linalg.eigvals(np.linalg.solve(a, self.fission_matrix))
        return float(np.max(vals.real))

    def scaled(self, fission=1.0):
        return replace(self, nu_sigma_f=self.nu_sigma_f * fission)

    def to_dict(self):
        out = {
            "name": self.name,
            "sigma_t": self.sigma_t.tolist(),
            "sigma_s": self.sigma_s.tolist(),
            "nu_sigma_f": self.nu_sigma_f.tolist(),
            "chi": self.chi.tolist(),
        }
        if self.velocity is not None:
            out["velocity"] = self.velocity.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"name", "sigma_t", "sigma_s", "nu_sigma_f", "nu", "sigma_f", "chi", "velocity"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown material keys: {sorted(extra)}")
        try:
            st = np.atleast_1d(np.asarray(d["sigma_t"], dtype=float))
        except KeyError:
            raise ValidationError("material needs sigma_t") from None
        g = st.size
        if "nu_sigma_f" in d:
            nf = np.atleast_1d(np.asarray(d["nu_sigma_f"], dtype=float))
        elif "sigma_f" in d:
            nf = np.atleast_1d(np.asarray(d["nu"], dtype=float)) * np.atleast_1d(np.asarray(d["sigma_f"], dtype=float))
        else:
            nf = np.zeros(g)
        ss = np.asarray(d.get("sigma_s", np.zeros((g, g))), dtype=float).reshape(g, g)
        chi = np.asarray(d.get("chi", [1.0] + [0.0] * (g - 1)), dtype=float)
        return cls(st, ss, nf, chi, d.get("velocity"), d.get("name", "material"))


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform vertex grid.  ``nodes`` and ``extents`` are listed x first."""

    dims: int
    nodes: tuple
    extents: tuple

    def __post_init__(self):
        if self.dims not in (1, 3):
            raise ValidationError(f"dims must be 1 or 3, got {self.dims}")
        nodes = tuple(int(n) for n in self.nodes)
        ext = tuple(tuple(float(v) for v in e) for e in self.extents)
        if len(nodes) != self.dims or len(ext) != self.dims:
            raise ValidationError(f"{self.dims}D grid needs {self.dims} node counts and extents")
        for n in nodes:
            if n < 2:
                raise ValidationError("every axis needs at least 2 nodes")
        for a, b in ext:
            if not b > a:
                raise ValidationError(f"extent ({a}, {b}) must have positive width")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "extents", ext)

    @property
    def cells(self):
        return tuple(n - 1 for n in self.nodes)

    @property
    def steps(self):
        return tuple((b - a) / c for (a, b), c in zip(self.extents, self.cells))

    @property
    def mode_shape(self):
        """Node counts in storage order (z, y, x)."""
        return self.nodes[::-1]

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.nodes))

    def require_power_of_two(self):
        for n in self.nodes:
            if not is_power_of_two(n):
                raise ValidationError(f"node count must be a power of two for QTT, got {n}")

    def coordinates(self, axis=0):
        (a, b), n = self.extents[axis], self.nodes[axis]
        return np.linspace(a, b, n)


@dataclass(frozen=True)
class TransportProblem:
    grid: SpatialGrid
    quadrature: AngularQuadrature
    materials: tuple
    material_map: np.ndarray | None = None
    name: str = "problem"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mats = tuple(self.materials) if not isinstance(self.materials, CrossSections) else (self.materials,)
        if not mats:
            raise ValidationError("at least one material is required")
        g = mats[0].G
        if any(m.G != g for m in mats):
            raise ValidationError("all materials must share the group count")
        if self.quadrature.dims != self.grid.dims:
            raise ValidationError("quadrature and grid dimensionality differ")
        mm = self.material_map
        if mm is not None:
            mm = np.asarray(mm, dtype=int)
            cells = self.grid.cells[::-1]
            if mm.shape != cells:
                raise ValidationError(f"material_map must have cell shape {cells} (z, y, x order), got {mm.shape}")
            if mm.min() < 0 or mm.max() >= len(mats):
                raise ValidationError("material_map refers to a missing material")
        elif len(mats) > 1:
            raise ValidationError("several materials need a material_map")
        object.__setattr__(self, "materials", mats)
        object.__setattr__(self, "material_map", mm)

    @property
    def dims(self):
        return self.grid.dims

    @property
    def G(self):
        return self.materials[0].G

    @property
    def L(self):
        return self.quadrature.L

    @property
    def homogeneous(self) -> bool:
        return self.material_map is None or len(np.unique(self.material_map)) == 1

    @property
    def xs(self) -> CrossSections:
        """The material of a homogeneous problem."""
        if not self.homogeneous:
            raise ValidationError("problem is heterogeneous")
        idx = 0 if self.material_map is None else int(self.material_map.flat[0])
        return self.materials[idx]

    @property
    def mode_sizes(self):
        """(G, L, [nz, ny,] nx)."""
        return (self.G, self.L) + self.grid.mode_shape

    @property
    def n_unknowns(self) -> int:
        return int(np.prod(self.mode_sizes))

    @property
    def has_velocity(self) -> bool:
        return all(m.velocity is not None for m in self.materials)

    def check_fissile(self):
        if not any(m.has_fission for m in self.materials):
            raise NoFissionError("problem has no fission source (F is identically zero)")

    def with_materials(self, materials, material_map=None):
        return replace(self, materials=tuple(materials), material_map=material_map)

    def with_width(self, factor: float):
        """Same problem with every axis stretched by ``factor``."""
        ext = tuple((a * factor, b * factor) for a, b in self.grid.extents)
        return replace(self, grid=replace(self.grid, extents=ext))

    def with_quadrature(self, N: int):
        return replace(self, quadrature=build_quadrature(N, self.dims))

    def with_nodes(self, nodes):
        """Same problem on a different vertex grid; an int applies to every axis."""
        if self.material_map is not None:
            raise UnsupportedError("cannot regrid a problem with a material map")
        nodes = (int(nodes),) * self.dims if np.isscalar(nodes) else tuple(int(n) for n in nodes)
        return replace(self, grid=replace(self.grid, nodes=nodes))


# Pu-239 one-group slab data; width chosen so that c = 1.5 gives k = 1.
PU239 = dict(nu=3.24, sigma_f=0.081600, sigma_s=0.225216, sigma_t=0.32640, width=3.707444)


def pu239_slab(nodes: int = 1024, N: int = 32, width: float | None = None, velocity: float | None = 1.0) -> TransportProblem:
    """The bare Pu-239 slab in one energy group."""
    p = PU239
    xs = CrossSections(
        [p["sigma_t"]],
        [[p["sigma_s"]]],
        [p["nu"] * p["sigma_f"]],
        [1.0],
        None if velocity is None else [velocity],
        name="Pu-239",
    )
    w = p["width"] if width is None else float(width)
    grid = SpatialGrid(1, (nodes,), ((0.0, w),))
    return TransportProblem(grid, build_quadrature(N, 1), (xs,), name="pu239-slab")


# ---------------------------------------------------------------------------
# YAML files


def problem_to_dict(problem: TransportProblem) -> dict:
    out = {
        "schema": SCHEMA,
        "name": problem.name,
        "geometry": {
            "dims": problem.dims,
            "nodes": list(problem.grid.nodes),
            "extents": [list(e) for e in problem.grid.extents],
        },
        "quadrature": {"N": problem.quadrature.N},
        "materials": [m.to_dict() for m in problem.materials],
    }
    if problem.material_map is not None:
        out["material_map"] = problem.material_map.tolist()
    return out


def problem_from_dict(d: dict) -> TransportProblem:
    if not isinstance(d, dict):
        raise ValidationError("problem file must hold a mapping")
    schema = d.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValidationError(f"unsupported schema {schema!r}; expected {SCHEMA!r}")
    try:
        geo = d["geometry"]
        dims = int(geo["dims"])
        nodes = geo["nodes"]
        extents = geo["extents"]
        n_quad = int(d["quadrature"]["N"])
        mats = d["materials"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"problem file is missing field {exc}") from None
    nodes = [nodes] if np.isscalar(nodes) else list(nodes)
    if dims == 3 and len(nodes) == 1:
        nodes = nodes * 3
    if np.isscalar(extents[0]):
        extents = [extents]
    if dims == 3 and len(extents) == 1:
        extents = extents * 3
    grid = SpatialGrid(dims, tuple(nodes), tuple(tuple(e) for e in extents))
    if isinstance(mats, dict):
        mats = [mats]
    materials = tuple(CrossSections.from_dict(m) for m in mats)
    mm = d.get("material_map")
    return TransportProblem(
        grid,
        build_quadrature(n_quad, dims),
        materials,
        None if mm is None else np.asarray(mm, dtype=int),
        name=str(d.get("name", "problem")),
    )


def load_problem(path) -> TransportProblem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read problem file {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed problem file {path}: {exc}") from None
    return problem_from_dict(data)


def save_problem(problem: TransportProblem, path):
    Path(path).write_text(yaml.safe_dump(problem_to_dict(problem), sort_keys=False))

