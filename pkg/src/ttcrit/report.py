"""Machine-readable run reports and pairwise comparison tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations

import numpy as np

from .criticality import EigenResult
from .exceptions import ValidationError
from .transport.problem import TransportProblem, problem_to_dict

REPORT_SCHEMA = "ttcrit-report/1"
BYTES_PER_ELEMENT = 8

__all__ = [
    "REPORT_SCHEMA",
    "SolveReport",
    "physics_fingerprint",
    "build_report",
    "compare_reports",
    "history_to_csv",
    "table_to_csv",
]


def physics_fingerprint(problem: TransportProblem) -> str:
    """Hash of the physical setup: materials, geometry extents and material layout.

    Node counts and quadrature order are left out so that refinement studies
    of one problem compare as the same problem.
    """
    d = problem_to_dict(problem)
    key = {
        "dims": d["geometry"]["dims"],
        "extents": d["geometry"]["extents"],
        "materials": d["materials"],
        "material_map": d.get("material_map"),
    }
    blob = json.dumps(key, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SolveReport:
    eigenvalue: float
    kind: str
    mode: str
    converged: bool
    iterations: int
    history: list
    wall_time_seconds: float
    storage_bytes: dict
    compression: dict
    metadata: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    k_eff: float | None = None
    error: str | None = None
    schema: str = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValidationError(f"unsupported report schema {d.get('schema')!r}")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown report fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"report is not valid JSON: {exc}") from None

    def save(self, path, fmt: str = "json") -> None:
        with open(path, "w", newline="") as fh:
            if fmt == "json":
                fh.write(self.to_json())
            elif fmt == "csv":
                fh.write(history_to_csv(self.history))
            else:
                raise ValidationError(f"unknown report format {fmt!r}")

    @classmethod
    def load(cls, path) -> "SolveReport":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _ranks(x):
    return [int(r) for r in x.ranks] if hasattr(x, "ranks") else None


def build_report(result: EigenResult, ops, problem: TransportProblem, *, problem_path=None, options=None,
                 error: str | None = None) -> SolveReport:
    store = ops.storage()
    psi_elems = result.psi.size if hasattr(result.psi, "size") else int(np.asarray(result.psi).size)
    storage = {name: int(n) * BYTES_PER_ELEMENT for name, n in store.items()}
    storage["psi"] = int(psi_elems) * BYTES_PER_ELEMENT
    meta = {
        "psi_ranks": _ranks(result.psi),
        "operator_ranks": {name: _ranks(op) for name, op in ops.operators().items()},
        "n_unknowns": int(problem.n_unknowns),
        "dense_elements": int(ops.full_elements()),
        "total_inner_sweeps": int(sum(h.get("sweeps", 0) for h in result.history)),
    }
    meta.update({k: v for k, v in result.extra.items() if isinstance(v, (int, float, str, bool, type(None)))})
    if options is not None:
        meta["options"] = {"tol": options.tol, "max_outer": options.max_outer, "seed": options.seed,
                           "matvec": options.matvec, "alpha_update": options.alpha_update}
    prob = {
        "name": problem.name,
        "path": None if problem_path is None else str(problem_path),
        "fingerprint": physics_fingerprint(problem),
        "dims": problem.dims,
        "nodes": list(problem.grid.nodes),
        "N": problem.quadrature.N,
        "L": problem.L,
        "G": problem.G,
    }
    return SolveReport(
        eigenvalue=float(result.eigenvalue),
        kind=result.kind,
        mode=result.representation,
        converged=bool(result.converged),
        iterations=int(result.iterations),
        history=[{k: _plain(v) for k, v in h.items()} for h in result.history],
        wall_time_seconds=float(result.wall_time),
        storage_bytes=storage,
        compression={k: float(v) for k, v in result.compression.items()},
        metadata=meta,
        problem=prob,
        k_eff=None if result.k_eff is None else float(result.k_eff),
        error=error,
    )


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(u) for u in v]
    return v


def history_to_csv(history: list) -> str:
    cols = []
    for h in history:
        for k in h:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for h in history:
        w.writerow({k: (json.dumps(v) if isinstance(v, list) else v) for k, v in h.items()})
    return buf.getvalue()


def _label(i, r: SolveReport):
    return f"{i}:{r.mode}/L={r.problem.get('L')}/n={'x'.join(map(str, r.problem.get('nodes', [])))}"


def compare_reports(reports: list[SolveReport]) -> dict:
    """Per-run summary plus per-pair eigenvalue deltas and timing/storage ratios.

    Raises ValidationError for fewer than two reports or differing physics.
    """
    if len(reports) < 2:
        raise ValidationError("compare needs at least two reports")
    prints = {r.problem.get("fingerprint") for r in reports}
    if len(prints) != 1 or None in prints:
        raise ValidationError("reports describe different problems")
    kinds = {r.kind for r in reports}
    if len(kinds) != 1:
        raise ValidationError(f"cannot compare different eigenvalue kinds {sorted(kinds)}")
    kind = kinds.pop()
    target = 1.0 if kind == "keff" else 0.0
    runs = []
    for i, r in enumerate(reports):
        runs.append({
            "run": _label(i, r),
            "mode": r.mode,
            "L": r.problem.get("L"),
            "eigenvalue": r.eigenvalue,
            "abs_from_critical": abs(r.eigenvalue - target),
            "iterations": r.iterations,
            "wall_time_seconds": r.wall_time_seconds,
            "H_bytes": r.storage_bytes.get("H"),
            "H_compression": r.compression.get("H"),
        })
    pairs = []
    for (i, a), (j, b) in combinations(enumerate(reports), 2):
        ha, hb = a.storage_bytes.get("H"), b.storage_bytes.get("H")
        pairs.append({
            "a": _label(i, a),
            "b": _label(j, b),
            "eigenvalue_delta": b.eigenvalue - a.eigenvalue,
            "abs_delta": abs(b.eigenvalue - a.eigenvalue),
            "time_ratio": b.wall_time_seconds / a.wall_time_seconds if a.wall_time_seconds > 0 else None,
            "H_storage_ratio": hb / ha if ha and hb is not None else None,
        })
    return {"kind": kind, "runs": runs, "pairs": pairs}


def table_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
