import json

import numpy as np
import pytest
import yaml

from ttcrit import cli
from ttcrit.criticality import EigenOptions, compression_ratio, solve_keff
from ttcrit.exceptions import SolverError, ValidationError
from ttcrit.report import SolveReport, build_report, compare_reports, history_to_csv, physics_fingerprint
from ttcrit.transport import assemble_operators, pu239_slab, save_problem


@pytest.fixture(scope="module")
def small_problem(tmp_path_factory):
    path = tmp_path_factory.mktemp("p") / "slab.yaml"
    save_problem(pu239_slab(nodes=64, N=8), path)
    return str(path)


def _solve(tmp_path, problem, *extra, name="r.json"):
    out = tmp_path / name
    code = cli.main(["solve", "--problem", problem, "--out", str(out), *extra])
    return code, out


def test_solve_dense_and_qtt(tmp_path, small_problem, capsys):
    code, out = _solve(tmp_path, small_problem, "--tol", "1e-7")
    assert code == 0
    dense = SolveReport.load(out)
    assert dense.kind == "keff" and dense.converged
    assert abs(dense.eigenvalue - 1) < 0.05
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["mode"] == "dense"
    code, out = _solve(tmp_path, small_problem, "--mode", "qtt", "--tol", "1e-7", name="q.json")
    assert code == 0
    qtt = SolveReport.load(out)
    assert abs(qtt.eigenvalue - dense.eigenvalue) <= 1e-6
    assert qtt.metadata["psi_ranks"][0] == 1
    table = compare_reports([dense, qtt])
    assert table["pairs"][0]["abs_delta"] <= 1e-6
    assert table["pairs"][0]["H_storage_ratio"] < 1


def test_bundled_problem_name_resolves():
    assert "pu239_slab" in cli.bundled_problems()
    assert cli.resolve_problem_path("pu239_slab").is_file()
    with pytest.raises(ValidationError):
        cli.resolve_problem_path("no_such_problem")


def test_qtt_rejects_non_power_of_two(tmp_path, small_problem, capsys):
    code, _ = _solve(tmp_path, small_problem, "--mode", "qtt", "--nodes", "100")
    assert code == cli.EXIT_USAGE
    assert "node count must be a power of two" in capsys.readouterr().err


def test_usage_errors(tmp_path, small_problem):
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "--problem", small_problem, "--mode", "cp"])
    assert info.value.code == cli.EXIT_USAGE
    assert _solve(tmp_path, str(tmp_path / "missing.yaml"))[0] == cli.EXIT_USAGE
    assert _solve(tmp_path, small_problem, "--tol", "-1")[0] == cli.EXIT_USAGE


def test_convergence_failure_writes_partial_report(tmp_path, small_problem):
    code, out = _solve(tmp_path, small_problem, "--max-outer", "2", "--tol", "1e-12")
    assert code == cli.EXIT_CONVERGENCE
    rep = SolveReport.load(out)
    assert not rep.converged and rep.iterations == 2 and rep.error


def test_numerical_failure_exit_code(tmp_path, small_problem, monkeypatch):
    def boom(*a, **k):
        raise SolverError("singular")

    monkeypatch.setattr(cli, "solve_keff", boom)
    assert _solve(tmp_path, small_problem)[0] == cli.EXIT_NUMERICAL


def test_csv_history(tmp_path, small_problem):
    code, out = _solve(tmp_path, small_problem, "--format", "csv", name="h.csv")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("iteration,eigenvalue,residual")
    assert len(lines) > 2


def test_report_roundtrip_and_compression():
    p = pu239_slab(nodes=32, N=4)
    ops = assemble_operators(p, "qtt")
    res = solve_keff(ops, EigenOptions(tol=1e-6))
    rep = build_report(res, ops, p, options=EigenOptions(tol=1e-6))
    assert rep.compression["psi"] == compression_ratio(res.psi)
    assert rep.compression["H"] == compression_ratio(ops.H)
    assert rep.storage_bytes["H"] == 8 * ops.H.size
    back = SolveReport.from_json(rep.to_json())
    assert back == rep
    assert SolveReport.from_json(back.to_json(indent=None)) == rep
    with pytest.raises(ValidationError):
        SolveReport.from_dict({**rep.to_dict(), "schema": "x/0"})
    with pytest.raises(ValidationError):
        SolveReport.from_json("{")
    assert history_to_csv(rep.history).count("\n") == len(rep.history) + 1


def test_compare_rules(tmp_path, small_problem):
    _, out = _solve(tmp_path, small_problem)
    rep = SolveReport.load(out)
    same = compare_reports([rep, rep])
    assert same["pairs"][0]["eigenvalue_delta"] == 0.0
    with pytest.raises(ValidationError):
        compare_reports([rep])
    other = SolveReport.from_dict({**rep.to_dict(), "problem": {**rep.problem, "fingerprint": "abc"}})
    with pytest.raises(ValidationError):
        compare_reports([rep, other])
    odd = tmp_path / "other.json"
    odd.write_text(other.to_json())
    assert cli.main(["compare", str(out), str(odd)]) == cli.EXIT_USAGE


def test_fingerprint_ignores_discretization():
    p = pu239_slab(nodes=64, N=4)
    assert physics_fingerprint(p) == physics_fingerprint(p.with_quadrature(8).with_nodes(32))
    assert physics_fingerprint(p) != physics_fingerprint(p.with_width(2.0))


def test_refinement_study_via_compare(tmp_path, small_problem, capsys):
    paths = []
    for n in (2, 4, 8):
        code, out = _solve(tmp_path, small_problem, "--quad-order", str(n), "--nodes", "256", name=f"L{n}.json")
        assert code == 0
        paths.append(str(out))
    capsys.readouterr()
    assert cli.main(["compare", *paths, "--format", "json", "--out", str(tmp_path / "cmp.json")]) == 0
    table = json.loads((tmp_path / "cmp.json").read_text())
    dev = [r["abs_from_critical"] for r in table["runs"]]
    assert all(b < a for a, b in zip(dev, dev[1:]))


def test_suite_runs_in_threads(tmp_path, small_problem, capsys):
    suite = tmp_path / "suite.yaml"
    suite.write_text(yaml.safe_dump({
        "defaults": {"problem_path": small_problem, "tol": 1e-6},
        "runs": [{"mode": "dense"}, {"mode": "qtt"}, {"mode": "dense", "solve": "alpha"}],
    }))
    code = cli.main(["suite", str(suite), "--workers", "3", "--out", str(tmp_path / "runs")])
    assert code == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["exit_code"] for r in rows] == [0, 0, 0]
    reps = [SolveReport.load(r["output"]) for r in rows]
    assert abs(reps[0].eigenvalue - reps[1].eigenvalue) <= 1e-6
    assert reps[2].kind == "alpha"
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"runs": [{"problem_path": small_problem, "colour": 1}]}))
    assert cli.main(["suite", str(bad)]) == cli.EXIT_USAGE
