import json

import numpy as np
import pytest
from click.testing import CliRunner

from freeprodlab.cli import main, matrix_json, to_matrix
from freeprodlab.cpmaps import MatrixAlgebra, random_compatible_case


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, args):
    res = runner.invoke(main, args, catch_exceptions=False)
    assert res.exit_code == 0, res.output
    return res.output


def test_matrix_json_roundtrip():
    M = np.array([[1, 2j], [3 - 1j, 0]])
    np.testing.assert_array_equal(to_matrix(matrix_json(M)), M)
    np.testing.assert_array_equal(to_matrix([[1, 2], [3, 4]]), [[1, 2], [3, 4]])


def test_norm_fock_shorthand(runner):
    out = json.loads(run(runner, ["norm", "--poly", "a1+a1'", "--space", "fock:1:8"]))
    assert out["value"] == pytest.approx(2 * np.cos(np.pi / 10), abs=1e-12)
    assert out["method"] == "dense-eigensolve"


def test_norm_rejects_bad_generator(runner):
    res = runner.invoke(main, ["norm", "--poly", "a3", "--space", "fock:2:3"])
    assert res.exit_code != 0


def test_norm_model_file(runner, tmp_path):
    model = {"factors": [{"dim": 2}, {"dim": 2}], "depth": 3,
             "assignment": {"a1": [[0, 1], [1, 0]], "b1": [[1, 0], [0, -1]]}, "tags": {"a": 0, "b": 1}}
    f = tmp_path / "model.json"
    f.write_text(json.dumps(model))
    out = json.loads(run(runner, ["norm", "--poly", "a1.b1", "--space", str(f)]))
    assert out["value"] == pytest.approx(1.0)
    assert out["depth"] == 3


def test_fock_moments_csv(runner):
    out = run(runner, ["fock", "moments", "--k", "5", "--depth", "8"]).splitlines()
    assert out[0] == "k,moment,catalan,residual,depth"
    assert [line.split(",")[2] for line in out[1:]] == ["1", "2", "5", "14", "42"]


def test_freeprod_commands(runner, tmp_path):
    lift = {"factors": [{"dim": 2}, {"dim": 2, "xi": [[0.6, 0], [0, 0.8]]}], "depth": 2,
            "factor": 0, "matrix": [[1, 2], [3, 4]]}
    f = tmp_path / "lift.json"
    f.write_text(json.dumps(lift))
    out = json.loads(run(runner, ["freeprod", "lift", "--input", str(f)]))
    assert out["dim"] == 5 and out["matrix"][0][0] == [1.0, 0.0]

    mom = {**lift, "poly": "a1.b1", "assignment": {"a1": [[2, 0], [0, 1]], "b1": [[0, 1], [1, 0]]},
           "tags": {"a": 0, "b": 1}}
    f.write_text(json.dumps(mom))
    out = json.loads(run(runner, ["freeprod", "moment", "--input", str(f)]))
    # phi(a1 b1) = phi(a1) phi(b1) = 2 * 2 Re(0.6 * conj(0.8i)) = 0
    assert out["value"] == pytest.approx([0.0, 0.0], abs=1e-14)

    comp = {"scenario": {"a": 2, "b": 1, "dim2": 2}, "depth": 2,
            "word": [{"factor": 0, "A": [[1, 0], [0, 2]], "B": [[5]]}, {"factor": 1, "matrix": [[0, 1], [1, 0]]}]}
    f.write_text(json.dumps(comp))
    out = json.loads(run(runner, ["freeprod", "compress", "--input", str(f)]))
    assert len(out["matrix"]) == 5


def test_space_dump(runner):
    out = json.loads(run(runner, ["--depth", "3", "space", "dump", "--dims", "2,3"]))
    assert out["dim"] == 14 and out["words"][0]["tags"] == []
    res = runner.invoke(main, ["space", "dump"])
    assert res.exit_code != 0


def test_fejer_and_pimsner(runner):
    out = json.loads(run(runner, ["fejer", "--n", "4"]))
    assert out["residual"] == 0 and out["expected_factor"] == pytest.approx(0.8)
    out = json.loads(run(runner, ["pimsner", "fejer", "--op", "S*", "--n", "2"]))
    assert out["residual"] < 1e-14
    table = json.loads(run(runner, ["pimsner", "fejer", "--op", "", "--n", "2"]))
    assert "residual" not in table and len(table["table"]) == 3
    out = json.loads(run(runner, ["pimsner", "check"]))
    assert out["passed"] and all(c["name"].startswith(("sstar", "expectation", "gauge", "fejer", "sigma",
                                                       "commuting", "pi_prime")) for c in out["checks"])


def test_cpmaps_extend(runner, tmp_path):
    rng = np.random.default_rng(0)
    A = MatrixAlgebra.block_diagonal([2, 1], 4)
    phi, xi, eta = random_compatible_case(rng, A, 3)
    case = {"basis": [matrix_json(b) for b in A.basis], "images": [matrix_json(phi(b)) for b in A.basis],
            "xi": [[z.real, z.imag] for z in xi], "eta": [[z.real, z.imag] for z in eta]}
    f = tmp_path / "case.json"
    f.write_text(json.dumps(case))
    out = json.loads(run(runner, ["cpmaps", "extend", "--input", str(f)]))
    assert len(out["choi"]) == 12
    rep = out["report"]
    assert rep["choi_min_eigenvalue"] > -1e-9 and rep["state_residual"] < 1e-9 and rep["restriction_residual"] < 1e-9


def test_converge_and_exactness_outputs(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"polys": ["x1 + y1"], "ks": [1, 2, 4]}))
    out_json, out_csv, plot = tmp_path / "r.json", tmp_path / "r.csv", tmp_path / "plot.csv"
    run(runner, ["--out", str(out_json), "--emit-plot", str(plot), "converge", "t31", "--config", str(cfg)])
    rep = json.loads(out_json.read_text())
    assert rep["passed"] and len(rep["rows"]) == 3
    assert plot.read_text().splitlines()[0].startswith("poly,k,eps,depth,interior_margin")
    run(runner, ["--out", str(out_csv), "--seed", "3", "exactness", "run"])
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "name,residual,threshold,passed" and len(lines) > 10
    out = json.loads(run(runner, ["converge", "moments", "--config", str(cfg), "--degree", "2"]))
    assert out["degree"] == 2


def test_converge_pisier_cli(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"polys": ["x1 + y1"], "ks": [1, 8, 64]}))
    out = json.loads(run(runner, ["--tol", "1e-5", "converge", "pisier", "--config", str(cfg)]))
    assert out["passed"] and out["config"]["tol"] == 1e-5


def test_failing_run_exits_nonzero(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"threshold": -1, "words": 2}))
    res = runner.invoke(main, ["exactness", "run", "--config", str(cfg)])
    assert res.exit_code == 1


def test_reports_are_byte_identical(runner, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(runner, ["--out", str(a), "--seed", "7", "exactness", "run"])
    run(runner, ["--out", str(b), "--seed", "7", "exactness", "run"])
    assert a.read_bytes() == b.read_bytes()
