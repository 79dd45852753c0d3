import json

import numpy as np
import pytest

from freeprodlab import experiments as ex
from freeprodlab.ncpoly import NCPoly


@pytest.fixture(scope="module")
def t31():
    return ex.run_theorem31()


def test_non_increasing_tail_rule():
    assert ex._non_increasing([3.0, 2.0, 2.0])
    assert ex._non_increasing([1e-15, 2e-15, 0.0])
    assert not ex._non_increasing([1e-3, 2e-3])


def test_block_family_shapes():
    fam = ex.GeneratorFamily.build(ex.ConvergenceConfig())
    X, xi = fam.x.at(0.5)
    assert X["x1"].shape == (6, 6) and xi.shape == (6,)
    np.testing.assert_array_equal(X["x1"][:3, :3], fam.x.limit["x1"])
    assert not np.any(fam.x.limit["x1"][2])  # zero block
    assert abs(np.linalg.norm(xi) - 1) < 1e-14 and not xi[3:].any()
    scale = max(np.linalg.norm(M, 2) for M in fam.x.limit.values())
    assert all(np.linalg.norm(Z, 2) <= scale + 1e-12 for Z in fam.x.perturbation.values())
    Y, eta = fam.y.at(0.5)
    assert Y["y1"].shape == (2, 2)


def test_theorem31_default_passes(t31):
    assert t31["passed"] and t31["hypotheses_hold"]
    assert len(t31["summary"]) == 5
    for s in t31["summary"]:
        assert s["final_gap"] <= 1e-4 and s["tail_non_increasing"] and s["lower_bound_row"]
    for r in t31["rows"]:
        assert r["lower_bound_slack"] >= -1e-9
        assert r["depth"] == 5 and r["interior_margin"] == 5 - NCPoly.parse(r["poly"]).degree
        assert r["norm"] >= r["two_norm"] - 1e-12


def test_theorem31_first_sample_sees_perturbation(t31):
    # at k = 1 the perturbed block is as large as the limit block
    assert max(r["gap"] for r in t31["rows"] if r["k"] == 1) > 1e-3


def test_constant_family_has_zero_gap():
    rep = ex.run_theorem31(ex.ConvergenceConfig(family="constant", ks=(1, 2, 4)))
    assert all(r["gap"] == 0 for r in rep["rows"])
    assert rep["passed"]


def test_single_generator_gap_at_k_1000():
    rep = ex.run_theorem31(ex.ConvergenceConfig(polys=("x1",), ks=(10, 100, 1000)))
    assert rep["rows"][-1]["gap"] <= 1e-6


def test_pisier_variant_passes_at_1e5():
    rep = ex.run_pisier_variant()
    assert rep["passed"] and rep["config"]["tol"] == 1e-4
    assert all(s["final_gap"] <= 1e-5 for s in rep["summary"])
    assert {h["side"] for h in rep["hypotheses"]} == {"x", "y"}


def test_fixed_second_factor_reduces_to_one_sided_family():
    cfg = ex.ConvergenceConfig(polys=("x1 + y1",), ks=(1, 4), depth=4)
    fam = ex.GeneratorFamily.build(cfg, vary_y=False)
    both = ex.GeneratorFamily.build(cfg, vary_y=True)
    for k in (1, 4):
        Y, eta = fam.y.at(fam.eps(k))
        np.testing.assert_array_equal(Y["y1"], fam.y.limit["y1"])
        np.testing.assert_array_equal(eta, fam.y.xi)
        assert both.y.at(both.eps(k))[0]["y1"].shape == (4, 4)


def test_hypothesis_failure_warns(monkeypatch):
    # a perturbation larger than the limit breaks the norm condition
    original = ex._random_side

    def oversized(*args):
        side = original(*args)
        return ex.Side(side.limit, {n: 5 * Z for n, Z in side.perturbation.items()}, side.xi, side.zeta,
                       side.leak, side.varies)

    monkeypatch.setattr(ex, "_random_side", oversized)
    with pytest.warns(RuntimeWarning):
        rep = ex.run_theorem31(ex.ConvergenceConfig(polys=("x1",), ks=(1, 2)))
    assert not rep["hypotheses_hold"]


def test_moment_convergence_rows():
    rep = ex.run_moment_convergence(ex.ConvergenceConfig(leak=1.0, ks=(1, 2, 4, 8, 16)))
    gaps = [r["max_gap"] for r in rep["rows"]]
    assert rep["non_increasing"]
    assert gaps[-1] < gaps[0]
    # gap * k decreasing: at least first order in 1/k
    scaled = [r["gap_times_k"] for r in rep["rows"]]
    assert scaled[-1] < scaled[0]
    no_leak = ex.run_moment_convergence(ex.ConvergenceConfig(leak=0.0, ks=(1, 8)), degree=2)
    assert max(r["max_gap"] for r in no_leak["rows"]) < 1e-12


def test_exactness_default_and_trivial_ideal():
    rep = ex.run_exactness_witness()
    assert rep["passed"], rep["failed"]
    names = {c["name"] for c in rep["checks"]}
    assert {"subspace_invariance", "pi_kills_ideal", "ideal_word_oracle", "sigma_psi_identity",
            "commuting_square", "fejer_band", "sstar_S*AS"} <= names
    zero = ex.run_exactness_witness(ex.ScenarioConfig(b=0))
    assert zero["passed"]
    inj = next(c for c in zero["checks"] if c["name"] == "quotient_injective_min_singular_value")
    assert inj["residual"] > 0.1


def test_exactness_reports_failures_by_name():
    rep = ex.run_exactness_witness(ex.ScenarioConfig(threshold=-1.0, words=2))
    assert not rep["passed"]
    assert "embedding_isometry" in rep["failed"]


def test_dumps_is_deterministic_and_handles_complex():
    obj = {"b": 1 + 2j, "a": np.float64(0.5), "c": np.array([1j, 2]), "d": (1, 2), "e": np.complex128(3j)}
    text = ex.dumps(obj)
    assert text == ex.dumps(dict(reversed(list(obj.items()))))
    back = json.loads(text)
    assert back["b"] == [1.0, 2.0] and back["e"] == [0.0, 3.0] and back["c"] == [[0.0, 1.0], [2.0, 0.0]]
    with pytest.raises(TypeError):
        ex.dumps({"x": object()})


def test_config_from_json_ignores_unknown_keys():
    cfg = ex.ConvergenceConfig.from_json({"depth": 3, "bogus": 1})
    assert cfg.depth == 3
    assert ex.ScenarioConfig.from_json({"a": 3, "zzz": 0}).a == 3


def test_parallel_rows_match_serial():
    cfg = ex.ConvergenceConfig(polys=("x1 + y1",), ks=(1, 2, 4))
    serial = ex.run_theorem31(cfg)
    cfg.workers = 3
    assert ex.dumps(ex.run_theorem31(cfg)["rows"]) == ex.dumps(serial["rows"])
