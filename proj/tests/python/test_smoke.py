import math
import os

import pytest

import levolve

DATA = os.path.join(os.path.dirname(__file__), "..", "data")


def flat(n=64):
    return levolve.build_geometry(levolve.FlowModel.flat_circle(), n, 0.5, 5.0)


def test_flat_q_matches_closed_form():
    g = flat()
    r = levolve.q_distance(g, 0.0, 1.0, math.pi / 2, 4.0)
    assert r["length"] == pytest.approx(math.pi**2 / 8, rel=1e-6)
    assert not r["near_cut"]


def test_ricci_sphere_metric_and_trace():
    g = levolve.build_geometry(levolve.FlowModel.ricci_sphere(1.0), 32, 0.5, 5.0)
    assert g.metric_coefficient(0.3, 1.0) == pytest.approx(3.0)
    assert g.trace_s(0, 1.0) == pytest.approx(2.0 / 3.0)
    assert sum(g.volume_weights(1.0)) == pytest.approx(12 * math.pi, rel=1e-12)


def test_diffusion_conserves_mass():
    g = flat()
    u = levolve.bump_profile(g, 1.0, 1.0, 0.3)
    v = levolve.evolve_density(g, u, 1.0, 2.0)
    assert levolve.total_mass(g, v, 2.0) == pytest.approx(1.0, abs=1e-8)
    assert levolve.entropy(g, v, 2.0) < levolve.entropy(g, u, 1.0)


def test_uniform_w_entropy():
    g = flat()
    u = levolve.uniform_profile(g, 1.0)
    expected = math.log(2 * math.pi) - 0.5 * math.log(4 * math.pi) - 1
    assert levolve.w_entropy(g, u, 1.0) == pytest.approx(expected, abs=1e-12)


def test_exact_transport_identity_pairing():
    plan = levolve.solve_transport([0.5, 0.5], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    assert plan["cost"] == pytest.approx(0.0)


def test_errors_are_typed():
    with pytest.raises(levolve.DomainError):
        levolve.q_distance(flat(), 0.0, 0.1, 1.0, 4.0)
    with pytest.raises(levolve.SemanticError):
        levolve.validate_config(os.path.join(DATA, "degenerate_dilaton.ini"))


def test_run_config(tmp_path):
    code, summary = levolve.run(os.path.join(DATA, "theta_flat.ini"), str(tmp_path))
    assert code == 0
    assert summary["monitors"][0]["verdict"] == "pass"
    rows = (tmp_path / "theta_uniform.csv").read_text().splitlines()
    assert rows[0] == "abscissa,value"
    assert float(rows[1].split(",")[1]) == pytest.approx(-2.0, abs=1e-9)
