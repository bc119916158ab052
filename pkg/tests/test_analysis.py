import math

import numpy as np
import pytest

from varmin.analysis import (
    PhasePolygon,
    SampledCurve,
    continuous_action,
    du_bois_reymond_spread,
    el_residual,
    polygon_distance,
    polygonal_interpolant,
    polyline_action,
    reference_flow,
    refine_study,
    simpson,
    worker_count,
)
from varmin.errors import CompletenessError, ContractError
from varmin.model import LagrangianModel, catalog_lookup
from varmin.problem import Problem
from varmin.solve import solve

FREE = catalog_lookup("free_particle")
OSC = catalog_lookup("harmonic_oscillator")


def line_curve(n=101, derivs=True):
    s = np.linspace(0, 1, n)
    return SampledCurve(s, s, np.ones_like(s) if derivs else None)


def test_polygon_from_solution():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    res = solve(p, 4)
    poly = polygonal_interpolant(res.path, res.momenta)
    assert poly.K == 4
    y, z = poly(np.array([0.125, 1.0]))
    assert y[:, 0] == pytest.approx([0.125, 1.0])
    assert z[:, 0] == pytest.approx([1.0, 1.0])
    assert poly.lipschitz_constant == pytest.approx(1.0)


def test_polygon_distance():
    tk = np.linspace(0, 1, 3)
    a = PhasePolygon(tk, np.zeros((3, 1)), np.zeros((3, 1)))
    b = PhasePolygon(tk, np.array([[0.0], [0.5], [0.0]]), np.zeros((3, 1)))
    assert polygon_distance(a, b) == pytest.approx(0.5)
    assert polygon_distance(a, a) == 0.0
    c = PhasePolygon(np.linspace(0, 2, 3), np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(ContractError):
        polygon_distance(a, c)


def test_position_curve_drops_last_node():
    tk = np.linspace(0, 1, 5)
    poly = PhasePolygon(tk, tk[:, None] ** 2, np.zeros((5, 1)))
    pc = poly.position_curve()
    assert pc.s.size == 4
    assert pc.derivs[:, 0] == pytest.approx(np.diff(tk ** 2) / 0.25)


def test_reference_flow_free_particle_exact():
    gam, mom = reference_flow(FREE, [0.0], [2.0], 0.0, 1.0, 10)
    assert gam.values[:, 0] == pytest.approx(2 * gam.s, abs=1e-14)
    assert np.allclose(mom.values, 2.0)


def test_reference_flow_oscillator_quarter_period():
    gam, mom = reference_flow(OSC, [1.0], [0.0], 0.0, math.pi / 2, 400)
    assert abs(gam.values[-1, 0]) < 1e-9
    assert mom.values[-1, 0] == pytest.approx(-1.0, abs=1e-9)


def test_reference_flow_backward():
    gam, _ = reference_flow(OSC, [0.0], [1.0], 1.0, 0.0, 200)
    # solution sin(s - 1) through (1, 0) with momentum 1
    assert gam.at(0.0)[0] == pytest.approx(math.sin(-1.0), abs=1e-9)


def test_reference_flow_bad_steps():
    with pytest.raises(ContractError):
        reference_flow(FREE, [0.0], [1.0], 0.0, 1.0, 0)
    with pytest.raises(ContractError):
        reference_flow(FREE, [0.0], [1.0], 1.0, 1.0, 4)


def test_reference_flow_blow_up():
    # L = xi^2/2 - x^4/4 gives x'' = x^3, which blows up in finite time
    def func(x, t, xi):
        return (0.5 * np.sum(xi * xi, -1) - 0.25 * np.sum(x ** 4, -1), x ** 3, xi,
                np.broadcast_to(np.eye(1), np.broadcast_shapes(x.shape, xi.shape) + (1,)))

    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(CompletenessError):
        reference_flow(LagrangianModel(dim=1, func=func), [1.0], [5.0], 0.0, 10.0, 1000)


def test_simpson_exact_on_cubics():
    x = np.linspace(0, 2, 11)
    val, tail = simpson(x ** 3, x[1] - x[0])
    assert val == pytest.approx(4.0, abs=1e-13)
    assert not tail
    val, tail = simpson(np.ones(12), 0.1)
    assert val == pytest.approx(1.1)
    assert tail


def test_continuous_action_line():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    assert continuous_action(p, line_curve()) == pytest.approx(0.5, abs=1e-14)


def test_continuous_action_oscillator_extremal():
    p = Problem.two_point(OSC, [0.0], [1.0], 1.0)
    s = np.linspace(0, 1, 10001)
    curve = SampledCurve(s, np.sin(s) / math.sin(1), np.cos(s) / math.sin(1))
    val, info = continuous_action(p, curve, return_info=True)
    assert val == pytest.approx(0.5 / math.tan(1.0), abs=1e-8)
    assert info["error_estimate"] < 1e-10


def test_continuous_action_contracts():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    with pytest.raises(ContractError):
        continuous_action(p, line_curve(derivs=False))
    s = np.array([0.0, 0.1, 1.0])
    with pytest.raises(ContractError):
        continuous_action(p, SampledCurve(s, s, np.ones(3)))


def test_polyline_action_exact_for_zigzag():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    s = np.array([0.0, 0.5, 1.0])
    # slopes 3 and -1: (9 + 1)/2 * 1/2
    assert polyline_action(p, SampledCurve(s, [0.0, 1.5, 1.0])) == pytest.approx(2.5)


def test_el_residual_and_dbr():
    s = np.linspace(0, 1, 2001)
    extremal = SampledCurve(s, np.sin(s), np.cos(s))
    assert el_residual(OSC, extremal) < 1e-5
    assert du_bois_reymond_spread(OSC, extremal) < 1e-6
    other = SampledCurve(s, s ** 2, 2 * s)
    assert el_residual(OSC, other) > 1.0
    assert du_bois_reymond_spread(OSC, other) > 0.1


def test_refine_study_free_particle_exact():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    rep = refine_study(p, 4, 3)
    assert rep.verdict == "exact"
    assert all(r.converged for r in rep.levels)
    assert rep.levels[0].distance_to_oracle < 1e-10
    assert "K" in rep.table()
    assert rep.to_dict()["verdict"] == "exact"


def test_refine_study_first_order_mechanical():
    p = Problem.two_point(catalog_lookup("mechanical"), [0.0], [1.0], 1.0)
    rep = refine_study(p, 16, 4)
    assert rep.verdict == "first_order"
    assert all(0.8 <= o <= 1.2 for o in rep.orders)


def test_refine_study_truncates_on_failure():
    p = Problem.two_point(OSC, [0.0], [1.0], 1.0)
    from varmin.solve import SolveOptions
    rep = refine_study(p, 8, 3, SolveOptions(max_iter=0))
    assert rep.truncated
    assert rep.verdict == "inconclusive"


def test_refine_study_rejects_single_level():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    with pytest.raises(ContractError):
        refine_study(p, 4, 1)


def test_refine_study_threads_agree(monkeypatch):
    p = Problem.two_point(catalog_lookup("mechanical"), [0.0], [1.0], 1.0)
    monkeypatch.setenv("VARMIN_THREADS", "1")
    one = refine_study(p, 8, 3, oracle=False).to_dict()
    monkeypatch.setenv("VARMIN_THREADS", "4")
    four = refine_study(p, 8, 3, oracle=False).to_dict()
    assert one == four


def test_worker_count(monkeypatch):
    monkeypatch.setenv("VARMIN_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("VARMIN_THREADS", "0")
    assert worker_count() >= 1
