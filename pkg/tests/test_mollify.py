import numpy as np
import pytest

from varmin.analysis import SampledCurve
from varmin.errors import ContractError
from varmin.model import catalog_lookup
from varmin.mollify import bump_weights, mollification_study, mollify_curve
from varmin.problem import Problem

FREE = catalog_lookup("free_particle")


def zigzag(n=2 ** 12, teeth=4):
    s = np.linspace(0, 1, n + 1)
    tooth = 1.0 / teeth
    phase = (s % tooth) / tooth
    y = np.floor(s / tooth) * tooth + np.where(phase < 0.5, 3 * phase * tooth, 1.5 * tooth - (phase - 0.5) * tooth)
    y[-1] = 1.0
    return SampledCurve(s, y)


def test_bump_weights():
    w = bump_weights(0.1, 0.01)
    assert w.sum() == pytest.approx(1.0)
    assert w == pytest.approx(w[::-1])
    assert w[0] == 0.0
    with pytest.raises(ContractError):
        bump_weights(0.01, 0.01)


@pytest.mark.parametrize("extension", ["linear", "constant"])
def test_endpoints_exact(extension):
    c = zigzag()
    sm = mollify_curve(c, 0.05, left=[0.0], right=[1.0], extension=extension)
    assert sm.values[0, 0] == 0.0
    assert sm.values[-1, 0] == 1.0


def test_line_is_fixed_with_linear_extension():
    s = np.linspace(0, 1, 1001)
    c = SampledCurve(s, 2 * s - 1)
    sm = mollify_curve(c, 0.1)
    assert np.max(np.abs(sm.values[:, 0] - (2 * s - 1))) < 1e-13
    assert np.allclose(sm.derivs, 2.0)


def test_constant_extension_bends_a_line():
    s = np.linspace(0, 1, 1001)
    sm = mollify_curve(SampledCurve(s, s), 0.1, extension="constant")
    assert np.max(np.abs(sm.values[:, 0] - s)) > 1e-3


def test_mollified_is_lipschitz_bounded():
    sm = mollify_curve(zigzag(), 0.05)
    assert np.max(np.abs(sm.derivs)) <= 3.0 + 1e-6


def test_eps_range():
    c = zigzag()
    for eps in (0.0, 0.25, -0.1):
        with pytest.raises(ContractError):
            mollify_curve(c, eps)
    with pytest.raises(ContractError):
        mollify_curve(c, 0.1, extension="reflect")


def test_study_zigzag():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    eps = [0.125 / 2 ** j for j in range(4)]
    table = mollification_study(p, zigzag(), eps, 0.5)
    assert table.raw_action == pytest.approx(2.5)
    assert table.all_dominated
    assert table.differences_decreasing()
    acts = [r["action"] for r in table.rows]
    assert acts == sorted(acts)
    assert "raw action" in table.table()
    assert table.to_dict()["all_dominated"]


def test_study_flags_undominated():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    table = mollification_study(p, zigzag(), [0.1, 0.05], 3.0)
    assert not table.all_dominated


def test_study_requires_decreasing_eps():
    p = Problem.two_point(FREE, [0.0], [1.0], 1.0)
    with pytest.raises(ContractError):
        mollification_study(p, zigzag(), [0.05, 0.1], 0.5)
