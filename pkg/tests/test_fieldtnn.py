import numpy as np
import pytest
from hypothesis import given, strategies as st

from tnnmaxwell.fieldtnn import (BoundaryMask, FieldTNN, apply_boundary_mask,
                                 eval_component_tables, eval_curl, eval_divergence,
                                 eval_values, point_tables, support_field, tensor_field)
from tnnmaxwell.quadrature import axis_grid
from tnnmaxwell.subnet import const_mode, cos_mode, sin_mode, tabulated_mode

PI = np.pi
UNIT = ((0.0, 1.0), (0.0, 1.0))


def _axes(d=2, panels=4, points=6):
    return [axis_grid([0.0, 1.0], panels, points)] * d


def _mode_field(i, j):
    # E_ij = (-j cos(i pi x1) sin(j pi x2), i sin(i pi x1) cos(j pi x2))
    f = [[tabulated_mode([cos_mode(i, -j)]), tabulated_mode([sin_mode(j)])],
         [tabulated_mode([sin_mode(i, i)]), tabulated_mode([cos_mode(j)])]]
    return FieldTNN(f, UNIT)


def _grad_field():
    f = [[tabulated_mode([cos_mode(1, PI)]), tabulated_mode([sin_mode(1)])],
         [tabulated_mode([sin_mode(1, PI)]), tabulated_mode([cos_mode(1)])]]
    return FieldTNN(f, UNIT)


def test_tabulated_tables_are_samples():
    ax = _axes()
    tabs = eval_component_tables(_mode_field(1, 1), ax)
    x = ax[0].nodes
    np.testing.assert_array_equal(tabs[0][1].values[0], np.sin(PI * x))
    np.testing.assert_array_equal(tabs[1][1].values[0], np.cos(PI * x))


@pytest.mark.parametrize("ij", [(1, 0), (0, 2), (1, 1), (2, 1), (3, 2)])
def test_eigenfunction_divergence_free_and_curl(ij):
    i, j = ij
    ax = _axes()
    f = _mode_field(i, j)
    div = eval_divergence(f, ax).materialize()[0]
    assert np.abs(div).max() < 1e-12
    x1, x2 = np.meshgrid(ax[0].nodes, ax[1].nodes, indexing="ij")
    curl = eval_curl(f, ax).materialize()[0]
    expected = (i * i + j * j) * PI * np.cos(i * PI * x1) * np.cos(j * PI * x2)
    np.testing.assert_allclose(curl, expected, atol=1e-12)


def test_gradient_field_div_and_curl():
    ax = _axes()
    f = _grad_field()
    x1, x2 = np.meshgrid(ax[0].nodes, ax[1].nodes, indexing="ij")
    div = eval_divergence(f, ax).materialize()[0]
    np.testing.assert_allclose(div, -2 * PI ** 2 * np.sin(PI * x1) * np.sin(PI * x2),
                               atol=1e-12)
    assert np.abs(eval_curl(f, ax).materialize()[0]).max() < 1e-12


def test_constant_field_has_zero_div_and_curl():
    f = FieldTNN([[tabulated_mode([const_mode()])] * 2] * 2, UNIT)
    ax = _axes()
    assert np.all(eval_divergence(f, ax).materialize() == 0)
    assert np.all(eval_curl(f, ax).materialize() == 0)


def test_3d_mode_110():
    # k = (1, 1, 0): E = (0, 0, sin(pi x) sin(pi y)), div 0, curl nonzero
    z = tabulated_mode([const_mode(0.0)])
    f = FieldTNN([[z, z, z], [z, z, z],
                  [tabulated_mode([sin_mode(1)]), tabulated_mode([sin_mode(1)]),
                   tabulated_mode([const_mode()])]], ((0.0, 1.0),) * 3)
    ax = _axes(3, 2, 5)
    assert np.abs(eval_divergence(f, ax).materialize()).max() < 1e-14
    curl = np.stack([c.materialize()[0] for c in eval_curl(f, ax)])
    x, y, _ = np.meshgrid(*[a.nodes for a in ax], indexing="ij")
    np.testing.assert_allclose(curl[0], PI * np.sin(PI * x) * np.cos(PI * y), atol=1e-13)
    np.testing.assert_allclose(curl[1], -PI * np.cos(PI * x) * np.sin(PI * y), atol=1e-13)
    assert np.all(curl[2] == 0)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("kind", ["sin", "poly"])
def test_pec_trace_vanishes(d, kind, rng):
    box = ((0.0, 1.0), (-1.0, 0.5), (0.0, 2.0))[:d]
    f = tensor_field(box, 3, (6,), 0, mask=kind)
    u = rng.standard_normal(3)
    ax = [axis_grid(list(b), 2, 4) for b in box]
    norms = eval_component_tables(f, ax)
    norms = [[t.norms for t in row] for row in norms]
    for face_axis in range(d):
        for end in box[face_axis]:
            coords = [rng.uniform(*box[j], 200) if j != face_axis else np.array([end])
                      for j in range(d)]
            tabs = point_tables(f, norms, coords)
            for i in range(d):
                if i == face_axis:
                    continue            # normal component is free
                spec = "k," + ",".join("k" + c for c in "qrs"[:d]) + "->" + "qrs"[:d]
                val = np.einsum(spec, u, *[tabs[i][j].values for j in range(d)])
                assert np.abs(val).max() < 1e-10


def test_mask_interior_is_product():
    f = FieldTNN([[tabulated_mode([const_mode(2.0)])] * 2] * 2, UNIT)
    m = apply_boundary_mask(f, BoundaryMask(UNIT, "sin"))
    x = np.array([0.25])
    tabs = point_tables(m, [[None, None], [None, None]], [x, x])
    # component 1 carries gamma(x2), component 2 carries gamma(x1)
    assert tabs[0][1].values[0, 0] == pytest.approx(2 * np.sin(PI * 0.25))
    assert tabs[0][0].values[0, 0] == 2.0
    assert tabs[1][0].values[0, 0] == pytest.approx(2 * np.sin(PI * 0.25))


def test_mask_rejects_mismatched_box():
    f = _mode_field(1, 1)
    with pytest.raises(ValueError):
        apply_boundary_mask(f, BoundaryMask(((0.0, 2.0), (0.0, 1.0))))


@given(st.integers(0, 10_000))
def test_rank_linearity(seed):
    rng = np.random.default_rng(seed)
    f = tensor_field(UNIT, 3, (5,), seed % 7)
    ax = _axes(2, 2, 4)
    u, v = rng.standard_normal(3), rng.standard_normal(3)
    for op in (lambda: eval_divergence(f, ax), lambda: eval_curl(f, ax),
               lambda: eval_values(f, ax)[0]):
        fac = op()
        np.testing.assert_allclose(fac.materialize(u + v),
                                   fac.materialize(u) + fac.materialize(v), atol=1e-12)


def test_factored_matches_materialized_fd():
    # divergence from tables vs finite differences of the materialized field
    f = tensor_field(UNIT, 2, (6,), 3)
    ax = _axes(2, 2, 4)
    tabs = eval_component_tables(f, ax)
    norms = [[t.norms for t in row] for row in tabs]
    x1, x2 = ax[0].nodes, ax[1].nodes
    h = 1e-6

    def comp(i, a, b):
        t = point_tables(f, norms, [a, b])
        return np.einsum("kq,kr->kqr", t[i][0].values, t[i][1].values)

    div_fd = ((comp(0, x1 + h, x2) - comp(0, x1 - h, x2))
              + (comp(1, x1, x2 + h) - comp(1, x1, x2 - h))) / (2 * h)
    div = eval_divergence(f, ax).materialize()
    np.testing.assert_allclose(div, div_fd, atol=1e-6 * np.abs(div).max())


def test_support_field_vanishes_outside():
    box = ((0.0, 1.0), (-1.0, 0.0))
    for mode in ("full", "tangential"):
        f = support_field(box, 3, (5,), 1, mode=mode)
        coords = [np.array([-0.5, 0.5, 1.5]), np.array([-1.5, -0.5, 0.5])]
        tabs = point_tables(f, [[None] * 2] * 2, coords)
        for i in range(2):
            for j in range(2):
                v = tabs[i][j].values
                outside = [0, 2]
                assert np.all(v[:, outside] == 0)


def test_field_validation():
    t = tabulated_mode([const_mode()])
    t2 = tabulated_mode([const_mode(), const_mode()])
    with pytest.raises(ValueError):
        FieldTNN([[t, t2], [t, t]], UNIT)
    with pytest.raises(ValueError):
        FieldTNN([[t, t], [t, t]], ((0.0, 1.0),))
