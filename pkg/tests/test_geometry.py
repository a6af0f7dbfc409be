"""Chart, projection, and tangency tests on the cylinder preset.

The analytic projection Jacobian is checked against central finite
differences, and dpi_k against hand-derived closed forms for the linear and
constant vertical fields.  Leaf invariance of the rotation flow is exercised
through the exact jump map.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from folevy import (ConstantK, DomainError, LinearK, RngStream,
                    VectorFieldSet, dpi_k, make_cylinder_preset,
                    tangency_check)
from folevy.geometry import _fd_pi_jacobian, _rotate

SEED = 20260816


def _chart(**kwargs):
    return make_cylinder_preset(**kwargs).chart


def _points_inside(preset, n, seed=SEED):
    gen = np.random.Generator(np.random.Philox(seed))
    lo, hi = preset.chart.sample_box
    pts = gen.uniform(lo, hi, size=(4 * n, 3))
    pts = pts[preset.chart.contains(pts)]
    assert len(pts) >= n
    return pts[:n]


# ---------------------------------------------------------------------------
# chart maps
# ---------------------------------------------------------------------------

def test_chart_round_trip():
    preset = make_cylinder_preset()
    for x in _points_inside(preset, 50):
        u, v = preset.chart.to_chart(x)
        back = preset.chart.from_chart(u, v)
        assert np.max(np.abs(back - x)) <= 1e-10
        assert abs(np.dot(u, u) - 1.0) <= 1e-12


def test_vertical_projection_reads_radius_and_height():
    chart = _chart()
    x = np.array([3.0, 4.0, 0.7])
    v = chart.vertical_projection(x)
    assert abs(v[0] - 5.0) <= 1e-12
    assert abs(v[1] - 0.7) <= 1e-12


def test_contains_is_strict():
    chart = _chart(r_min=0.2, r_max=5.0, z_min=-10.0, z_max=10.0)
    assert chart.contains(np.array([1.0, 0.0, 0.0]))
    assert not chart.contains(np.array([5.0, 0.0, 0.0]))
    assert not chart.contains(np.array([0.2, 0.0, 0.0]))
    assert not chart.contains(np.array([1.0, 0.0, 10.0]))
    assert not chart.contains(np.array([0.0, 0.0, 0.0]))


def test_vertical_bounds_and_distance():
    chart = _chart(r_min=0.5, r_max=2.0, z_min=-1.0, z_max=1.0)
    assert chart.vertical_bounds == ((0.5, 2.0), (-1.0, 1.0))
    assert chart.vertical_contains(np.array([1.0, 0.0]))
    assert not chart.vertical_contains(np.array([2.0, 0.0]))
    d = chart.boundary_distance(np.array([1.0, 0.25]))
    assert abs(d - 0.5) <= 1e-12
    assert chart.boundary_distance(np.array([3.0, 0.0])) <= 0.0


def test_leaf_point_places_on_circle():
    chart = _chart()
    x = chart.leaf_point(np.array([np.pi / 3]), np.array([2.0, -0.4]))[0]
    assert abs(x[0] - 2.0 * math.cos(np.pi / 3)) <= 1e-12
    assert abs(x[1] - 2.0 * math.sin(np.pi / 3)) <= 1e-12
    assert abs(x[2] + 0.4) <= 1e-12


# ---------------------------------------------------------------------------
# projection Jacobian
# ---------------------------------------------------------------------------

def test_pi_jacobian_matches_finite_differences():
    preset = make_cylinder_preset()
    for x in _points_inside(preset, 40, seed=SEED + 1):
        analytic = preset.chart.pi_jacobian(x)
        numeric = _fd_pi_jacobian(preset.chart, x)
        assert analytic.shape == (2, 3)
        assert np.max(np.abs(analytic - numeric)) <= 1e-6


def test_pi_jacobian_closed_form_row():
    chart = _chart()
    x = np.array([2.0 * math.cos(0.3), 2.0 * math.sin(0.3), 1.0])
    jac = chart.pi_jacobian(x)
    expected = np.array([[math.cos(0.3), math.sin(0.3), 0.0],
                         [0.0, 0.0, 1.0]])
    assert np.max(np.abs(jac - expected)) <= 1e-12


# ---------------------------------------------------------------------------
# dpi_k: the projected vertical field
# ---------------------------------------------------------------------------

def test_dpi_k_linear_closed_form():
    # K(x) = (x, 0, 0): radial component r cos^2(phi), no vertical part
    preset = make_cylinder_preset()
    for r, phi in [(0.5, 0.0), (1.0, 0.9), (2.0, 2.5), (3.0, -1.2)]:
        x = preset.chart.leaf_point(np.array([phi]), np.array([r, 0.0]))[0]
        val = dpi_k(preset.chart, preset.fields, x)
        expected = np.array([r * math.cos(phi) ** 2, 0.0])
        assert np.max(np.abs(val - expected)) <= 1e-10


def test_dpi_k_constant_closed_forms():
    vertical = make_cylinder_preset(k_choice=ConstantK(0.0, 0.0, 2.0))
    x = vertical.chart.leaf_point(np.array([1.1]), np.array([1.5, 0.3]))[0]
    val = dpi_k(vertical.chart, vertical.fields, x)
    assert np.max(np.abs(val - np.array([0.0, 2.0]))) <= 1e-12

    planar = make_cylinder_preset(k_choice=ConstantK(1.0, 0.0, 0.0))
    x0 = planar.chart.leaf_point(np.array([0.0]), np.array([1.5, 0.0]))[0]
    val0 = dpi_k(planar.chart, planar.fields, x0)
    # at angle 0 the unit horizontal (1, 0, 0) is exactly radial
    assert np.max(np.abs(val0 - np.array([1.0, 0.0]))) <= 1e-12


def test_dpi_k_finite_difference_backend():
    preset = make_cylinder_preset()
    fd_chart = dataclasses.replace(preset.chart, pi_jacobian=None)
    x = preset.chart.leaf_point(np.array([0.7]), np.array([1.2, 0.1]))[0]
    a = dpi_k(preset.chart, preset.fields, x)
    b = dpi_k(fd_chart, preset.fields, x)
    assert np.max(np.abs(a - b)) <= 1e-6


def test_dpi_k_outside_domain_raises():
    preset = make_cylinder_preset(r_min=0.5, r_max=2.0)
    with pytest.raises(DomainError):
        dpi_k(preset.chart, preset.fields, np.array([3.0, 0.0, 0.0]))


# ---------------------------------------------------------------------------
# vertical field choices
# ---------------------------------------------------------------------------

def test_field_callables():
    lin = LinearK()
    assert np.allclose(lin(np.array([2.0, -1.0, 3.0])), [2.0, 0.0, 0.0])
    con = ConstantK(0.5, -0.25, 2.0)
    assert np.allclose(con(np.array([9.0, 9.0, 9.0])), [0.5, -0.25, 2.0])
    batch = lin(np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]))
    assert batch.shape == (2, 3)
    assert np.allclose(batch[:, 0], [1.0, 0.0])


# ---------------------------------------------------------------------------
# rotation flow (exact jump map)
# ---------------------------------------------------------------------------

def test_rotation_preserves_radius_and_height():
    gen = np.random.Generator(np.random.Philox(SEED + 2))
    x = gen.normal(size=(100, 3))
    z = gen.normal(size=100) * 3.0
    out = _rotate(x, z)
    r_in = np.hypot(x[:, 0], x[:, 1])
    r_out = np.hypot(out[:, 0], out[:, 1])
    assert np.max(np.abs(r_out - r_in)) <= 1e-12
    # height is copied through untouched, not recomputed
    assert np.array_equal(out[:, 2], x[:, 2])


def test_rotation_group_laws():
    x = np.array([1.3, -0.4, 0.2])
    composed = _rotate(_rotate(x, 0.7), 1.9)
    direct = _rotate(x, 0.7 + 1.9)
    assert np.max(np.abs(composed - direct)) <= 1e-12
    assert np.max(np.abs(_rotate(x, 0.0) - x)) <= 1e-15


def test_rotation_quarter_and_half_turn():
    x = np.array([2.0, 0.0, 0.5])
    quarter = _rotate(x, np.pi / 2)
    assert np.max(np.abs(quarter - np.array([0.0, 2.0, 0.5]))) <= 1e-12
    half = _rotate(x, np.pi)
    assert np.max(np.abs(half - np.array([-2.0, 0.0, 0.5]))) <= 1e-12


def test_driving_field_is_infinitesimal_rotation():
    preset = make_cylinder_preset()
    x = np.array([1.5, -0.7, 0.3])
    vec = preset.fields.driving(x, np.array([2.0]))
    assert np.allclose(vec, [0.7 * 2.0, 1.5 * 2.0, 0.0])


# ---------------------------------------------------------------------------
# tangency audit
# ---------------------------------------------------------------------------

def test_preset_driving_is_leaf_tangent():
    preset = make_cylinder_preset()
    report = tangency_check(preset.fields, preset.chart,
                            sample_count=200, rng=RngStream(SEED + 3))
    assert report.n_checked > 50
    assert report.max_violation <= 1e-8


def test_tangency_flags_transversal_field():
    preset = make_cylinder_preset()

    def radial(x, z):
        vec = np.stack([x[..., 0], x[..., 1], np.zeros_like(x[..., 0])],
                       axis=-1)
        return vec * z[..., 0, None]

    bad = VectorFieldSet(driver_dim=1, driving=radial,
                         perturbation=preset.fields.perturbation)
    report = tangency_check(bad, preset.chart, sample_count=200,
                            rng=RngStream(SEED + 4))
    assert report.max_violation > 1e-3


def test_tangency_needs_samples():
    preset = make_cylinder_preset()
    with pytest.raises(ValueError):
        tangency_check(preset.fields, preset.chart, sample_count=0,
                       rng=RngStream(SEED + 5))


# ---------------------------------------------------------------------------
# preset validation
# ---------------------------------------------------------------------------

def test_preset_rejects_bad_geometry():
    with pytest.raises(ValueError):
        make_cylinder_preset(r_min=1.5, r_max=2.0)  # leaf r=1 outside
    with pytest.raises(ValueError):
        make_cylinder_preset(r_min=0.0, r_max=2.0)
    with pytest.raises(ValueError):
        make_cylinder_preset(r_min=0.5, r_max=0.9)
    with pytest.raises(ValueError):
        make_cylinder_preset(z_min=1.0, z_max=-1.0)


def test_preset_wires_driver_rate():
    preset = make_cylinder_preset(theta=2.5)
    assert preset.driver.rate == 2.5
    assert preset.theta == 2.5


def test_without_exact_flow_strips_only_the_flow():
    preset = make_cylinder_preset()
    stripped = preset.fields.without_exact_flow()
    assert preset.fields.exact_jump_flow is not None
    assert stripped.exact_jump_flow is None
    assert stripped.driving is preset.fields.driving
    assert stripped.perturbation is preset.fields.perturbation
