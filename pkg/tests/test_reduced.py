"""Zero level set, metric connection, Cartan map, and reduced integrals.

Frozen expectations, all derived in closed form:

* circle |z|^2 = 1: length 2 pi, A = -y dx + x dy with A(V) = 1, the
  reduced space is a point and the unit-class integral is 1;
* three-sphere in C^2 at level a: volume 2 pi^2 a^{3/2}, reduced sphere of
  symplectic area pi a, curvature integral gives first Chern number -1
  (the tautological-bundle sign under the positive-Liouville orientation),
  and kappa(<phi, e>) integrates to 2 pi i;
* weight-2 circle: every point has a Z_2 stabilizer, the vertical measure
  halves, and the orbifold unit integral is 1/2 -- exactly the small-eps
  constant of the Basic Integral (erf closed form);
* weighted (1,2) sphere: the reduced teardrop has area pi/2 (action-angle
  chart: I_2 in [0, 1/4], angle length 2 pi);
* c2_su2 has no regular zero level (d mu vanishes at the origin).
"""

import json
import math

import numpy as np
import pytest

from symloc import reduced as R
from symloc.fields import const
from symloc.forms import EquivariantForm
from symloc.hamspace import catalog
from symloc.liealg import InputError, NotRegularError


@pytest.fixture(scope="module")
def circle():
    sp = catalog("cn_u1", n=1, a=1.0)
    return sp, R.zero_level(sp, 64)


@pytest.fixture(scope="module")
def sphere():
    sp = catalog("cn_u1", n=2, a=1.0)
    return sp, R.zero_level(sp, 24)


def _unit(space):
    return EquivariantForm.scalar(
        space.chart_id, space.ambient_dim, space.algebra.dim, const(1.0)
    )


def _phi_linear(space):
    return EquivariantForm(
        space.chart_id, space.ambient_dim, space.algebra.dim,
        [((), const(1.0), (1,))],
    )


def test_circle_level_data(circle):
    sp, lv = circle
    assert lv.n_nodes == 64
    # the mesh sits on |z|^2 = 1 and carries the arc-length measure
    assert np.max(np.abs(np.sum(lv.nodes**2, axis=1) - 1.0)) < 1e-14
    assert lv.riemann_weights.sum() == pytest.approx(2 * math.pi, abs=1e-12)
    rep = lv.regularity_report
    assert rep["min_dmu_singular"] == pytest.approx(1.0, abs=1e-12)
    assert rep["level_moment_residual"] < 1e-12
    assert rep["connection_reproduces_generators"] < 1e-10
    assert rep["equivariance_residual"] < 1e-8
    assert lv.stabilizer_order == 1
    # A = -y dx + x dy on the unit circle (the angular form, A(V) = 1)
    expected = np.stack([-lv.nodes[:, 1], lv.nodes[:, 0]], axis=1)
    assert np.max(np.abs(lv.connection_ambient[:, 0, :] - expected)) < 1e-12


def test_circle_kirwan_unit(circle):
    sp, lv = circle
    for eps in (0.004, 0.05, 0.7):
        res = R.kirwan_integral(_unit(sp), lv, eps)
        assert res.value == pytest.approx(1.0, abs=1e-12)
        assert len(res.coefficients) == 1
    # the coefficient vector does not depend on the evaluation point
    a = R.kirwan_integral(_unit(sp), lv, 0.01).coefficients
    b = R.kirwan_integral(_unit(sp), lv, 0.4).coefficients
    assert max(abs(x - y) for x, y in zip(a, b)) < 1e-10


def test_sphere_level_data(sphere):
    sp, lv = sphere
    assert lv.riemann_weights.sum() == pytest.approx(
        2 * math.pi**2, rel=1e-12
    )
    assert lv.regularity_report["level_moment_residual"] < 1e-12
    assert lv.regularity_report["connection_reproduces_generators"] < 1e-10
    assert lv.regularity_report["equivariance_residual"] < 1e-8
    assert lv.horizontal_dim == 2


def test_sphere_reduced_area(sphere):
    sp, lv = sphere
    res = R.kirwan_integral(_unit(sp), lv, 0.05)
    assert res.value == pytest.approx(math.pi, abs=1e-10)
    # dim M_red = 2: the |F|^2 term is a four-form, the polynomial is constant
    assert len(res.coefficients) == 1


def test_sphere_phi_linear(sphere):
    sp, lv = sphere
    res = R.kirwan_integral(_phi_linear(sp), lv, 0.05)
    assert res.value == pytest.approx(2j * math.pi, abs=1e-10)


def test_chern_number_is_minus_one(sphere):
    sp, lv = sphere
    chern = R.chern_numbers(lv)
    assert chern.shape == (1,)
    assert abs(chern[0] - round(chern[0])) < 1e-6
    assert round(chern[0]) == -1


def test_chern_number_weighted_equal_weights():
    sp = catalog("weighted_cn_u1", n=2, weights=(1, 1), a=1.0)
    lv = R.zero_level(sp, 16)
    chern = R.chern_numbers(lv)
    assert abs(chern[0] - round(chern[0])) < 1e-6


def test_chern_requires_reduced_surface(circle):
    sp, lv = circle
    with pytest.raises(InputError):
        R.chern_numbers(lv)


def test_curvature_horizontal_and_abelian(sphere):
    sp, lv = sphere
    cv = R.curvature(lv)
    assert cv.horizontality_residual < 1e-8
    assert cv.invariance_residual < 1e-8
    # abelian algebra: the bracket term vanishes and F = dA
    assert np.max(np.abs(lv.f_param - lv.da_param)) == 0.0


def test_cartan_map_constant(sphere):
    sp, lv = sphere
    km = R.cartan_map(_unit(sp), lv)
    assert km.degrees() == {0}
    assert np.max(np.abs(km.coefficient(()) - 1.0)) < 1e-14


def test_cartan_map_phi_linear_is_curvature(sphere):
    sp, lv = sphere
    km = R.cartan_map(_phi_linear(sp), lv)
    assert km.degrees() == {2}
    f = lv.f_param[:, 0]
    for (i, j), coeff in km.parts.items():
        assert np.max(np.abs(coeff - 1j * f[:, i, j])) < 1e-12
    rep = R.basic_residual(lv, km)
    assert rep["contraction_residual"] < 1e-8
    assert rep["invariance_residual"] < 1e-8


def test_cartan_map_of_omega_term(sphere):
    # kappa(omega + i mu.phi) restricted to mu^{-1}(0) is the pullback of
    # the reduced symplectic form: mu vanishes on the level, the projection
    # leaves omega untouched (iota_V omega = -d mu_phi = 0 there)
    sp, lv = sphere
    alpha = sp.omega + sp.mu_phi_form().scale(1j)
    km = R.cartan_map(alpha, lv)
    expected = lv.omega_parts()
    keys = set(km.parts) | set(expected)
    for key in keys:
        got = km.coefficient(key)
        want = expected.get(key, np.zeros(lv.n_nodes, dtype=complex))
        assert np.max(np.abs(got - want)) < 1e-10
    rep = R.basic_residual(lv, km)
    assert rep["contraction_residual"] < 1e-8


def test_cartan_closedness_descends(sphere):
    sp, lv = sphere
    assert R.cartan_d_residual(_unit(sp), lv) < 1e-8
    assert R.cartan_d_residual(_phi_linear(sp), lv) < 1e-8


def test_cartan_rejects_non_invariant(sphere):
    sp, lv = sphere
    dx = EquivariantForm.dx(sp.chart_id, 4, 1, 0)
    with pytest.raises(InputError):
        R.cartan_map(dx, lv)
    with pytest.raises(InputError):
        R.kirwan_integral(dx, lv, 0.1)


def test_orbifold_circle_halves():
    # weight-2 circle: Z_2 generic stabilizer; the orbifold unit integral
    # is 1/2, matching the small-eps constant of the Basic Integral
    sp = catalog("weighted_cn_u1", n=1, weights=(2,), a=1.0)
    lv = R.zero_level(sp, 64)
    assert lv.stabilizer_order == 2
    res = R.kirwan_integral(_unit(sp), lv, 0.05)
    assert res.value == pytest.approx(0.5, abs=1e-12)


def test_weighted_sphere_teardrop_area():
    # action-angle derivation: omega_0 = dI_2 ^ dchi with I_2 in [0, 1/4]
    sp = catalog("weighted_cn_u1", n=2, weights=(1, 2), a=1.0)
    lv = R.zero_level(sp, 24)
    assert lv.regularity_report["stratum_orders"] == [1, 2]
    res = R.kirwan_integral(_unit(sp), lv, 0.05)
    assert res.value == pytest.approx(math.pi / 2, abs=1e-10)


def test_normal_form_circle(circle):
    sp, lv = circle
    rep = R.normal_form_check(sp, lv)
    assert rep["ok"]
    assert rep["moment_residual"] < 1e-10
    assert rep["closedness_residual"] < 1e-8
    assert rep["restriction_residual"] == 0.0
    # A(d/dtheta) = 1 everywhere: omega~ never degenerates on the scan
    assert rep["max_valid_radius"] == pytest.approx(1.0)


def test_normal_form_sphere(sphere):
    sp, lv = sphere
    rep = R.normal_form_check(sp, lv)
    assert rep["ok"]
    assert rep["moment_residual"] < 1e-10
    assert rep["closedness_residual"] < 1e-7
    assert rep["nondegenerate_within"]
    # the u-block is (1 + 2 nu) omega_u: degeneration exactly at nu = -1/2
    assert 0.45 <= rep["max_valid_radius"] <= 0.5


def test_zero_level_errors():
    with pytest.raises(NotRegularError):
        R.zero_level(catalog("c2_su2"))
    with pytest.raises(InputError):
        R.zero_level(catalog("standard_model", preset="u1_w1", which="G"))
    with pytest.raises(InputError):
        R.zero_level(catalog("cn_u1", n=1, a=1.0), mesh_density=2)


def test_kirwan_requires_positive_eps(circle):
    sp, lv = circle
    with pytest.raises(InputError):
        R.kirwan_integral(_unit(sp), lv, 0.0)


def test_determinism_and_json(circle):
    sp, lv = circle
    again = R.zero_level(sp, 64)
    assert np.array_equal(lv.nodes, again.nodes)
    assert np.array_equal(lv.connection_ambient, again.connection_ambient)
    a = R.kirwan_integral(_unit(sp), lv, 0.05)
    b = R.kirwan_integral(_unit(sp), again, 0.05)
    assert a.value == b.value
    blob = json.loads(lv.to_json(stride=8))
    assert blob["space"] == "cn_u1(1,1)"
    assert blob["n_nodes"] == 64
    assert len(blob["mesh"]["nodes"]) == 8
    kb = json.loads(a.to_json())
    assert kb["value"] == [1.0000000000000002, 0.0]
    assert kb["meta"]["space"] == "cn_u1(1,1)"
