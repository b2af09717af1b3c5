"""Liouville action, VB, S-class, variational and uniformizing checks."""

import numpy as np
import pytest

from splitannulus import fields as F, liouville as LV, lorentz as L
from splitannulus.errors import IncompatibleMetrics

G0 = L.desitter()
GF = L.flat()
BOX = (0, 1, 2, 3)
GRID = F.box_grid(BOX, level=2)
U1 = F.bump_field((0.5, 2.5), (0.42, 0.42), 0.5)
U2 = F.bump_field((0.35, 2.4), (0.28, 0.28), -0.4)
U3 = F.bump_field((0.68, 2.66), (0.22, 0.22), 0.35)


def test_action_of_identical_metrics_is_zero():
    assert LV.action(G0, G0, GRID).value == 0.0


def test_action_incompatible_references():
    with pytest.raises(IncompatibleMetrics):
        LV.action(G0, GF, GRID)


def test_flat_closed_form():
    # S(e^{2u} g, g) = (1/2) int du/dx du/dy over the flat reference
    u = U1 + U2
    lhs = LV.action(GF.scaled_by(u), GF, GRID).value
    rhs = 0.5 * GRID.integrate(lambda x, y: u.dx(x, y) * u.dy(x, y))
    assert abs(lhs - rhs) <= 1e-6


def test_definition_equals_monotone():
    for base in (G0, GF):
        h = base.scaled_by(U1)
        a = LV.action(base, h, GRID)
        b = LV.action_monotone(base, h, GRID)
        assert abs(a.value - b.value) <= 1e-6


def test_error_estimate_shrinks_under_refinement():
    h = G0.scaled_by(U1)
    coarse = LV.action(G0, h, F.box_grid(BOX, level=0, base_cells=8))
    fine = LV.action(G0, h, F.box_grid(BOX, level=2, base_cells=8))
    assert fine.error_estimate < coarse.error_estimate


def test_chasles_triples():
    g = G0.scaled_by(U1)
    h = G0.scaled_by(U1 + U2)
    k = G0.scaled_by(U3)
    assert LV.chasles_residual(g, h, h, GRID) == pytest.approx(0.0, abs=1e-15)
    assert LV.chasles_residual(g, h, k, GRID) <= 1e-6
    # disjoint supports over the de Sitter reference
    a = G0.scaled_by(F.bump_field((0.2, 2.2), (0.15, 0.15), 0.5))
    b = G0.scaled_by(F.bump_field((0.5, 2.5), (0.15, 0.15), -0.4))
    c = G0.scaled_by(F.bump_field((0.8, 2.8), (0.15, 0.15), 0.3))
    assert LV.chasles_residual(a, b, c, GRID) <= 1e-6


def test_split_invariance_under_mobius():
    m = np.array([[1.0, 0.15], [0.08, 1.05]])
    phi = F.MobiusMap(m)
    g = G0.scaled_by(U1)
    h = G0.scaled_by(U1 + U2)
    minv = F.mobius_inverse(phi.m)
    corners = [F.mobius_apply(minv, v) for v in (0.0, 1.0)]
    corners_y = [F.mobius_apply(minv, v) for v in (2.0, 3.0)]
    pulled_box = (min(corners), max(corners), min(corners_y), max(corners_y))
    pulled_grid = F.box_grid(pulled_box, level=2)
    res = LV.split_invariance_residual(g, h, phi, GRID, pulled_grid)
    assert res <= 1e-6


def test_variational_residual_examples():
    assert LV.variational_residual(G0, F.ConstantField(0.0) * 0.0 + 0.0 * U1,
                                   1e-3, GRID) <= 1e-15
    assert LV.variational_residual(G0, U1, 1e-3, GRID) <= 1e-5
    # flat reference has F = 0: the derivative itself vanishes
    s_plus = LV.action(GF, GF.scaled_by(1e-3 * U1), GRID).value
    s_minus = LV.action(GF, GF.scaled_by(-1e-3 * U1), GRID).value
    assert abs((s_plus - s_minus) / 2e-3) <= 1e-6


def test_variational_residual_is_quadrature_exact():
    # the action is exactly quadratic in t, so the residual sits at the
    # roundoff floor for every dt (no dt^2 term exists to observe)
    r1 = LV.variational_residual(G0, U1, 1e-3, GRID)
    r2 = LV.variational_residual(G0, U1, 5e-4, GRID)
    assert r1 <= 1e-9 and r2 <= 1e-9


def test_criticality_constant_curvature():
    u = LV.area_neutral_combination(G0, U1, U3, GRID)
    area_d, action_d = LV.criticality_test(G0, u, GRID)
    assert abs(area_d) <= 1e-12
    assert abs(action_d) <= 1e-6


def test_criticality_zero_factor():
    area_d, action_d = LV.criticality_test(G0, 0.0 * U1, GRID)
    assert area_d == 0.0 and action_d == 0.0


def test_criticality_counterexample_for_variable_curvature():
    g = G0.scaled_by(F.bump_field((0.42, 2.42), (0.34, 0.34), 0.5))
    u = LV.area_neutral_combination(
        g,
        F.bump_field((0.42, 2.42), (0.1, 0.1), 1.0),
        F.bump_field((0.75, 2.72), (0.1, 0.1), 1.0),
        GRID,
    )
    area_d, action_d = LV.criticality_test(g, u, GRID)
    assert abs(area_d) <= 1e-10
    assert abs(action_d) > 1e-3


# ---------------------------------------------------------------------------
# VB
# ---------------------------------------------------------------------------

def test_vb_constant_is_zero():
    curve = F.diamond_curve(0, 1, 2, 3)
    for r in range(4):
        assert LV.vb(F.ConstantField(3.7), curve, r) == 0.0


def test_vb_vertical_extent():
    curve = F.diamond_curve(0, 1, 2, 3)
    fy = F.PolynomialField([[0.0, 1.0]])  # f = y
    assert LV.vb(fy, curve, 0) == pytest.approx(2.0)
    assert LV.vb(fy, curve, 5) == pytest.approx(2.0)


def test_vb_nondecreasing_in_refinement():
    curve = F.diamond_curve(0.1, 0.9, 2.1, 2.9)
    vals = [LV.vb(U1, curve, r) for r in range(7)]
    assert all(b >= a - 1e-14 for a, b in zip(vals, vals[1:]))


def test_vb_difference_bound():
    # |VB(f, P0) - VB(f, P1)| <= (1/2) int |box f| da, curve independent
    p0 = F.diamond_curve(0.1, 0.9, 2.1, 2.9)
    p1 = F.diamond_curve(0.25, 0.75, 2.2, 2.85)
    lhs = abs(LV.vb(U1, p0, 9) - LV.vb(U1, p1, 9))
    rhs = LV.dal_variation_bound(U1, GRID)
    assert lhs <= rhs


# ---------------------------------------------------------------------------
# S-class
# ---------------------------------------------------------------------------

def test_sclass_trivial_pass():
    g0a = L.desitter(coords="angle")
    rep = LV.sclass_report(g0a, g0a)
    assert rep.verdict and rep.sup_u == 0.0


def test_sclass_uniformizing_passes_with_quadratic_decay():
    g0a = L.desitter(coords="angle")
    h = L.pullback_metric(g0a, F.SineFlowMap(0.3, 2))
    rep = LV.sclass_report(g0a, h)
    assert rep.verdict
    ratios = [a / b for a, b in zip(rep.boundary_decay, rep.boundary_decay[1:])]
    assert all(r > 2.5 for r in ratios)  # quadratic decay in practice


def test_sclass_log_factor_fails_boundedness():
    g0a = L.desitter(coords="angle")
    h = g0a.scaled_by(F.LogSinDiagField(-0.5))
    rep = LV.sclass_report(g0a, h)
    assert not rep.verdict
    assert not rep.clauses["1_bounded"]


# ---------------------------------------------------------------------------
# Uniformizing metrics
# ---------------------------------------------------------------------------

def test_uniformizing_action_mobius_exact_zero():
    phi = F.AngleMobiusMap(np.array([[1.4, 0.3], [0.2, 0.9]]))
    av = LV.uniformizing_action(phi, levels=1)
    assert abs(av.value) <= 1e-12


def test_uniformizing_action_sine_vanishes():
    av = LV.uniformizing_action(F.SineFlowMap(0.3, 2), levels=3)
    assert abs(av.value) <= 5e-3
    mags = [abs(v) for v in av.trail]
    assert all(b < a for a, b in zip(mags, mags[1:]))


def test_uniformizing_formulas_agree():
    a = LV.uniformizing_action(F.SineFlowMap(0.25, 2), levels=2)
    b = LV.uniformizing_action(F.SineFlowMap(0.25, 2), levels=2,
                               formula="definition")
    assert abs(a.value - b.value) <= 1e-9


def test_near_diagonal_integrand_limit():
    # u * F_{g0} density tends to (projective Schwarzian) / 6 on the
    # diagonal: u ~ eps^2 S~/12 against density 2/eps^2
    phi = F.SineFlowMap(0.3, 2)
    u = F.UniformizingFactor(phi)
    th = np.array([0.33, 1.1, 2.4])
    for eps in (1e-2, 1e-3):
        dens = u.value(th, th + eps) * 2.0 / np.sin(eps) ** 2
        lim = 2.0 * u.diagonal_limit_density(th)
        assert np.max(np.abs(dens - lim)) <= 0.2 * eps * 50
