"""Forms on the unit tangent bundle, exterior derivative, W-volume."""

import math

import numpy as np
import pytest

from splitannulus import adsgeom as A, fields as F, forms as FM
from splitannulus import liouville as LV, lorentz as L
from splitannulus.errors import (
    NonCompactDifference,
    NotTangent,
    StepTooSmall,
)

RNG = np.random.default_rng(31)
G0 = L.desitter()
BOX = (0, 1, 2, 3)
BUMP = F.bump_field((0.5, 2.5), (0.42, 0.42), 0.35)


def _ut_config(seed=0):
    rng = np.random.default_rng(seed)
    p = FM.random_ut_point(rng)
    vs = [FM.random_ut_tangent(rng, p) for _ in range(4)]
    return p, vs


# ---------------------------------------------------------------------------
# pointwise form algebra
# ---------------------------------------------------------------------------

def test_omega_alternating_and_vertical():
    p, (u, v, w, _) = _ut_config(1)
    assert FM.omega3(p, u, u, w) == pytest.approx(0.0, abs=1e-12)
    vertical = np.concatenate([np.zeros(4), v[4:]])
    vertical = FM.tangent_project(p, vertical)
    vertical[:4] = 0.0  # kill the horizontal part exactly
    assert abs(FM.omega3(p, vertical, v, w, check=False)) <= 1e-12


def test_forms_match_cofactor_oracle():
    p, (u, v, w, _) = _ut_config(2)

    def cofactor_det(rows):
        m = np.stack(rows)
        total = 0.0
        for j in range(4):
            minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
            total += (-1) ** j * m[0, j] * np.linalg.det(minor)
        return total

    assert FM.omega3(p, u, v, w) == pytest.approx(
        cofactor_det([p[:4], u[:4], v[:4], w[:4]]), abs=1e-12
    )
    assert FM.theta(1, p, u, v) == pytest.approx(
        cofactor_det([p[:4], p[4:], u[:4], v[:4]]), abs=1e-12
    )
    assert FM.theta(2, p, u, v) == pytest.approx(
        cofactor_det([p[:4], p[4:], u[4:], v[4:]]), abs=1e-12
    )


def test_alpha_antisymmetry():
    p, (u, v, _, _) = _ut_config(3)
    assert FM.alpha2(p, u, u) == pytest.approx(0.0, abs=1e-13)
    assert FM.alpha2(p, u, v) == pytest.approx(-FM.alpha2(p, v, u), abs=1e-13)


def test_forms_multilinear():
    p, (u, v, w, z) = _ut_config(4)
    a, b = 1.3, -0.7
    lhs = FM.omega3(p, a * u + b * z, v, w, check=False)
    rhs = a * FM.omega3(p, u, v, w) + b * FM.omega3(p, z, v, w)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_xstar_plus_nstar_vanishes_on_tangents():
    p, vs = _ut_config(5)
    for v in vs:
        assert abs(FM.xstar(p, v) + FM.nstar(p, v)) <= 1e-10


def test_not_tangent_rejected():
    p, (u, *_) = _ut_config(6)
    bad = u.copy()
    bad[0] += 0.1
    with pytest.raises(NotTangent):
        FM.omega3(p, bad, u, u)


def test_derived_vector_invariants():
    rng = np.random.default_rng(71)
    for _ in range(10):
        f = FM.random_frame_point(rng)
        e = FM.derived_vector(f)
        assert A.qform(e) == pytest.approx(-1.0, abs=1e-10)
        assert float(A.det4(f[:4], f[4:8], f[8:12], e)) == pytest.approx(
            1.0, abs=1e-10
        )
        for part in (f[:4], f[4:8], f[8:12]):
            assert abs(A.pair(e, part)) <= 1e-10


def test_beta_examples():
    rng = np.random.default_rng(8)
    f = FM.random_frame_point(rng)
    e = FM.derived_vector(f)
    w0 = FM.tangent_project(f, np.zeros(12), frame=True)
    assert FM.beta1(f, w0) == 0.0
    # w3 proportional to e evaluates to q(e) * scale = -scale
    w = np.concatenate([np.zeros(8), 1.7 * e])
    assert -float(A.det4(f[:4], f[4:8], f[8:12], w[8:12])) == pytest.approx(
        -1.7, abs=1e-10
    )
    # linearity on random combinations
    v1 = FM.random_frame_tangent(rng, f)
    v2 = FM.random_frame_tangent(rng, f)
    a, b = 0.6, -1.9
    assert FM.beta1(f, a * v1 + b * v2) == pytest.approx(
        a * FM.beta1(f, v1) + b * FM.beta1(f, v2), abs=1e-12
    )


def test_so_q_invariance_of_forms():
    rng = np.random.default_rng(12)
    rot = A.random_so_q(rng)
    p, (u, v, w, _) = _ut_config(13)

    def rot8(vec):
        return np.concatenate([rot @ vec[:4], rot @ vec[4:]])

    pr, ur, vr, wr = rot8(p), rot8(u), rot8(v), rot8(w)
    assert FM.omega3(p, u, v, w) == pytest.approx(
        FM.omega3(pr, ur, vr, wr, check=False), abs=1e-10)
    assert FM.alpha2(p, u, v) == pytest.approx(
        FM.alpha2(pr, ur, vr, check=False), abs=1e-10)
    for i in (1, 2):
        assert FM.theta(i, p, u, v) == pytest.approx(
            FM.theta(i, pr, ur, vr, check=False), abs=1e-10)
    f = FM.random_frame_point(rng)
    t = FM.random_frame_tangent(rng, f)
    fr = np.concatenate([rot @ f[:4], rot @ f[4:8], rot @ f[8:12]])
    tr = np.concatenate([rot @ t[:4], rot @ t[4:8], rot @ t[8:12]])
    assert FM.beta1(f, t) == pytest.approx(FM.beta1(fr, tr), abs=1e-10)


# ---------------------------------------------------------------------------
# exterior derivative
# ---------------------------------------------------------------------------

def test_d_of_constant_form_in_flat_chart():
    # trivial ambient chart: identity projection, constant 1-form
    coeffs = np.array([0.3, -1.2, 0.7])
    form = lambda p, vecs: float(coeffs @ vecs[0])
    base = np.array([0.1, 0.2, 0.3])
    v1 = np.array([1.0, 0.0, 0.5])
    v2 = np.array([0.0, 1.0, -0.3])
    val = FM.exterior_derivative(form, lambda a: a, base, [v1, v2], 1e-3)
    assert abs(val) <= 1e-10


def test_omega_is_closed():
    rng = np.random.default_rng(17)
    for _ in range(5):
        p = FM.random_ut_point(rng)
        vs = [FM.random_ut_tangent(rng, p) for _ in range(4)]
        dom = FM.exterior_derivative(
            lambda pt, vecs: float(
                A.det4(pt[:4], vecs[0][:4], vecs[1][:4], vecs[2][:4])
            ),
            FM.project_ut, p, vs, 1e-3,
        )
        assert abs(dom) <= 1e-5


def test_exterior_derivative_second_order():
    # halving the step divides a generic d-residual by about four
    def run(step):
        rng = np.random.default_rng(23)
        return FM.fundamental_equations_residual(rng, step=step)

    r1a, r2a = run(2e-3)
    r1b, r2b = run(1e-3)
    order1 = math.log2(r1a / r1b)
    order2 = math.log2(r2a / r2b)
    assert 1.7 <= order1 <= 2.3
    assert 1.7 <= order2 <= 2.3


def test_step_too_small_detected():
    coeffs = np.array([0.3, -1.2, 0.7])
    form = lambda p, vecs: float(coeffs @ vecs[0]) + 1e6
    base = np.array([0.1, 0.2, 0.3])
    v1 = np.array([1.0, 0.0, 0.5])
    v2 = np.array([0.0, 1.0, -0.3])
    with pytest.raises(StepTooSmall):
        FM.exterior_derivative(form, lambda a: a, base, [v1, v2], 1e-12)


def test_fundamental_equations():
    rng = np.random.default_rng(29)
    for _ in range(10):
        r1, r2 = FM.fundamental_equations_residual(rng, step=1e-3)
        assert r1 <= 1e-5
        assert r2 <= 1e-5


def test_fundamental_equation_sign_flip_detected():
    rng = np.random.default_rng(29)
    r1, _ = FM.fundamental_equations_residual(rng, step=1e-3, sign_flip=True)
    assert r1 > 1e-2


def test_contact_vectors_kill_wedge_terms():
    # vectors in the contact distribution have x* = n* = 0, so the
    # wedge side of the alpha equation collapses termwise
    rng = np.random.default_rng(37)
    p = FM.random_ut_point(rng)
    x, n = p[:4], p[4:]
    amb = rng.normal(size=4)
    for basis_vec in (x, n):
        amb = amb - A.pair(amb, basis_vec) / A.qform(basis_vec) * basis_vec
    u = np.concatenate([amb, amb])  # contact: u1 = u2 orthogonal to x and n
    assert abs(FM.xstar(p, u)) <= 1e-12
    assert abs(FM.nstar(p, u)) <= 1e-12


# ---------------------------------------------------------------------------
# W-volume
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lens():
    return FM.LensCobordism(G0.scaled_by(BUMP), BOX)


def test_degenerate_lens_is_zero():
    zero = FM.LensCobordism(G0.scaled_by(0.0 * BUMP), BOX)
    grid = F.box_grid(BOX, level=0, base_cells=8)
    assert abs(FM.w_volume(zero, grid, t_cells=4).value) <= 1e-12


def test_w_volume_matches_action(lens):
    grid = F.box_grid(BOX, level=1)
    wv = FM.w_volume(lens, grid, t_cells=8)
    s = LV.action(G0, G0.scaled_by(BUMP), F.box_grid(BOX, level=3)).value
    assert abs(wv.value - s) <= 1e-3


def test_w_volume_path_independence():
    # omega is closed: a reparametrized interpolation changes nothing
    grid = F.box_grid(BOX, level=0)
    canonical = FM.LensCobordism(G0.scaled_by(BUMP), BOX)
    repar = FM.LensCobordism(
        G0.scaled_by(BUMP), BOX,
        reparam=(lambda t: t * t * (3 - 2 * t), lambda t: 6 * t * (1 - t)),
    )
    a = FM._w_value(canonical, grid, 24)
    b = FM._w_value(repar, grid, 24)
    assert abs(a - b) <= 1e-6


def test_w_volume_chasles_split(lens):
    grid = F.box_grid(BOX, level=0)
    w1, w2, wf = FM.w_volume_split(lens, grid, t_cells=6)
    assert abs(w1 + w2 - wf) <= 1e-8


def test_noncompact_difference_rejected():
    # a factor with no support box cannot bound a lens
    u = F.DeSitterLogFactor() * 0.01
    with pytest.raises(NonCompactDifference):
        FM.LensCobordism(G0.scaled_by(u), BOX)


def test_variational_3d():
    grid = F.box_grid(BOX, level=0)
    res = FM.variational_3d_residual(G0, BUMP, 1e-3, grid, t_cells=8)
    assert res <= 1e-4
    res2 = FM.variational_3d_residual(G0, BUMP, 5e-4, grid, t_cells=8)
    # exactly quadratic in t: both residuals sit at the quadrature floor
    assert res2 <= 1e-4


def test_variational_3d_zero_factor():
    grid = F.box_grid(BOX, level=0, base_cells=8)
    assert FM.variational_3d_residual(G0, 0.0 * BUMP, 1e-3, grid,
                                      t_cells=4) <= 1e-12


# ---------------------------------------------------------------------------
# classical formula
# ---------------------------------------------------------------------------

def test_classical_formula_geodesic_slice():
    x_fn, n_fn = A.totally_geodesic_slice()
    s = RNG.uniform(-0.8, 0.8, 30)
    t = RNG.uniform(0.1, 1.2, 30)
    assert FM.classical_formula_residual(x_fn, n_fn, s, t) == 0.0
    assert np.max(np.abs(FM.mean_curvature(x_fn, n_fn, s, t))) == 0.0


def test_classical_formula_epstein_surface():
    data = A.isotropic_from_metric(G0.scaled_by(BUMP))

    def x_fn(a, b):
        return A.epstein_lift(data, a, b).x

    def n_fn(a, b):
        return A.epstein_lift(data, a, b).n

    s = RNG.uniform(0.1, 0.9, 30)
    t = RNG.uniform(2.1, 2.9, 30)
    assert FM.classical_formula_residual(x_fn, n_fn, s, t) <= 1e-6


def test_classical_formula_scaling():
    # both sides are 2-form densities: doubling the area doubles them
    data = A.isotropic_from_metric(G0.scaled_by(BUMP))
    frame = A.epstein_lift(data, np.array([0.4]), np.array([2.6]))
    falpha = 0.25 * (
        A.det4(frame.x, frame.n, frame.n_dx, frame.x_dy)
        + A.det4(frame.x, frame.n, frame.x_dx, frame.n_dy)
    )
    falpha2 = 0.25 * (
        A.det4(frame.x, frame.n, 2 * frame.n_dx, frame.x_dy)
        + A.det4(frame.x, frame.n, 2 * frame.x_dx, frame.n_dy)
    )
    assert falpha2 == pytest.approx(2 * falpha, abs=1e-10)
