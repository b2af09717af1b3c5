"""Differential forms on the unit tangent bundle and the W-volume.

Points of the (spacelike) unit tangent bundle are pairs (x, n) in W x W
with q(x) = -1, q(n) = +1, <x, n> = 0; tangent vectors are pairs
(u1, u2) annihilating the differentiated constraints.  The forms

    omega(u, v, w) = det(x, u1, v1, w1)
    alpha(u, v)    = (det(x, n, u2, v1) + det(x, n, u1, v2)) / 4
    theta1(u, v)   = det(x, n, u1, v1),   theta2: second components
    x*(u) = <x, u2>,   n*(u) = <u1, n>

satisfy d beta = theta1 - theta2 and 2 d alpha = n* ^ theta2 - x* ^ theta1,
with beta(w) = -det(x, n, u, w3) on the frame space of pairwise
orthogonal triples.  The exterior derivative is computed numerically on
a constraint-projection chart: push coordinate vectors forward by
central differences and differentiate the pulled-back coefficients,
which is second order in the step.

The W-volume of a lens cobordism integrates the pulled-back volume form
over chart x [0, 1] (orientation dx ^ dy ^ dt) minus the boundary alpha
difference; the interpolation is the Epstein family of e^{2 s(t) u} g0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adsgeom import (
    GRAM,
    IsotropicSurfaceData,
    det4,
    epstein_lift,
    frame_constraint_residuals,
    pair,
    qform,
)
from .errors import (
    ChartBreakdown,
    NonCompactDifference,
    NotHolonomicBoundary,
    NotTangent,
    StepTooSmall,
)
from .fields import QuadratureGrid
from .liouville import ActionValue
from .lorentz import SplitMetric, curvature

_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# Points, vectors, frames
# ---------------------------------------------------------------------------

def ut_point(x, n, tol=1e-10):
    p = np.concatenate([np.asarray(x, dtype=float), np.asarray(n, dtype=float)])
    if max(abs(qform(p[:4]) + 1), abs(qform(p[4:]) - 1),
           abs(pair(p[:4], p[4:]))) > tol:
        raise NotTangent("(x, n) violates the unit tangent constraints")
    return p


def frame_point(x, n, u, tol=1e-10):
    f = np.concatenate([np.asarray(x, dtype=float), np.asarray(n, dtype=float),
                        np.asarray(u, dtype=float)])
    res = max(
        abs(qform(f[:4]) + 1), abs(qform(f[4:8]) - 1), abs(qform(f[8:]) - 1),
        abs(pair(f[:4], f[4:8])), abs(pair(f[:4], f[8:])),
        abs(pair(f[4:8], f[8:])),
    )
    if res > tol:
        raise NotTangent("(x, n, u) is not a pairwise orthogonal frame")
    return f


def derived_vector(f):
    """The fourth frame direction e: orthogonal, q(e) = -1, det = +1."""
    x, n, u = f[:4], f[4:8], f[8:12]
    rows = np.stack([x @ GRAM, n @ GRAM, u @ GRAM])
    _, _, vt = np.linalg.svd(rows)
    e = vt[-1]
    qe = float(e @ GRAM @ e)
    if qe >= 0:
        raise ChartBreakdown("derived direction is not timelike")
    e = e / math.sqrt(-qe)
    if det4(x, n, u, e) < 0:
        e = -e
    return e


def _project_unit(v, sign):
    q = qform(v)
    if sign * q <= 0:
        raise ChartBreakdown("projection left the constraint cone")
    return v / math.sqrt(sign * q)


def project_ut(amb):
    """Nearest-by-Gram-Schmidt UT point for an ambient 8-vector."""
    x = _project_unit(amb[:4], -1.0)
    n = amb[4:8] + pair(amb[4:8], x) * x  # remove the x-component (q(x) = -1)
    n = _project_unit(n, 1.0)
    return np.concatenate([x, n])


def project_frame(amb):
    x = _project_unit(amb[:4], -1.0)
    n = amb[4:8] + pair(amb[4:8], x) * x
    n = _project_unit(n, 1.0)
    u = amb[8:12] + pair(amb[8:12], x) * x - pair(amb[8:12], n) * n
    u = _project_unit(u, 1.0)
    return np.concatenate([x, n, u])


def _constraint_rows_ut(p):
    x, n = p[:4], p[4:8]
    z = np.zeros(4)
    return np.stack([
        np.concatenate([2 * GRAM @ x, z]),
        np.concatenate([z, 2 * GRAM @ n]),
        np.concatenate([GRAM @ n, GRAM @ x]),
    ])


def _constraint_rows_frame(f):
    x, n, u = f[:4], f[4:8], f[8:12]
    z = np.zeros(4)
    return np.stack([
        np.concatenate([2 * GRAM @ x, z, z]),
        np.concatenate([z, 2 * GRAM @ n, z]),
        np.concatenate([z, z, 2 * GRAM @ u]),
        np.concatenate([GRAM @ n, GRAM @ x, z]),
        np.concatenate([GRAM @ u, z, GRAM @ x]),
        np.concatenate([z, GRAM @ u, GRAM @ n]),
    ])


def tangent_project(p, vec, frame=False):
    """Project an ambient vector onto the differentiated-constraint kernel."""
    rows = _constraint_rows_frame(p) if frame else _constraint_rows_ut(p)
    sol, *_ = np.linalg.lstsq(rows.T @ rows + 1e-13 * np.eye(rows.shape[1]),
                              rows.T @ (rows @ vec), rcond=None)
    return vec - sol


def random_ut_point(rng):
    from .adsgeom import F_MINUS1, F_MINUS2, F_PLUS1, F_PLUS2

    r = rng.uniform(0.0, 1.0)
    a, b = rng.uniform(0.0, 2 * math.pi, 2)
    x = math.cosh(r) * (math.cos(a) * F_MINUS1 + math.sin(a) * F_MINUS2) + \
        math.sinh(r) * (math.cos(b) * F_PLUS1 + math.sin(b) * F_PLUS2)
    for _ in range(64):
        n = rng.normal(size=4)
        n = n + pair(n, x) * x
        if qform(n) > 0.1:
            return np.concatenate([x, n / math.sqrt(qform(n))])
    raise ChartBreakdown("could not draw a spacelike normal")


def random_frame_point(rng):
    p = random_ut_point(rng)
    for _ in range(32):
        try:
            return project_frame(np.concatenate([p, rng.normal(size=4)]))
        except ChartBreakdown:
            continue
    raise ChartBreakdown("could not complete a random frame")


def random_ut_tangent(rng, p):
    v = tangent_project(p, rng.normal(size=8))
    return v / np.linalg.norm(v)


def random_frame_tangent(rng, f):
    v = tangent_project(f, rng.normal(size=12), frame=True)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# The forms
# ---------------------------------------------------------------------------

def check_ut_tangent(p, v, tol=1e-8):
    x, n = p[:4], p[4:8]
    res = max(abs(pair(v[:4], x)), abs(pair(v[4:], n)),
              abs(pair(v[:4], n) + pair(x, v[4:])))
    if res > tol:
        raise NotTangent(f"UT tangency residual {res}")


def omega3(p, u, v, w, check=True):
    if check:
        for vec in (u, v, w):
            check_ut_tangent(p, vec)
    return float(det4(p[:4], u[:4], v[:4], w[:4]))


def alpha2(p, u, v, check=True):
    if check:
        for vec in (u, v):
            check_ut_tangent(p, vec)
    x, n = p[:4], p[4:8]
    return float(0.25 * (det4(x, n, u[4:], v[:4]) + det4(x, n, u[:4], v[4:])))


def theta(i, p, u, v, check=True):
    if check:
        for vec in (u, v):
            check_ut_tangent(p, vec)
    x, n = p[:4], p[4:8]
    if i == 1:
        return float(det4(x, n, u[:4], v[:4]))
    if i == 2:
        return float(det4(x, n, u[4:], v[4:]))
    raise ValueError("theta index must be 1 or 2")


def xstar(p, u):
    return float(pair(p[:4], u[4:8]))


def nstar(p, u):
    return float(pair(u[:4], p[4:8]))


def beta1(f, w, tol=1e-8):
    """beta(w) = -det(x, n, u, w3) on the frame space."""
    rows = _constraint_rows_frame(f)
    res = np.max(np.abs(rows @ w))
    if res > tol:
        raise NotTangent(f"frame tangency residual {res}")
    return float(-det4(f[:4], f[4:8], f[8:12], w[8:12]))


# ---------------------------------------------------------------------------
# Numerical exterior derivative on a constraint chart
# ---------------------------------------------------------------------------

def exterior_derivative(form, project, base, vectors, step):
    """d(form) at ``base`` on the given tangent vectors.

    ``form(point, vecs)`` evaluates the k-form at an ambient point on
    ambient vectors; ``project`` retracts ambient points onto the
    constraint manifold.  The chart z -> project(base + sum z_i v_i)
    pushes the coordinate fields forward by central differences (same
    step), and the alternating sum of coefficient derivatives is the
    chart formula for d; both stages are O(step^2).
    """
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    m = len(vectors)

    def psi(z):
        return project(base + sum(zi * vi for zi, vi in zip(z, vectors)))

    def push(z, i):
        dz = np.zeros(m)
        dz[i] = step
        return (psi(z + dz) - psi(z - dz)) / (2.0 * step)

    def coeff(z, skip):
        point = psi(z)
        args = [push(z, i) for i in range(m) if i != skip]
        return form(point, args)

    total = 0.0
    for j in range(m):
        dz = np.zeros(m)
        dz[j] = step
        a, b = coeff(dz, j), coeff(-dz, j)
        # below this step the squared-step denominators of the nested
        # differences drop under the roundoff of the coefficients
        if step ** 2 < 16 * _EPS * (1.0 + abs(a) + abs(b)):
            raise StepTooSmall("step squared below coefficient roundoff")
        total += (-1) ** j * (a - b) / (2.0 * step)
    return total


def _wedge_1_2(gamma, th, u, v, w):
    return (
        gamma(u) * th(v, w) - gamma(v) * th(u, w) + gamma(w) * th(u, v)
    )


def fundamental_equations_residual(rng, step=1e-3, sign_flip=False):
    """(r1, r2) at a random frame/UT configuration.

    r1 = |d beta (v, w) - (theta2 - theta1)(v, w)| with the thetas on
    the projected UT vectors; r2 = |2 d alpha - (n* ^ theta2 -
    x* ^ theta1)| on three random UT tangents.

    With beta = -det(x, n, u, w3) (equivalently <w3, e> for the derived
    vector normalized by det(x, n, u, e) = +1) and the standard exterior
    derivative, expanding D beta in the frame (x, n, u, e) gives
    d beta = theta2 - theta1: writing w1 = b n + c u + d e and likewise
    for v1 (both are orthogonal to x),

        D_w beta(v) = <w2, e><v2, u> - <w1, e><v1, u>,

    and antisymmetrizing yields det(x,n,w2,v2) - det(x,n,w1,v1).  The
    ``sign_flip`` switch deliberately tests the wrong sign so the
    verification suite can prove it would catch one.
    """
    f = random_frame_point(rng)
    v = random_frame_tangent(rng, f)
    w = random_frame_tangent(rng, f)
    dbeta = exterior_derivative(
        lambda pt, vecs: -float(det4(pt[:4], pt[4:8], pt[8:12], vecs[0][8:12])),
        project_frame, f, [v, w], step,
    )
    p = f[:8]
    vp, wp = v[:8], w[:8]
    rhs1 = theta(2, p, vp, wp, check=False) - theta(1, p, vp, wp, check=False)
    if sign_flip:
        rhs1 = -rhs1
    r1 = abs(dbeta - rhs1)

    q = random_ut_point(rng)
    a = random_ut_tangent(rng, q)
    b = random_ut_tangent(rng, q)
    c = random_ut_tangent(rng, q)
    dalpha = exterior_derivative(
        lambda pt, vecs: 0.25 * float(
            det4(pt[:4], pt[4:8], vecs[0][4:], vecs[1][:4])
            + det4(pt[:4], pt[4:8], vecs[0][:4], vecs[1][4:])
        ),
        project_ut, q, [a, b, c], step,
    )
    rhs = 0.5 * (
        _wedge_1_2(lambda t: nstar(q, t),
                   lambda s, t: theta(2, q, s, t, check=False), a, b, c)
        - _wedge_1_2(lambda t: xstar(q, t),
                     lambda s, t: theta(1, q, s, t, check=False), a, b, c)
    )
    r2 = abs(dalpha - rhs)
    return r1, r2


# ---------------------------------------------------------------------------
# Lens cobordisms and the W-volume
# ---------------------------------------------------------------------------

@dataclass
class LensCobordism:
    """Epstein lens between g0-conformal metrics differing on a box.

    The interpolation is t -> Epstein surface of e^{2 s(t) u} g0 with
    s(0) = 0, s(1) = 1 (s = id by default); both boundary surfaces are
    holonomic and agree outside the support of u.
    """

    metric: SplitMetric           # e^{2u} g0; the lens runs from g0 to it
    box: tuple                    # chart rectangle containing supp u
    reparam: tuple = None         # (s(t), s'(t)) callables

    def __post_init__(self):
        self.data = IsotropicSurfaceData(self.metric)
        self._validate()

    def path(self, t):
        if self.reparam is None:
            return t, 1.0
        s, ds = self.reparam
        return s(t), ds(t)

    def frame(self, x, y, t):
        s, ds = self.path(t)
        fr = epstein_lift(self.data, x, y, t=s)
        if fr.x_dt is not None and ds != 1.0:
            fr.x_dt = ds * fr.x_dt
            fr.n_dt = ds * fr.n_dt
        return fr

    def _validate(self, samples=64, tol=1e-8):
        rng = np.random.default_rng(7)
        x0, x1, y0, y1 = self.box
        xs = rng.uniform(x0, x1, samples)
        ys = rng.uniform(y0, y1, samples)
        for t in (0.0, 1.0):
            res = frame_constraint_residuals(self.frame(xs, ys, t))
            if res > tol:
                raise NotHolonomicBoundary(f"contact residual {res}")
        sb = self.metric.u.support_box
        if sb is None:
            raise NonCompactDifference("conformal factor has no support box")
        # outside the support the two boundary frames coincide exactly
        off_x = np.linspace(x0, x1, 13)
        off_y = np.full_like(off_x, y0 + 0.37 * (y1 - y0))
        outside = ~(
            (off_x >= sb[0]) & (off_x <= sb[1])
            & (off_y >= sb[2]) & (off_y <= sb[3])
        )
        if np.any(outside):
            f0 = self.frame(off_x[outside], off_y[outside], 0.0)
            f1 = self.frame(off_x[outside], off_y[outside], 1.0)
            gap = max(np.max(np.abs(f0.x - f1.x)), np.max(np.abs(f0.n - f1.n)))
            if gap > 1e-10:
                raise NonCompactDifference(f"boundary surfaces differ: {gap}")


_G2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def _t_nodes(cells):
    edges = np.linspace(0.0, 1.0, cells + 1)
    h = np.diff(edges)
    nodes = np.concatenate([edges[:-1] + f * h for f in _G2])
    weights = np.concatenate([0.5 * h, 0.5 * h])
    order = np.argsort(nodes)
    return nodes[order], weights[order]


def _alpha_boundary_density(frame):
    x, n = frame.x, frame.n
    return 0.25 * (
        det4(x, n, frame.n_dx, frame.x_dy) + det4(x, n, frame.x_dx, frame.n_dy)
    )


def _bulk_density(lens, x, y, t):
    fr = lens.frame(x, y, t)
    return det4(fr.x, fr.x_dx, fr.x_dy, fr.x_dt)


def _bulk_between(lens, grid, a, b, t_cells):
    nodes, weights = _t_nodes(t_cells)
    tot = 0.0
    for t, w in zip(a + (b - a) * nodes, (b - a) * weights):
        tot += w * grid.integrate(lambda x, y, t=t: _bulk_density(lens, x, y, t))
    return tot


def _alpha_at(lens, grid, t):
    return grid.integrate(
        lambda x, y: _alpha_boundary_density(lens.frame(x, y, t))
    )


def _w_value(lens, grid, t_cells):
    vol = _bulk_between(lens, grid, 0.0, 1.0, t_cells)
    bnd = _alpha_at(lens, grid, 1.0) - _alpha_at(lens, grid, 0.0)
    return vol - bnd


def w_volume(lens: LensCobordism, grid: QuadratureGrid,
             t_cells: int = 12) -> ActionValue:
    """W = int_M phi* omega - (int_S1 phi* alpha - int_S0 phi* alpha).

    M = chart x [0, 1] carries the orientation dx ^ dy ^ dt, which makes
    Stokes produce the boundary difference S1 - S0 with both slices
    oriented by dx ^ dy; the bulk integrand is then
    det(x, d_x x, d_y x, d_t x).
    """
    coarse = _w_value(lens, grid, t_cells)
    fine = _w_value(lens, grid.refine(), t_cells)
    return ActionValue(fine, abs(fine - coarse), grid.describe(), "w-volume")


def w_volume_split(lens: LensCobordism, grid, t_cells=12):
    """Chasles check: the lens split at t = 1/2 sums to the full lens.

    The full lens uses 2 * t_cells uniform cells, whose quadrature nodes
    are exactly the union of the two halves' nodes, so the additivity
    residual is pure roundoff (the boundary terms telescope).
    """
    a0 = _alpha_at(lens, grid, 0.0)
    ah = _alpha_at(lens, grid, 0.5)
    a1 = _alpha_at(lens, grid, 1.0)
    w_first = _bulk_between(lens, grid, 0.0, 0.5, t_cells) - (ah - a0)
    w_second = _bulk_between(lens, grid, 0.5, 1.0, t_cells) - (a1 - ah)
    w_full = _bulk_between(lens, grid, 0.0, 1.0, 2 * t_cells) - (a1 - a0)
    return w_first, w_second, w_full


def classical_formula_residual(x_fn, n_fn, s, t, step=1e-4):
    """Pointwise |F* alpha - (1/4) tr(B) da| over the sample points.

    da is the area form det(x, n, d_s x, d_t x) of the lifted surface
    and B solves D n = D x . B in the tangent frame.
    """
    from .adsgeom import classical_forms

    (x, n, dx1, dx2, dn1, dn2, i_mat, _, _, b) = classical_forms(
        x_fn, n_fn, s, t, step
    )
    falpha = 0.25 * (det4(x, n, dn1, dx2) + det4(x, n, dx1, dn2))
    da = det4(x, n, dx1, dx2)
    trb = np.trace(b, axis1=-2, axis2=-1)
    return float(np.max(np.abs(falpha - 0.25 * trb * da)))


def mean_curvature(x_fn, n_fn, s, t, step=1e-4):
    """H = (1/2) tr(B) for a lifted surface."""
    from .adsgeom import classical_forms

    b = classical_forms(x_fn, n_fn, s, t, step)[-1]
    return 0.5 * np.trace(b, axis1=-2, axis2=-1)


def variational_3d_residual(metric: SplitMetric, u, dt, grid, t_cells=12):
    """|central difference of W(lens to e^{2 dt u} g) + (1/2) int u F|."""
    base = metric
    plus = LensCobordism(base.scaled_by(dt * u), grid_box(grid))
    minus = LensCobordism(base.scaled_by(-dt * u), grid_box(grid))
    wp = w_volume(plus, grid, t_cells).value
    wm = w_volume(minus, grid, t_cells).value
    cd = (wp - wm) / (2.0 * dt)
    kg = curvature(base)
    target = grid.integrate(lambda x, y: u.value(x, y) * kg.F_density(x, y))
    return abs(cd + 0.5 * target)


def grid_box(grid: QuadratureGrid):
    return (
        grid.x_segments[0][0],
        grid.x_segments[-1][1],
        grid.y_segments[0][0],
        grid.y_segments[-1][1],
    )
