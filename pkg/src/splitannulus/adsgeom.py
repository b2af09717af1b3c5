"""Signature (2,2) linear algebra, isotropic surfaces and Epstein lifts.

The ambient space is V (x) V for a symplectic plane (V, omega) with
omega(e1, e2) = 1, in the basis

    E11 = e1(x)e1,  E12 = e1(x)e2,  E21 = e2(x)e1,  E22 = e2(x)e2,

with the pairing <.,.> = -omega(x)omega: the only nonzero basis pairings
are <E11, E22> = -1 and <E12, E21> = +1 (signature (2,2)).  Every
determinant below uses the orientation det(E11, E12, E21, E22) = +1.

The Segre section is s(x, y) = (x e1 + e2)(x)(y e1 + e2) with
coordinates (xy, x, y, 1).  The isotropic surface realizing a metric of
density rho (against dx dy) is sigma = lambda s with lambda^2 = rho / 2,
so that <d_x sigma, d_y sigma> equals the metric tensor value rho / 2;
for the de Sitter metric this is sigma0 = s / (x - y), whose dual is
the argument-swapped Segre section over the same denominator.  The
conformal family e^{2w} g has

    sigma = e^w sigma0,
    eta   = e^{-w} (eta0 - D_{grad w} sigma0 - (1/2) g0(grad w, grad w) sigma0),

with the gradient taken against the realized base form; everything is
differentiated in closed form, so the dual surface loses no accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateIstar,
    IncompatibleMetrics,
    NotUnitNormal,
    SingularDual,
)
from .lorentz import DESITTER, FLAT, SplitMetric

GRAM = np.array(
    [
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
    ]
)


def pair(u, v):
    """The polar form <u, v> = -u1 v4 - u4 v1 + u2 v3 + u3 v2."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return (
        -u[..., 0] * v[..., 3]
        - u[..., 3] * v[..., 0]
        + u[..., 1] * v[..., 2]
        + u[..., 2] * v[..., 1]
    )


def qform(u):
    return pair(u, u)


def det4(a, b, c, d):
    """Oriented 4-volume of four vectors (rows), vectorized."""
    m = np.stack([np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                  np.asarray(c, dtype=float), np.asarray(d, dtype=float)],
                 axis=-2)
    return np.linalg.det(m)


def gram_signature():
    """Eigenvalues of the Gram matrix, sorted; the startup invariant."""
    return np.sort(np.linalg.eigvalsh(GRAM))


# signature (2,2) is load-bearing for every pairing below; fail fast if
# the Gram matrix is ever edited inconsistently
assert np.allclose(gram_signature(), (-1.0, -1.0, 1.0, 1.0), atol=1e-12)


def segre(x, y):
    """(x e1 + e2) (x) (y e1 + e2) in coordinates (xy, x, y, 1)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    one = np.ones(np.broadcast(x, y).shape)
    return np.stack([x * y, x, y, one], axis=-1)


def _segre_jets(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shp = np.broadcast(x, y).shape
    zero = np.zeros(shp)
    one = np.ones(shp)
    s = np.stack([x * y, x, y, one], axis=-1)
    a = np.stack([y, one, zero, zero], axis=-1)   # d/dx
    b = np.stack([x, zero, one, zero], axis=-1)   # d/dy
    c = np.stack([one, zero, zero, zero], axis=-1)  # d2/dxdy
    return s, a, b, c


# four orthonormal-ish directions diagonalizing the pairing:
# <F_PLUS1> = <F_PLUS2> = +1, <F_MINUS1> = <F_MINUS2> = -1
F_PLUS1 = np.array([1.0, 0.0, 0.0, -1.0]) / math.sqrt(2.0)
F_PLUS2 = np.array([0.0, 1.0, 1.0, 0.0]) / math.sqrt(2.0)
F_MINUS1 = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
F_MINUS2 = np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2.0)
_DIAG_P = np.column_stack([F_PLUS1, F_PLUS2, F_MINUS1, F_MINUS2])


def random_so_q(rng, scale=0.7):
    """A random element of SO0(q) from elementary rotations and boosts."""
    r = np.eye(4)

    def plane(i, j, rot, t):
        m = np.eye(4)
        if rot:
            m[i, i] = m[j, j] = math.cos(t)
            m[i, j] = -math.sin(t)
            m[j, i] = math.sin(t)
        else:
            m[i, i] = m[j, j] = math.cosh(t)
            m[i, j] = m[j, i] = math.sinh(t)
        return m

    # indices in the diagonal basis: 0,1 positive; 2,3 negative
    for (i, j, rot) in ((0, 1, True), (2, 3, True), (0, 2, False),
                        (1, 3, False), (0, 3, False), (1, 2, False)):
        r = r @ plane(i, j, rot, rng.uniform(-scale, scale))
    return _DIAG_P @ r @ np.linalg.inv(_DIAG_P)


# ---------------------------------------------------------------------------
# Base pairs and the conformal family
# ---------------------------------------------------------------------------

class _BasePair:
    """(sigma-hat, eta-hat) jets for a reference metric."""

    def jets(self, x, y):
        raise NotImplementedError


class _DeSitterBase(_BasePair):
    def jets(self, x, y):
        s, a, b, c = _segre_jets(x, y)
        # the dual direction is the argument-swapped Segre section; its
        # coordinates come out right by evaluating at (y, x), with the
        # roles of the two returned partials exchanged
        st, st_y, st_x, _ = _segre_jets(y, x)
        d = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float))[..., None]
        ct = np.broadcast_to(c, s.shape)
        out = {}
        out["sigma"] = s / d
        out["sigma_x"] = a / d - s / d ** 2
        out["sigma_y"] = b / d + s / d ** 2
        out["sigma_xx"] = -2 * a / d ** 2 + 2 * s / d ** 3
        out["sigma_xy"] = ct / d + (a - b) / d ** 2 - 2 * s / d ** 3
        out["sigma_yy"] = 2 * b / d ** 2 + 2 * s / d ** 3
        out["eta"] = st / d
        out["eta_x"] = st_x / d - st / d ** 2
        out["eta_y"] = st_y / d + st / d ** 2
        out["eta_xx"] = -2 * st_x / d ** 2 + 2 * st / d ** 3
        out["eta_xy"] = ct / d + (st_x - st_y) / d ** 2 - 2 * st / d ** 3
        out["eta_yy"] = 2 * st_y / d ** 2 + 2 * st / d ** 3
        dd = d[..., 0]
        out["M"] = dd ** 2          # 1 / (base bilinear value)
        out["M_x"] = 2 * dd
        out["M_y"] = -2 * dd
        return out


class _FlatBase(_BasePair):
    def jets(self, x, y):
        s, a, b, c = _segre_jets(x, y)
        sgn = np.sign(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        sg = sgn[..., None]
        z = np.zeros_like(s)
        e11 = np.zeros_like(s)
        e11[..., 0] = 1.0
        rt2 = math.sqrt(2.0)
        out = {
            "sigma": sg * s / rt2,
            "sigma_x": sg * a / rt2,
            "sigma_y": sg * b / rt2,
            "sigma_xx": z,
            "sigma_xy": sg * np.broadcast_to(c, s.shape) / rt2,
            "sigma_yy": z,
            "eta": -sg * rt2 * e11,
            "eta_x": z,
            "eta_y": z,
            "eta_xx": z,
            "eta_xy": z,
            "eta_yy": z,
            "M": np.full(sgn.shape, 2.0),
            "M_x": np.zeros(sgn.shape),
            "M_y": np.zeros(sgn.shape),
        }
        return out


_BASES = {DESITTER: _DeSitterBase(), FLAT: _FlatBase()}


@dataclass
class PairJets:
    """sigma, eta and their first derivatives (plus path derivatives)."""

    sigma: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    eta: np.ndarray
    eta_x: np.ndarray
    eta_y: np.ndarray
    sigma_t: np.ndarray = None
    eta_t: np.ndarray = None


class IsotropicSurfaceData:
    """The isotropic/dual pair realizing a compatible metric.

    ``jets(x, y)`` evaluates (sigma, eta) and their first derivatives in
    closed form.  ``jets(x, y, t=...)`` evaluates the canonical path
    through e^{2 t u} (reference) together with the path derivatives;
    the boundary surfaces of a lens cobordism are t = 0, 1.
    """

    def __init__(self, metric: SplitMetric):
        if metric.coords != "affine":
            raise IncompatibleMetrics("isotropic surfaces use affine charts")
        self.metric = metric
        self.base = _BASES[metric.reference]

    def jets(self, x, y, t=None, t_is_path=True):
        b = self.base.jets(x, y)
        ju = self.metric.u.jet(x, y)
        scale = 1.0 if t is None else t
        w = scale * ju.v
        wx, wy = scale * ju.vx, scale * ju.vy
        wxx, wxy, wyy = scale * ju.vxx, scale * ju.vxy, scale * ju.vyy
        M, Mx, My = b["M"], b["M_x"], b["M_y"]
        ew = np.exp(w)[..., None]

        def col(v):
            return v[..., None]

        sigma = ew * b["sigma"]
        sigma_x = ew * (col(wx) * b["sigma"] + b["sigma_x"])
        sigma_y = ew * (col(wy) * b["sigma"] + b["sigma_y"])

        h = (b["eta"] - col(M * wy) * b["sigma_x"] - col(M * wx) * b["sigma_y"]
             - col(M * wx * wy) * b["sigma"])
        h_x = (
            b["eta_x"]
            - col(Mx * wy + M * wxy) * b["sigma_x"] - col(M * wy) * b["sigma_xx"]
            - col(Mx * wx + M * wxx) * b["sigma_y"] - col(M * wx) * b["sigma_xy"]
            - col(Mx * wx * wy + M * (wxx * wy + wx * wxy)) * b["sigma"]
            - col(M * wx * wy) * b["sigma_x"]
        )
        h_y = (
            b["eta_y"]
            - col(My * wy + M * wyy) * b["sigma_x"] - col(M * wy) * b["sigma_xy"]
            - col(My * wx + M * wxy) * b["sigma_y"] - col(M * wx) * b["sigma_yy"]
            - col(My * wx * wy + M * (wxy * wy + wx * wyy)) * b["sigma"]
            - col(M * wx * wy) * b["sigma_y"]
        )
        emw = np.exp(-w)[..., None]
        eta = emw * h
        eta_x = emw * (h_x - col(wx) * h)
        eta_y = emw * (h_y - col(wy) * h)

        out = PairJets(sigma, sigma_x, sigma_y, eta, eta_x, eta_y)
        if t is not None and t_is_path:
            u, ux, uy = ju.v, ju.vx, ju.vy
            out.sigma_t = col(u) * sigma
            h_t = (
                -col(M * uy) * b["sigma_x"] - col(M * ux) * b["sigma_y"]
                - col(M * (ux * wy + wx * uy)) * b["sigma"]
            )
            out.eta_t = emw * h_t - col(u) * eta
        return out

    def constraint_residuals(self, x, y):
        """Max residual of the six defining relations at sample points."""
        j = self.jets(x, y)
        res = [
            pair(j.sigma, j.sigma),
            pair(j.sigma_x, j.sigma),
            pair(j.sigma_y, j.sigma),
            pair(j.eta, j.eta),
            pair(j.eta, j.sigma) - 1.0,
            pair(j.eta, j.sigma_x),
            pair(j.eta, j.sigma_y),
        ]
        return float(np.max(np.abs(np.stack(res))))

    def metric_realization_residual(self, x, y):
        """|<d sigma, d sigma> - metric tensor| entrywise, maxed."""
        j = self.jets(x, y)
        target = self.metric.bilinear_xy(x, y)
        res = [
            pair(j.sigma_x, j.sigma_x),
            pair(j.sigma_y, j.sigma_y),
            pair(j.sigma_x, j.sigma_y) - target,
        ]
        return float(np.max(np.abs(np.stack(res))))


def isotropic_from_metric(g: SplitMetric) -> IsotropicSurfaceData:
    return IsotropicSurfaceData(g)


def sigma_by_pointwise_scaling(g: SplitMetric, x, y):
    """Independent construction: scale the Segre section pointwise.

    lambda is solved per point from the realization equation
    lambda^2 <s_x, s_y> = rho/2 (positive branch for x > y), without the
    closed-form factor used by the family constructor.
    """
    lam2 = 0.5 * g.density(x, y)
    lam = np.sign(np.asarray(x) - np.asarray(y)) * np.sqrt(lam2)
    return lam[..., None] * segre(x, y)


def dual_by_linear_solve(j: PairJets):
    """Solve the dual-surface conditions at each point independently.

    Three linear conditions (<., sigma> = 1, <., d sigma> = 0) leave a
    line eta_p + t sigma; isotropy fixes t linearly because sigma is
    isotropic.  Rank deficiency raises SingularDual.
    """
    rows = np.stack(
        [j.sigma @ GRAM, j.sigma_x @ GRAM, j.sigma_y @ GRAM], axis=-2
    )
    rhs = np.zeros(rows.shape[:-1])
    rhs[..., 0] = 1.0
    flat_rows = rows.reshape(-1, 3, 4)
    flat_rhs = rhs.reshape(-1, 3)
    sols = []
    for m, r in zip(flat_rows, flat_rhs):
        sol, residual, rank, _ = np.linalg.lstsq(m, r, rcond=None)
        if rank < 3:
            raise SingularDual("dual system rank-deficient")
        sols.append(sol)
    eta_p = np.asarray(sols).reshape(j.sigma.shape)
    t = -0.5 * qform(eta_p)
    return eta_p + t[..., None] * j.sigma


# ---------------------------------------------------------------------------
# Epstein frames
# ---------------------------------------------------------------------------

RT2INV = math.sqrt(2.0) / 2.0


@dataclass
class EpsteinFrame:
    """(x, n) with q(x) = -1, q(n) = +1, <x, n> = 0, plus derivatives."""

    x: np.ndarray
    n: np.ndarray
    x_dx: np.ndarray
    x_dy: np.ndarray
    n_dx: np.ndarray
    n_dy: np.ndarray
    x_dt: np.ndarray = None
    n_dt: np.ndarray = None


def epstein_lift(data: IsotropicSurfaceData, x, y, t=None) -> EpsteinFrame:
    """The holonomic surface ((sigma - eta)/sqrt2, (sigma + eta)/sqrt2)."""
    j = data.jets(x, y, t=t)
    f = EpsteinFrame(
        x=RT2INV * (j.sigma - j.eta),
        n=RT2INV * (j.sigma + j.eta),
        x_dx=RT2INV * (j.sigma_x - j.eta_x),
        x_dy=RT2INV * (j.sigma_y - j.eta_y),
        n_dx=RT2INV * (j.sigma_x + j.eta_x),
        n_dy=RT2INV * (j.sigma_y + j.eta_y),
    )
    if j.sigma_t is not None:
        f.x_dt = RT2INV * (j.sigma_t - j.eta_t)
        f.n_dt = RT2INV * (j.sigma_t + j.eta_t)
    return f


def frame_constraint_residuals(f: EpsteinFrame):
    """Unit/orthogonality and contact residuals of an Epstein frame."""
    res = [
        qform(f.x) + 1.0,
        qform(f.n) - 1.0,
        pair(f.x, f.n),
        pair(f.n, f.x_dx),
        pair(f.n, f.x_dy),
        pair(f.x, f.n_dx),
        pair(f.x, f.n_dy),
    ]
    return float(np.max(np.abs(np.stack(res))))


def envelope_incidence_residual(data: IsotropicSurfaceData, x, y):
    """<sigma, x_pt> + sqrt(2)/2: horosphere membership of the envelope."""
    j = data.jets(x, y)
    x_pt = RT2INV * (j.sigma - j.eta)
    return float(np.max(np.abs(pair(j.sigma, x_pt) + RT2INV)))


# ---------------------------------------------------------------------------
# Fundamental forms at infinity
# ---------------------------------------------------------------------------

def _pair_matrix(ax, ay, bx, by):
    return np.stack(
        [
            np.stack([pair(ax, bx), pair(ax, by)], axis=-1),
            np.stack([pair(ay, bx), pair(ay, by)], axis=-1),
        ],
        axis=-2,
    )


@dataclass
class InfinityForms:
    Istar: np.ndarray
    IIstar: np.ndarray
    IIIstar: np.ndarray
    Bstar: np.ndarray

    def shape_consistency_residual(self):
        """II* = I* B* and III*(X, Y) = I*(B*X, B*Y), maxed."""
        lhs1 = self.Istar @ self.Bstar
        r1 = np.max(np.abs(lhs1 - self.IIstar))
        lhs2 = np.swapaxes(self.Bstar, -1, -2) @ self.Istar @ self.Bstar
        r2 = np.max(np.abs(lhs2 - self.IIIstar))
        return float(max(r1, r2))

    def envelope_metric(self):
        """Induced metric of the envelope: I*/2 + II* + III*/2."""
        sym = 0.5 * (self.IIstar + np.swapaxes(self.IIstar, -1, -2))
        return 0.5 * self.Istar + sym + 0.5 * self.IIIstar

    def envelope_degenerate(self, tol=1e-10):
        """Mask of sample points where the envelope fails to immerse.

        The envelope metric may degenerate; points are reported, not
        classified.
        """
        return np.abs(np.linalg.det(self.envelope_metric())) <= tol


def infinity_forms(data: IsotropicSurfaceData, x, y) -> InfinityForms:
    j = data.jets(x, y)
    i_star = _pair_matrix(j.sigma_x, j.sigma_y, j.sigma_x, j.sigma_y)
    ii_star = -_pair_matrix(j.sigma_x, j.sigma_y, j.eta_x, j.eta_y)
    iii_star = _pair_matrix(j.eta_x, j.eta_y, j.eta_x, j.eta_y)
    det = np.linalg.det(i_star)
    if np.any(np.abs(det) < 1e-14):
        raise DegenerateIstar("first form at infinity is singular")
    b_star = np.linalg.solve(i_star, ii_star)
    return InfinityForms(i_star, ii_star, iii_star, b_star)


# ---------------------------------------------------------------------------
# Typical holonomic surfaces (classical fundamental forms)
# ---------------------------------------------------------------------------

def totally_geodesic_slice():
    """The AdS2 slice orthogonal to the unit spacelike direction F_PLUS2.

    Points a f1 + b f2 + c f3 with -a^2 + b^2 - c^2 = -1 in the frame
    f1 = F_MINUS1, f2 = F_PLUS1, f3 = F_MINUS2; the normal is constant,
    so II = III = 0.
    """

    def x_fn(s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        r = np.sqrt(1.0 + s ** 2)
        return (
            (r * np.cos(t))[..., None] * F_MINUS1
            + s[..., None] * F_PLUS1
            + (r * np.sin(t))[..., None] * F_MINUS2
        )

    def n_fn(s, t):
        shp = np.broadcast(np.asarray(s), np.asarray(t)).shape
        return np.broadcast_to(F_PLUS2, shp + (4,)).copy()

    return x_fn, n_fn


def graph_perturbed_slice(eps=0.05):
    """A non-geodesic perturbation of the slice, normal solved pointwise."""
    base_x, _ = totally_geodesic_slice()

    def x_fn(s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        raw = base_x(s, t) + (
            eps * np.sin(1.3 * s) * np.cos(t)
        )[..., None] * F_PLUS2
        scale = np.sqrt(-qform(raw))
        return raw / scale[..., None]

    def n_fn(s, t, step=1e-5):
        xs = x_fn(s, t)
        tx = (x_fn(s + step, t) - x_fn(s - step, t)) / (2 * step)
        ty = (x_fn(s, t + step) - x_fn(s, t - step)) / (2 * step)
        n = _orthogonal_unit(xs, tx, ty)
        return n

    return x_fn, n_fn


def _orthogonal_unit(x, t1, t2):
    """The q-unit vector orthogonal to x, t1, t2 (vectorized)."""
    rows = np.stack([x @ GRAM, t1 @ GRAM, t2 @ GRAM], axis=-2)
    flat = rows.reshape(-1, 3, 4)
    ns = []
    for m in flat:
        _, _, vt = np.linalg.svd(m)
        v = vt[-1]
        qv = float(v @ GRAM @ v)
        if qv <= 0:
            raise NotUnitNormal("orthogonal direction is not spacelike")
        ns.append(v / math.sqrt(qv))
    return np.asarray(ns).reshape(x.shape)


def classical_forms(x_fn, n_fn, s, t, step=1e-4):
    """I, II, III and the shape operator by finite differences.

    II(u, v) = <D_u n, D_v x> and B solves D n = D x . B on the tangent
    plane; NotUnitNormal if the supplied normal fails its constraints.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    x = x_fn(s, t)
    n = n_fn(s, t)
    if np.max(np.abs(qform(n) - 1.0)) > 1e-6 or np.max(np.abs(pair(x, n))) > 1e-6:
        raise NotUnitNormal("n is not a unit normal field")
    dx1 = (x_fn(s + step, t) - x_fn(s - step, t)) / (2 * step)
    dx2 = (x_fn(s, t + step) - x_fn(s, t - step)) / (2 * step)
    dn1 = (n_fn(s + step, t) - n_fn(s - step, t)) / (2 * step)
    dn2 = (n_fn(s, t + step) - n_fn(s, t - step)) / (2 * step)
    i_mat = _pair_matrix(dx1, dx2, dx1, dx2)
    ii_mat = _pair_matrix(dn1, dn2, dx1, dx2)
    iii_mat = _pair_matrix(dn1, dn2, dn1, dn2)
    # B in the coordinate tangent frame: columns solve I . B_j = II_j
    b = np.linalg.solve(i_mat, 0.5 * (ii_mat + np.swapaxes(ii_mat, -1, -2)))
    return x, n, dx1, dx2, dn1, dn2, i_mat, ii_mat, iii_mat, b


def typical_holonomic_residual(x_fn, n_fn, s, t, step=1e-4):
    """|I*(lift) - (I + 2 II + III)/2| entrywise, maxed over samples."""
    (x, n, dx1, dx2, dn1, dn2, i_mat, ii_mat, iii_mat, _) = classical_forms(
        x_fn, n_fn, s, t, step
    )
    lift1 = RT2INV * (dx1 + dn1)
    lift2 = RT2INV * (dx2 + dn2)
    istar = _pair_matrix(lift1, lift2, lift1, lift2)
    classical = 0.5 * (
        i_mat + ii_mat + np.swapaxes(ii_mat, -1, -2) + iii_mat
    )
    return float(np.max(np.abs(istar - classical)))
