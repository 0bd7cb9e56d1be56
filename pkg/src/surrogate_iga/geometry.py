"""Single-patch spline geometry maps and the pulled-back diffusion coefficient.

A :class:`PatchMap` is a (possibly rational) tensor-product B-spline map from
the unit square/cube to the physical domain.  Its knot vectors and degrees
are independent of the analysis space.

Geometry text format
--------------------
Line oriented, ``#`` starts a comment, numbers use a decimal point and may
use scientific notation::

    dim 2
    rational 1
    degrees 1 2
    knots 0 0 1 1
    knots 0 0 0 1 1 1
    shape 2 3
    1.0 0.0 1.0
    ...

One ``knots`` line per direction.  After ``shape`` follow
``prod(shape)`` control point lines ``x y [z] [w]`` (the weight only when
``rational 1``), with the first direction running fastest.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularJacobianError
from .splines import basis_funs, find_span

DET_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class PatchMap:
    """Tensor-product (NURBS) geometry map.

    Attributes
    ----------
    degrees : tuple of int
    knots : tuple of ndarray
        Full open knot sequence per direction.
    control : ndarray, shape ``(*ncoef, dim)``
        Control points indexed ``control[i1, i2, ...]``.
    weights : ndarray, shape ``ncoef``, or None
        Positive rational weights; ``None`` for a polynomial map.
    """

    degrees: tuple
    knots: tuple
    control: np.ndarray
    weights: np.ndarray | None = None
    name: str = "custom"

    def __post_init__(self):
        dim = len(self.degrees)
        object.__setattr__(self, "knots", tuple(np.asarray(k, dtype=float) for k in self.knots))
        object.__setattr__(self, "control", np.asarray(self.control, dtype=float))
        if len(self.knots) != dim or self.control.ndim != dim + 1 or self.control.shape[-1] != dim:
            raise ConfigError("geometry dimensions are inconsistent")
        for d, (p, kn) in enumerate(zip(self.degrees, self.knots)):
            if len(kn) - p - 1 != self.control.shape[d]:
                raise ConfigError(f"control grid does not match knot vector in direction {d}")
            if np.any(np.diff(kn) < 0) or kn[0] != 0.0 or kn[-1] != 1.0:
                raise ConfigError("geometry knots must be non-decreasing on [0, 1]")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != self.control.shape[:-1]:
                raise ConfigError("weight grid does not match control grid")
            if np.any(w <= 0):
                raise ConfigError("rational weights must be strictly positive")
            object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return len(self.degrees)

    @property
    def rational(self):
        return self.weights is not None

    def tabulate(self, direction, t):
        """Per-direction basis table ``(span, values, derivatives)`` at parameters `t`."""
        p, kn = self.degrees[direction], self.knots[direction]
        t = np.asarray(t, dtype=float)
        return basis_funs(kn, p, t, find_span(kn, p, t))

    def combine(self, tables):
        """Evaluate the map and its Jacobian from per-direction basis tables.

        `tables` holds one ``(span, values, derivatives)`` triple per direction,
        all for the same ``P`` points.  Returns ``(x, jac)`` with shapes
        ``(P, dim)`` and ``(P, dim, dim)``, ``jac[:, i, k] = d x_i / d xhat_k``.
        """
        n = self.dim
        P = tables[0][0].shape[0]
        W = np.zeros(P)
        dW = np.zeros((n, P))
        C = np.zeros((P, n))
        dC = np.zeros((n, P, n))
        for local in itertools.product(*(range(p + 1) for p in self.degrees)):
            idx = tuple(tables[d][0] - self.degrees[d] + local[d] for d in range(n))
            b = np.ones(P)
            for d in range(n):
                b = b * tables[d][1][:, local[d]]
            db = []
            for k in range(n):
                v = np.ones(P)
                for d in range(n):
                    v = v * (tables[d][2] if d == k else tables[d][1])[:, local[d]]
                db.append(v)
            w = self.weights[idx] if self.rational else 1.0
            cp = self.control[idx]
            bw = b * w
            W += bw
            C += bw[:, None] * cp
            for k in range(n):
                dbw = db[k] * w
                dW[k] += dbw
                dC[k] += dbw[:, None] * cp
        x = C / W[:, None]
        jac = np.empty((P, n, n))
        for k in range(n):
            jac[:, :, k] = (dC[k] - x * dW[k][:, None]) / W[:, None]
        return x, jac

    def basis_matrices(self, direction, t):
        """Dense ``(len(t), ncoef)`` basis value and derivative matrices in one direction."""
        span, vals, ders = self.tabulate(direction, t)
        p, nc = self.degrees[direction], self.control.shape[direction]
        B = np.zeros((len(span), nc))
        dB = np.zeros((len(span), nc))
        cols = span[:, None] - p + np.arange(p + 1)[None, :]
        rows = np.arange(len(span))[:, None]
        B[rows, cols] = vals
        dB[rows, cols] = ders
        return B, dB

    def evaluate_grid(self, axis_params):
        """Map and Jacobian on the tensor grid ``axis_params[0] x axis_params[1] x ...``.

        Returns ``x`` of shape ``(P0, P1, ..., dim)`` and ``jac`` of shape
        ``(P0, P1, ..., dim, dim)``.
        """
        return self.evaluate_tensor([self.basis_matrices(d, t) for d, t in enumerate(axis_params)])

    def evaluate_tensor(self, mats):
        """Like :meth:`evaluate_grid`, from precomputed :meth:`basis_matrices` per direction."""
        n = self.dim
        if self.rational:
            cw = np.concatenate([self.control * self.weights[..., None],
                                 self.weights[..., None]], axis=-1)
        else:
            cw = np.concatenate([self.control, np.ones(self.control.shape[:-1] + (1,))], axis=-1)

        def contract(k):
            out = cw
            for d in range(n):
                M = mats[d][1] if d == k else mats[d][0]
                out = np.moveaxis(np.tensordot(M, out, axes=(1, d)), 0, d)
            return out

        val = contract(None)
        W = val[..., n:]
        x = val[..., :n] / W
        jac = np.empty(x.shape + (n,))
        for k in range(n):
            dv = contract(k)
            jac[..., k] = (dv[..., :n] - x * dv[..., n:]) / W
        return x, jac

    def evaluate(self, points):
        """Physical points and Jacobians at reference points of shape ``(P, dim)``."""
        pts = _check_points(points, self.dim)
        tables = [self.tabulate(d, pts[:, d]) for d in range(self.dim)]
        return self.combine(tables)


def _check_points(points, dim):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != dim:
        raise ValueError(f"expected points with {dim} coordinates")
    if np.any(~np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("reference point outside the unit domain")
    return pts


def map_point(g, xhat):
    x, _ = g.evaluate(np.reshape(xhat, (-1, g.dim)))
    return x[0] if np.ndim(xhat) == 1 else x


def jacobian(g, xhat):
    _, jac = g.evaluate(np.reshape(xhat, (-1, g.dim)))
    return jac[0] if np.ndim(xhat) == 1 else jac


def _adjugate(jac):
    n = jac.shape[-1]
    if n == 1:
        return np.ones_like(jac)
    if n == 2:
        adj = np.empty_like(jac)
        adj[..., 0, 0] = jac[..., 1, 1]
        adj[..., 1, 1] = jac[..., 0, 0]
        adj[..., 0, 1] = -jac[..., 0, 1]
        adj[..., 1, 0] = -jac[..., 1, 0]
        return adj
    if n == 3:
        c0, c1, c2 = jac[..., :, 0], jac[..., :, 1], jac[..., :, 2]
        # rows of the adjugate are cross products of Jacobian columns
        return np.stack([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)], axis=-2)
    raise ValueError("only dimensions 1-3 are supported")


def det_and_pullback(jac):
    """Determinant and ``K = |det J| J^-1 J^-T`` for stacked Jacobians.

    Raises :class:`SingularJacobianError` if any ``|det J| < 1e-14`` or the
    orientation changes sign within the batch.
    """
    det = np.linalg.det(jac) if jac.shape[-1] > 3 else _det(jac)
    if np.any(np.abs(det) < DET_TOL):
        raise SingularJacobianError("geometry Jacobian is singular at an evaluation point")
    if not (np.all(det > 0) or np.all(det < 0)):
        raise SingularJacobianError("geometry map is not orientation preserving (det changes sign)")
    adj = _adjugate(jac)
    K = np.matmul(adj, np.swapaxes(adj, -1, -2)) / np.abs(det)[..., None, None]
    return det, K


def _det(jac):
    n = jac.shape[-1]
    if n == 1:
        return jac[..., 0, 0]
    if n == 2:
        return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return np.sum(jac[..., :, 0] * np.cross(jac[..., :, 1], jac[..., :, 2]), axis=-1)


def pullback_coefficient(g, xhat):
    """Reference-domain diffusion tensor ``Dphi^-1 Dphi^-T / |det(Dphi^-1)|``."""
    jac = jacobian(g, xhat)
    return det_and_pullback(jac)[1]


# ---------------------------------------------------------------------------
# Built-in geometries

def _identity(n):
    grids = np.meshgrid(*([np.array([0.0, 1.0])] * n), indexing="ij")
    control = np.stack(grids, axis=-1)
    return PatchMap((1,) * n, ([0, 0, 1, 1],) * n, control, name="identity")


def _annulus_control(radii):
    # angular direction: exact 90 degree arc with weights (1, 1/sqrt(2), 1)
    arc = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    control = np.array([[r * a for a in arc] for r in radii])
    weights = np.tile([1.0, 1.0 / math.sqrt(2.0), 1.0], (len(radii), 1))
    return control, weights


def _quarter_annulus():
    # direction 0: radius 1 -> 2 (linear), direction 1: angle 0 -> pi/2
    control, weights = _annulus_control([1.0, 2.0])
    return PatchMap((1, 2), ([0, 0, 1, 1], [0, 0, 0, 1, 1, 1]), control, weights,
                    name="quarter_annulus")


# radial scaling factors applied to the 3x3 quarter-annulus control net
BUMP_PATTERN = np.array([
    [0.0, 0.00, 0.0],
    [0.0, 0.04, 0.0],
    [0.0, -0.02, 0.0],
])


def _quarter_annulus_bumps():
    # degree 2 radially (rings at 1, 1.5, 2) so the net has an interior point,
    # then displaced radially by BUMP_PATTERN
    control, weights = _annulus_control([1.0, 1.5, 2.0])
    control = control * (1.0 + BUMP_PATTERN)[..., None]
    return PatchMap((2, 2), ([0, 0, 0, 1, 1, 1],) * 2, control, weights,
                    name="quarter_annulus_bumps")


BENT_BOX_TWIST = 0.5
BENT_BOX_BEND = 0.4


def _bent_box():
    # triquadratic Bezier box; control points are the images of the Greville
    # points (0, 1/2, 1)^3 under a twist about the vertical axis through
    # (1/2, 1/2) by BENT_BOX_TWIST * z and a bend x += BENT_BOX_BEND * z^2
    g = np.array([0.0, 0.5, 1.0])
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    theta = BENT_BOX_TWIST * Z
    xc, yc = X - 0.5, Y - 0.5
    x = 0.5 + np.cos(theta) * xc - np.sin(theta) * yc + BENT_BOX_BEND * Z ** 2
    y = 0.5 + np.sin(theta) * xc + np.cos(theta) * yc
    control = np.stack([x, y, Z], axis=-1)
    return PatchMap((2, 2, 2), ([0, 0, 0, 1, 1, 1],) * 3, control, name="bent_box")


GEOMETRIES = ("identity", "quarter_annulus", "quarter_annulus_bumps", "bent_box")


def builtin_geometry(name, n=2):
    if name == "identity":
        if n not in (1, 2, 3):
            raise ConfigError("identity geometry needs dimension 1, 2 or 3")
        return _identity(n)
    if name in ("quarter_annulus", "quarter_annulus_bumps"):
        if n != 2:
            raise ConfigError(f"{name} is a 2D geometry")
        return _quarter_annulus() if name == "quarter_annulus" else _quarter_annulus_bumps()
    if name == "bent_box":
        if n != 3:
            raise ConfigError("bent_box is a 3D geometry")
        return _bent_box()
    raise ConfigError(f"unknown geometry {name!r}; choose from {', '.join(GEOMETRIES)}")


# ---------------------------------------------------------------------------
# Text I/O

def _fmt(v):
    return repr(float(v))


def write_geometry(g, path):
    lines = ["# surrogate_iga patch geometry", f"dim {g.dim}", f"rational {int(g.rational)}",
             "degrees " + " ".join(str(p) for p in g.degrees)]
    lines += ["knots " + " ".join(_fmt(k) for k in kn) for kn in g.knots]
    shape = g.control.shape[:-1]
    lines.append("shape " + " ".join(str(s) for s in shape))
    for idx in itertools.product(*(range(s) for s in reversed(shape))):
        idx = idx[::-1]
        row = [_fmt(c) for c in g.control[idx]]
        if g.rational:
            row.append(_fmt(g.weights[idx]))
        lines.append(" ".join(row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_geometry(path):
    with open(path, encoding="ascii") as fh:
        rows = [ln.split("#", 1)[0].split() for ln in fh]
    rows = [r for r in rows if r]
    header = {}
    knots = []
    i = 0
    try:
        while i < len(rows) and rows[i][0] in ("dim", "rational", "degrees", "knots", "shape"):
            key, vals = rows[i][0], rows[i][1:]
            if key == "knots":
                knots.append([float(v) for v in vals])
            else:
                header[key] = [int(v) for v in vals]
            i += 1
        dim = header["dim"][0]
        rational = bool(header.get("rational", [0])[0])
        degrees = tuple(header["degrees"])
        shape = tuple(header["shape"])
        body = np.array([[float(v) for v in r] for r in rows[i:]])
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed geometry file {path}: {exc}") from exc
    ncol = dim + int(rational)
    if body.shape != (int(np.prod(shape)), ncol):
        raise ConfigError(f"geometry file {path}: expected {np.prod(shape)} rows of {ncol} numbers")
    body = body.reshape(tuple(reversed(shape)) + (ncol,))
    body = np.transpose(body, tuple(reversed(range(dim))) + (dim,))
    control = body[..., :dim]
    weights = body[..., dim] if rational else None
    return PatchMap(degrees, tuple(knots), control, weights, name=str(path))
