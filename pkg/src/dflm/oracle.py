"""Reference solutions and error metrics.

The finite-difference solver handles the taxis model on [-1, 1]^2 with zero
Dirichlet data; the metrics compare any callable ``u(points)`` with a
reference on a fixed masked quadrature grid.
"""
from __future__ import annotations

from dataclasses import dataclass
import csv
import json

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .problems import kinetics, stimulus


@dataclass
class Grid2D:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # shape (len(y), len(x)), row-major in y
    meta: dict | None = None

    @property
    def shape(self):
        return self.values.shape

    def points(self):
        X, Y = np.meshgrid(self.x, self.y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def interpolator(self):
        """Bilinear interpolant ``f(points) -> values``."""
        interp = RegularGridInterpolator((self.y, self.x), self.values, method="linear")
        return lambda pts, p=None: interp(np.atleast_2d(pts)[:, ::-1])

    def center_value(self):
        ny, nx = self.values.shape
        return float(self.values[ny // 2, nx // 2])

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            if self.meta:
                f.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
            w = csv.writer(f)
            w.writerow(["x", "y", "value"])
            for j, yv in enumerate(self.y):
                for i, xv in enumerate(self.x):
                    w.writerow([repr(float(xv)), repr(float(yv)), repr(float(self.values[j, i]))])

    @classmethod
    def from_csv(cls, path):
        meta = None
        rows = []
        with open(path) as f:
            lines = f.readlines()
        if lines and lines[0].startswith("# "):
            meta = json.loads(lines[0][2:])
            lines = lines[1:]
        reader = csv.reader(lines)
        header = next(reader)
        if header != ["x", "y", "value"]:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = np.array([[float(v) for v in row] for row in reader])
        xs = np.unique(rows[:, 0])
        ys = np.unique(rows[:, 1])
        values = rows[:, 2].reshape(len(ys), len(xs))
        return cls(xs, ys, values, meta)


@dataclass
class ErrorReport:
    relative_l2: float
    max_abs: float
    pointwise: Grid2D | None = None

    def to_dict(self):
        return {"relative_l2": self.relative_l2, "max_abs": self.max_abs}


class QuadratureGrid:
    """Midpoint rule on an ``n x n`` tensor grid over the bounding box, masked to the domain."""

    def __init__(self, domain, n=256):
        lo, hi = domain.bounding_box()
        self.n = n
        self.x = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
        self.y = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
        X, Y = np.meshgrid(self.x, self.y)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        self.mask = domain.contains(pts)
        self.points = pts[self.mask]
        self.cell = (hi[0] - lo[0]) * (hi[1] - lo[1]) / n ** 2

    def integrate(self, f):
        return self.cell * float(np.sum(f))

    def relative_l2(self, u_approx, u_ref):
        ref = _values(u_ref, self.points)
        norm = np.sqrt(np.sum(ref ** 2))
        if norm == 0:
            raise ValueError("reference has zero L2 norm; relative error undefined")
        return float(np.sqrt(np.sum((_values(u_approx, self.points) - ref) ** 2)) / norm)

    def report(self, u_approx, u_ref):
        diff = np.full(self.mask.shape, np.nan)
        d = _values(u_approx, self.points) - _values(u_ref, self.points)
        diff[self.mask] = np.abs(d)
        grid = Grid2D(self.x, self.y, diff.reshape(self.n, self.n))
        return ErrorReport(self.relative_l2(u_approx, u_ref), float(np.max(np.abs(d))), grid)


def _values(u, points):
    if isinstance(u, Grid2D):
        return u.interpolator()(points)
    return np.asarray(u(points), dtype=np.float64)


def relative_l2(u_approx, u_ref, domain, n=256):
    """sqrt(int (u_approx - u_ref)^2) / sqrt(int u_ref^2) over the domain."""
    return QuadratureGrid(domain, n).relative_l2(u_approx, u_ref)


def radial_average(u, r, T=10_000, category=None):
    """(1/T) sum_k u(r cos(2 pi k / T), r sin(2 pi k / T)).

    ``category`` forces the subdomain tag for one-hot networks; otherwise the
    evaluator classifies the points itself.
    """
    k = np.arange(1, T + 1)
    ang = 2.0 * np.pi * k / T
    pts = r * np.column_stack([np.cos(ang), np.sin(ang)])
    vals = u(pts) if category is None else u(pts, categories=np.full(T, category))
    return float(np.mean(vals))


def radial_profile(u, radii, T=10_000):
    return np.array([radial_average(u, r, T) for r in radii])


def radial_profile_error(u, exact, n_r=200, r_max=2.0, T=10_000):
    """Relative L2 of the circular average against ``exact`` over the disc (weight r dr).

    Radii are cell midpoints, so r = 1 itself is never sampled.
    """
    radii = (np.arange(n_r) + 0.5) * r_max / n_r
    avg = radial_profile(u, radii, T)
    ref = np.array([radial_average(exact, r, 16) for r in radii])
    return float(np.sqrt(np.sum(radii * (avg - ref) ** 2) / np.sum(radii * ref ** 2)))


def learned_jump(u, r=1.0, T=10_000):
    """Circular average of u(x, outer tag) - u(x, inner tag) on |x| = r."""
    return radial_average(u, r, T, category=1) - radial_average(u, r, T, category=0)


def family_slice(u_family, points, r_values):
    """Table ``[len(r_values), len(points)]`` of the parameterized network."""
    points = np.atleast_2d(points)
    return np.array([u_family(points, params=np.full(len(points), r)) for r in r_values])


def _derivative_matrices(n, h):
    """1-D centered first and second difference matrices on ``n`` interior nodes."""
    e = np.ones(n)
    d1 = sparse.diags([-e[:-1], e[:-1]], [-1, 1]) / (2 * h)
    d2 = sparse.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]) / h ** 2
    return d1.tocsr(), d2.tocsr()


class PicardDivergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def fd_solve_taxis(chi, D, r, r0, nx, damping=0.7, tol=1e-10, max_iter=2000,
                   pseudo_dt=1e-2, pseudo_growth=1.5):
    """Solve D Lap u - chi div(u grad c) + r u (1 - u) + r0 = 0 on [-1, 1]^2, u = 0 on the edge.

    Second-order centered differences with analytic grad c and Lap c.  The
    quadratic term is frozen at the previous iterate,

        (A - r diag(u_k) - I / tau_k) u* = -r0 - r u_k - u_k / tau_k,
        u_{k+1} = damping * u* + (1 - damping) * u_k,

    where the pseudo-time step tau_k grows geometrically, so early iterations
    behave like implicit time stepping and late ones like plain Picard.
    Starting plain Picard from zero overshoots (the r = 0 solution peaks near
    exp(chi max c / D)) and can land on a spurious sign-changing branch.
    """
    nx = int(nx)
    if nx < 65 or nx % 2 == 0:
        raise ValueError(f"nx must be odd (center sample) and at least 65, got {nx}")
    h = 2.0 / (nx - 1)
    xs = np.linspace(-1.0, 1.0, nx)
    n = nx - 2
    X, Y = np.meshgrid(xs[1:-1], xs[1:-1])
    pts = np.column_stack([X.ravel(), Y.ravel()])
    _, grad, lap = stimulus(pts)
    d1, d2 = _derivative_matrices(n, h)
    eye = sparse.identity(n, format="csr")
    Dx = sparse.kron(eye, d1, format="csr")  # x varies fastest
    Dy = sparse.kron(d1, eye, format="csr")
    L = sparse.kron(eye, d2, format="csr") + sparse.kron(d2, eye, format="csr")
    A = (D * L - chi * (sparse.diags(grad[:, 0]) @ Dx + sparse.diags(grad[:, 1]) @ Dy)
         - chi * sparse.diags(lap)).tocsr()
    ident = sparse.identity(n * n, format="csr")

    def residual(u):
        return A @ u + kinetics(u, r, r0)

    u = np.zeros(n * n)
    history = [float(np.max(np.abs(residual(u))))]
    tau = pseudo_dt
    for _ in range(max_iter):
        if history[-1] < tol:
            break
        M = (A - r * sparse.diags(u) - ident / tau).tocsc()
        u_new = spsolve(M, -r0 - r * u - u / tau)
        u = damping * u_new + (1.0 - damping) * u
        tau *= pseudo_growth
        history.append(float(np.max(np.abs(residual(u)))))
        if not np.isfinite(history[-1]):
            break
    if not history[-1] < tol:
        raise PicardDivergence(
            f"Picard iteration did not reach residual {tol:g}; last {history[-1]:.3e}", history)
    values = np.zeros((nx, nx))
    values[1:-1, 1:-1] = u.reshape(n, n)
    return Grid2D(xs, xs.copy(), values,
                  {"chi": chi, "D": D, "r": r, "r0": r0, "nx": nx,
                   "picard_iterations": len(history) - 1, "residual": history[-1]})


def fd_reference(problem, nx=129, r=None):
    """FD solution for a taxis problem's settings; ``r`` overrides the growth rate."""
    s = problem.settings
    if "chi" not in s:
        raise ValueError(f"no finite-difference reference for problem {problem.name!r}")
    rate = s.get("r") if r is None else r
    if rate is None:
        raise ValueError("family problems need an explicit r")
    return fd_solve_taxis(s["chi"], s["D"], float(rate), s["r0"], nx)


def poisson_square_series(x, y, a=1.0, terms=200):
    """Series solution of Lap w = -1 on [-a, a]^2 with w = 0 on the edge."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = 0.5 * (a * a - x * x)
    for i in range(terms):
        k = 2 * i + 1
        coef = 16.0 * a * a / (np.pi ** 3 * k ** 3) * (-1) ** i
        w = w - coef * np.cos(k * np.pi * x / (2 * a)) * _cosh_ratio(k * np.pi * y / (2 * a),
                                                                      k * np.pi / 2)
    return w


def _cosh_ratio(s, t):
    """cosh(s) / cosh(t) for |s| <= t without overflow."""
    s = np.abs(s)
    return np.exp(s - t) * (1 + np.exp(-2 * s)) / (1 + np.exp(-2 * t))
