"""Domains, Brownian walkers, and exit detection.

All domains shipped here are convex, described as an intersection of
half-planes ``n.x > c`` (unit ``n``) and discs ``|x - center| < R``.  For a
convex domain the first boundary crossing of a segment that starts inside is
the smallest crossing parameter among the constraints violated at its end.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ExitRecord:
    exit_point: np.ndarray
    exit_fraction: float


class ConvexDomain:
    dim = 2

    def __init__(self, halfplanes=(), discs=()):
        self.halfplanes = [(np.asarray(n, dtype=np.float64) / np.linalg.norm(n), float(c))
                           for n, c in halfplanes]
        self.discs = [(np.asarray(ctr, dtype=np.float64), float(R)) for ctr, R in discs]

    # signed distance-like value per constraint; > 0 inside
    def _margins(self, x):
        x = np.asarray(x, dtype=np.float64)
        cols = [x @ n - c for n, c in self.halfplanes]
        cols += [R - np.linalg.norm(x - ctr, axis=-1) for ctr, R in self.discs]
        return np.stack(cols, axis=-1)

    def contains(self, x):
        """Open-interior membership."""
        return np.all(self._margins(x) > 0, axis=-1)

    def on_boundary(self, x, tol=1e-12):
        m = self._margins(x)
        lo = m.min(axis=-1)
        return (lo >= -tol) & (lo <= tol)

    def category(self, x):
        return np.zeros(np.shape(x)[:-1], dtype=np.int64)

    def bounding_box(self):
        raise NotImplementedError

    def sample_uniform(self, n, rng):
        """``n`` points uniform on the domain by rejection from the bounding box."""
        lo, hi = self.bounding_box()
        out = np.empty((0, self.dim))
        while out.shape[0] < n:
            need = n - out.shape[0]
            cand = lo + (hi - lo) * rng.random((2 * need + 16, self.dim))
            out = np.concatenate([out, cand[self.contains(cand)]])
        return out[:n]

    def sample_boundary(self, n, rng):
        raise NotImplementedError

    def exit(self, x0, x1):
        """First crossing of segments ``x0 -> x1`` with the boundary.

        Rows of ``x1`` must lie outside the open domain.  Returns the exit points
        (snapped onto the crossed boundary piece) and fractions
        ``lam = |exit - x0| / |x1 - x0|``.
        """
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
        d = x1 - x0
        n_rows = x0.shape[0]
        k_total = len(self.halfplanes) + len(self.discs)
        lam = np.full((n_rows, k_total), np.inf)
        for k, (nv, c) in enumerate(self.halfplanes):
            g0 = x0 @ nv - c
            g1 = x1 @ nv - c
            hit = g1 <= 0
            with np.errstate(divide="ignore", invalid="ignore"):
                lam[hit, k] = g0[hit] / (g0[hit] - g1[hit])
        off = len(self.halfplanes)
        for k, (ctr, R) in enumerate(self.discs):
            p = x0 - ctr
            hit = np.linalg.norm(x1 - ctr, axis=1) >= R
            a = np.einsum("ij,ij->i", d, d)
            b = 2.0 * np.einsum("ij,ij->i", p, d)
            c = np.einsum("ij,ij->i", p, p) - R * R
            disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                q = -0.5 * (b + np.where(b >= 0, disc, -disc))
                root = np.where(b >= 0, c / q, q / a)
            lam[hit, off + k] = root[hit]
        which = np.argmin(lam, axis=1)
        frac = np.clip(lam[np.arange(n_rows), which], 0.0, 1.0)
        if np.any(~np.isfinite(lam[np.arange(n_rows), which])):
            raise ValueError("exit requested for a segment that stays inside the domain")
        pts = x0 + frac[:, None] * d
        for k, (nv, c) in enumerate(self.halfplanes):
            sel = which == k
            pts[sel] -= np.outer(pts[sel] @ nv - c, nv)
        for k, (ctr, R) in enumerate(self.discs):
            sel = which == off + k
            rel = pts[sel] - ctr
            pts[sel] = ctr + rel * (R / np.linalg.norm(rel, axis=1))[:, None]
        length = np.linalg.norm(d, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(length > 0, np.linalg.norm(pts - x0, axis=1) / length, 0.0)
        return pts, np.clip(frac, 0.0, 1.0)


class CircularSector(ConvexDomain):
    """``{(r, phi): 0 <= r <= radius, 0 <= phi <= angle}`` with ``angle < pi``."""

    kind = "sector"

    def __init__(self, radius=1.0, angle=np.pi / 6):
        if not 0 < angle < np.pi:
            raise ValueError("sector angle must lie in (0, pi) to stay convex")
        self.radius = float(radius)
        self.angle = float(angle)
        super().__init__(
            halfplanes=[((0.0, 1.0), 0.0), ((np.sin(angle), -np.cos(angle)), 0.0)],
            discs=[((0.0, 0.0), radius)],
        )

    def bounding_box(self):
        a, R = self.angle, self.radius
        lo = np.array([min(0.0, R * np.cos(a)), 0.0])
        hi = np.array([R, R * (np.sin(a) if a <= np.pi / 2 else 1.0)])
        return lo, hi

    def piece_lengths(self):
        return np.array([self.radius, self.radius, self.radius * self.angle])

    def sample_boundary(self, n, rng):
        lengths = self.piece_lengths()
        edges = np.cumsum(lengths) / lengths.sum()
        piece = np.searchsorted(edges, rng.random(n), side="right")
        t = rng.random(n)
        out = np.empty((n, 2))
        R, a = self.radius, self.angle
        s0, s1, s2 = piece == 0, piece == 1, piece == 2
        out[s0] = np.column_stack([R * t[s0], np.zeros(s0.sum())])
        out[s1] = (R * t[s1])[:, None] * np.array([np.cos(a), np.sin(a)])
        phi = a * t[s2]
        out[s2] = R * np.column_stack([np.cos(phi), np.sin(phi)])
        return out

    def area(self):
        return 0.5 * self.radius ** 2 * self.angle


class AnnulusWithInterface(ConvexDomain):
    """Disc of radius ``r_outer`` split by the circle ``|x| = r_interface``.

    Category 0 is ``|x| < r_interface``; category 1 is the outer ring (ties go
    to the ring).  Only the outer circle is a boundary.
    """

    kind = "interface_disc"

    def __init__(self, r_interface=1.0, r_outer=2.0):
        if not 0 < r_interface < r_outer:
            raise ValueError("need 0 < r_interface < r_outer")
        self.r_interface = float(r_interface)
        self.r_outer = float(r_outer)
        super().__init__(discs=[((0.0, 0.0), r_outer)])

    def category(self, x):
        return (np.linalg.norm(x, axis=-1) >= self.r_interface).astype(np.int64)

    def bounding_box(self):
        R = self.r_outer
        return np.array([-R, -R]), np.array([R, R])

    def sample_boundary(self, n, rng):
        phi = 2.0 * np.pi * rng.random(n)
        return self.r_outer * np.column_stack([np.cos(phi), np.sin(phi)])

    def area(self):
        return np.pi * self.r_outer ** 2


class Square(ConvexDomain):
    kind = "square"

    def __init__(self, lo=-1.0, hi=1.0):
        if not lo < hi:
            raise ValueError("need lo < hi")
        self.lo = float(lo)
        self.hi = float(hi)
        super().__init__(halfplanes=[((1.0, 0.0), lo), ((-1.0, 0.0), -hi),
                                     ((0.0, 1.0), lo), ((0.0, -1.0), -hi)])

    def bounding_box(self):
        return np.array([self.lo, self.lo]), np.array([self.hi, self.hi])

    def sample_boundary(self, n, rng):
        side = rng.integers(0, 4, size=n)
        t = self.lo + (self.hi - self.lo) * rng.random(n)
        out = np.empty((n, 2))
        fixed = np.where(side % 2 == 0, self.lo, self.hi)
        horiz = side < 2
        out[:, 0] = np.where(horiz, t, fixed)
        out[:, 1] = np.where(horiz, fixed, t)
        return out

    def area(self):
        return (self.hi - self.lo) ** 2


def gaussian_step(x, dt, rng):
    """``x + sqrt(dt) * z`` with ``z`` standard normal, same shape as ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return x + np.sqrt(dt) * rng.standard_normal(x.shape)


def detect_exit(x0, x1, domain):
    """ExitRecord for one step, or None when the endpoint is still inside.

    A path that leaves and re-enters within the step is not detected.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if not domain.contains(x0[None])[0]:
        raise ValueError(f"start point {x0} is not inside the domain")
    if domain.contains(x1[None])[0]:
        return None
    pts, lam = domain.exit(x0[None], x1[None])
    return ExitRecord(pts[0], float(lam[0]))


@dataclass
class WalkerEnsemble:
    positions: np.ndarray
    rng: np.random.Generator
    params: np.ndarray | None = None

    @classmethod
    def uniform(cls, domain, n, rng, param_range=None):
        pos = domain.sample_uniform(n, rng)
        params = None
        if param_range is not None:
            lo, hi = param_range
            params = lo + (hi - lo) * rng.random(n)
        return cls(pos, rng, params)

    def __len__(self):
        return self.positions.shape[0]

    def categories(self, domain):
        return domain.category(self.positions)


def advance_ensemble(ensemble: WalkerEnsemble, dt, domain):
    """One Gaussian step per walker; walkers that leave are redrawn uniformly."""
    new = gaussian_step(ensemble.positions, dt, ensemble.rng)
    out = ~domain.contains(new)
    n_out = int(out.sum())
    if n_out:
        new[out] = domain.sample_uniform(n_out, ensemble.rng)
    ensemble.positions = new
    return ensemble


def advance_param_walkers(params, sigma_r, dt, param_range, rng):
    """Brownian step for parameter walkers; values leaving the range are redrawn uniformly."""
    lo, hi = param_range
    if not lo < hi:
        raise ValueError("need r_min < r_max")
    params = np.asarray(params, dtype=np.float64)
    new = params + sigma_r * np.sqrt(dt) * rng.standard_normal(params.shape)
    out = (new < lo) | (new > hi)
    n_out = int(out.sum())
    if n_out:
        new[out] = lo + (hi - lo) * rng.random(n_out)
    return new
