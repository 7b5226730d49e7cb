"""Problem instances: Laplace on a sector, a circular interface problem, and a taxis model."""
from __future__ import annotations

from functools import partial
import inspect

import numpy as np

from .bellman import ProblemSpec
from .sde import AnnulusWithInterface, CircularSector, Square

SECTOR_ANGLE = np.pi / 6


def exact_u1(x):
    x = np.atleast_2d(x)
    return x[:, 0] ** 2 - x[:, 1] ** 2 - 0.25 * x[:, 0] * x[:, 1]


def exact_u2(x, angle=SECTOR_ANGLE):
    """r^(2/3) sin(2 phi / 3) with phi clipped into the sector."""
    x = np.atleast_2d(x)
    r = np.hypot(x[:, 0], x[:, 1])
    phi = np.clip(np.arctan2(x[:, 1], x[:, 0]), 0.0, angle)
    return r ** (2.0 / 3.0) * np.sin(2.0 * phi / 3.0)


def laplace(target="u1", radius=1.0, angle=SECTOR_ANGLE):
    exact = {"u1": exact_u1, "u2": lambda x: exact_u2(x, angle)}[target]
    return ProblemSpec(
        name=f"laplace_{target}",
        domain=CircularSector(radius, angle),
        boundary=lambda x, p=None: exact(x),
        exact=lambda x, p=None: exact(x),
        settings={"target": target, "radius": radius, "angle": angle},
    )


def exact_interface(r, sigma0=0.2, sigma1=0.7):
    """Radial solution; r == 1 takes the outer branch."""
    r = np.asarray(r, dtype=np.float64)
    inner = r ** 2 / (4 * sigma0)
    outer = r ** 2 / (4 * sigma1) + (1 - 1 / (4 * sigma1) + 1 / (4 * sigma0))
    return np.where(r < 1.0, inner, outer)


def exact_interface_slope(r, sigma0=0.2, sigma1=0.7):
    r = np.asarray(r, dtype=np.float64)
    return np.where(r < 1.0, r / (2 * sigma0), r / (2 * sigma1))


def sigma_eps(x, sigma0, sigma1, eps):
    """Sigmoid-smoothed conductivity and its gradient at points (n, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rho = np.linalg.norm(x, axis=1)
    s = 0.5 * (1.0 + np.tanh(0.5 * (rho - 1.0) / eps))
    value = (sigma1 - sigma0) * s + sigma0
    dsdr = (sigma1 - sigma0) * s * (1.0 - s) / eps
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(rho[:, None] > 0, x / rho[:, None], 0.0)
    return value, dsdr[:, None] * unit


def interface(sigma0=0.2, sigma1=0.7, dv=1.0, g=1.0, eps=None, dt=5e-5):
    """Potential problem div(sigma grad u) = g on the radius-2 disc with [u] = dv on |x| = 1.

    ``eps`` defaults to sqrt(dt) so the smoothed drift band is seen by walkers.
    """
    if eps is None:
        eps = float(np.sqrt(dt))
    h_val = 1 + 1 / (4 * sigma0) + 3 / (4 * sigma1)

    def drift(x, u=None, p=None):
        s, grad = sigma_eps(x, sigma0, sigma1, eps)
        return grad / (2 * s[:, None])

    def reward(x, u=None, p=None):
        s, _ = sigma_eps(x, sigma0, sigma1, eps)
        return g / (2 * s)

    def exact(x, p=None):
        x = np.atleast_2d(x)
        return exact_interface(np.linalg.norm(x, axis=1), sigma0, sigma1)

    return ProblemSpec(
        name="interface",
        domain=AnnulusWithInterface(1.0, 2.0),
        boundary=lambda x, p=None: np.full(np.atleast_2d(x).shape[0], h_val),
        drift=drift,
        reward=reward,
        jump=dv,
        exact=exact,
        encoding="onehot",
        settings={"sigma0": sigma0, "sigma1": sigma1, "dv": dv, "g": g, "eps": eps,
                  "h": h_val},
    )


def stimulus(x):
    """c(x) = 1/2 sin(pi (x1+1)/2) sin(pi (x2+1)/2) with gradient and Laplacian."""
    x = np.atleast_2d(x)
    a = 0.5 * np.pi * (x[:, 0] + 1.0)
    b = 0.5 * np.pi * (x[:, 1] + 1.0)
    sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
    c = 0.5 * sa * sb
    grad = 0.25 * np.pi * np.column_stack([ca * sb, sa * cb])
    lap = -0.5 * np.pi ** 2 * c
    return c, grad, lap


def kinetics(u, r, r0):
    return r * u * (1.0 - u) + r0


def taxis_drift_reward(x, u, chi, D, r, r0):
    """F = -(chi / 2D) grad c,  G = (chi u Lap c - H(u)) / 2D."""
    _, grad, lap = stimulus(x)
    F = -(chi / (2 * D)) * grad
    G = (chi * u * lap - kinetics(u, r, r0)) / (2 * D)
    return F, G


def taxis(chi=5.0, D=0.1, r=8.0, r0=0.5, r_range=None, sigma_r=1.0):
    """Steady taxis model div(D grad u - chi u grad c) + r u (1 - u) + r0 = 0, u = 0 on the square.

    With ``r_range`` set, r becomes a per-walker parameter and a network input.
    """
    family = r_range is not None

    def drift(x, u=None, p=None):
        _, grad, _ = stimulus(x)
        return -(chi / (2 * D)) * grad

    def reward(x, u, p=None):
        rate = p if family else r
        _, _, lap = stimulus(x)
        return (chi * u * lap - kinetics(u, rate, r0)) / (2 * D)

    settings = {"chi": chi, "D": D, "r0": r0}
    if family:
        settings.update(r_min=float(r_range[0]), r_max=float(r_range[1]), sigma_r=sigma_r)
    else:
        settings["r"] = r
    return ProblemSpec(
        name="taxis_family" if family else "taxis",
        domain=Square(-1.0, 1.0),
        boundary=lambda x, p=None: np.zeros(np.atleast_2d(x).shape[0]),
        drift=drift,
        reward=reward,
        uses_u=True,
        encoding="param" if family else "coords",
        param_range=tuple(r_range) if family else None,
        param_sigma=sigma_r,
        settings=settings,
    )


def taxis_family(chi=5.0, D=0.1, r0=0.5, r_min=0.3, r_max=20.0, sigma_r=1.0):
    return taxis(chi, D, r0=r0, r_range=(r_min, r_max), sigma_r=sigma_r)


PROBLEMS = {
    "laplace_u1": partial(laplace, "u1"),
    "laplace_u2": partial(laplace, "u2"),
    "interface": interface,
    "taxis": taxis,
    "taxis_family": taxis_family,
}


def make_problem(name, **params):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)


def problem_parameters(name):
    """Keyword parameters accepted by the named problem factory, with defaults."""
    factory = PROBLEMS[name]
    sig = inspect.signature(factory)
    return {k: v.default for k, v in sig.parameters.items()
            if v.kind is inspect.Parameter.KEYWORD_ONLY or v.default is not inspect.Parameter.empty}
