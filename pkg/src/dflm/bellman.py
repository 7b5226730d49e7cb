"""One-step Bellman targets for  1/2 Lap u + F.grad u - G = 0  sampled by Brownian walkers.

With ordinary Brownian walkers the drift F enters through the discount
exp(F.dB - |F|^2 tau / 2) and the source G through the reward G tau, both
evaluated at the start of the step.  Steps that leave the domain are cut at the
boundary crossing, where the Dirichlet value replaces the network value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nets


@dataclass
class ProblemSpec:
    """A Dirichlet problem  1/2 Lap u + F(x,u).grad u - G(x,u) = 0  on ``domain``.

    ``drift(x, u, p)`` returns (n, d); ``reward(x, u, p)`` returns (n,); ``u`` is
    None unless ``uses_u`` is set; ``p`` is the per-point PDE parameter for
    family problems and None otherwise.  ``jump`` is the prescribed
    ``u(outer side) - u(inner side)`` across the interface of a two-category
    domain.
    """

    name: str
    domain: object
    boundary: Callable
    drift: Optional[Callable] = None
    reward: Optional[Callable] = None
    uses_u: bool = False
    jump: Optional[float] = None
    exact: Optional[Callable] = None
    encoding: str = "coords"
    param_range: Optional[tuple] = None
    param_sigma: float = 1.0
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.jump is not None and not hasattr(self.domain, "r_interface"):
            raise ValueError("a jump needs a domain with an interface")

    def categories(self, x):
        return self.domain.category(x)

    def encode(self, x, params=None):
        return nets.encode(x, self.encoding, self.categories(x), params)

    def evaluator(self, spec, theta):
        """Frozen ``u(points, params=None)`` for the network at ``theta``."""
        def u(points, params=None):
            return nets.forward(spec, theta, self.encode(points, params))
        return u


@dataclass
class TargetBatch:
    anchors: np.ndarray
    targets: np.ndarray
    n_samples: int
    clamp_count: int = 0
    exit_count: int = 0


def discount(F_val, dB, tau, clamp=30.0):
    """exp(F.dB - |F|^2 tau / 2) row-wise, exponent clipped to +-clamp."""
    F_val = np.asarray(F_val, dtype=np.float64)
    dB = np.asarray(dB, dtype=np.float64)
    expo = np.sum(F_val * dB, axis=-1) - 0.5 * np.sum(F_val * F_val, axis=-1) * tau
    return np.exp(np.clip(expo, -clamp, clamp))


def reward(G_val, tau):
    return np.asarray(G_val, dtype=np.float64) * tau


def jump_adjustment(problem: ProblemSpec, x0, x1):
    """dV * (1[x0 inner] - 1[x1 inner]), subtracted from the value at ``x1``."""
    inner0 = problem.categories(np.atleast_2d(x0)) == 0
    inner1 = problem.categories(np.atleast_2d(x1)) == 0
    return problem.jump * (inner0.astype(np.float64) - inner1.astype(np.float64))


def bellman_samples(u, anchors, problem: ProblemSpec, dt, n_samples, rng,
                    params=None, clamp=30.0, control_variate=False):
    """Per-sample Bellman values ``u_hat * D - R``, shape (N, M).

    With ``control_variate`` each sample also gets ``-u(x0) (D_full - 1)``,
    where ``D_full`` is the discount of the untruncated increment.  That term
    has mean zero, so the target's expectation is unchanged, but it cancels
    most of the discount noise when the drift is large.

    Also returns ``(clamp_count, exit_count)``.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample per anchor")
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    N, d = anchors.shape
    M = int(n_samples)
    domain = problem.domain
    if params is not None:
        params = np.broadcast_to(np.asarray(params, dtype=np.float64), (N,))

    use_cv = control_variate and problem.drift is not None
    u0 = u(anchors, params) if problem.uses_u or use_cv else None
    F0 = problem.drift(anchors, u0, params) if problem.drift is not None else None
    G0 = problem.reward(anchors, u0, params) if problem.reward is not None else None

    start = np.repeat(anchors, M, axis=0)
    p_rep = None if params is None else np.repeat(params, M)
    increments = np.sqrt(dt) * rng.standard_normal((N * M, d))
    ends = start + increments

    inside = domain.contains(ends)
    values = np.empty(N * M)
    tau = np.full(N * M, float(dt))
    if inside.any():
        values[inside] = u(ends[inside], None if p_rep is None else p_rep[inside])
    out = ~inside
    n_exit = int(out.sum())
    if n_exit:
        pts, lam = domain.exit(start[out], ends[out])
        ends[out] = pts
        tau[out] = lam * dt
        values[out] = problem.boundary(pts, None if p_rep is None else p_rep[out])

    if problem.jump is not None:
        values -= jump_adjustment(problem, start, ends)

    n_clamp = 0
    if F0 is not None:
        F_rep = np.repeat(np.asarray(F0, dtype=np.float64), M, axis=0)
        dB = ends - start
        expo = np.sum(F_rep * dB, axis=1) - 0.5 * np.sum(F_rep * F_rep, axis=1) * tau
        n_clamp = int(np.count_nonzero(np.abs(expo) > clamp))
        values *= np.exp(np.clip(expo, -clamp, clamp))
        if use_cv:
            expo_full = (np.sum(F_rep * increments, axis=1)
                         - 0.5 * np.sum(F_rep * F_rep, axis=1) * dt)
            values -= np.repeat(np.asarray(u0, dtype=np.float64), M) * (
                np.exp(np.clip(expo_full, -clamp, clamp)) - 1.0)
    if G0 is not None:
        values -= np.repeat(np.asarray(G0, dtype=np.float64), M) * tau
    return values.reshape(N, M), (n_clamp, n_exit)


def sample_targets(u, anchors, problem: ProblemSpec, dt, n_samples, rng,
                   params=None, clamp=30.0, control_variate=False) -> TargetBatch:
    """Monte Carlo targets y_i = mean_j [u_hat_ij D_ij - R_ij] for each anchor.

    ``u`` must be a frozen evaluator; nothing here is differentiated.
    """
    samples, (n_clamp, n_exit) = bellman_samples(u, anchors, problem, dt, n_samples, rng,
                                                  params, clamp, control_variate)
    return TargetBatch(np.atleast_2d(anchors), samples.mean(axis=1), int(n_samples),
                       n_clamp, n_exit)


def sample_target(anchor, u, problem, dt, n_samples, rng, param=None, clamp=30.0):
    """Scalar target for a single anchor point."""
    batch = sample_targets(u, np.asarray(anchor)[None], problem, dt, n_samples, rng,
                           None if param is None else [param], clamp)
    return float(batch.targets[0])


@dataclass
class Estimate:
    mean: float
    stderr: float


def ito_residual_estimate(u, x, problem, dt, n_samples, rng, param=None) -> Estimate:
    """(E[target] - u(x)) / dt, a Monte Carlo estimate of 1/2 Lap u + F.grad u - G at x."""
    x = np.asarray(x, dtype=np.float64)
    p = None if param is None else np.array([param], dtype=np.float64)
    chunk = 250_000
    done, acc = 0, []
    while done < n_samples:
        m = min(chunk, n_samples - done)
        s, _ = bellman_samples(u, x[None], problem, dt, m, rng, p)
        acc.append(s[0])
        done += m
    s = np.concatenate(acc)
    u_x = float(np.asarray(u(x[None], p))[0])
    resid = (s - u_x) / dt
    return Estimate(float(resid.mean()), float(resid.std(ddof=1) / np.sqrt(resid.size)))
