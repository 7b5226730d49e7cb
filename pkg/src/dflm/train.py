"""Training loops: the walker-driven Bellman-residual method and a direct-fit baseline."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
import json
import time

import numpy as np

from . import nets, oracle
from .autodiff import ParamVector, Tape
from .bellman import ProblemSpec, sample_targets
from .sde import WalkerEnsemble, advance_ensemble, advance_param_walkers


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    dt: float = 5e-4
    n_walkers: int = 1500
    n_samples: int = 200
    n_boundary: int = 300
    iterations: int = 100_000
    lr0: float = 1e-3
    decay_rate: float = 0.5
    decay_steps: float = 20_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    boundary_weight: float = 1.0
    interior_half_factor: bool = True
    exponent_clamp: float = 30.0
    control_variate: bool = False
    eval_every: int = 500
    eval_grid: int = 256
    eval_angles: int = 360
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name in ("n_walkers", "n_samples", "n_boundary", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    def learning_rate(self, n):
        """Exponentially decaying rate, lr0 at n = 0."""
        return self.lr0 * self.decay_rate ** (n / self.decay_steps)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    theta: ParamVector
    m: np.ndarray
    v: np.ndarray
    ensemble: WalkerEnsemble
    step: int = 0
    best_theta: ParamVector | None = None
    best_error: float = np.inf
    best_step: int = -1
    clamp_count: int = 0
    history: list = field(default_factory=list)

    @property
    def rng(self):
        return self.ensemble.rng


def check_compatible(spec: nets.NetworkSpec, problem: ProblemSpec):
    if spec.encoding != problem.encoding:
        raise ValueError(f"problem {problem.name!r} needs network encoding "
                         f"{problem.encoding!r}, got {spec.encoding!r}")


def init_state(spec: nets.NetworkSpec, problem: ProblemSpec, config: TrainConfig) -> TrainState:
    check_compatible(spec, problem)
    theta = nets.init(spec, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    ensemble = WalkerEnsemble.uniform(problem.domain, config.n_walkers, rng, problem.param_range)
    return TrainState(theta, np.zeros(len(theta)), np.zeros(len(theta)), ensemble)


def interior_loss(tape: Tape, spec, inputs, targets, half=True):
    """mean c (u(x_i) - y_i)^2 with c = 1/2 when ``half``; ``targets`` are constants."""
    u = nets.record_forward(tape, spec, inputs)
    sq = tape.square(tape.sub(u, tape.constant(targets)))
    loss = tape.mean(sq)
    return tape.scale(loss, 0.5) if half else loss


def boundary_loss(tape: Tape, spec, inputs, values, weight=1.0):
    """weight * sum_k (u(x_k) - h(x_k))^2 (a sum over samples, not a mean)."""
    u = nets.record_forward(tape, spec, inputs)
    loss = tape.sum(tape.square(tape.sub(u, tape.constant(values))))
    return tape.scale(loss, weight) if weight != 1.0 else loss


def adam_update(theta, grad, m, v, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place ADAM step number ``n`` (1-based) on flat arrays; returns (theta, m, v)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** n)
    v_hat = v / (1.0 - beta2 ** n)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta, m, v


@dataclass
class StepInfo:
    interior_loss: float
    boundary_loss: float
    clamp_count: int
    exit_count: int = 0


def _apply_gradient(state, grad, config):
    state.step += 1
    adam_update(state.theta.values, grad.values, state.m, state.v, state.step,
                config.learning_rate(state.step - 1), config.beta1, config.beta2,
                config.eps_adam)


def _boundary_batch(problem, n, rng):
    pts = problem.domain.sample_boundary(n, rng)
    params = None
    if problem.param_range is not None:
        lo, hi = problem.param_range
        params = lo + (hi - lo) * rng.random(n)
    return pts, params, problem.boundary(pts, params)


def train_step(state: TrainState, problem: ProblemSpec, spec, config: TrainConfig) -> StepInfo:
    """One iteration: targets with frozen parameters, loss, ADAM update, walker moves."""
    ens = state.ensemble
    rng = ens.rng
    u_frozen = problem.evaluator(spec, state.theta.copy())
    batch = sample_targets(u_frozen, ens.positions, problem, config.dt, config.n_samples,
                           rng, ens.params, config.exponent_clamp, config.control_variate)
    b_pts, b_params, b_vals = _boundary_batch(problem, config.n_boundary, rng)

    tape = Tape(state.theta)
    li = interior_loss(tape, spec, problem.encode(ens.positions, ens.params), batch.targets,
                       config.interior_half_factor)
    lb = boundary_loss(tape, spec, problem.encode(b_pts, b_params), b_vals,
                       config.boundary_weight)
    total = tape.add(li, lb)
    if not np.isfinite(total.value):
        raise NonFiniteLoss(
            f"non-finite loss at iteration {state.step}: interior={li.value}, "
            f"boundary={lb.value}, non-finite targets={int(np.sum(~np.isfinite(batch.targets)))}, "
            f"clamp events={state.clamp_count + batch.clamp_count}")
    grad = tape.backward(total)
    _apply_gradient(state, grad, config)

    advance_ensemble(ens, config.dt, problem.domain)
    if problem.param_range is not None:
        ens.params = advance_param_walkers(ens.params, problem.param_sigma, config.dt,
                                           problem.param_range, rng)
    state.clamp_count += batch.clamp_count
    return StepInfo(float(li.value), float(lb.value), batch.clamp_count, batch.exit_count)


def direct_step(state: TrainState, problem: ProblemSpec, spec, config: TrainConfig) -> StepInfo:
    """Supervised step toward the exact solution on a fresh uniform batch."""
    rng = state.ensemble.rng
    pts = problem.domain.sample_uniform(config.n_walkers, rng)
    params = None
    if problem.param_range is not None:
        lo, hi = problem.param_range
        params = lo + (hi - lo) * rng.random(config.n_walkers)
    tape = Tape(state.theta)
    loss = interior_loss(tape, spec, problem.encode(pts, params), problem.exact(pts, params),
                         half=False)
    grad = tape.backward(loss)
    _apply_gradient(state, grad, config)
    return StepInfo(float(loss.value), 0.0, 0)


def default_error_fn(problem: ProblemSpec, config: TrainConfig, references=None):
    """Relative L2 error of a network against the best available reference.

    The exact solution is used when known (radial profile for interface
    problems).  Otherwise ``references`` supplies a :class:`oracle.Grid2D` for
    a fixed-parameter problem, or a dict ``{r: Grid2D}`` for a family, whose
    errors are averaged.  Returns None when there is nothing to compare with.
    """
    if problem.exact is not None:
        if problem.jump is not None:
            def err(u):
                return oracle.radial_profile_error(u, problem.exact, T=config.eval_angles)
            return err
        grid = oracle.QuadratureGrid(problem.domain, config.eval_grid)
        return lambda u: grid.relative_l2(u, problem.exact)
    if references is None:
        return None
    grid = oracle.QuadratureGrid(problem.domain, config.eval_grid)
    if isinstance(references, oracle.Grid2D):
        return lambda u: grid.relative_l2(u, references)

    def err(u):
        errs = []
        for r, ref in references.items():
            fixed = lambda x, r=r: u(x, params=np.full(len(x), r))
            errs.append(grid.relative_l2(fixed, ref))
        return float(np.mean(errs))
    return err


def _network(spec, theta, problem):
    return nets.Network(spec, theta, problem.categories)


def run(state: TrainState, problem: ProblemSpec, spec, config: TrainConfig, *,
        step_fn=train_step, error_fn="default", metrics=None, wall_clock=True,
        until=None, clock_start=None):
    """Iterate ``step_fn`` until ``until`` (default ``config.iterations``) steps are done.

    Each step emits one JSON line to ``metrics`` (any writable text stream).
    The error is evaluated every ``eval_every`` steps and at the last
    iteration (``relative_l2`` is null in between); those evaluated records are
    kept in ``state.history`` and the lowest error so far selects
    ``state.best_theta``.  ``wall_clock`` seconds count from ``clock_start``
    (a ``time.perf_counter()`` value; default: entry to this call).
    """
    if error_fn == "default":
        error_fn = default_error_fn(problem, config)
    until = config.iterations if until is None else until
    t0 = time.perf_counter() if clock_start is None else clock_start
    while state.step < until:
        info = step_fn(state, problem, spec, config)
        record = {"iteration": state.step}
        if wall_clock:
            record["wall_clock"] = round(time.perf_counter() - t0, 6)
        record.update(interior_loss=info.interior_loss, boundary_loss=info.boundary_loss,
                      relative_l2=None, clamp_count=state.clamp_count)
        if state.step % config.eval_every == 0 or state.step == config.iterations:
            if error_fn is not None:
                err = float(error_fn(_network(spec, state.theta, problem)))
                record["relative_l2"] = err
                if err < state.best_error:
                    state.best_error, state.best_step = err, state.step
                    state.best_theta = state.theta.copy()
            state.history.append(record)
        if metrics is not None:
            metrics.write(json.dumps(record) + "\n")
    return state


def train(spec, problem, config, state=None, **kwargs) -> TrainState:
    if state is None:
        state = init_state(spec, problem, config)
    return run(state, problem, spec, config, **kwargs)


def train_direct(spec, problem, config, state=None, **kwargs) -> TrainState:
    """Fit the exact solution directly with the same optimizer stack."""
    if problem.exact is None:
        raise ValueError("direct fitting needs an exact solution")
    if state is None:
        state = init_state(spec, problem, config)
    return run(state, problem, spec, config, step_fn=direct_step, **kwargs)


def final_network(state: TrainState, spec, problem) -> nets.Network:
    """Cumulative-best network when errors were tracked, otherwise the last iterate."""
    theta = state.best_theta if state.best_theta is not None else state.theta
    return _network(spec, theta, problem)


def save_state(path, state: TrainState, spec, extra_header=None):
    """Checkpoint everything needed to resume bit-for-bit: theta, ADAM moments,
    walkers, parameter walkers, the generator state and the running best."""
    header = {
        "step": state.step,
        "best_error": None if not np.isfinite(state.best_error) else state.best_error,
        "best_step": state.best_step,
        "clamp_count": state.clamp_count,
        "rng": state.rng.bit_generator.state,
    }
    header.update(extra_header or {})
    arrays = {"m": state.m, "v": state.v, "positions": state.ensemble.positions}
    if state.ensemble.params is not None:
        arrays["params"] = state.ensemble.params
    if state.best_theta is not None:
        arrays["best_theta"] = state.best_theta.values
    nets.save_checkpoint(path, spec, state.theta, header, arrays)


def load_state(path):
    """Inverse of :func:`save_state`; returns ``(spec, state, header)``."""
    spec, theta, header, arrays = nets.load_checkpoint(path)
    if "rng" not in header:
        raise ValueError(f"{path}: checkpoint carries no training state")
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    ensemble = WalkerEnsemble(arrays["positions"].copy(), rng,
                              arrays["params"].copy() if "params" in arrays else None)
    best = None
    if "best_theta" in arrays:
        best = ParamVector(theta.layout, arrays["best_theta"].copy())
    state = TrainState(theta, arrays["m"].copy(), arrays["v"].copy(), ensemble,
                       step=int(header["step"]), best_theta=best,
                       best_error=np.inf if header["best_error"] is None else header["best_error"],
                       best_step=int(header["best_step"]), clamp_count=int(header["clamp_count"]))
    return spec, state, header
