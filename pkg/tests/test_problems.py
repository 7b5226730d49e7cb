import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dflm import bellman, problems
from dflm.problems import (exact_interface, exact_interface_slope, exact_u1, exact_u2,
                           sigma_eps, stimulus, taxis_drift_reward)


def test_laplace_exact_values():
    assert exact_u1(np.array([[1.0, 0.0]]))[0] == 1.0
    assert exact_u2(np.array([[0.0, 0.0]]))[0] == 0.0
    corner = np.array([[np.cos(np.pi / 6), np.sin(np.pi / 6)]])
    assert exact_u2(corner)[0] == pytest.approx(np.sin(np.pi / 9), abs=1e-15)
    assert np.sin(np.pi / 9) == pytest.approx(0.342020, abs=1e-6)


def test_u2_angle_clipping_on_edge():
    # tiny negative y from round-off must not leave the sector branch
    assert exact_u2(np.array([[0.5, -1e-17]]))[0] == 0.0


@pytest.mark.parametrize("fn", [exact_u1, exact_u2])
def test_laplace_targets_harmonic_by_fd(fn):
    rng = np.random.default_rng(0)
    r = rng.uniform(0.2, 0.9, 20)
    phi = rng.uniform(0.05, np.pi / 6 - 0.05, 20)
    x = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    h = 1e-3
    lap = sum(fn(x + h * e) + fn(x - h * e) for e in np.eye(2)) - 4 * fn(x)
    np.testing.assert_allclose(lap / h ** 2, 0.0, atol=1e-4)


def test_interface_exact_values():
    lo, hi = exact_interface(1 - 1e-15), exact_interface(1.0)
    assert lo == pytest.approx(1.25, abs=1e-12)
    assert hi == pytest.approx(2.25, abs=1e-12)
    assert 2.25 - 1.25 == 1.0
    h = 1 + 1 / (4 * 0.2) + 3 / (4 * 0.7)
    assert exact_interface(2.0) == pytest.approx(h, abs=1e-15)
    assert h == pytest.approx(3.3214285714285716, abs=1e-14)


def test_interface_jump_exact():
    s0, s1 = 0.2, 0.7
    inner = 1 / (4 * s0)
    outer = 1 / (4 * s1) + (1 - 1 / (4 * s1) + 1 / (4 * s0))
    assert outer - inner == 1.0
    assert float(exact_interface(1.0) - 1 / (4 * s0)) == 1.0


def test_interface_flux_continuity():
    inner = 0.2 * exact_interface_slope(np.nextafter(1.0, 0.0))
    outer = 0.7 * exact_interface_slope(1.0)
    assert abs(inner - 0.5) <= 1e-12 and abs(outer - 0.5) <= 1e-12


def test_interface_subdomain_residual():
    # div(sigma grad u) = sigma (u'' + u'/r) must equal g = 1 on each side
    for r, s in [(0.3, 0.2), (0.8, 0.2), (1.3, 0.7), (1.9, 0.7)]:
        k = 1 / (4 * s)
        assert s * (2 * k + 2 * k) == pytest.approx(1.0, abs=1e-14)
        h = 1e-4
        u = lambda t: exact_interface(t)
        d2 = (u(r + h) - 2 * u(r) + u(r - h)) / h ** 2
        d1 = (u(r + h) - u(r - h)) / (2 * h)
        assert s * (d2 + d1 / r) == pytest.approx(1.0, abs=1e-6)


def test_sigma_eps_values():
    v, _ = sigma_eps(np.array([[1.0, 0.0], [0.0, -1.0]]), 0.2, 0.7, 0.05)
    np.testing.assert_allclose(v, 0.45, atol=1e-15)
    v, _ = sigma_eps(np.array([[0.5, 0.0]]), 0.2, 0.7, 1e-4)
    assert v[0] == pytest.approx(0.2, abs=1e-15)
    v, _ = sigma_eps(np.array([[1e3, 0.0]]), 0.2, 0.7, 0.1)
    assert v[0] == pytest.approx(0.7, abs=1e-12)
    v, g = sigma_eps(np.zeros((1, 2)), 0.2, 0.7, 0.1)
    np.testing.assert_array_equal(g, 0.0)


def test_sigma_eps_matches_logistic_form():
    x = np.random.default_rng(1).uniform(-2, 2, (100, 2))
    eps = 0.07
    v, _ = sigma_eps(x, 0.2, 0.7, eps)
    rho = np.linalg.norm(x, axis=1)
    np.testing.assert_allclose(v, 0.5 / (1 + np.exp(-(rho - 1) / eps)) + 0.2, rtol=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(0, 2 * np.pi), st.floats(0.02, 0.5))
def test_sigma_eps_gradient_fd_and_radial(rho, phi, eps):
    x = np.array([[rho * np.cos(phi), rho * np.sin(phi)]])
    _, g = sigma_eps(x, 0.2, 0.7, eps)
    h = 1e-6
    fd = np.array([(sigma_eps(x + h * e, 0.2, 0.7, eps)[0] - sigma_eps(x - h * e, 0.2, 0.7, eps)[0])[0]
                   / (2 * h) for e in np.eye(2)])
    assert np.max(np.abs(fd - g[0])) <= 1e-6
    assert abs(g[0, 0] * x[0, 1] - g[0, 1] * x[0, 0]) <= 1e-12


def test_interface_problem_wiring():
    prob = problems.interface(dt=1e-4)
    assert prob.settings["eps"] == pytest.approx(1e-2)
    assert prob.jump == 1.0 and prob.encoding == "onehot"
    x = np.array([[0.3, 0.0], [1.5, 0.5]])
    np.testing.assert_allclose(prob.boundary(x), 1 + 1 / 0.8 + 3 / 2.8)
    s, grad = sigma_eps(x, 0.2, 0.7, 1e-2)
    np.testing.assert_allclose(prob.drift(x), grad / (2 * s[:, None]))
    np.testing.assert_allclose(prob.reward(x), 1 / (2 * s))


def test_stimulus_peak():
    c, grad, lap = stimulus(np.zeros((1, 2)))
    assert c[0] == 0.5
    np.testing.assert_allclose(grad, 0.0, atol=1e-16)
    assert lap[0] == pytest.approx(-np.pi ** 2 / 4, rel=1e-15)


def test_stimulus_derivatives_fd():
    x = np.random.default_rng(2).uniform(-0.9, 0.9, (30, 2))
    c, grad, lap = stimulus(x)
    h = 1e-5
    fd = np.column_stack([(stimulus(x + h * e)[0] - stimulus(x - h * e)[0]) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(grad, fd, atol=1e-9)
    h = 1e-3
    fd_lap = sum(stimulus(x + h * e)[0] + stimulus(x - h * e)[0] for e in np.eye(2)) - 4 * c
    np.testing.assert_allclose(lap, fd_lap / h ** 2, atol=1e-5)


def test_taxis_drift_reward_examples():
    chi, D, r, r0 = 5.0, 0.1, 8.0, 0.5
    F, G = taxis_drift_reward(np.zeros((1, 2)), np.array([0.0]), chi, D, r, r0)
    np.testing.assert_allclose(F, 0.0, atol=1e-14)
    assert G[0] == pytest.approx(-r0 / (2 * D))
    _, G1 = taxis_drift_reward(np.zeros((1, 2)), np.array([1.0]), chi, D, r, r0)
    assert G1[0] == pytest.approx((chi * (-np.pi ** 2 / 4) - r0) / (2 * D))


def test_taxis_generator_matches_divergence_form():
    """Expanding div(D grad u - chi u grad c) + H(u) and dividing by 2D gives 1/2 Lap u + F.grad u - G."""
    chi, D, r, r0 = 5.0, 0.1, 8.0, 0.5
    x = np.random.default_rng(3).uniform(-0.9, 0.9, (25, 2))
    u = lambda y: 1 - y[:, 0] ** 2 + 0.3 * y[:, 0] * y[:, 1] ** 2
    grad_u = np.column_stack([-2 * x[:, 0] + 0.3 * x[:, 1] ** 2, 0.6 * x[:, 0] * x[:, 1]])
    lap_u = -2 + 0.6 * x[:, 0]
    uv = u(x)
    c, gc, lc = stimulus(x)
    divergence_form = (D * lap_u - chi * np.sum(grad_u * gc, axis=1) - chi * uv * lc
                       + r * uv * (1 - uv) + r0)
    F, G = taxis_drift_reward(x, uv, chi, D, r, r0)
    generator = 0.5 * lap_u + np.sum(F * grad_u, axis=1) - G
    np.testing.assert_allclose(generator, divergence_form / (2 * D), rtol=1e-12, atol=1e-12)


def test_taxis_problem_uses_param_for_family():
    fam = problems.taxis_family()
    assert fam.param_range == (0.3, 20.0) and fam.encoding == "param"
    x = np.array([[0.1, 0.2], [0.1, 0.2]])
    u = np.array([0.4, 0.4])
    G = fam.reward(x, u, np.array([0.3, 20.0]))
    _, G_a = taxis_drift_reward(x[:1], u[:1], 5.0, 0.1, 0.3, 0.5)
    _, G_b = taxis_drift_reward(x[:1], u[:1], 5.0, 0.1, 20.0, 0.5)
    np.testing.assert_allclose(G, [G_a[0], G_b[0]])
    np.testing.assert_array_equal(fam.boundary(x), 0.0)


def test_make_problem_registry():
    for name in problems.PROBLEMS:
        assert isinstance(problems.make_problem(name), bellman.ProblemSpec)
    with pytest.raises(ValueError):
        problems.make_problem("heat")
    assert problems.make_problem("taxis", r=20.0).settings["r"] == 20.0
