import numpy as np
import pytest

from dflm import oracle, sde
from dflm.problems import exact_u1

SQUARE = sde.Square(-1.0, 1.0)
SECTOR = sde.CircularSector()


def test_fd_homogeneous_is_zero():
    g = oracle.fd_solve_taxis(0.0, 0.1, 0.0, 0.0, 65)
    assert g.shape == (65, 65)
    assert not g.values.any()


def test_fd_rejects_bad_resolution():
    for nx in (64, 33):
        with pytest.raises(ValueError):
            oracle.fd_solve_taxis(5.0, 0.1, 8.0, 0.5, nx)


def test_poisson_series_reference_values():
    # w(0, 0) for Lap w = -1 on [-1, 1]^2 (tabulated 0.2946854...)
    assert oracle.poisson_square_series(0.0, 0.0) == pytest.approx(0.29468541, abs=1e-7)
    edge = oracle.poisson_square_series(np.array([1.0, -1.0, 0.3]), np.array([0.2, 0.5, 1.0]))
    np.testing.assert_allclose(edge, 0.0, atol=1e-8)  # series tail on y = 1
    # symmetric under swapping x and y
    assert oracle.poisson_square_series(0.3, 0.7) == pytest.approx(
        oracle.poisson_square_series(0.7, 0.3), abs=1e-12)


def test_fd_poisson_center_matches_series():
    D, r0 = 0.1, 0.5
    g = oracle.fd_solve_taxis(0.0, D, 0.0, r0, 129)
    exact = (r0 / D) * oracle.poisson_square_series(0.0, 0.0)
    assert g.center_value() == pytest.approx(exact, rel=1e-4)


def test_fd_picard_converges_with_history():
    g = oracle.fd_solve_taxis(5.0, 0.1, 8.0, 0.5, 65)
    assert g.meta["residual"] < 1e-10
    assert g.meta["picard_iterations"] > 1
    assert g.values.max() > 0 and np.all(np.isfinite(g.values))
    # interior peak, zero edge
    assert not g.values[0].any() and not g.values[:, -1].any()


def test_fd_divergence_reports_history():
    with pytest.raises(oracle.PicardDivergence) as info:
        oracle.fd_solve_taxis(5.0, 0.1, 8.0, 0.5, 65, max_iter=2)
    assert len(info.value.history) == 3


def test_relative_l2_examples():
    ref = lambda x, p=None: exact_u1(x)
    assert oracle.relative_l2(ref, ref, SECTOR) == 0.0
    assert oracle.relative_l2(lambda x: 2 * exact_u1(x), ref, SECTOR) == pytest.approx(1.0, abs=1e-14)
    one = lambda x: np.ones(len(x))
    quad = oracle.QuadratureGrid(SQUARE, 128)
    norm = np.sqrt(quad.integrate(np.ones(len(quad.points))))
    assert norm == pytest.approx(2.0)
    assert quad.relative_l2(lambda x: 1.5 * np.ones(len(x)), one) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        oracle.relative_l2(one, lambda x: np.zeros(len(x)), SECTOR)


def test_relative_l2_offset_on_unit_area():
    # [0, 1]^2 as a square of unit measure: error of u + c is |c| / ||u||
    unit = sde.Square(0.0, 1.0)
    quad = oracle.QuadratureGrid(unit, 200)
    u = lambda x: x[:, 0] + 2 * x[:, 1]
    norm = np.sqrt(quad.integrate(u(quad.points) ** 2))
    assert quad.relative_l2(lambda x: u(x) + 0.1, u) == pytest.approx(0.1 / norm, rel=1e-12)


def test_relative_l2_triangle_inequality():
    ref = lambda x: exact_u1(x) + 1.0
    a = lambda x: ref(x) + 0.1 * x[:, 0]
    b = lambda x: ref(x) - 0.2 * x[:, 1] ** 2
    quad = oracle.QuadratureGrid(SECTOR, 128)
    d_ab = quad.relative_l2(a, b) * np.sqrt(np.sum(b(quad.points) ** 2))
    d_a = quad.relative_l2(a, ref) * np.sqrt(np.sum(ref(quad.points) ** 2))
    d_b = quad.relative_l2(b, ref) * np.sqrt(np.sum(ref(quad.points) ** 2))
    assert d_ab <= d_a + d_b + 1e-12


def test_quadrature_mask_area():
    quad = oracle.QuadratureGrid(SECTOR, 256)
    area = quad.integrate(np.ones(len(quad.points)))
    assert area == pytest.approx(np.pi / 12, rel=5e-3)


def test_error_report_grid():
    rep = oracle.QuadratureGrid(SQUARE, 32).report(lambda x: np.zeros(len(x)), lambda x: x[:, 0])
    assert rep.relative_l2 == pytest.approx(1.0)
    assert rep.max_abs == pytest.approx(1 - 1 / 32)
    assert rep.pointwise.shape == (32, 32)


def test_radial_average():
    radial = lambda x, categories=None: np.linalg.norm(x, axis=1) ** 2
    assert oracle.radial_average(radial, 1.3) == pytest.approx(1.69, abs=1e-13)
    assert oracle.radial_average(lambda x: x[:, 0], 0.7) == pytest.approx(0.0, abs=1e-13)


def test_learned_jump_of_tagged_function():
    def u(x, categories=None):
        return np.linalg.norm(x, axis=1) + 2.0 * np.asarray(categories)

    assert oracle.learned_jump(u, 1.0, T=100) == pytest.approx(2.0)


def test_radial_profile_error_zero_for_exact():
    f = lambda x, categories=None: 1 + np.linalg.norm(x, axis=1)
    assert oracle.radial_profile_error(f, f, n_r=20, T=64) == pytest.approx(0.0, abs=1e-15)
    g = lambda x, categories=None: 2 * f(x)
    assert oracle.radial_profile_error(g, f, n_r=20, T=64) == pytest.approx(1.0)


def test_family_slice_shape_and_values():
    fam = lambda x, params: x[:, 0] * params
    table = oracle.family_slice(fam, [[1.0, 0.0], [2.0, 0.0]], [0.5, 3.0])
    np.testing.assert_array_equal(table, [[0.5, 1.0], [3.0, 6.0]])
    assert oracle.family_slice(fam, [0.5, 0.0], [2.0]).shape == (1, 1)


def test_grid_csv_round_trip(tmp_path):
    xs = np.linspace(-1, 1, 5)
    ys = np.linspace(0, 1, 3)
    vals = np.arange(15.0).reshape(3, 5) / 7
    g = oracle.Grid2D(xs, ys, vals, {"seed": 3})
    g.to_csv(tmp_path / "g.csv")
    back = oracle.Grid2D.from_csv(tmp_path / "g.csv")
    assert back.shape == (3, 5)
    np.testing.assert_array_equal(back.values, vals)
    np.testing.assert_array_equal(back.x, xs)
    assert back.meta == {"seed": 3}
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[1] == "x,y,value"
    # row-major with x fastest
    assert [float(v) for v in lines[3].split(",")[:2]] == [-0.5, 0.0]


def test_grid_interpolator_is_bilinear():
    xs = np.linspace(0, 1, 3)
    X, Y = np.meshgrid(xs, xs)
    g = oracle.Grid2D(xs, xs, 2 * X + 3 * Y + 1)
    pts = np.array([[0.2, 0.7], [0.9, 0.1]])
    np.testing.assert_allclose(g.interpolator()(pts), 2 * pts[:, 0] + 3 * pts[:, 1] + 1, atol=1e-14)
