import numpy as np
import pytest

from eikonal.grid import GridField
from eikonal.transforms import (
    TransformError,
    hodograph,
    inverse_legendre_1var,
    legendre_1var,
    linearized_ode_deviation,
    verify_eikonal_image,
    verify_hj,
    verify_linearized_ode,
)


def distance(n, lo=0.5, hi=2.0, ylo=0.5, yhi=1.5):
    return GridField.sample(
        lambda X: np.hypot(X[..., 0], X[..., 1]),
        [lo, ylo],
        [(hi - lo) / (n - 1), (yhi - ylo) / (n - 1)],
        [n, n],
    )


def test_self_dual_quadratic():
    u = GridField.sample(lambda X: 0.5 * X[..., 0] ** 2 + X[..., 1], [-1, 0], [0.1, 0.5], [21, 3])
    H = legendre_1var(u)
    Y = H.nodes()
    assert np.allclose(H.values, 0.5 * Y[..., 0] ** 2 - Y[..., 1], atol=1e-12)


def test_distance_slice_matches_closed_form():
    n = 129
    u = GridField.sample(lambda X: np.hypot(X[..., 0], X[..., 1]), [0.5, 0.9], [1.5 / (n - 1), 0.1], [n, 3])
    H = legendre_1var(u)
    Y = H.nodes()
    want = -Y[..., 1] * np.sqrt(1 - Y[..., 0] ** 2)
    ok = np.isfinite(H.values)
    assert ok[:, 1].all()
    assert np.max(np.abs(H.values[ok] - want[ok])) <= 1e-5


def test_round_trip_recovers_field():
    # narrow x2 window so every slice shares most of the y1 and x1 ranges
    errs = []
    for n in (65, 129):
        u = distance(n, ylo=0.8, yhi=1.2)
        H = legendre_1var(u)
        back = inverse_legendre_1var(H, target=(u.origin[0], u.spacing[0], u.shape[0]))
        ok = np.isfinite(back.values)
        assert ok.sum() > 0.3 * ok.size
        errs.append(np.max(np.abs(back.values[ok] - u.values[ok])))
    assert errs[1] <= 1e-6
    # at least second order; the Hermite reconstruction is in fact third order
    assert errs[0] / errs[1] >= 3.5


def test_linearized_ode_second_order():
    devs = [verify_linearized_ode(legendre_1var(distance(n))) for n in (65, 129)]
    assert 3.5 <= devs[0] / devs[1] <= 4.5


def test_analytic_image_satisfies_ode():
    y1 = np.linspace(-0.9, 0.9, 11)[:, None]
    assert np.max(linearized_ode_deviation(y1, -np.sqrt(1 - y1**2))) <= 1e-12
    H = GridField.sample(lambda Y: -Y[..., 1] * np.sqrt(1 - Y[..., 0] ** 2), [-0.9, 0], [0.18, 0.1], [11, 5])
    assert verify_linearized_ode(H) <= 1e-12  # linear in y2, central differences exact


def test_non_solution_image_detected():
    H = GridField.sample(lambda Y: Y[..., 1], [-0.9, 0], [0.18, 0.1], [11, 5])
    assert verify_linearized_ode(H) == pytest.approx(0.81, abs=1e-12)


def test_non_monotone_slice_is_named():
    u = GridField.sample(lambda X: np.sin(3 * X[..., 0]) + X[..., 1], [0, 0], [0.1, 0.1], [21, 4])
    with pytest.raises(TransformError) as err:
        legendre_1var(u)
    assert err.value.index == 0


def test_missing_nodes_propagate():
    u = distance(33)
    vals = u.values.copy()
    vals[:3, 5] = np.nan
    H = legendre_1var(u.with_values(vals))
    assert np.isfinite(H.values[:, 5]).sum() <= np.isfinite(H.values[:, 4]).sum()
    vals[:, 7] = np.nan
    H = legendre_1var(u.with_values(vals))
    assert np.isnan(H.values[:, 7]).all()


def test_mostly_missing_slice_raises():
    u = distance(33)
    with pytest.raises(TransformError):
        legendre_1var(u, target=(0.0, 0.05, 33))


def test_hodograph_plane_wave():
    u = GridField.sample(lambda X: X[..., 0] - X[..., 1], [0, 0, 0], [0.1, 0.05, 0.3], [11, 6, 5])
    w = hodograph(u)
    Y = w.nodes()
    ok = np.isfinite(w.values)
    assert np.max(np.abs(w.values[ok] - (Y[..., 0] + Y[..., 1])[ok])) <= 1e-10
    assert verify_eikonal_image(w) <= 1e-10


def test_double_hodograph_round_trip():
    F = lambda s: s + 0.3 * s**3
    u = GridField.sample(lambda X: F(X[..., 0] - X[..., 1]), [1, 0], [0.05, 0.05], [21, 9])
    w = hodograph(u)
    back = hodograph(w, target=(u.origin[0], u.spacing[0], u.shape[0]))
    ok = np.isfinite(back.values)
    assert ok.mean() > 0.5
    assert np.max(np.abs(back.values[ok] - u.values[ok])) <= 1e-4


def test_hodograph_needs_monotone_columns():
    u = GridField.sample(lambda X: (X[..., 0] - 0.5) ** 2 + X[..., 1], [0, 0], [0.1, 0.1], [11, 3])
    with pytest.raises(TransformError):
        hodograph(u)


def test_hj_checker():
    g = dict(origin=[0, 0, 0], spacing=[0.1, 0.2, 0.3], shape=[5, 5, 5])
    const = GridField.sample(lambda Y: 0 * Y[..., 0] + 2.0, **g)
    assert verify_hj(const) == 0.0
    good = GridField.sample(lambda Y: Y[..., 1] + Y[..., 0] / 2, **g)
    assert verify_hj(good) <= 1e-12
    bad = GridField.sample(lambda Y: Y[..., 1], **g)
    assert verify_hj(bad) == pytest.approx(1.0)
