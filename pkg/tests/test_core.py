"""Vector, domain, mirror-map, and RNG-stream tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icopt.core import (BoxLinf, L1Ball, L2Ball, RngStream, as_vector,
                        bregman, mirror_grad, mirror_grad_inverse, norm,
                        phi_a, project, project_l1_ball)


def test_norm_examples():
    assert norm(np.array([3.0, 4.0]), 2) == pytest.approx(5.0)
    assert norm(np.array([1.0, -1.0, 1.0]), 1) == pytest.approx(3.0)
    assert norm(np.array([1.0, -2.0]), np.inf) == pytest.approx(2.0)


def test_norm_rejects_p_below_one():
    with pytest.raises(ValueError):
        norm(np.array([1.0]), 0.5)


def test_as_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vector([np.inf, 0.0])
    with pytest.raises(ValueError):
        as_vector([], 0)


def test_project_box_clamps():
    dom = BoxLinf(2, 1.0)
    np.testing.assert_allclose(dom.project(np.array([2.0, -3.0])),
                               [1.0, -1.0])


def test_project_l2_inside_is_identity():
    dom = L2Ball(2, 5.0)
    np.testing.assert_allclose(dom.project(np.array([3.0, 4.0])), [3.0, 4.0])


def test_project_l1_simple():
    dom = L1Ball(2, 1.0)
    np.testing.assert_allclose(dom.project(np.array([1.0, 1.0])), [0.5, 0.5])


def test_project_l1_matches_grid_search():
    # independent oracle: dense grid over the l1 ball
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.normal(size=2) * 2.0
        proj = project_l1_ball(x, 1.0)
        ticks = np.linspace(-1.0, 1.0, 401)
        best = None
        for u in ticks:
            rem = 1.0 - abs(u)
            for v in (-rem, rem):
                cand = np.array([u, v])
                dist = np.sum((x - cand) ** 2)
                if best is None or dist < best[0]:
                    best = (dist, cand)
        # interior of the ball only matters when x is already inside
        if np.abs(x).sum() <= 1.0:
            np.testing.assert_allclose(proj, x)
        else:
            assert np.sum((x - proj) ** 2) <= best[0] + 1e-6


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8),
       st.sampled_from([(1.0, 2.0), (1.0, np.inf), (2.0, np.inf), (1.5, 3.0)]))
def test_norm_monotone_in_p(entries, pair):
    x = np.array(entries)
    p, p2 = pair
    assert norm(x, p2) <= norm(x, p) + 1e-9


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_projection_optimality(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    x = rng.normal(size=d) * 3.0
    for dom in (BoxLinf(d, 1.0), L2Ball(d, 1.0), L1Ball(d, 1.0)):
        p = dom.project(x)
        assert dom.contains(p)
        for _ in range(20):
            y = rng.uniform(-1, 1, size=d)
            if not dom.contains(y):
                y = dom.project(y)
            assert np.linalg.norm(x - p) <= np.linalg.norm(x - y) + 1e-9


def test_mirror_grad_euclidean():
    np.testing.assert_allclose(mirror_grad(np.array([1.0, 2.0]), 2.0),
                               [2.0, 4.0])


def test_mirror_round_trip_a2():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5)
    np.testing.assert_allclose(mirror_grad_inverse(mirror_grad(x, 2.0), 2.0),
                               x, atol=1e-10)


def test_mirror_grad_matches_central_differences():
    # independent oracle for the closed-form gradient of phi_a
    a = 8.0 / 7.0
    rng = np.random.default_rng(1)
    x = rng.uniform(0.5, 1.5, size=4) * np.sign(rng.normal(size=4))
    g = mirror_grad(x, a)
    h = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (phi_a(x + e, a) - phi_a(x - e, a)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5)


def test_mirror_round_trip_basis_vector():
    a = 8.0 / 7.0
    e1 = np.zeros(3)
    e1[0] = 1.0
    theta = mirror_grad(e1, a)
    assert np.all(np.isfinite(theta))
    np.testing.assert_allclose(mirror_grad_inverse(theta, a), e1,
                               atol=1e-8)


def test_mirror_zero_maps_to_zero():
    z = np.zeros(4)
    np.testing.assert_allclose(mirror_grad(z, 1.5), z)
    np.testing.assert_allclose(mirror_grad_inverse(z, 1.5), z)


def test_mirror_rejects_bad_exponent():
    with pytest.raises(ValueError):
        mirror_grad(np.ones(2), 1.0)
    with pytest.raises(ValueError):
        mirror_grad_inverse(np.ones(2), 0.9)


def test_bregman_zero_at_equal_points():
    x = np.array([0.3, -0.2])
    assert bregman(x, x, 1.5) == pytest.approx(0.0, abs=1e-12)


def test_bregman_euclidean_is_squared_distance():
    x = np.array([1.0, 0.0])
    y = np.zeros(2)
    assert bregman(x, y, 2.0) == pytest.approx(1.0)


def test_bregman_matches_defining_formula():
    a = 8.0 / 7.0
    rng = np.random.default_rng(2)
    x = rng.normal(size=3)
    y = rng.normal(size=3)
    direct = phi_a(x, a) - phi_a(y, a) - mirror_grad(y, a) @ (x - y)
    assert bregman(x, y, a) == pytest.approx(direct, abs=1e-10)


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.sampled_from([8.0 / 7.0, 1.5, 2.0]))
def test_bregman_nonnegative(seed, a):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3)
    y = rng.normal(size=3)
    assert bregman(x, y, a) >= -1e-12


def test_rng_stream_reproducible():
    a = RngStream(42, (1, 2)).generator().random(100)
    b = RngStream(42, (1, 2)).generator().random(100)
    np.testing.assert_array_equal(a, b)


def test_rng_stream_children_differ():
    root = RngStream(42)
    a = root.child(0).generator().random(100)
    b = root.child(1).generator().random(100)
    assert not np.array_equal(a, b)


def test_rng_stream_child_path_composes():
    a = RngStream(7).child(1, 2, 3).generator().random(10)
    b = RngStream(7).child(1).child(2).child(3).generator().random(10)
    np.testing.assert_array_equal(a, b)
