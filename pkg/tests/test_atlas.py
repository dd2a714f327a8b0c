import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mqeuler.atlas import (
    Atlas,
    Chart,
    Disk,
    chart_overlap_frame,
    normal_coordinate,
    normal_gradient,
    overlap_components,
    wrapped_distance,
)

coords = st.floats(-3, 3, allow_nan=False)


@pytest.mark.parametrize(
    "p, q, d",
    [((0, 0), (0, 0), 0.0), ((0.1, 0), (0.9, 0), 0.2), ((0.25, 0.25), (0.75, 0.75), np.sqrt(0.5)), ((0.25, 0.25), (0.5, 0.5), np.sqrt(0.125))],
)
def test_wrapped_distance_examples(p, q, d):
    assert wrapped_distance(np.array(p), np.array(q)) == pytest.approx(d)


@given(coords, coords, coords, coords, st.integers(-2, 2), st.integers(-2, 2))
def test_wrapped_distance_is_lattice_invariant_and_symmetric(a, b, c, d, m, k):
    p, q = np.array([a, b]), np.array([c, d])
    base = wrapped_distance(p, q)
    assert base <= np.sqrt(0.5) + 1e-12
    assert wrapped_distance(q, p) == pytest.approx(base, abs=1e-12)
    assert wrapped_distance(p + [m, k], q) == pytest.approx(base, abs=1e-9)


@pytest.mark.parametrize("p, r", [((0, 0), 0.4), ((0.4, 0), 0.0), ((0.5, 0), -0.1)])
def test_normal_coordinate_examples(p, r):
    chart = Chart(1, Disk((0, 0), 0.4))
    assert normal_coordinate(chart, np.array(p, dtype=float)) == pytest.approx(r, abs=1e-15)


def test_disk_radius_is_restricted():
    with pytest.raises(ValueError):
        Disk((0, 0), 0.5)


@given(st.floats(0, 2 * np.pi))
def test_normal_coordinate_boundary_and_unit_gradient(theta):
    chart = Chart(1, Disk((0.3, 0.7), 0.35))
    p = chart.center + 0.35 * np.array([np.cos(theta), np.sin(theta)])
    assert abs(normal_coordinate(chart, p)) < 1e-12
    g = normal_gradient(chart, p)
    h = 1e-6
    fd = np.array([(normal_coordinate(chart, p + h * e) - normal_coordinate(chart, p - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(fd, g, atol=1e-6)
    assert np.linalg.norm(g) == pytest.approx(1.0)


def test_overlap_frame_same_domain_and_wrap():
    a = Chart(1, Disk((0.3, 0.3), 0.2))
    b = Chart(2, Disk((0.45, 0.3), 0.2))
    assert chart_overlap_frame(a, b) == (0, 0)
    c = Chart(3, Disk((0.05, 0.5), 0.2))
    d = Chart(4, Disk((0.9, 0.5), 0.2))
    # d's coordinates near the seam exceed c's by one unit
    assert chart_overlap_frame(c, d) == (1, 0)
    assert chart_overlap_frame(d, c) == (-1, 0)


def test_overlap_frame_needs_point_for_multiple_components(default_atlas):
    a, b = default_atlas[1], default_atlas[2]
    assert len(overlap_components(a, b)) == 2
    with pytest.raises(ValueError):
        chart_overlap_frame(a, b)
    assert chart_overlap_frame(a, b, np.array([0.25, 0.0])) == (0, 0)
    assert chart_overlap_frame(a, b, np.array([0.75, 0.0])) == (1, 0)
    with pytest.raises(ValueError):
        chart_overlap_frame(a, b, np.array([0.25, 0.5]))


def test_disjoint_charts_have_no_frame():
    a = Chart(1, Disk((0.1, 0.1), 0.1))
    b = Chart(2, Disk((0.6, 0.6), 0.1))
    with pytest.raises(ValueError):
        chart_overlap_frame(a, b)


def test_cocycle_on_triple_overlaps(default_atlas):
    rng = np.random.default_rng(0)
    pts = rng.random((4000, 2))
    checked = 0
    for p in pts:
        inside = default_atlas.containing(p)
        for a, b, c in itertools.permutations(inside, 3):
            A, B, C = default_atlas[a], default_atlas[b], default_atlas[c]
            lab = np.add(chart_overlap_frame(A, B, p), chart_overlap_frame(B, C, p))
            assert tuple(lab) == chart_overlap_frame(A, C, p)
            checked += 1
    assert checked > 1000


def test_atlas_validation():
    with pytest.raises(ValueError):
        Atlas([Chart(1, Disk((0, 0), 0.2)), Chart(1, Disk((0.5, 0), 0.2))])
    with pytest.raises(ValueError):
        Atlas([Chart(0, Disk((0, 0), 0.2))])
