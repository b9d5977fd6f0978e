"""Box domains, half-spaces, and exact clipped Voronoi cells."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipcert.errors import (
    DimensionMismatch,
    DimensionTooHigh,
    DuplicatePoint,
    IndexOutOfRange,
    NoVertices,
)
from lipcert.geometry import (
    TAU_DUP,
    TAU_FEAS,
    BoxDomain,
    HalfSpace,
    VoronoiCell,
    _box_arrays,
    _enumerate_vertices,
    bisector,
    box_halfspaces,
    compute_cell,
    compute_diagram,
    covered_count,
    furthest_vertex,
    grid_points,
    update_diagram,
)
from _oracles import boundary_samples, covered_count_literal, nearest_labels

UNIT2 = BoxDomain([0.0, 0.0], [1.0, 1.0])


def canon(vertices):
    return vertices[np.lexsort(vertices.T[::-1])]


# ---------------------------------------------------------------------------
# BoxDomain


def test_box_rejects_inverted_and_mismatched_bounds():
    with pytest.raises(ValueError):
        BoxDomain([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        BoxDomain([0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        BoxDomain([0.0], [np.inf])


def test_box_measurements_and_containment():
    dom = BoxDomain([0.0, -1.0], [2.0, 3.0])
    assert dom.dim == 2
    assert np.allclose(dom.sides, [2.0, 4.0])
    assert dom.max_side == 4.0
    assert dom.contains([1.0, 0.0])
    assert not dom.contains([2.1, 0.0])
    assert dom.contains([2.0 + 1e-12, 0.0], tol=1e-9)
    flags = dom.contains(np.array([[0.0, 0.0], [3.0, 0.0]]))
    assert list(flags) == [True, False]


def test_box_corners_enumerates_all():
    dom = BoxDomain([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
    corners = dom.corners()
    assert corners.shape == (8, 3)
    assert {tuple(c) for c in corners} == set(itertools.product([0, 1], [0, 2], [0, 3]))


def test_box_uniform_stays_inside_and_is_seeded():
    dom = BoxDomain([-1.0, 2.0], [0.0, 5.0])
    a = dom.uniform(np.random.default_rng(3), 500)
    b = dom.uniform(np.random.default_rng(3), 500)
    assert np.array_equal(a, b)
    assert dom.contains(a).all()


# ---------------------------------------------------------------------------
# HalfSpace / bisector


def test_halfspace_normalizes_and_contains():
    h = HalfSpace([0.0, 2.0], 4.0)
    assert np.allclose(h.normal, [0.0, 1.0])
    assert h.offset == pytest.approx(2.0)
    assert h.contains([5.0, 1.9])
    assert not h.contains([0.0, 2.1])


def test_halfspace_rejects_degenerate():
    with pytest.raises(ValueError):
        HalfSpace([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        HalfSpace([np.nan, 1.0], 0.0)


@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
)
@settings(max_examples=60, deadline=None)
def test_bisector_separates_its_two_points(p, q):
    p, q = np.array(p), np.array(q)
    if np.linalg.norm(p - q) <= 1e-6:
        return
    h = bisector(p, q)
    # the half-space keeps the second point's side
    assert h.contains(q)
    assert not h.contains(p, tol=-1e-12)
    mid = (p + q) / 2.0
    assert abs(h.normal @ mid - h.offset) < 1e-9


def test_bisector_rejects_coincident_points():
    with pytest.raises(DuplicatePoint):
        bisector([1.0, 1.0], [1.0, 1.0])


def test_box_halfspaces_intersection_is_the_box():
    dom = BoxDomain([0.0, -2.0], [1.0, 2.0])
    hs = box_halfspaces(dom)
    assert len(hs) == 4
    inside = np.array([0.5, 0.0])
    outside = np.array([1.5, 0.0])
    assert all(h.contains(inside) for h in hs)
    assert not all(h.contains(outside) for h in hs)


# ---------------------------------------------------------------------------
# vertex enumeration against the known two-point diagram


def test_two_point_cell_matches_hand_computation():
    # generators (0.25, 0.5) and (0.75, 0.5): the bisector is x = 0.5, so the
    # first cell is the rectangle [0, 0.5] x [0, 1].
    pts = np.array([[0.25, 0.5], [0.75, 0.5]])
    cell = compute_cell(0, pts, UNIT2)
    expect = np.array([[0.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 1.0]])
    assert np.allclose(canon(cell.vertices), canon(expect), atol=1e-12)
    # furthest vertex: all four corners are at distance sqrt(0.25^2+0.5^2);
    # the tie resolves to the lexicographically smallest corner.
    assert cell.furthest_distance == pytest.approx(np.hypot(0.25, 0.5))
    assert np.allclose(cell.furthest_vertex, [0.0, 0.0])


def test_single_point_cell_is_the_whole_box():
    dom = BoxDomain([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    cell = compute_cell(0, np.array([[0.2, 0.2, 0.2]]), dom)
    assert np.allclose(canon(cell.vertices), canon(dom.corners()))
    assert cell.furthest_distance == pytest.approx(np.linalg.norm([0.8, 0.8, 0.8]))


def test_compute_cell_validates_arguments():
    pts = np.array([[0.2, 0.2], [0.8, 0.8]])
    with pytest.raises(IndexOutOfRange):
        compute_cell(2, pts, UNIT2)
    with pytest.raises(DimensionMismatch):
        compute_cell(0, pts, BoxDomain([0.0], [1.0]))
    with pytest.raises(DimensionMismatch):
        compute_cell(0, np.zeros(3), UNIT2)
    with pytest.raises(DuplicatePoint):
        compute_cell(0, np.array([[0.5, 0.5], [0.5, 0.5]]), UNIT2)
    with pytest.raises(ValueError):
        compute_cell(0, np.array([[np.nan, 0.0], [0.5, 0.5]]), UNIT2)
    seven = BoxDomain(np.zeros(7), np.ones(7))
    with pytest.raises(DimensionTooHigh):
        compute_cell(0, np.zeros((1, 7)), seven)


def test_compute_diagram_rejects_duplicates_anywhere():
    pts = np.array([[0.1, 0.1], [0.9, 0.9], [0.9, 0.9]])
    with pytest.raises(DuplicatePoint):
        compute_diagram(pts, UNIT2)


# ---------------------------------------------------------------------------
# oracle: dense-grid nearest-generator labeling


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("k", [3, 12, 30])
def test_cells_agree_with_grid_labeling(seed, k):
    rng = np.random.default_rng(seed)
    pts = UNIT2.uniform(rng, k)
    cells = compute_diagram(pts, UNIT2)
    grid = grid_points(UNIT2, 41)
    labels = nearest_labels(pts, grid)
    for j, cell in enumerate(cells):
        mine = grid[labels == j]
        # every grid point labeled j satisfies cell j's half-spaces
        for h in cell.halfspaces:
            assert h.contains(mine, tol=1e-9).all()


@pytest.mark.parametrize("seed", [5, 6])
def test_furthest_distance_matches_boundary_sampling(seed):
    rng = np.random.default_rng(seed)
    pts = UNIT2.uniform(rng, 15)
    cells = compute_diagram(pts, UNIT2)
    for j, cell in enumerate(cells):
        edge = boundary_samples(cell.vertices)
        sampled = np.linalg.norm(edge - pts[j], axis=1).max()
        # the polytope maximum sits at a vertex, so boundary sampling can
        # only fall short by the sampling resolution
        assert sampled <= cell.furthest_distance + 1e-12
        assert cell.furthest_distance - sampled < 5e-3


def test_vertices_are_equidistant_witnesses():
    # interior vertices of a Voronoi diagram lie at equal distance from the
    # nearest generators; box vertices lie on box faces.
    rng = np.random.default_rng(11)
    pts = UNIT2.uniform(rng, 10)
    cells = compute_diagram(pts, UNIT2)
    for j, cell in enumerate(cells):
        for v in cell.vertices:
            dj = np.linalg.norm(v - pts[j])
            dmin = np.linalg.norm(pts - v, axis=1).min()
            assert dj <= dmin + 1e-8  # v belongs to cell j
            on_box = np.any(np.abs(v - UNIT2.lower) < 1e-9) or np.any(
                np.abs(v - UNIT2.upper) < 1e-9
            )
            shared = np.sum(np.linalg.norm(pts - v, axis=1) <= dj + 1e-8)
            assert on_box or shared >= 2


# ---------------------------------------------------------------------------
# one-shot enumeration vs the sequential-cut construction


@pytest.mark.parametrize("n,k,seed", [(1, 6, 0), (2, 9, 1), (3, 7, 2), (4, 6, 3)])
def test_cut_construction_matches_one_shot_enumeration(n, k, seed):
    dom = BoxDomain(np.zeros(n), np.ones(n))
    rng = np.random.default_rng(seed)
    pts = dom.uniform(rng, k)
    box_a, box_b = _box_arrays(dom)
    for j in range(k):
        p = pts[j]
        others = np.delete(pts, j, axis=0)
        normals = (others - p) / np.linalg.norm(others - p, axis=1)[:, None]
        offsets = np.einsum("ij,ij->i", normals, (others + p) / 2.0)
        a = np.vstack([box_a, normals])
        b = np.concatenate([box_b, offsets])
        brute = _enumerate_vertices(a, b)
        # dedup the brute-force set the same way
        from lipcert.geometry import _dedup_points

        brute = _dedup_points(brute)
        cell = compute_cell(j, pts, dom)
        assert canon(cell.vertices).shape == canon(brute).shape
        assert np.allclose(canon(cell.vertices), canon(brute), atol=1e-8)


# ---------------------------------------------------------------------------
# incremental updates


@pytest.mark.parametrize("n", [1, 2, 3])
def test_update_diagram_equals_full_recompute(n):
    dom = BoxDomain(np.zeros(n), np.ones(n))
    rng = np.random.default_rng(n)
    pts = dom.uniform(rng, 3)
    cells = compute_diagram(pts, dom)
    for _ in range(12):
        pts = np.vstack([pts, dom.uniform(rng, 1)])
        cells = update_diagram(cells, pts, dom)
        full = compute_diagram(pts, dom)
        for mine, ref in zip(cells, full):
            assert canon(mine.vertices).shape == canon(ref.vertices).shape
            assert np.allclose(canon(mine.vertices), canon(ref.vertices), atol=1e-8)
            assert mine.furthest_distance == pytest.approx(
                ref.furthest_distance, abs=1e-9
            )


def test_update_diagram_validates_lengths_and_duplicates():
    pts = np.array([[0.2, 0.2], [0.8, 0.8]])
    cells = compute_diagram(pts, UNIT2)
    with pytest.raises(DimensionMismatch):
        update_diagram(cells, pts, UNIT2)
    dup = np.vstack([pts, pts[0]])
    with pytest.raises(DuplicatePoint):
        update_diagram(cells, dup, UNIT2)


# ---------------------------------------------------------------------------
# furthest_vertex / covered_count


def test_furthest_vertex_reports_max_and_breaks_ties_lexicographically():
    cell = VoronoiCell(
        0,
        [],
        np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]),
        np.zeros(2),
        0.0,
    )
    v, d = furthest_vertex(cell, np.zeros(2))
    assert d == pytest.approx(1.0)
    assert np.allclose(v, [0.0, 1.0])  # tie with (1, 0) resolves lexicographically


def test_furthest_vertex_rejects_empty_and_mismatched():
    empty = VoronoiCell(0, [], np.empty((0, 2)), np.zeros(2), 0.0)
    with pytest.raises(NoVertices):
        furthest_vertex(empty, np.zeros(2))
    cell = VoronoiCell(0, [], np.array([[0.0, 0.0]]), np.zeros(2), 0.0)
    with pytest.raises(DimensionMismatch):
        furthest_vertex(cell, np.zeros(3))


@given(st.integers(0, 6), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_covered_count_matches_literal_loop(exclude, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(7, 2))
    radii = rng.uniform(0.05, 0.6, size=7)
    v = rng.uniform(size=2)
    assert covered_count(v, pts, radii, exclude) == covered_count_literal(
        v, pts, radii, exclude
    )


def test_covered_count_requires_matching_lengths():
    with pytest.raises(DimensionMismatch):
        covered_count(np.zeros(2), np.zeros((3, 2)), np.zeros(2), 0)


# ---------------------------------------------------------------------------
# grid_points


def test_grid_points_covers_corners_and_spacing():
    dom = BoxDomain([0.0, 1.0], [1.0, 3.0])
    g = grid_points(dom, 3)
    assert g.shape == (9, 2)
    assert {tuple(r) for r in g} == {
        (x, y) for x in (0.0, 0.5, 1.0) for y in (1.0, 2.0, 3.0)
    }
    with pytest.raises(ValueError):
        grid_points(dom, 1)


# ---------------------------------------------------------------------------
# property: random cells stay inside the box and contain their generator


@given(st.integers(2, 15), st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_cells_contain_generator_and_stay_in_box(k, seed):
    rng = np.random.default_rng(seed)
    pts = UNIT2.uniform(rng, k)
    cells = compute_diagram(pts, UNIT2)
    for j, cell in enumerate(cells):
        assert UNIT2.contains(cell.vertices, tol=1e-9).all()
        for h in cell.halfspaces:
            assert h.contains(pts[j], tol=1e-9)
        assert len(cell.vertices) >= 3  # 2-D bounded polytope
