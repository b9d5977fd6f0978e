"""Box domains, box-clipped Voronoi cells, and vertex queries.

The Voronoi cell of a generator p_j, clipped to a box, is the intersection of
half-spaces: the perpendicular bisector against every other generator (the
side containing p_j) plus the two box faces per coordinate.  Cells are bounded
convex polytopes, so they are determined by their vertices, which are computed
exactly as solutions of n-by-n linear systems of bounding hyperplanes;
near-singular systems are skipped and solutions are kept when they satisfy
all half-spaces within a feasibility tolerance.

Cells are built by sequential half-space cutting: starting from the box (its
vertices are the corners), bisectors are applied nearest generator first.
Each cut keeps the vertices that satisfy the new half-space and enumerates
the vertices created on the cutting plane, which lie on the plane plus n-1 of
the stored half-spaces.  Two pruning rules keep this cheap without changing
the result: a cell with furthest-vertex distance D lies inside the ball of
radius D around its generator, so (a) bisectors of generators further than 2D
are never applied, and (b) stored half-spaces whose boundary plane is further
than D from the generator are dropped.  Cutting order never changes the final
cell, and the same cut primitive updates existing cells when a generator is
appended to the diagram.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooHigh,
    DuplicatePoint,
    IndexOutOfRange,
    InternalGeometry,
    NoVertices,
)

# Feasibility slack for keeping an enumerated vertex, in units of Euclidean
# distance (all half-space normals are unit vectors).
TAU_FEAS = 1e-9
# Two points or vertices closer than this are treated as the same point.
TAU_DUP = 1e-10
# n-subsets whose coefficient matrix has |det| below this are skipped.
TAU_SING = 1e-12
# Exact enumeration is refused above this ambient dimension.
MAX_ENUM_DIM = 6

_COMBO_CHUNK = 200_000
_combo_cache: dict[tuple[int, int], np.ndarray] = {}


def _combos(m: int, r: int) -> np.ndarray:
    """Cached (C, r) array of all r-subsets of range(m), lexicographic."""
    if r == 0:
        return np.zeros((1, 0), dtype=np.intp)
    key = (m, r)
    cached = _combo_cache.get(key)
    if cached is None:
        cached = np.array(list(itertools.combinations(range(m), r)), dtype=np.intp)
        if math.comb(m, r) <= _COMBO_CHUNK and len(_combo_cache) < 512:
            _combo_cache[key] = cached
    return cached


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box with strictly positive side lengths."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise DimensionMismatch("lower and upper must be 1-d and equal length")
        if lower.size < 1:
            raise DimensionMismatch("a box needs at least one coordinate")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("box bounds must be finite")
        if not (lower < upper).all():
            raise ValueError("each lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def max_side(self) -> float:
        return float(self.sides.max())

    def contains(self, x, tol: float = 0.0):
        """Row-wise containment test; accepts a single point or a stack."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise DimensionMismatch("point dimension does not match the box")
        ok = ((pts >= self.lower - tol) & (pts <= self.upper + tol)).all(axis=1)
        return bool(ok[0]) if single else ok

    def corners(self) -> np.ndarray:
        cols = [(lo, hi) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*cols)), dtype=float)

    def uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space {x : normal . x <= offset} with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        normal = np.atleast_1d(np.asarray(self.normal, dtype=float))
        offset = float(self.offset)
        if normal.ndim != 1:
            raise DimensionMismatch("half-space normal must be a vector")
        if not (np.isfinite(normal).all() and np.isfinite(offset)):
            raise ValueError("half-space coefficients must be finite")
        nrm = float(np.linalg.norm(normal))
        if nrm <= 0.0:
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", normal / nrm)
        object.__setattr__(self, "offset", offset / nrm)

    def contains(self, x, tol: float = TAU_FEAS):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        vals = np.atleast_2d(x) @ self.normal - self.offset
        ok = vals <= tol
        return bool(ok[0]) if single else ok


@dataclass
class VoronoiCell:
    """One box-clipped cell: its half-spaces, vertices, and furthest vertex.

    ``halfspaces`` stores the box faces plus the bisectors that survived the
    pruning pass; dropped bisectors are redundant for this cell.  ``vertices``
    has one row per deduplicated vertex.
    """

    generator_index: int
    halfspaces: list[HalfSpace]
    vertices: np.ndarray
    furthest_vertex: np.ndarray = field(repr=False)
    furthest_distance: float = 0.0

    # Invariant: of all constraints ever imposed on this cell (box faces,
    # bisectors, half-space cuts), ``halfspaces`` retains every one whose
    # boundary plane is active on the cell, i.e. tight at some vertex.  Every
    # dropped plane is strictly slack on the whole cell, and cuts only shrink
    # the cell, so dropped planes can never support a vertex again.


def bisector(p_i, p_j) -> HalfSpace:
    """Half-space of points at least as close to ``p_j`` as to ``p_i``."""
    p_i = np.atleast_1d(np.asarray(p_i, dtype=float))
    p_j = np.atleast_1d(np.asarray(p_j, dtype=float))
    if p_i.shape != p_j.shape or p_i.ndim != 1:
        raise DimensionMismatch("bisector needs two points of equal dimension")
    diff = p_i - p_j
    dist = float(np.linalg.norm(diff))
    if dist <= TAU_DUP:
        raise DuplicatePoint("cannot bisect coincident points")
    normal = diff / dist
    offset = float(normal @ (p_i + p_j) / 2.0)
    return HalfSpace(normal, offset)


def box_halfspaces(domain: BoxDomain) -> list[HalfSpace]:
    """The 2n half-spaces whose intersection is the box."""
    out: list[HalfSpace] = []
    n = domain.dim
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        out.append(HalfSpace(e, float(domain.upper[i])))
        out.append(HalfSpace(-e, -float(domain.lower[i])))
    return out


def _box_arrays(domain: BoxDomain) -> tuple[np.ndarray, np.ndarray]:
    n = domain.dim
    eye = np.eye(n)
    a = np.vstack([eye, -eye])
    b = np.concatenate([domain.upper, -domain.lower])
    return a, b


def _combo_blocks(m: int, r: int):
    combos = itertools.combinations(range(m), r)
    while True:
        block = list(itertools.islice(combos, _COMBO_CHUNK))
        if not block:
            return
        yield np.asarray(block, dtype=np.intp).reshape(-1, r)


def _index_blocks(m: int, r: int):
    if math.comb(m, r) <= _COMBO_CHUNK:
        return [_combos(m, r)]
    return _combo_blocks(m, r)


def _det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def _det3(m: np.ndarray) -> np.ndarray:
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def _det4(m: np.ndarray) -> np.ndarray:
    # Laplace expansion along the first two rows: pair each 2x2 minor of
    # rows 0-1 with the complementary 2x2 minor of rows 2-3.
    a00, a01, a02, a03 = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2], m[..., 0, 3]
    a10, a11, a12, a13 = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2], m[..., 1, 3]
    a20, a21, a22, a23 = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2], m[..., 2, 3]
    a30, a31, a32, a33 = m[..., 3, 0], m[..., 3, 1], m[..., 3, 2], m[..., 3, 3]
    p01 = a00 * a11 - a01 * a10
    p02 = a00 * a12 - a02 * a10
    p03 = a00 * a13 - a03 * a10
    p12 = a01 * a12 - a02 * a11
    p13 = a01 * a13 - a03 * a11
    p23 = a02 * a13 - a03 * a12
    q01 = a20 * a31 - a21 * a30
    q02 = a20 * a32 - a22 * a30
    q03 = a20 * a33 - a23 * a30
    q12 = a21 * a32 - a22 * a31
    q13 = a21 * a33 - a23 * a31
    q23 = a22 * a33 - a23 * a32
    return p01 * q23 - p02 * q13 + p03 * q12 + p12 * q03 - p13 * q02 + p23 * q01


_DET_FNS = {1: lambda m: m[..., 0, 0], 2: _det2, 3: _det3, 4: _det4}

# Cramer's rule is used only when |det| clears this bar; systems between it
# and TAU_SING are handed to the LU solver, which handles poor conditioning
# more gracefully.
_TAU_CRAMER = 1e-6


def _solve_systems(sub_a: np.ndarray, sub_b: np.ndarray) -> np.ndarray:
    """Solutions of the nonsingular n-by-n systems in a (C, n, n) batch.

    For n <= 4 determinants come from closed-form expansions and the
    well-conditioned systems are solved by Cramer's rule, which vectorizes
    over the batch far better than per-matrix factorizations.  The returned
    row order is arbitrary; callers treat the result as a set.
    """
    n = sub_a.shape[2]
    det_fn = _DET_FNS.get(n)
    if det_fn is None:
        dets = np.linalg.det(sub_a)
        ok = np.abs(dets) > TAU_SING
        if not ok.any():
            return np.empty((0, n))
        sols = np.linalg.solve(sub_a[ok], sub_b[ok][..., None])[..., 0]
        return sols[np.isfinite(sols).all(axis=1)]
    dets = det_fn(sub_a)
    ok = np.abs(dets) > TAU_SING
    if not ok.any():
        return np.empty((0, n))
    a_ok, b_ok, d_ok = sub_a[ok], sub_b[ok], dets[ok]
    well = np.abs(d_ok) > _TAU_CRAMER
    parts: list[np.ndarray] = []
    if well.any():
        a_w, b_w, d_w = a_ok[well], b_ok[well], d_ok[well]
        sol_w = np.empty((len(d_w), n))
        for j in range(n):
            a_j = a_w.copy()
            a_j[:, :, j] = b_w
            sol_w[:, j] = det_fn(a_j) / d_w
        parts.append(sol_w)
    if not well.all():
        sol_i = np.linalg.solve(a_ok[~well], b_ok[~well][..., None])[..., 0]
        parts.append(sol_i)
    sols = np.concatenate(parts) if len(parts) > 1 else parts[0]
    return sols[np.isfinite(sols).all(axis=1)]


def _enumerate_vertices(a: np.ndarray, b: np.ndarray, tol: float = TAU_FEAS) -> np.ndarray:
    """All feasible intersection points of n-subsets of the hyperplanes a x = b."""
    m, n = a.shape
    if m < n:
        return np.empty((0, n))
    found: list[np.ndarray] = []
    for idx in _index_blocks(m, n):
        sols = _solve_systems(a[idx], b[idx])
        if len(sols) == 0:
            continue
        feas = (sols @ a.T <= b + tol).all(axis=1)
        if feas.any():
            found.append(sols[feas])
    if not found:
        return np.empty((0, n))
    return np.concatenate(found, axis=0)


def _enumerate_on_plane(
    sys_a: np.ndarray,
    sys_b: np.ndarray,
    normal: np.ndarray,
    offset: float,
    feas_a: np.ndarray,
    feas_b: np.ndarray,
    tol: float = TAU_FEAS,
) -> np.ndarray:
    """Feasible vertices on the hyperplane ``normal . x = offset``.

    Every such vertex is the intersection of the plane with n-1 of the
    hyperplanes ``sys_a x = sys_b``, so only (n-1)-subsets are enumerated;
    feasibility is checked against the full system ``feas_a x <= feas_b``.
    """
    m, n = sys_a.shape
    r = n - 1
    if m < r:
        return np.empty((0, n))
    found: list[np.ndarray] = []
    for idx in _index_blocks(m, r):
        c = len(idx)
        sub_a = np.concatenate([sys_a[idx], np.broadcast_to(normal, (c, 1, n))], axis=1)
        sub_b = np.concatenate([sys_b[idx], np.full((c, 1), offset)], axis=1)
        sols = _solve_systems(sub_a, sub_b)
        if len(sols) == 0:
            continue
        feas = (sols @ feas_a.T <= feas_b + tol).all(axis=1)
        if feas.any():
            found.append(sols[feas])
    if not found:
        return np.empty((0, n))
    return np.concatenate(found, axis=0)


def _dedup_points(pts: np.ndarray, tol: float = TAU_DUP) -> np.ndarray:
    """Greedy dedup in lexicographic order: keep a row unless it is within
    ``tol`` of an already-kept row."""
    if len(pts) <= 1:
        return pts
    pts = pts[np.lexsort(pts.T[::-1])]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    close = d2 <= tol * tol
    keep = np.ones(len(pts), dtype=bool)
    for i in range(1, len(pts)):
        if close[i, :i][keep[:i]].any():
            keep[i] = False
    return pts[keep]


def _lex_min_rows(rows: np.ndarray) -> int:
    return int(np.lexsort(rows.T[::-1])[0])


def _furthest(vertices: np.ndarray, generator: np.ndarray) -> tuple[np.ndarray, float]:
    dists = np.linalg.norm(vertices - generator, axis=1)
    dmax = float(dists.max())
    ties = np.where(dists >= dmax - 1e-12)[0]
    pick = ties[_lex_min_rows(vertices[ties])]
    return vertices[pick].copy(), dmax


def _box_cell(j: int, domain: BoxDomain, generator: np.ndarray) -> VoronoiCell:
    verts = domain.corners()
    fv, fd = _furthest(verts, generator)
    return VoronoiCell(j, box_halfspaces(domain), verts, fv, fd)


def compute_cell(j: int, points, domain: BoxDomain) -> VoronoiCell:
    """Exact cell of ``points[j]`` clipped to ``domain``.

    The cell starts as the box and is cut by one bisector at a time in order
    of generator distance; cutting stops once the next bisector's generator
    is further than twice the current furthest-vertex distance, because such
    a bisector cannot reach the ball that contains the cell.  Bisectors that
    leave every vertex strictly inside are skipped, so the stored half-space
    list stays small.

    Duplicates of the generator raise :class:`DuplicatePoint`.  An empty
    vertex set is impossible for a generator inside the box, so it raises
    :class:`InternalGeometry`.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DimensionMismatch("points must be a 2-d array")
    k, n = points.shape
    if not 0 <= j < k:
        raise IndexOutOfRange(f"generator index {j} outside 0..{k - 1}")
    if n != domain.dim:
        raise DimensionMismatch("point dimension does not match the box")
    if n > MAX_ENUM_DIM:
        raise DimensionTooHigh(f"vertex enumeration supports dimension <= {MAX_ENUM_DIM}")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")

    p = points[j]
    cell = _box_cell(j, domain, p)
    if k == 1:
        return cell

    others = np.delete(points, j, axis=0)
    diffs = others - p
    dists = np.linalg.norm(diffs, axis=1)
    if dists.min() <= TAU_DUP:
        raise DuplicatePoint("two generators coincide")
    normals = diffs / dists[:, None]
    offsets = np.einsum("ij,ij->i", normals, (others + p) / 2.0)

    margin = 10.0 * TAU_FEAS
    for i in np.argsort(dists, kind="stable"):
        if dists[i] > 2.0 * cell.furthest_distance + 1e-9:
            break
        slack = cell.vertices @ normals[i] - offsets[i]
        if slack.max() <= -margin:
            continue
        cell = _cut_cell(cell, normals[i], float(offsets[i]), p)
    return cell


def compute_diagram(points, domain: BoxDomain) -> list[VoronoiCell]:
    """All cells of the clipped diagram; validates pairwise distinctness once."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DimensionMismatch("points must be a 2-d array")
    k = len(points)
    if k >= 2:
        deltas = points[:, None, :] - points[None, :, :]
        pair = np.linalg.norm(deltas, axis=2)
        pair[np.diag_indices(k)] = np.inf
        if pair.min() <= TAU_DUP:
            raise DuplicatePoint("generator set contains coincident points")
    return [compute_cell(j, points, domain) for j in range(k)]


# A stored half-space is kept while some vertex is within this residual of
# its boundary plane, i.e. while the plane is active on the cell.  A plane
# that goes inactive stays strictly outside every later cut of the cell, so
# dropping it never loses a vertex.
_TAU_ACTIVE = 1e-7


def _cut_cell(cell: VoronoiCell, normal: np.ndarray, offset: float, generator: np.ndarray) -> VoronoiCell:
    """Exact intersection of ``cell`` with the half-space normal . x <= offset.

    Stored vertices that satisfy the cut survive.  The vertices created on
    the cutting plane each lie on n-1 stored planes plus the cut, and they
    sit inside the disk in which the plane crosses the cell's bounding ball,
    so only stored planes reaching that disk enter the enumeration.
    Afterwards, stored half-spaces that are tight at no vertex have become
    redundant and are dropped.
    """
    slack = cell.vertices @ normal - offset
    kept = cell.vertices[slack <= TAU_FEAS]
    a = np.asarray([h.normal for h in cell.halfspaces])
    b = np.asarray([h.offset for h in cell.halfspaces])

    gap = float(offset - normal @ generator)
    disk_r2 = cell.furthest_distance**2 - gap * gap
    if disk_r2 > 0.0:
        disk_r = math.sqrt(disk_r2)
        center = generator + gap * normal
        cand = np.abs(b - a @ center) <= disk_r + 10.0 * TAU_FEAS
        new_pts = _enumerate_on_plane(a[cand], b[cand], normal, offset, a, b)
        verts = _dedup_points(np.concatenate([kept, new_pts], axis=0))
    else:
        verts = _dedup_points(kept)
    if len(verts) == 0:
        raise InternalGeometry("half-space cut emptied a cell")
    fv, fd = _furthest(verts, generator)

    planes = cell.halfspaces + [HalfSpace(normal, float(offset))]
    full_a = np.vstack([a, normal[None, :]])
    full_b = np.append(b, offset)
    min_resid = (full_b[:, None] - full_a @ verts.T).min(axis=1)
    halfspaces = [h for h, r in zip(planes, min_resid) if r <= _TAU_ACTIVE]
    return VoronoiCell(cell.generator_index, halfspaces, verts, fv, fd)


def update_diagram(cells: list[VoronoiCell], points, domain: BoxDomain) -> list[VoronoiCell]:
    """Diagram after appending ``points[-1]`` to the generators of ``cells``.

    A cell is unchanged exactly when all of its vertices stay on its
    generator's side of the bisector against the new point; only cells that
    fail this test are cut, and the cut is an exact half-space intersection
    rather than a recomputation from all generators.  A conservative margin
    absorbs the feasibility slack carried by stored vertices.
    """
    points = np.asarray(points, dtype=float)
    if len(cells) != len(points) - 1:
        raise DimensionMismatch("update needs exactly one appended point")
    p_new = points[-1]
    gens = points[[cell.generator_index for cell in cells]]
    diffs = p_new - gens
    dists = np.linalg.norm(diffs, axis=1)
    if dists.min() <= TAU_DUP:
        raise DuplicatePoint("new point coincides with an existing generator")
    normals = diffs / dists[:, None]
    offsets = np.einsum("ij,ij->i", normals, (p_new + gens) / 2.0)
    margin = 10.0 * TAU_FEAS
    out: list[VoronoiCell] = []
    for i, cell in enumerate(cells):
        if dists[i] <= 2.0 * cell.furthest_distance + 1e-9:
            slack = cell.vertices @ normals[i] - offsets[i]
            if slack.max() > -margin:
                out.append(_cut_cell(cell, normals[i], float(offsets[i]), gens[i]))
                continue
        out.append(cell)
    out.append(compute_cell(len(points) - 1, points, domain))
    return out


def furthest_vertex(cell: VoronoiCell, generator) -> tuple[np.ndarray, float]:
    """Furthest stored vertex from ``generator`` and its distance.

    Distance ties within 1e-12 resolve to the lexicographically smallest
    vertex; the returned distance is the exact maximum.
    """
    generator = np.atleast_1d(np.asarray(generator, dtype=float))
    if len(cell.vertices) == 0:
        raise NoVertices("cell has no stored vertices")
    if cell.vertices.shape[1] != generator.size:
        raise DimensionMismatch("generator dimension does not match the cell")
    return _furthest(cell.vertices, generator)


def covered_count(vertex, points, radii, exclude: int) -> int:
    """How many balls B(points[l], radii[l]), l != exclude, contain ``vertex``."""
    vertex = np.atleast_1d(np.asarray(vertex, dtype=float))
    points = np.asarray(points, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if len(points) != len(radii):
        raise DimensionMismatch("points and radii must have equal length")
    inside = np.linalg.norm(points - vertex, axis=1) <= radii
    if 0 <= exclude < len(points):
        inside[exclude] = False
    return int(inside.sum())


def grid_points(domain: BoxDomain, per_dim: int) -> np.ndarray:
    """Regular grid over the box, ``per_dim`` samples per axis, as rows."""
    if per_dim < 2:
        raise ValueError("need at least two samples per axis")
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(domain.lower, domain.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
