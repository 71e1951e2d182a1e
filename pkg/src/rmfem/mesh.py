"""Simplicial meshes in 1D and 2D with admissible random perturbations.

A mesh is a conforming partition of an interval or a polygonal domain
into segments or triangles.  Interior vertices can be displaced by
``h^p * alpha_i`` where ``alpha_i = (h_bar_i / h)^p * alpha_bar_i`` and
``alpha_bar_i`` is drawn uniformly from the ball of radius ``radius``;
``h_bar_i`` is the smallest diameter among the elements incident to
vertex ``i``.  The displaced mesh keeps the connectivity of the original
one.
"""

import json
from dataclasses import dataclass

import numpy as np

from .rng import PERTURBATION, substream

_TOL = 1e-12


class MeshError(Exception):
    """Raised when a mesh violates conformity or an argument is invalid."""


class OutOfDomainError(MeshError):
    """Raised by point location for points outside the mesh."""


class SimplicialMesh:
    """Conforming simplicial mesh (segments for dim=1, triangles for dim=2).

    Attributes
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    vertices : ndarray, shape (n_vertices, dim)
        Vertex coordinates.  In 1D sorted strictly increasing.
    elements : ndarray, shape (n_elements, dim + 1)
        Vertex indices per element.  In 2D all triangles are
        counterclockwise and the first edge (v0, v1) is the refinement
        edge for newest-vertex bisection.
    boundary_mask : ndarray of bool, shape (n_vertices,)
        True for vertices on the domain boundary.
    """

    def __init__(self, dim, vertices, elements, boundary_mask=None, validate=True):
        self.dim = int(dim)
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, self.dim)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64).reshape(-1, self.dim + 1)
        if boundary_mask is None:
            boundary_mask = self._compute_boundary_mask()
        self.boundary_mask = np.asarray(boundary_mask, dtype=bool)
        self._patches = None
        if validate:
            self.check_conforming()

    # -- derived geometry ------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def element_diam(self):
        if getattr(self, "_diam_cache", None) is None:
            self._diam_cache = element_diameters(self.vertices, self.elements, self.dim)
        return self._diam_cache

    @property
    def h(self):
        return float(self.element_diam.max())

    @property
    def vertex_patch(self):
        """Per-vertex list of incident element indices (the patch of i)."""
        if self._patches is None:
            order = np.argsort(self.elements.ravel(), kind="stable")
            elems = np.repeat(np.arange(self.n_elements), self.dim + 1)[order]
            counts = np.bincount(self.elements.ravel(), minlength=self.n_vertices)
            offsets = np.concatenate(([0], np.cumsum(counts)))
            self._patches = [elems[offsets[i]:offsets[i + 1]] for i in range(self.n_vertices)]
        return self._patches

    def interior_vertices(self):
        return np.nonzero(~self.boundary_mask)[0]

    # -- validation -------------------------------------------------------

    def _compute_boundary_mask(self):
        mask = np.zeros(self.vertices.shape[0], dtype=bool)
        if self.dim == 1:
            mask[np.argmin(self.vertices[:, 0])] = True
            mask[np.argmax(self.vertices[:, 0])] = True
        else:
            edges, counts = boundary_edge_counts(self.elements)
            for e in edges[counts == 1]:
                mask[e[0]] = True
                mask[e[1]] = True
        return mask

    def check_conforming(self):
        """Raise MeshError if the mesh is not conforming."""
        if self.dim not in (1, 2):
            raise MeshError(f"unsupported dimension {self.dim}")
        if self.dim == 1:
            x = self.vertices[:, 0]
            if not np.all(np.diff(x) > 0):
                raise MeshError("1D vertices must be sorted strictly increasing")
            expect = np.column_stack([np.arange(len(x) - 1), np.arange(1, len(x))])
            if not np.array_equal(self.elements, expect):
                raise MeshError("1D elements must be consecutive intervals")
            if not (self.boundary_mask[0] and self.boundary_mask[-1]
                    and not self.boundary_mask[1:-1].any()):
                raise MeshError("1D boundary mask must flag exactly the endpoints")
            return
        areas = signed_areas(self.vertices, self.elements)
        if np.any(areas <= 0):
            raise MeshError("non-positive element area (inverted or degenerate triangle)")
        edges, counts = boundary_edge_counts(self.elements)
        if counts.max(initial=0) > 2:
            raise MeshError("edge shared by more than two triangles")
        on_boundary = np.zeros(self.n_vertices, dtype=bool)
        on_boundary[edges[counts == 1].ravel()] = True
        if not np.array_equal(on_boundary, self.boundary_mask):
            raise MeshError("boundary mask inconsistent with edge incidence")
        incidence = np.bincount(self.elements.ravel(), minlength=self.n_vertices)
        if np.any(incidence[~self.boundary_mask] == 0):
            raise MeshError("interior vertex with an empty patch")

    # -- serialization ----------------------------------------------------

    def to_json(self):
        return json.dumps({
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "elements": self.elements.tolist(),
            "boundary_mask": self.boundary_mask.astype(int).tolist(),
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(data["dim"], np.asarray(data["vertices"], dtype=float),
                   np.asarray(data["elements"], dtype=np.int64),
                   np.asarray(data["boundary_mask"], dtype=bool), validate=True)


def element_diameters(vertices, elements, dim):
    """Diameter of each element's vertex set."""
    pts = vertices[elements]
    if dim == 1:
        return np.abs(pts[:, 1, 0] - pts[:, 0, 0])
    d01 = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1)
    d12 = np.linalg.norm(pts[:, 1] - pts[:, 2], axis=1)
    d20 = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)
    return np.maximum(np.maximum(d01, d12), d20)


def signed_areas(vertices, elements):
    p = vertices[elements]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def _edge_array(elements):
    """All element edges as rows (sorted vertex pairs), 3 per triangle."""
    e = np.concatenate([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]])
    return np.sort(e, axis=1)


def boundary_edge_counts(elements):
    """Unique edges and the number of triangles sharing each."""
    edges = _edge_array(elements)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq, counts


# -- builders --------------------------------------------------------------

def build_uniform_1d(n_elements, domain=(0.0, 1.0)):
    """Uniform partition of an interval into n_elements segments."""
    if n_elements < 2:
        raise ValueError("n_elements must be >= 2")
    a, b = float(domain[0]), float(domain[1])
    x = np.linspace(a, b, n_elements + 1)
    return mesh_from_breakpoints(x)


def mesh_from_breakpoints(x):
    """1D mesh from sorted breakpoints."""
    x = np.asarray(x, dtype=float)
    n = len(x) - 1
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    mask = np.zeros(n + 1, dtype=bool)
    mask[[0, -1]] = True
    return SimplicialMesh(1, x[:, None], elements, mask)


def build_structured_2d(n_per_side):
    """Structured triangulation of the unit square.

    Each grid cell is split into two triangles by the same (bottom-left
    to top-right) diagonal.  The diagonal is the refinement edge.
    """
    if n_per_side < 2:
        raise ValueError("n_per_side must be >= 2")
    n = int(n_per_side)
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    elements = []
    for i in range(n):
        for j in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            # diagonal a-c is the longest edge: list it first
            elements.append((c, a, b))
            elements.append((a, c, d))
    return SimplicialMesh(2, vertices, np.asarray(elements))


def build_lshape_2d(n_per_side):
    """Structured triangulation of (-1,1)^2 minus the (-1,0)^2 quadrant.

    n_per_side counts subdivisions per unit side; the origin (the
    re-entrant corner) is always a vertex.
    """
    if n_per_side < 2:
        raise ValueError("n_per_side must be >= 2")
    n = int(n_per_side)
    xs = np.linspace(-1.0, 1.0, 2 * n + 1)
    keep = {}
    vertices = []
    for i in range(2 * n + 1):
        for j in range(2 * n + 1):
            x, y = xs[i], xs[j]
            if x < -_TOL and y < -_TOL:
                continue  # strictly inside the removed quadrant
            keep[(i, j)] = len(vertices)
            vertices.append((x, y))
    elements = []
    for i in range(2 * n):
        for j in range(2 * n):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (xs[j] + xs[j + 1])
            if cx < 0 and cy < 0:
                continue
            a = keep[(i, j)]
            b = keep[(i + 1, j)]
            c = keep[(i + 1, j + 1)]
            d = keep[(i, j + 1)]
            elements.append((c, a, b))
            elements.append((a, c, d))
    return SimplicialMesh(2, np.asarray(vertices), np.asarray(elements))


# -- random perturbation ----------------------------------------------------

@dataclass(frozen=True)
class PerturbationConfig:
    """Law of the admissible random perturbation.

    p is the damping exponent (>= 1); radius the support radius of the
    per-vertex uniform draw (<= 1/2 keeps the mesh conforming a.s.);
    include_boundary additionally displaces non-corner boundary vertices
    and reflects them back across the boundary (2D only).
    """

    p: float = 1.0
    radius: float = 0.5
    include_boundary: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("perturbation exponent p must be >= 1")
        if not 0 < self.radius <= 0.5:
            raise ValueError("radius must lie in (0, 1/2]")

    def realization_rng(self, k):
        """Generator for realization k of this configuration."""
        return substream(self.seed, PERTURBATION, k)


class PerturbedMesh:
    """Displaced copy of a mesh, sharing its connectivity.

    Element i corresponds to element i of the reference mesh; only the
    vertex coordinates differ.
    """

    def __init__(self, reference, vertices, config):
        self.reference = reference
        self.vertices = np.asarray(vertices, dtype=float)
        self.config = config

    @property
    def dim(self):
        return self.reference.dim

    @property
    def elements(self):
        return self.reference.elements

    @property
    def boundary_mask(self):
        return self.reference.boundary_mask

    @property
    def n_vertices(self):
        return self.reference.n_vertices

    @property
    def n_elements(self):
        return self.reference.n_elements

    @property
    def element_diam(self):
        return element_diameters(self.vertices, self.elements, self.dim)

    def check_conforming(self):
        if self.dim == 1:
            if not np.all(np.diff(self.vertices[:, 0]) > 0):
                raise MeshError("perturbed 1D vertices are not strictly increasing")
        else:
            if np.any(signed_areas(self.vertices, self.elements) <= 0):
                raise MeshError("perturbed triangle inverted")


def patch_min_diameters(mesh):
    """h_bar_i: smallest element diameter over each vertex's patch."""
    cached = getattr(mesh, "_hbar_cache", None)
    if cached is not None:
        return cached
    diam = mesh.element_diam
    out = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(out, mesh.elements.ravel(), np.repeat(diam, mesh.dim + 1))
    mesh._hbar_cache = out
    return out


def _draw_alpha_bar_batch(mesh, config, rng, batch, movable):
    n = mesh.n_vertices
    if mesh.dim == 1:
        ab = rng.uniform(-config.radius, config.radius, size=(batch, n))[..., None]
    else:
        # uniform on the disk of radius `radius`
        phi = rng.uniform(0.0, 2.0 * np.pi, size=(batch, n))
        r = config.radius * np.sqrt(rng.uniform(0.0, 1.0, size=(batch, n)))
        ab = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    ab[:, ~movable, :] = 0.0
    return ab


def draw_alpha_bar(mesh, config, rng):
    """Draw alpha_bar for every vertex (rows of zeros where not perturbed)."""
    return _draw_alpha_bar_batch(mesh, config, rng, 1, _movable_mask(mesh, config))[0]


def _movable_mask(mesh, config):
    movable = ~mesh.boundary_mask
    if config.include_boundary:
        if mesh.dim == 1:
            raise ValueError("boundary perturbation is only defined in 2D")
        movable = movable | ~_corner_mask(mesh)
    return movable


def _boundary_geometry(mesh):
    """Corner mask and inward boundary normals, cached on the mesh.

    A boundary vertex is a corner when its two boundary edges are not
    collinear; corners are never displaced.  Non-corner vertices sit on
    a locally straight boundary piece with a well-defined inward normal.
    """
    cached = getattr(mesh, "_boundary_geom_cache", None)
    if cached is not None:
        return cached
    edges, counts = boundary_edge_counts(mesh.elements)
    bedges = edges[counts == 1]
    incident = {}
    for e in bedges:
        for v in e:
            incident.setdefault(int(v), []).append(e)
    corners = np.zeros(mesh.n_vertices, dtype=bool)
    normals = np.zeros((mesh.n_vertices, 2))
    for v, es in incident.items():
        if len(es) != 2:
            corners[v] = True
            continue
        d = []
        for e in es:
            other = e[0] if e[1] == v else e[1]
            t = mesh.vertices[other] - mesh.vertices[v]
            d.append(t / np.linalg.norm(t))
        cross = d[0][0] * d[1][1] - d[0][1] * d[1][0]
        if abs(cross) > 1e-9:
            corners[v] = True
            continue
        t = d[0]
        n = np.array([-t[1], t[0]])
        patch = mesh.vertex_patch[v]
        centroid = mesh.vertices[mesh.elements[patch[0]]].mean(axis=0)
        if np.dot(centroid - mesh.vertices[v], n) < 0:
            n = -n
        normals[v] = n
    mesh._boundary_geom_cache = (corners, normals)
    return corners, normals


def _corner_mask(mesh):
    return _boundary_geometry(mesh)[0]


def _boundary_normals(mesh):
    return _boundary_geometry(mesh)[1]


def _displaced_vertices(mesh, config, alpha_bar, cache=None):
    alpha_bar = np.asarray(alpha_bar, dtype=float).reshape(mesh.n_vertices, -1)
    if cache is None:
        cache = _perturbation_cache(mesh, config)
    movable, hbar_p, normals = cache
    disp = np.where(movable[:, None], hbar_p[:, None] * alpha_bar, 0.0)
    if normals is not None:
        on_bnd = mesh.boundary_mask & movable
        normal_part = np.einsum("ij,ij->i", disp, normals)
        outside = on_bnd & (normal_part < 0)
        disp[outside] -= 2.0 * normal_part[outside, None] * normals[outside]
    return mesh.vertices + disp


def _perturbation_cache(mesh, config):
    movable = _movable_mask(mesh, config)
    hbar_p = patch_min_diameters(mesh) ** config.p
    normals = _boundary_normals(mesh) if (config.include_boundary and mesh.dim == 2) else None
    return movable, hbar_p, normals


def displace(mesh, config, alpha_bar):
    """Apply the perturbation law for a given draw of alpha_bar.

    x_i -> x_i + h_bar_i^p * alpha_bar_i, with boundary points reflected
    across the boundary when they leave the domain (include_boundary).
    Raises MeshError if the displaced mesh is not conforming.
    """
    perturbed = PerturbedMesh(mesh, _displaced_vertices(mesh, config, alpha_bar), config)
    perturbed.check_conforming()
    return perturbed


def perturb(mesh, config, rng, max_attempts=500_000):
    """One realization of the randomly perturbed mesh.

    Draws that would invert an element are rejected and redrawn from the
    same stream, i.e. the law is sampled conditioned on conformity.  In
    1D and for p > 1 at practical mesh sizes the first draw conforms;
    2D meshes at p = 1 can need many redraws.
    """
    movable, hbar_p, normals = _perturbation_cache(mesh, config)
    attempts = 0
    batch_schedule = iter([1, 15, 240])
    batch = 1
    while attempts < max_attempts:
        batch = next(batch_schedule, 1024)
        ab = _draw_alpha_bar_batch(mesh, config, rng, batch, movable)
        disp = hbar_p[None, :, None] * ab
        disp[:, ~movable, :] = 0.0
        if normals is not None:
            on_bnd = mesh.boundary_mask & movable
            normal_part = np.einsum("bij,ij->bi", disp, normals)
            flip = on_bnd[None, :] & (normal_part < 0)
            disp -= 2.0 * np.where(flip, normal_part, 0.0)[..., None] * normals[None, :, :]
        cand = mesh.vertices[None, :, :] + disp
        if mesh.dim == 1:
            ok = np.all(np.diff(cand[:, :, 0], axis=1) > 0, axis=1)
        else:
            p = cand[:, mesh.elements, :]
            areas = 0.5 * ((p[:, :, 1, 0] - p[:, :, 0, 0]) * (p[:, :, 2, 1] - p[:, :, 0, 1])
                           - (p[:, :, 2, 0] - p[:, :, 0, 0]) * (p[:, :, 1, 1] - p[:, :, 0, 1]))
            ok = np.all(areas > 0, axis=1)
        hits = np.nonzero(ok)[0]
        if hits.size:
            return PerturbedMesh(mesh, cand[hits[0]], config)
        attempts += batch
    raise MeshError(f"no conforming perturbation in {max_attempts} draws")


class PerturbationBatch1D:
    """Many 1D perturbation realizations stored as coordinate rows.

    Behaves as a sequence of PerturbedMesh but keeps the realizations in
    one (n, n_vertices) array for vectorized estimator evaluation.
    """

    def __init__(self, reference, coords, config):
        self.reference = reference
        self.coords = np.asarray(coords, dtype=float)
        self.config = config

    def __len__(self):
        return self.coords.shape[0]

    def __getitem__(self, k):
        return PerturbedMesh(self.reference, self.coords[k][:, None], self.config)


def perturb_batch_1d(mesh, config, rng, n, max_attempts=1000):
    """n 1D perturbation realizations drawn from one stream, vectorized.

    Rows that fail conformity are redrawn (same conditioning as
    perturb); with radius <= 1/2 on a unit-scale mesh this never
    triggers.
    """
    if mesh.dim != 1:
        raise ValueError("perturb_batch_1d is 1D only")
    movable, hbar_p, _ = _perturbation_cache(mesh, config)
    x = mesh.vertices[:, 0]
    coords = np.empty((n, len(x)))
    todo = np.arange(n)
    for _ in range(max_attempts):
        ab = _draw_alpha_bar_batch(mesh, config, rng, len(todo), movable)[:, :, 0]
        cand = x[None, :] + np.where(movable[None, :], hbar_p[None, :] * ab, 0.0)
        ok = np.all(np.diff(cand, axis=1) > 0, axis=1)
        coords[todo[ok]] = cand[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return PerturbationBatch1D(mesh, coords, config)
    raise MeshError(f"no conforming perturbation in {max_attempts} batched draws")


def quasi_uniformity(mesh):
    """Largest diameter ratio between adjacent elements (lambda >= 1)."""
    diam = mesh.element_diam
    if mesh.dim == 1:
        r = diam[1:] / diam[:-1]
        if len(r) == 0:
            return 1.0
        return float(max(r.max(), (1.0 / r).max()))
    edges = _edge_array(mesh.elements)
    owner = np.repeat(np.arange(mesh.n_elements), 3)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges, owner = edges[order], owner[order]
    same = np.all(edges[1:] == edges[:-1], axis=1)
    lam = 1.0
    for k in np.nonzero(same)[0]:
        a, b = diam[owner[k]], diam[owner[k + 1]]
        lam = max(lam, a / b, b / a)
    return float(lam)


# -- refinement and coarsening ----------------------------------------------

def refine(mesh, marked):
    """Refine the marked elements (bisection; in 2D newest-vertex
    bisection with conformity closure)."""
    return refine_info(mesh, marked)[0]


def refine_info(mesh, marked):
    """Like refine, also returning the parent element of each new element."""
    marked = np.asarray(sorted({int(m) for m in np.atleast_1d(list(marked))}), dtype=int)
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise ValueError("marked element index out of range")
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        if marked.size == 0:
            return mesh, np.arange(mesh.n_elements)
        mids = 0.5 * (x[marked] + x[marked + 1])
        new_x = np.sort(np.concatenate([x, mids]))
        out = mesh_from_breakpoints(new_x)
        parents = np.searchsorted(x, out.vertices[:-1, 0], side="right") - 1
        return out, parents
    return _refine_nvb(mesh, marked)


def _refine_nvb(mesh, marked):
    elements = mesh.elements
    n_e = mesh.n_elements
    nv = mesh.n_vertices
    v0, v1, v2 = elements[:, 0], elements[:, 1], elements[:, 2]

    def code(a, b):
        return np.minimum(a, b) * nv + np.maximum(a, b)

    codes = np.concatenate([code(v0, v1), code(v1, v2), code(v2, v0)])
    uniq, inverse = np.unique(codes, return_inverse=True)
    id_ref, id_2, id_3 = inverse[:n_e], inverse[n_e:2 * n_e], inverse[2 * n_e:]

    # closure: whenever any edge of an element is split, its refinement
    # edge (v0, v1) must be split as well
    split = np.zeros(len(uniq), dtype=bool)
    split[id_ref[marked]] = True
    while True:
        need = (split[id_2] | split[id_3]) & ~split[id_ref]
        if not need.any():
            break
        split[id_ref[need]] = True

    split_ids = np.nonzero(split)[0]
    mid_of = np.full(len(uniq), -1, dtype=np.int64)
    mid_of[split_ids] = nv + np.arange(len(split_ids))
    ea, eb = uniq[split_ids] // nv, uniq[split_ids] % nv
    vertices = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[ea] + mesh.vertices[eb])])

    m1, m2, m3 = mid_of[id_ref], mid_of[id_2], mid_of[id_3]
    s1, s2, s3 = split[id_ref], split[id_2], split[id_3]
    tris, parents = [], []
    ids = np.arange(n_e)

    def emit(mask, *tri_cols):
        if not mask.any():
            return
        for cols in tri_cols:
            tris.append(np.column_stack([c[mask] for c in cols]))
            parents.append(ids[mask])

    emit(~s1, (v0, v1, v2))
    emit(s1 & ~s2 & ~s3, (v2, v0, m1), (v1, v2, m1))
    emit(s1 & s2 & ~s3, (v2, v0, m1), (m1, v1, m2), (v2, m1, m2))
    emit(s1 & ~s2 & s3, (m1, v2, m3), (v0, m1, m3), (v1, v2, m1))
    emit(s1 & s2 & s3, (m1, v2, m3), (v0, m1, m3), (m1, v1, m2), (v2, m1, m2))

    out = SimplicialMesh(2, vertices, np.concatenate(tris))
    return out, np.concatenate(parents)


def coarsen_1d(mesh, marked_vertices):
    """Remove marked interior vertices, merging their two intervals.

    Adjacent marked vertices are never both removed in one pass: the
    leftmost is removed and its neighbor retained.
    """
    if mesh.dim != 1:
        raise ValueError("coarsening is implemented in 1D only")
    marked = sorted(set(int(v) for v in np.atleast_1d(marked_vertices)))
    if not marked:
        return mesh
    for v in marked:
        if v <= 0 or v >= mesh.n_vertices - 1:
            raise ValueError(f"vertex {v} is not interior")
    removed = []
    last = -2
    for v in marked:
        if v == last + 1:
            continue
        removed.append(v)
        last = v
    keep = np.ones(mesh.n_vertices, dtype=bool)
    keep[removed] = False
    return mesh_from_breakpoints(mesh.vertices[keep, 0])


# -- point location ----------------------------------------------------------

def locate(mesh, point, tol=_TOL):
    """Element index and barycentric coordinates of a point.

    Points on shared facets resolve to the lowest element index; points
    farther than tol outside the domain raise OutOfDomainError.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        px = point[0]
        if px < x[0] - tol or px > x[-1] + tol:
            raise OutOfDomainError(f"point {px} outside [{x[0]}, {x[-1]}]")
        px = min(max(px, x[0]), x[-1])
        k = int(np.searchsorted(x, px, side="left")) - 1
        k = min(max(k, 0), mesh.n_elements - 1)
        lam = (x[k + 1] - px) / (x[k + 1] - x[k])
        return k, np.array([lam, 1.0 - lam])
    p = mesh.vertices[mesh.elements]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    l1 = ((b[:, 0] - point[0]) * (c[:, 1] - point[1])
          - (c[:, 0] - point[0]) * (b[:, 1] - point[1])) / det
    l2 = ((c[:, 0] - point[0]) * (a[:, 1] - point[1])
          - (a[:, 0] - point[0]) * (c[:, 1] - point[1])) / det
    l3 = 1.0 - l1 - l2
    lam = np.column_stack([l1, l2, l3])
    scale = np.maximum(mesh.element_diam, 1.0)
    inside = np.all(lam >= -tol / scale[:, None], axis=1)
    hits = np.nonzero(inside)[0]
    if len(hits) == 0:
        raise OutOfDomainError(f"point {tuple(point)} outside the mesh")
    k = int(hits[0])
    out = np.clip(lam[k], 0.0, 1.0)
    return k, out / out.sum()
