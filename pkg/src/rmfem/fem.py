"""P1 finite element assembly and solves for -div(kappa grad u) = f.

Works on both reference and perturbed meshes (anything exposing dim,
vertices, elements, boundary_mask).  Coefficients are callables of the
coordinate arrays: kappa(x) and f(x) in 1D, kappa(x, y) and f(x, y) in
2D.  Dirichlet data g is imposed exactly at boundary vertices by
lifting.
"""

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import mesh as mesh_mod

GAUSS_1D_POINTS = 5

# Dunavant degree-4 rule on the reference triangle (6 points),
# barycentric coordinates with weights summing to 1.
_D4_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
_a1, _a2 = 0.445948490915965, 0.091576213509771
_D4_L = np.array([
    [1 - 2 * _a1, _a1, _a1], [_a1, 1 - 2 * _a1, _a1], [_a1, _a1, 1 - 2 * _a1],
    [1 - 2 * _a2, _a2, _a2], [_a2, 1 - 2 * _a2, _a2], [_a2, _a2, 1 - 2 * _a2],
])


class AssemblyError(Exception):
    """Raised for non-positive coefficients or singular systems."""


class EllipticProblem:
    """Data of the elliptic boundary value problem.

    dirichlet defaults to homogeneous; pass a callable g for the
    inhomogeneous case.
    """

    def __init__(self, kappa, f, dirichlet=None):
        self.kappa = kappa
        self.f = f
        self.dirichlet = dirichlet


class PwLinearField:
    """Continuous piecewise-linear function: a mesh and one value per vertex."""

    def __init__(self, mesh, nodal_values):
        self.mesh = mesh
        self.nodal_values = np.asarray(nodal_values, dtype=float)
        if self.nodal_values.shape != (mesh.n_vertices,):
            raise ValueError("need one nodal value per vertex")

    def gradients(self):
        """Constant gradient per element: (n_e,) in 1D, (n_e, 2) in 2D."""
        m = self.mesh
        v = self.nodal_values[m.elements]
        if m.dim == 1:
            h = m.vertices[m.elements[:, 1], 0] - m.vertices[m.elements[:, 0], 0]
            return (v[:, 1] - v[:, 0]) / h
        grads, _ = _triangle_basis_gradients(m)
        return np.einsum("eid,ei->ed", grads, v)

    def h1_seminorm(self):
        m = self.mesh
        g = self.gradients()
        meas = element_measures(m)
        if m.dim == 1:
            return float(np.sqrt(np.sum(meas * g ** 2)))
        return float(np.sqrt(np.sum(meas * np.sum(g ** 2, axis=1))))

    def l2_norm(self):
        m = self.mesh
        v = self.nodal_values[m.elements]
        meas = element_measures(m)
        if m.dim == 1:
            a, b = v[:, 0], v[:, 1]
            return float(np.sqrt(np.sum(meas * (a * a + a * b + b * b) / 3.0)))
        sq = (np.sum(v ** 2, axis=1) + v[:, 0] * v[:, 1]
              + v[:, 1] * v[:, 2] + v[:, 2] * v[:, 0])
        return float(np.sqrt(np.sum(meas / 6.0 * sq)))

    def eval(self, points):
        """Point evaluation via location + barycentric interpolation."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(pts.shape[0])
        for i, pt in enumerate(pts):
            k, lam = mesh_mod.locate(self.mesh, pt if self.mesh.dim > 1 else pt[0])
            out[i] = np.dot(self.nodal_values[self.mesh.elements[k]], lam)
        return out

    def to_json(self, mesh_ref):
        import json
        return json.dumps({"mesh_ref": mesh_ref, "nodal_values": self.nodal_values.tolist()})


def element_measures(mesh):
    """Length (1D) or area (2D) of each element."""
    if mesh.dim == 1:
        return mesh_mod.element_diameters(mesh.vertices, mesh.elements, 1)
    return mesh_mod.signed_areas(mesh.vertices, mesh.elements)


def _triangle_basis_gradients(mesh):
    """Gradients of the three barycentric basis functions per triangle."""
    p = mesh.vertices[mesh.elements]
    area = mesh_mod.signed_areas(mesh.vertices, mesh.elements)
    grads = np.empty((mesh.n_elements, 3, 2))
    for i in range(3):
        b, c = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        grads[:, i, 0] = (b[:, 1] - c[:, 1]) / (2 * area)
        grads[:, i, 1] = (c[:, 0] - b[:, 0]) / (2 * area)
    return grads, area


def quadrature_nodes(mesh, order=GAUSS_1D_POINTS):
    """Per-element quadrature nodes and weights (weights include the
    element measure).  Returns (points, weights, barycentric) with
    points of shape (n_e, nq, dim)."""
    if mesh.dim == 1:
        t, w = np.polynomial.legendre.leggauss(order)
        t = 0.5 * (t + 1.0)  # to [0, 1]
        w = 0.5 * w
        x0 = mesh.vertices[mesh.elements[:, 0], 0]
        x1 = mesh.vertices[mesh.elements[:, 1], 0]
        pts = x0[:, None] + (x1 - x0)[:, None] * t[None, :]
        wts = (x1 - x0)[:, None] * w[None, :]
        lam = np.broadcast_to(np.stack([1 - t, t], axis=1), (mesh.n_elements, order, 2))
        return pts[:, :, None], wts, lam
    p = mesh.vertices[mesh.elements]
    area = mesh_mod.signed_areas(mesh.vertices, mesh.elements)
    pts = np.einsum("qi,eid->eqd", _D4_L, p)
    wts = area[:, None] * _D4_W[None, :]
    lam = np.broadcast_to(_D4_L[None, :, :], (mesh.n_elements, len(_D4_W), 3))
    return pts, wts, lam


def _eval_coefficient(func, pts, dim):
    flat = pts.reshape(-1, dim)
    vals = func(flat[:, 0]) if dim == 1 else func(flat[:, 0], flat[:, 1])
    return np.broadcast_to(np.asarray(vals, dtype=float), (flat.shape[0],)).reshape(pts.shape[:2])


def assemble(problem, mesh, check_kappa=True):
    """Assemble the full stiffness matrix and load vector.

    Returns (A, b) over all vertices, without boundary conditions.  A is
    a scipy CSR matrix in 2D and a dense tridiagonal-banded structure is
    avoided here for generality; 1D callers use the banded fast path in
    solve().
    """
    pts, wts, lam = quadrature_nodes(mesh)
    kq = _eval_coefficient(problem.kappa, pts, mesh.dim)
    if check_kappa and np.min(kq) <= 0:
        raise AssemblyError(f"kappa must be positive, found min {np.min(kq):g}")
    fq = _eval_coefficient(problem.f, pts, mesh.dim)
    int_kappa = np.sum(wts * kq, axis=1)

    n = mesh.n_vertices
    if mesh.dim == 1:
        h = element_measures(mesh)
        ke = int_kappa / h ** 2  # integral of kappa * phi' * phi'
        rows = np.concatenate([mesh.elements[:, 0], mesh.elements[:, 1],
                               mesh.elements[:, 0], mesh.elements[:, 1]])
        cols = np.concatenate([mesh.elements[:, 0], mesh.elements[:, 1],
                               mesh.elements[:, 1], mesh.elements[:, 0]])
        data = np.concatenate([ke, ke, -ke, -ke])
    else:
        grads, _ = _triangle_basis_gradients(mesh)
        local = np.einsum("e,eid,ejd->eij", int_kappa, grads, grads)
        rows = np.repeat(mesh.elements, 3, axis=1).ravel()
        cols = np.tile(mesh.elements, (1, 3)).ravel()
        data = local.ravel()
    A = scipy.sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    b = np.zeros(n)
    contrib = np.einsum("eq,eqi->ei", wts * fq, lam)
    np.add.at(b, mesh.elements.ravel(), contrib.ravel())
    return A, b


def _boundary_values(problem, mesh):
    bidx = np.nonzero(mesh.boundary_mask)[0]
    if problem.dirichlet is None:
        return bidx, np.zeros(len(bidx))
    coords = mesh.vertices[bidx]
    if mesh.dim == 1:
        g = problem.dirichlet(coords[:, 0])
    else:
        g = problem.dirichlet(coords[:, 0], coords[:, 1])
    return bidx, np.broadcast_to(np.asarray(g, dtype=float), (len(bidx),)).copy()


def solve(problem, mesh):
    """Galerkin P1 solution of the elliptic problem on the given mesh."""
    A, b = assemble(problem, mesh)
    bidx, g = _boundary_values(problem, mesh)
    u = np.zeros(mesh.n_vertices)
    u[bidx] = g
    interior = np.nonzero(~mesh.boundary_mask)[0]
    rhs = b[interior] - A[interior][:, bidx] @ g
    Aii = A[interior][:, interior]
    if mesh.dim == 1:
        # tridiagonal elimination on the banded interior system
        Aii = Aii.tocsr()
        if len(interior) == 1:
            ui = rhs / Aii[0, 0]
        else:
            ab = np.zeros((2, len(interior)))
            ab[0, 1:] = Aii.diagonal(1)
            ab[1] = Aii.diagonal()
            try:
                ui = scipy.linalg.solveh_banded(ab, rhs)
            except np.linalg.LinAlgError as exc:
                raise AssemblyError(f"banded solve failed: {exc}") from exc
    else:
        try:
            ui = scipy.sparse.linalg.spsolve(Aii.tocsc(), rhs)
        except RuntimeError:
            ui, info = scipy.sparse.linalg.cg(Aii, rhs, rtol=1e-12, maxiter=10_000)
            if info != 0:
                res = np.linalg.norm(Aii @ ui - rhs) / max(np.linalg.norm(rhs), 1e-300)
                raise AssemblyError(f"CG did not converge, relative residual {res:g}")
        if not np.all(np.isfinite(ui)):
            raise AssemblyError("direct sparse solve produced non-finite values")
    u[interior] = ui
    return PwLinearField(mesh, u)


def _patch_pairs(mesh):
    """Flat (vertex, incident element) pairs, cached on the mesh."""
    pairs = getattr(mesh, "_patch_pair_cache", None)
    if pairs is None:
        patches = mesh.vertex_patch
        vid = np.repeat(np.arange(mesh.n_vertices), [len(p) for p in patches])
        eid = np.concatenate(patches)
        mesh._patch_pair_cache = pairs = (vid, eid.astype(np.int64))
    return pairs


def _evaluate_at_displaced(field, points):
    """field(x~_i) for displaced vertex positions: each displaced vertex
    is searched in the patch of its reference vertex, with a global
    locate fallback."""
    m = field.mesh
    if m.dim == 1:
        return np.interp(points[:, 0], m.vertices[:, 0], field.nodal_values)
    vid, eid = _patch_pairs(m)
    grads, _ = _triangle_basis_gradients(m)
    p0 = m.vertices[m.elements[eid, 0]]
    lam = np.einsum("nd,nid->ni", points[vid] - p0, grads[eid])
    lam[:, 0] += 1.0
    ok = np.all(lam >= -1e-9, axis=1)
    vals = np.full(m.n_vertices, np.nan)
    lam_clip = np.clip(lam, 0.0, 1.0)
    lam_clip /= lam_clip.sum(axis=1, keepdims=True)
    cand = np.einsum("ni,ni->n", lam_clip, field.nodal_values[m.elements[eid]])
    # last write wins; any containing patch element gives the same value
    vals[vid[ok]] = cand[ok]
    missing = np.nonzero(np.isnan(vals))[0]
    for i in missing:
        k, lamk = mesh_mod.locate(m, points[i])
        vals[i] = np.dot(field.nodal_values[m.elements[k]], lamk)
    return vals


def interpolate(field, target):
    """Lagrange interpolant of the field onto the displaced mesh.

    The nodal value at displaced vertex i is the field evaluated at the
    displaced position, so the output agrees with the field at the new
    nodes; connectivity must be shared.  With zero displacement the
    output equals the input field.
    """
    ref = getattr(target, "reference", None)
    if ref is None or ref.elements is not field.mesh.elements:
        if not (hasattr(target, "elements")
                and np.array_equal(np.asarray(target.elements), np.asarray(field.mesh.elements))):
            raise ValueError("target must share the field's mesh connectivity")
    return PwLinearField(target, _evaluate_at_displaced(field, target.vertices))


def h1_seminorm(field):
    return field.h1_seminorm()


def l2_norm(field):
    return field.l2_norm()


def _error_quadrature(mesh, quad_order):
    """Quadrature of configurable order: Gauss in 1D, a Duffy-collapsed
    tensor Gauss rule on triangles in 2D."""
    if mesh.dim == 1:
        return quadrature_nodes(mesh, order=quad_order)[:2]
    t, w = np.polynomial.legendre.leggauss(quad_order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    uu, vv = np.meshgrid(t, t, indexing="ij")
    ww = np.outer(w, w) * (1.0 - uu)
    l2 = uu.ravel()
    l3 = (vv * (1.0 - uu)).ravel()
    l1 = 1.0 - l2 - l3
    lam = np.stack([l1, l2, l3], axis=1)
    p = mesh.vertices[mesh.elements]
    area = mesh_mod.signed_areas(mesh.vertices, mesh.elements)
    pts = np.einsum("qi,eid->eqd", lam, p)
    wts = 2.0 * area[:, None] * ww.ravel()[None, :]
    return pts, wts


def error_norms(field, exact_u, exact_grad, quad_order=7):
    """Quadrature approximation of the H1-seminorm and L2 errors
    against an exact solution.

    exact_grad returns du/dx in 1D and the pair (du/dx, du/dy) in 2D.
    """
    m = field.mesh
    pts, wts = _error_quadrature(m, quad_order)
    flat = pts.reshape(-1, m.dim)
    v = field.nodal_values[m.elements]
    if m.dim == 1:
        ue = np.asarray(exact_u(flat[:, 0])).reshape(pts.shape[:2])
        ge = np.asarray(exact_grad(flat[:, 0])).reshape(pts.shape[:2])
        x0 = m.vertices[m.elements[:, 0], 0]
        h = element_measures(m)
        t = (pts[:, :, 0] - x0[:, None]) / h[:, None]
        uh = v[:, 0][:, None] * (1 - t) + v[:, 1][:, None] * t
        gh = field.gradients()[:, None]
        h1_sq = np.sum(wts * (ge - gh) ** 2)
        l2_sq = np.sum(wts * (ue - uh) ** 2)
    else:
        ue = np.asarray(exact_u(flat[:, 0], flat[:, 1])).reshape(pts.shape[:2])
        gx, gy = exact_grad(flat[:, 0], flat[:, 1])
        gx = np.asarray(gx).reshape(pts.shape[:2])
        gy = np.asarray(gy).reshape(pts.shape[:2])
        grads, _ = _triangle_basis_gradients(m)
        gh = np.einsum("eid,ei->ed", grads, v)
        p = m.vertices[m.elements]
        # lambda_i(x) = lambda_i(p0) + grad_i . (x - p0)
        lam = np.einsum("eqd,eid->eqi", pts - p[:, 0:1, :], grads)
        lam[:, :, 0] += 1.0
        uh = np.einsum("eqi,ei->eq", lam, v)
        h1_sq = np.sum(wts * ((gx - gh[:, None, 0]) ** 2 + (gy - gh[:, None, 1]) ** 2))
        l2_sq = np.sum(wts * (ue - uh) ** 2)
    return float(np.sqrt(h1_sq)), float(np.sqrt(l2_sq))


def local_h1_errors(field, exact_grad, quad_order=7):
    """Per-element H1-seminorm error against an exact gradient."""
    m = field.mesh
    pts, wts = _error_quadrature(m, quad_order)
    flat = pts.reshape(-1, m.dim)
    if m.dim == 1:
        ge = np.asarray(exact_grad(flat[:, 0])).reshape(pts.shape[:2])
        gh = field.gradients()[:, None]
        return np.sqrt(np.sum(wts * (ge - gh) ** 2, axis=1))
    gx, gy = exact_grad(flat[:, 0], flat[:, 1])
    gx = np.asarray(gx).reshape(pts.shape[:2])
    gy = np.asarray(gy).reshape(pts.shape[:2])
    gh = field.gradients()
    return np.sqrt(np.sum(wts * ((gx - gh[:, None, 0]) ** 2 + (gy - gh[:, None, 1]) ** 2), axis=1))


def supermesh_1d(a, b):
    """Sorted union of the breakpoints of two 1D meshes on one domain."""
    if a.dim != 1 or b.dim != 1:
        raise ValueError("supermesh is 1D only")
    return np.union1d(a.vertices[:, 0], b.vertices[:, 0])


def h1_distance_1d(field_a, field_b):
    """Exact H1-seminorm distance between two 1D P1 fields on meshes of
    the same domain, integrated on their supermesh."""
    xa = field_a.mesh.vertices[:, 0]
    xb = field_b.mesh.vertices[:, 0]
    pts = np.union1d(xa, xb)
    mids = 0.5 * (pts[:-1] + pts[1:])
    widths = np.diff(pts)
    ga = field_a.gradients()[np.clip(np.searchsorted(xa, mids) - 1, 0, len(xa) - 2)]
    gb = field_b.gradients()[np.clip(np.searchsorted(xb, mids) - 1, 0, len(xb) - 2)]
    return float(np.sqrt(np.sum(widths * (ga - gb) ** 2)))
