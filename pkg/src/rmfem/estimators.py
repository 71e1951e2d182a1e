"""A posteriori error estimators.

Two probabilistic estimators quantify the error of a P1 solution from
the spread of its Lagrange interpolant onto randomly perturbed meshes:

* RM1 (1D only): eta_K^2 = h_K^{-(p-1)} * E || (u_h - I u_h)' ||^2 over
  the perturbed element, integrated exactly on the supermesh.
* RM2 (1D and 2D): eta_K^2 = h_K^{-(2p-2)} |K| * E || grad u_h|_K -
  grad I u_h|_K~ ||^2, comparing the two constant per-element
  gradients.

Deterministic baselines: the classical jump-based estimator of Babuska
and Rheinboldt in 1D and the standard residual estimator in 2D.  The
expectations are approximated by Monte Carlo averages over perturbation
realizations; reported values can be normalized by the first or second
absolute moment of the perturbation draw, which makes the estimators
directly comparable to the true error.
"""

import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import fem
from . import mesh as mesh_mod

GAUSS_POINTS = 5


# closed-form moments of the uniform perturbation draw
def uniform_abs_moment(dim, radius=0.5):
    """E |alpha_bar| for the uniform law on the interval/disk."""
    return radius / 2.0 if dim == 1 else 2.0 * radius / 3.0


def uniform_sq_moment(dim, radius=0.5):
    """E |alpha_bar|^2 for the uniform law on the interval/disk."""
    return radius ** 2 / 3.0 if dim == 1 else radius ** 2 / 2.0


@dataclass
class EstimatorReport:
    """Local indicators eta_K and the assembled global estimator."""

    kind: str
    local: np.ndarray
    global_estimate: float
    n_realizations: int
    normalized: bool
    # per-realization samples of the squared global estimator and the
    # standard error of the squared local means (same scaling as the
    # report); carried for confidence marking and oracles, not serialized
    sample_sq: np.ndarray | None = dataclass_field(default=None, repr=False)
    local_se_sq: np.ndarray | None = dataclass_field(default=None, repr=False)

    def validate(self):
        if np.any(self.local < 0):
            raise ValueError("local indicators must be nonnegative")
        total = float(np.sum(self.local ** 2))
        if abs(total - self.global_estimate ** 2) > 1e-12 * max(total, 1e-300):
            raise ValueError("global^2 != sum of local^2")

    def to_json(self):
        return json.dumps({
            "kind": self.kind,
            "local": self.local.tolist(),
            "global": self.global_estimate,
            "n_realizations": self.n_realizations,
            "normalized": self.normalized,
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        rep = cls(d["kind"], np.asarray(d["local"], dtype=float), d["global"],
                  d["n_realizations"], d["normalized"])
        rep.validate()
        return rep


def _report(kind, local_sq, n_realizations, normalized, sample_sq=None, local_se_sq=None):
    local_sq = np.maximum(local_sq, 0.0)
    return EstimatorReport(kind, np.sqrt(local_sq), float(np.sqrt(np.sum(local_sq))),
                           n_realizations, normalized, sample_sq, local_se_sq)


def _mc_report(kind, samples, normalized, moment):
    """Assemble a Monte Carlo report from per-realization squared samples."""
    n = samples.shape[0]
    local_sq = samples.mean(axis=0)
    sample_sq = samples.sum(axis=1)
    se_sq = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(samples.shape[1])
    if normalized:
        local_sq = local_sq / moment
        sample_sq = sample_sq / moment
        se_sq = se_sq / moment
    return _report(kind, local_sq, n, normalized, sample_sq, se_sq)


def jump_functional_1d(u_h):
    """J(u_h) = sqrt( sum_i hbar_i [u_h']_i^2 ) over interior nodes."""
    m = u_h.mesh
    if m.dim != 1:
        raise ValueError("jump functional is 1D")
    slopes = u_h.gradients()
    h = fem.element_measures(m)
    jumps = slopes[:-1] - slopes[1:]
    hbar = np.minimum(h[:-1], h[1:])
    return float(np.sqrt(np.sum(hbar * jumps ** 2)))


def _check_perturbations(u_h, perturbations):
    if len(perturbations) == 0:
        raise ValueError("need at least one perturbation realization")
    if isinstance(perturbations, mesh_mod.PerturbationBatch1D):
        if not np.array_equal(perturbations.reference.elements, u_h.mesh.elements):
            raise ValueError("perturbation batch does not share the field's connectivity")
        return perturbations.config.p
    p = perturbations[0].config.p
    for pm in perturbations:
        if pm.elements is not u_h.mesh.elements and \
                not np.array_equal(pm.elements, u_h.mesh.elements):
            raise ValueError("perturbation does not share the field's connectivity")
        if pm.config.p != p:
            raise ValueError("perturbations must share a common exponent p")
    return p


def _coordinate_rows_1d(perturbations):
    if isinstance(perturbations, mesh_mod.PerturbationBatch1D):
        return perturbations.coords
    return np.stack([pm.vertices[:, 0] for pm in perturbations])


def _config_of(perturbations):
    if isinstance(perturbations, mesh_mod.PerturbationBatch1D):
        return perturbations.config
    return perturbations[0].config


def rm1_squared_samples(u_h, perturbations):
    """Per-realization, per-element samples of h_K^{-(p-1)} times the
    squared H1 distance between u_h and its interpolant on the
    perturbed element, integrated exactly.

    Returns an (n_realizations, n_elements) array.
    """
    m = u_h.mesh
    if m.dim != 1:
        raise ValueError("the first estimator needs a supermesh in 2D; only RM2 is supported there")
    p = _check_perturbations(u_h, perturbations)
    x = m.vertices[:, 0]
    h = np.diff(x)
    n = len(h)
    xt = _coordinate_rows_1d(perturbations)
    vals = u_h.nodal_values
    du = np.diff(vals) / h  # reference slopes
    # Lagrange interpolant values at the displaced nodes, all realizations
    vt = np.interp(xt.ravel(), x, vals).reshape(xt.shape)
    dut = np.diff(vt, axis=1) / np.diff(xt)

    # A perturbed element (xt_i, xt_{i+1}) sees at most three reference
    # slopes: du[i-1] on (xt_i, x_i) when the left vertex moved left,
    # du[i] on the central overlap, du[i+1] on (x_{i+1}, xt_{i+1}) when
    # the right vertex moved right.
    du_pad = np.concatenate(([0.0], du, [0.0]))
    left_w = np.maximum(x[:-1] - xt[:, :-1], 0.0)
    right_w = np.maximum(xt[:, 1:] - x[1:], 0.0)
    core_w = np.minimum(x[1:], xt[:, 1:]) - np.maximum(x[:-1], xt[:, :-1])
    integ = (left_w * (du_pad[None, :n] - dut) ** 2
             + core_w * (du_pad[None, 1:n + 1] - dut) ** 2
             + right_w * (du_pad[None, 2:] - dut) ** 2)
    return h[None, :] ** (-(p - 1.0)) * integ


def estimator_rm1_1d(u_h, perturbations, normalized=True):
    """First probabilistic estimator (1D), Monte Carlo over realizations.

    Normalization rescales the squared indicators by 1 / E|alpha_bar|,
    the moment that carries the perturbation law in the first
    jump-equivalence sandwich, so the estimator is sized like the jump
    functional and hence like the true error.
    """
    samples = rm1_squared_samples(u_h, perturbations)
    mom = uniform_abs_moment(1, _config_of(perturbations).radius)
    return _mc_report("RM1", samples, normalized, mom)


def rm2_squared_samples(u_h, perturbations):
    """Per-realization, per-element samples of h_K^{-(2p-2)} |K| times
    the squared difference of the constant gradients."""
    m = u_h.mesh
    p = _check_perturbations(u_h, perturbations)
    g_ref = u_h.gradients()
    meas = np.abs(fem.element_measures(m))
    hk = m.element_diam
    scale = hk ** (-(2.0 * p - 2.0)) * meas
    if m.dim == 1:
        xt = _coordinate_rows_1d(perturbations)
        x = m.vertices[:, 0]
        vt = np.interp(xt.ravel(), x, u_h.nodal_values).reshape(xt.shape)
        g_pert = np.diff(vt, axis=1) / np.diff(xt)
        return scale[None, :] * (g_ref[None, :] - g_pert) ** 2
    out = np.empty((len(perturbations), m.n_elements))
    for r, pm in enumerate(perturbations):
        g_pert = fem.interpolate(u_h, pm).gradients()
        out[r] = scale * np.sum((g_ref - g_pert) ** 2, axis=1)
    return out


def estimator_rm2(u_h, perturbations, normalized=True):
    """Second probabilistic estimator (1D and 2D).

    Normalization rescales the squared indicators by 1 / E|alpha_bar|^2,
    the moment of the second jump-equivalence sandwich.
    """
    samples = rm2_squared_samples(u_h, perturbations)
    mom = uniform_sq_moment(u_h.mesh.dim, _config_of(perturbations).radius)
    return _mc_report("RM2", samples, normalized, mom)


def _gauss_on_elements(x0, x1, order=GAUSS_POINTS):
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts = x0[:, None] + (x1 - x0)[:, None] * t[None, :]
    wts = (x1 - x0)[:, None] * w[None, :]
    return pts, wts


def babuska_linears_1d(u_h, kappa):
    """The per-element linear functions of the jump-based deterministic
    estimator: values at the element's left and right endpoints.

    On element j the function interpolates tau_{j,1} at the left node
    and -tau_{j,0} at the right node, where tau_{j,k} weighs the slope
    jump at the corresponding node by kappa and the local mesh sizes;
    jumps at the two domain endpoints count as zero.
    """
    m = u_h.mesh
    if m.dim != 1:
        raise ValueError("1D only")
    x = m.vertices[:, 0]
    h = np.diff(x)
    slopes = u_h.gradients()
    kv = np.asarray(kappa(x), dtype=float)
    if np.min(kv) <= 0:
        raise ValueError("kappa must be positive")
    jumps = np.zeros(len(x))
    jumps[1:-1] = slopes[:-1] - slopes[1:]
    n = len(h)
    tau0 = np.zeros(n)  # jump at the element's right node x_j
    tau0[:-1] = h[:-1] / (h[1:] + h[:-1]) * jumps[1:-1] * kv[1:-1]
    tau1 = np.zeros(n)  # jump at the element's left node x_{j-1}
    tau1[1:] = h[1:] / (h[1:] + h[:-1]) * jumps[1:-1] * kv[1:-1]
    return tau1, -tau0


def babuska_1d(u_h, kappa):
    """Deterministic jump-based estimator: eta_j = || kappa^{-1} ell_j ||
    on each element, by Gauss quadrature."""
    m = u_h.mesh
    x = m.vertices[:, 0]
    ell_left, ell_right = babuska_linears_1d(u_h, kappa)
    pts, wts = _gauss_on_elements(x[:-1], x[1:])
    h = np.diff(x)
    t = (pts - x[:-1][:, None]) / h[:, None]
    ell = ell_left[:, None] * (1 - t) + ell_right[:, None] * t
    kq = np.asarray(kappa(pts.ravel()), dtype=float).reshape(pts.shape)
    local_sq = np.sum(wts * (ell / kq) ** 2, axis=1)
    return _report("BABUSKA", local_sq, 0, False)


@dataclass(frozen=True)
class LambdaTerm:
    zeta: float
    value: float


def lambda_term_1d(f, u_h, kappa, zeta):
    """Higher-order volume term Lambda: h^zeta times the misfit between
    f and the slopes of the jump-based linear functions."""
    if not 0 < zeta < 1:
        raise ValueError("zeta must lie in (0, 1)")
    m = u_h.mesh
    x = m.vertices[:, 0]
    h = np.diff(x)
    ell_left, ell_right = babuska_linears_1d(u_h, kappa)
    ell_slope = (ell_right - ell_left) / h
    pts, wts = _gauss_on_elements(x[:-1], x[1:])
    fq = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    total = np.sum(wts * (fq + ell_slope[:, None]) ** 2)
    return LambdaTerm(zeta, float(np.sqrt(m.element_diam.max() ** zeta * total)))


def residual_2d(u_h, f):
    """Standard residual estimator in 2D: element load term plus
    gradient-jump terms over interior edges (boundary edges count zero)."""
    m = u_h.mesh
    if m.dim != 2:
        raise ValueError("2D only")
    pts, wts, _ = fem.quadrature_nodes(m)
    fq = np.asarray(f(pts[:, :, 0].ravel(), pts[:, :, 1].ravel()), dtype=float)
    fq = np.broadcast_to(fq, (pts.shape[0] * pts.shape[1],)).reshape(pts.shape[:2])
    hk = m.element_diam
    local_sq = hk ** 2 * np.sum(wts * fq ** 2, axis=1)

    grads = u_h.gradients()
    elements = m.elements
    edge_vertices = np.concatenate([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]])
    owner = np.tile(np.arange(m.n_elements), 3)
    key = np.sort(edge_vertices, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    key, owner = key[order], owner[order]
    same = np.all(key[1:] == key[:-1], axis=1)
    for k in np.nonzero(same)[0]:
        e1, e2 = owner[k], owner[k + 1]
        a, b = m.vertices[key[k][0]], m.vertices[key[k][1]]
        t = b - a
        elen = np.linalg.norm(t)
        nu = np.array([t[1], -t[0]]) / elen
        jump = np.dot(grads[e1] - grads[e2], nu)
        contrib = elen * jump ** 2  # ||[grad u . nu]||^2 on the edge
        local_sq[e1] += hk[e1] * contrib
        local_sq[e2] += hk[e2] * contrib
    return _report("RESIDUAL2D", local_sq, 0, False)


def effectivity(report, true_error):
    """Estimated over true error."""
    if true_error <= 0:
        raise ValueError("true_error must be positive")
    return report.global_estimate / true_error


# -- executable inequality suites -------------------------------------------

@dataclass
class BoundCheck:
    name: str
    lower: float
    value: float
    upper: float
    slack: float
    applicable: bool = True

    @property
    def passed(self):
        if not self.applicable:
            return True
        return self.lower - self.slack <= self.value <= self.upper + self.slack


@dataclass
class LemmaCheckResult:
    checks: list
    assumption_ok: bool

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def check_lemma_bounds(u_h, kappa, perturbations, kappa_min, kappa_max):
    """Check the three jump-equivalence sandwiches on one instance.

    Uses un-normalized estimators; Monte Carlo means are compared with a
    three-standard-error slack.  The lower bound of the first sandwich
    only applies when the perturbation moments satisfy the smallness
    condition 4 h^{p-1} E|a|^2 / E|a| < 1 + lambda^{-(p-1)}.
    """
    m = u_h.mesh
    cfg = perturbations[0].config
    p = cfg.p
    lam = mesh_mod.quasi_uniformity(m)
    j_sq = jump_functional_1d(u_h) ** 2
    e_abs = uniform_abs_moment(1, cfg.radius)
    e_sq = uniform_sq_moment(1, cfg.radius)
    h = m.element_diam.max()

    def mc(samples):
        vals = samples.sum(axis=1)
        se = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return float(vals.mean()), 3.0 * float(se)

    rm1_mean, rm1_slack = mc(rm1_squared_samples(u_h, perturbations))
    rm2_mean, rm2_slack = mc(rm2_squared_samples(u_h, perturbations))
    det_sq = babuska_1d(u_h, kappa).global_estimate ** 2

    assumption_ok = 4.0 * h ** (p - 1.0) * e_sq / e_abs < 1.0 + lam ** (-(p - 1.0))
    lower1 = (e_abs * (1.0 + lam ** (-(p - 1.0))) / 2.0 - 2.0 * h ** (p - 1.0) * e_sq) * j_sq
    upper1 = e_abs * (1.0 + lam ** (p - 1.0)) / 2.0 * j_sq
    lower2 = e_sq / (2.0 * (1.0 + lam) ** 2 * lam ** (2.0 * p - 1.0)) * j_sq
    upper2 = 3.0 * e_sq * j_sq
    mm, MM = kappa_min, kappa_max
    lower3 = lam * mm ** 2 / (6.0 * (1.0 + lam) ** 3 * MM ** 2) * j_sq
    upper3 = 2.0 * lam ** 2 * MM ** 2 / (3.0 * (1.0 + lam) * mm ** 2) * j_sq

    checks = [
        BoundCheck("rm1_upper", -np.inf, rm1_mean, upper1, rm1_slack),
        BoundCheck("rm1_lower", lower1, rm1_mean, np.inf, rm1_slack, applicable=assumption_ok),
        BoundCheck("rm2_sandwich", lower2, rm2_mean, upper2, rm2_slack),
        BoundCheck("det_sandwich", lower3, det_sq, upper3, 0.0),
    ]
    return LemmaCheckResult(checks, assumption_ok)


def report_to_csv_rows(report, mesh):
    """One row per element: index, centroid, diameter, local indicator."""
    cx = mesh.vertices[mesh.elements, 0].mean(axis=1)
    cy = mesh.vertices[mesh.elements, 1].mean(axis=1) if mesh.dim == 2 \
        else np.zeros(mesh.n_elements)
    diam = mesh.element_diam
    return [(int(i), float(cx[i]), float(cy[i]), float(diam[i]), float(report.local[i]))
            for i in range(mesh.n_elements)]
