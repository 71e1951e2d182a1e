"""Bayesian inversion of the log-conductivity with a randomized forward map.

The unknown log-conductivity is parameterized by a truncated
Karhunen-Loeve expansion of a Gaussian prior with Laplacian-power
covariance; the forward map solves -div(exp(theta) grad u) = f by P1
FEM on a fixed mesh and evaluates at observation points.  Posterior
sampling uses Metropolis-Hastings with the robust adaptive proposal: the
lower-triangular factor S of the proposal covariance is updated after
each step toward a target acceptance rate.  The randomized variant runs
one chain per perturbed-mesh realization and pools the samples.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import fem
from . import mesh as mesh_mod

THETA_CLIP = 20.0  # exp overflow guard; beyond this proposals are hopeless anyway


class KLPrior:
    """Ordered eigenpairs of the Laplacian-power prior covariance.

    1D on (0,1): lambda_i = (i pi)^(-2 alpha), phi_i = sqrt(2) sin(i pi x).
    2D on (0,1)^2: lambda_jk = (pi^2 (j^2+k^2))^(-alpha),
    phi_jk = 2 sin(j pi x) sin(k pi y), sorted by decreasing eigenvalue
    with lexicographic (j, k) tie-break.
    """

    def __init__(self, dim, alpha_exp, n_kl):
        if alpha_exp <= dim / 2:
            raise ValueError("covariance exponent must exceed dim/2")
        self.dim = int(dim)
        self.alpha_exp = float(alpha_exp)
        self.n_kl = int(n_kl)
        if dim == 1:
            idx = np.arange(1, n_kl + 1)
            self.indices = idx[:, None]
            self.eigenvalues = (idx * np.pi) ** (-2.0 * alpha_exp)
        else:
            side = int(np.ceil(np.sqrt(2.0 * n_kl))) + 2
            jk = [(j, k) for j in range(1, side) for k in range(1, side)]
            jk.sort(key=lambda t: (t[0] ** 2 + t[1] ** 2, t))
            self.indices = np.asarray(jk[:n_kl])
            s = self.indices[:, 0] ** 2 + self.indices[:, 1] ** 2
            self.eigenvalues = (np.pi ** 2 * s.astype(float)) ** (-alpha_exp)

    def eigenfunctions(self, points):
        """Matrix of phi_i at the given points, shape (n_points, n_kl)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dim == 1:
            return np.sqrt(2.0) * np.sin(np.outer(pts[:, 0], self.indices[:, 0]) * np.pi)
        sx = np.sin(np.pi * np.outer(pts[:, 0], self.indices[:, 0]))
        sy = np.sin(np.pi * np.outer(pts[:, 1], self.indices[:, 1]))
        return 2.0 * sx * sy

    def weighted_eigenfunctions(self, points):
        """phi_i scaled by sqrt(lambda_i): theta = W xi."""
        return self.eigenfunctions(points) * np.sqrt(self.eigenvalues)[None, :]

    def to_json(self):
        return json.dumps({"dim": self.dim, "alpha_exp": self.alpha_exp, "n_kl": self.n_kl,
                           "eigenvalues": self.eigenvalues.tolist(),
                           "indices": self.indices.tolist()})


def prior_spectrum(dim, alpha_exp, n_kl):
    return KLPrior(dim, alpha_exp, n_kl)


def kl_to_field(xi, prior):
    """Callable theta(x) (1D) or theta(x, y) (2D) for given coefficients."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (prior.n_kl,):
        raise ValueError(f"xi must have length {prior.n_kl}")
    if prior.dim == 1:
        def theta(x):
            pts = np.asarray(x, dtype=float).reshape(-1, 1)
            return prior.weighted_eigenfunctions(pts) @ xi
        return theta

    def theta(x, y):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        return prior.weighted_eigenfunctions(np.column_stack([x, y])) @ xi
    return theta


@dataclass
class ObservationSet:
    points: np.ndarray
    values: np.ndarray
    noise_var: np.ndarray  # diagonal of the noise covariance

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        self.noise_var = np.broadcast_to(
            np.asarray(self.noise_var, dtype=float), self.values.shape).copy()
        if len(self.points) != len(self.values):
            raise ValueError("points and values must have matching length")
        if np.any(self.noise_var < 0):
            raise ValueError("noise variances must be nonnegative")

    def to_json(self):
        return json.dumps({"points": self.points.tolist(), "values": self.values.tolist(),
                           "noise_var": self.noise_var.tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.asarray(d["points"]), np.asarray(d["values"]), np.asarray(d["noise_var"]))


class ForwardMap:
    """Parameter-to-observation map G(xi) on a fixed (possibly perturbed)
    mesh: assemble with kappa = exp(theta), solve, evaluate at points.

    Geometry, quadrature, eigenfunction values and the observation
    operator are precomputed once, so each evaluation costs one small
    linear solve.
    """

    def __init__(self, mesh, points, f, prior):
        self.mesh = mesh
        self.prior = prior
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        pts, wts, lam = fem.quadrature_nodes(mesh)
        self._wts = wts
        self._phi_q = prior.weighted_eigenfunctions(pts.reshape(-1, mesh.dim))
        fq = fem._eval_coefficient(f, pts, mesh.dim)
        n = mesh.n_vertices
        load = np.zeros(n)
        np.add.at(load, mesh.elements.ravel(),
                  np.einsum("eq,eqi->ei", wts * fq, lam).ravel())
        self._interior = np.nonzero(~mesh.boundary_mask)[0]
        self._load_i = load[self._interior]

        # observation operator: barycentric weights at fixed points
        ref = getattr(mesh, "reference", mesh)
        self._obs_elems = np.empty(len(self.points), dtype=int)
        self._obs_lam = []
        for i, pt in enumerate(self.points):
            k, lamq = mesh_mod.locate(mesh, pt if mesh.dim > 1 else pt[0])
            self._obs_elems[i] = k
            self._obs_lam.append(lamq)
        self._obs_lam = np.asarray(self._obs_lam)

        if mesh.dim == 1:
            h = fem.element_measures(mesh)
            self._inv_h_sq = 1.0 / h ** 2
            self._left = mesh.elements[:, 0]
            self._right = mesh.elements[:, 1]
        else:
            grads, _ = fem._triangle_basis_gradients(mesh)
            self._gram = np.einsum("eid,ejd->eij", grads, grads)
            rows = np.repeat(mesh.elements, 3, axis=1).ravel()
            cols = np.tile(mesh.elements, (1, 3)).ravel()
            keep = ~mesh.boundary_mask[rows] & ~mesh.boundary_mask[cols]
            renum = np.cumsum(~mesh.boundary_mask) - 1
            self._rows = renum[rows[keep]]
            self._cols = renum[cols[keep]]
            self._keep = keep
            self._n_int = len(self._interior)
            self._dense = self._n_int <= 1500

    def __call__(self, xi):
        mesh = self.mesh
        theta_q = self._phi_q @ np.asarray(xi, dtype=float)
        kq = np.exp(np.clip(theta_q, -THETA_CLIP, THETA_CLIP)).reshape(self._wts.shape)
        int_kappa = np.einsum("eq,eq->e", self._wts, kq)
        u = np.zeros(mesh.n_vertices)
        if mesh.dim == 1:
            ke = int_kappa * self._inv_h_sq
            n_i = len(self._interior)
            diag = ke[:-1] + ke[1:]
            if n_i == 1:
                u[self._interior] = self._load_i / diag
            else:
                ab = np.zeros((2, n_i))
                ab[0, 1:] = -ke[1:-1]
                ab[1] = diag
                u[self._interior] = scipy.linalg.solveh_banded(ab, self._load_i)
        else:
            data = (int_kappa[:, None, None] * self._gram).ravel()[self._keep]
            if self._dense:
                A = np.zeros((self._n_int, self._n_int))
                np.add.at(A, (self._rows, self._cols), data)
                try:
                    c = scipy.linalg.cho_factor(A, check_finite=False)
                    u[self._interior] = scipy.linalg.cho_solve(c, self._load_i, check_finite=False)
                except np.linalg.LinAlgError:
                    u[self._interior] = np.linalg.solve(A, self._load_i)
            else:
                A = scipy.sparse.coo_matrix((data, (self._rows, self._cols)),
                                            shape=(self._n_int, self._n_int)).tocsc()
                u[self._interior] = scipy.sparse.linalg.spsolve(A, self._load_i)
        vals = u[mesh.elements[self._obs_elems]]
        return np.einsum("mi,mi->m", vals, self._obs_lam)


def forward(theta, mesh, points, f):
    """One-shot forward evaluation for a plain callable theta (no KL)."""
    if mesh.dim == 1:
        kappa = lambda x: np.exp(np.clip(theta(x), -THETA_CLIP, THETA_CLIP))
    else:
        kappa = lambda x, y: np.exp(np.clip(theta(x, y), -THETA_CLIP, THETA_CLIP))
    u_h = fem.solve(fem.EllipticProblem(kappa, f), mesh)
    if len(points) == 0:
        return np.empty(0)
    return u_h.eval(points)


def potential(g_values, obs):
    """Data misfit 0.5 * sum (G - y)^2 / sigma^2."""
    g_values = np.asarray(g_values, dtype=float)
    if g_values.shape != obs.values.shape:
        raise ValueError("forward output and observations differ in size")
    if np.any(obs.noise_var == 0):
        raise ValueError("potential needs strictly positive noise variances")
    r = g_values - obs.values
    return 0.5 * float(np.sum(r * r / obs.noise_var))


@dataclass
class ChainState:
    xi: np.ndarray
    chol: np.ndarray
    n_accepted: int
    n_total: int
    log_potential: float

    @property
    def acceptance_rate(self):
        return self.n_accepted / max(self.n_total, 1)


def mh_chain(init, obs, forward_map, n_steps, rng, *, ram=True, target_acc=0.25,
             s0=0.1, freeze_proposal=None):
    """Metropolis-Hastings chain for the KL coefficients.

    The target is the standard normal prior times exp(-Phi); with
    obs=None the chain samples the prior.  The proposal is N(xi, S S^T)
    with S adapted on the fly (robust adaptive Metropolis) toward the
    target acceptance rate, with step size min(1, dim * n^(-2/3));
    freeze_proposal disables adaptation and uses the given factor.

    Returns (samples, ChainState); samples has shape (n_steps, dim) and
    includes the initial state as its first row.
    """
    xi = np.asarray(init, dtype=float).copy()
    dim = len(xi)
    if freeze_proposal is not None:
        S = np.array(freeze_proposal, dtype=float).reshape(dim, dim)
        ram = False
    else:
        S = s0 * np.eye(dim)

    def log_target(x):
        lp = -0.5 * float(x @ x)
        if obs is None or forward_map is None:
            return lp, 0.0
        phi = potential(forward_map(x), obs)
        return lp - phi, phi

    lt, phi = log_target(xi)
    samples = np.empty((n_steps, dim))
    samples[0] = xi
    n_accepted = 0
    for n in range(1, n_steps):
        u = rng.standard_normal(dim)
        prop = xi + S @ u
        lt_prop, phi_prop = log_target(prop)
        if np.isfinite(lt_prop):
            alpha = min(1.0, np.exp(min(lt_prop - lt, 0.0)))
        else:
            alpha = 0.0  # reject non-finite potentials, keep adapting
        if rng.uniform() < alpha:
            xi, lt, phi = prop, lt_prop, phi_prop
            n_accepted += 1
        samples[n] = xi
        if ram:
            eta = min(1.0, dim * n ** (-2.0 / 3.0))
            scale = eta * (alpha - target_acc)
            su = S @ u
            norm_sq = float(u @ u)
            if norm_sq > 0:
                M = S @ S.T + scale / norm_sq * np.outer(su, su)
                S = np.linalg.cholesky(M)
    state = ChainState(xi, S, n_accepted, n_steps - 1, phi)
    return samples, state


@dataclass
class PosteriorSummary:
    xi_mean: np.ndarray
    xi_std: np.ndarray
    grid: np.ndarray
    kappa_mean: np.ndarray
    kappa_std: np.ndarray
    n_samples: int

    def to_json_dict(self):
        return {"xi_mean": self.xi_mean.tolist(), "xi_std": self.xi_std.tolist(),
                "grid": self.grid.tolist(), "kappa_mean": self.kappa_mean.tolist(),
                "kappa_std": self.kappa_std.tolist(), "n_samples": self.n_samples}


def posterior_summary(chains, prior, eval_grid, burn_in_frac=0.2, chunk=20_000):
    """Pool post-burn-in samples across chains; mean and pointwise std of
    the conductivity exp(theta) on the grid and of the coefficients."""
    if not 0 <= burn_in_frac < 1:
        raise ValueError("burn_in_frac must lie in [0, 1)")
    chains = [np.atleast_2d(c) for c in chains]
    if len(chains) == 0:
        raise ValueError("need at least one chain")
    kept = [c[int(burn_in_frac * len(c)):] for c in chains]
    pooled = np.concatenate(kept, axis=0)
    if pooled.size == 0:
        raise ValueError("no samples remain after burn-in")
    grid = np.atleast_2d(np.asarray(eval_grid, dtype=float))
    if grid.shape[0] == 1 and grid.shape[1] > prior.dim:
        grid = grid.T
    W = prior.weighted_eigenfunctions(grid)
    n = pooled.shape[0]
    s1 = np.zeros(W.shape[0])
    for start in range(0, n, chunk):
        s1 += np.exp(pooled[start:start + chunk] @ W.T).sum(axis=0)
    mean = s1 / n
    var = np.zeros(W.shape[0])
    for start in range(0, n, chunk):
        d = np.exp(pooled[start:start + chunk] @ W.T) - mean
        var += (d * d).sum(axis=0)
    return PosteriorSummary(pooled.mean(axis=0), pooled.std(axis=0, ddof=0),
                            grid, mean, np.sqrt(var / n), n)


def synthesize_observations(theta, fine_mesh, points, noise_var, rng, f):
    """Noisy point observations of a reference solve on a fine mesh."""
    clean = forward(theta, fine_mesh, points, f)
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), clean.shape)
    noise = rng.standard_normal(clean.shape) * np.sqrt(noise_var) if np.any(noise_var > 0) \
        else np.zeros_like(clean)
    return ObservationSet(np.atleast_2d(points), clean + noise, noise_var.copy())
