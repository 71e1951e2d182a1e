"""Adaptive mesh refinement driven by local error indicators.

Each iteration solves, estimates per-element indicators by Monte Carlo
over fresh mesh perturbations, and refines every element whose
indicator exceeds the local threshold

    gamma_loc = gamma * ||u_h||_V / (c_up * sqrt(n_elements)),

which guarantees the relative-error target when the indicators bound
the true error.  In 1D, interior vertices whose two elements both sit
far below the threshold are coarsened away.  The loop stops when no
element exceeds the threshold.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimators, fem
from . import mesh as mesh_mod
from .rng import PERTURBATION, substream

ESTIMATOR_KINDS = ("RM1", "RM2", "BABUSKA", "RESIDUAL2D")


@dataclass
class AdaptConfig:
    gamma: float
    estimator_kind: str = "RM1"
    n_realizations: int = 20
    p: float = 3.0
    radius: float = 0.5
    include_boundary: bool = False
    c_up: float = 1.0
    coarsen_factor: float = 0.1
    max_iterations: int = 30
    seed: int = 0
    threads: int = 1
    confidence_z: float = 3.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.estimator_kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")


@dataclass
class IterationRecord:
    iteration: int
    n_elements: int
    estimator: float
    true_error: float | None
    effectivity: float | None
    wall_time: float
    gamma_loc: float
    n_refined: int
    n_coarsened: int
    marked: np.ndarray = field(repr=False, default=None)
    marked_centroids: np.ndarray = field(repr=False, default=None)


@dataclass
class AdaptRecord:
    iterations: list
    converged: bool
    meshes: list = field(default=None, repr=False)

    def rows(self):
        """CSV rows (iteration, n_elements, estimator, true_error, effectivity)."""
        out = []
        for it in self.iterations:
            out.append((it.iteration, it.n_elements, it.estimator,
                        "" if it.true_error is None else it.true_error,
                        "" if it.effectivity is None else it.effectivity))
        return out


def gamma_loc(gamma, u_h, n_elements, c_up=1.0):
    """Local marking threshold derived from the relative-error target."""
    norm = u_h.h1_seminorm()
    if norm <= 0:
        raise ValueError("field has zero energy norm")
    return gamma * norm / (c_up * np.sqrt(n_elements))


def _draw_perturbations(mesh, config, iteration):
    pconf = mesh_mod.PerturbationConfig(
        p=config.p, radius=config.radius,
        include_boundary=config.include_boundary, seed=config.seed)
    if mesh.dim == 1:
        rng = substream(config.seed, PERTURBATION, iteration)
        return mesh_mod.perturb_batch_1d(mesh, pconf, rng, config.n_realizations)

    def draw(k):
        return mesh_mod.perturb(mesh, pconf, substream(config.seed, PERTURBATION, iteration, k))

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(draw, range(config.n_realizations)))
    return [draw(k) for k in range(config.n_realizations)]


def compute_indicators(problem, u_h, config, iteration):
    """Raw estimator report for one adaptive iteration (fresh draws).

    Marking uses the un-normalized indicators of the estimator
    definitions; the record keeps the normalized values for display.
    """
    kind = config.estimator_kind
    if kind == "RM1":
        perts = _draw_perturbations(u_h.mesh, config, iteration)
        return estimators.estimator_rm1_1d(u_h, perts, normalized=False)
    if kind == "RM2":
        perts = _draw_perturbations(u_h.mesh, config, iteration)
        return estimators.estimator_rm2(u_h, perts, normalized=False)
    if kind == "BABUSKA":
        return estimators.babuska_1d(u_h, problem.kappa)
    return estimators.residual_2d(u_h, problem.f)


def _display_scale(report, config, dim):
    """Factor turning raw indicator squares into normalized ones."""
    if report.kind == "RM1":
        return 1.0 / estimators.uniform_abs_moment(1, config.radius)
    if report.kind == "RM2":
        return 1.0 / estimators.uniform_sq_moment(dim, config.radius)
    return 1.0


def mark_elements(report, threshold, z=3.0):
    """Elements whose squared indicator exceeds the squared threshold
    with z-standard-error confidence (exact test for deterministic
    estimators, whose standard error is zero)."""
    local_sq = report.local ** 2
    if report.local_se_sq is not None:
        local_sq = local_sq - z * report.local_se_sq
    return np.nonzero(local_sq > threshold ** 2)[0]


def _mark_with_drift(report, u_h, config):
    """Fixed-point marking: refining shrinks the local threshold through
    the element count, so the threshold is re-evaluated with the
    projected count until the marked set stabilizes.  Near-threshold
    elements then refine together with their cohort instead of trickling
    in over later iterations; the termination condition (empty set at
    the current count) is unchanged."""
    n_elements = u_h.mesh.n_elements
    children = 2  # bisection splits a marked element in two
    gl = gamma_loc(config.gamma, u_h, n_elements, config.c_up)
    marked = mark_elements(report, gl, config.confidence_z)
    for _ in range(5):
        if marked.size == 0:
            break
        projected = n_elements + (children - 1) * marked.size
        wider = mark_elements(report, gamma_loc(config.gamma, u_h, projected, config.c_up),
                              config.confidence_z)
        if wider.size == marked.size:
            break
        marked = wider
    return marked, gl


def adapt_loop(problem, initial, config, exact=None, store_meshes=False):
    """Run the adaptive loop; returns (mesh, field, record).

    exact, when given, is a pair (u, grad_u) of callables used to record
    the true H1 error and the effectivity index per iteration.
    """
    mesh = initial
    record = AdaptRecord(iterations=[], converged=False,
                         meshes=[] if store_meshes else None)
    u_h = None
    for iteration in range(1, config.max_iterations + 1):
        t0 = time.perf_counter()
        u_h = fem.solve(problem, mesh)
        report = compute_indicators(problem, u_h, config, iteration)
        marked, gl = _mark_with_drift(report, u_h, config)

        display = np.sqrt(_display_scale(report, config, mesh.dim))
        true_err = eff = None
        if exact is not None:
            true_err = fem.error_norms(u_h, exact[0], exact[1])[0]
            eff = display * report.global_estimate / true_err if true_err > 0 else None

        coarsen_marked = np.array([], dtype=int)
        if mesh.dim == 1 and config.coarsen_factor > 0 and marked.size:
            small = report.local < config.coarsen_factor * gl
            both_small = small[:-1] & small[1:]
            coarsen_marked = np.nonzero(both_small)[0] + 1  # interior vertex ids

        centroids = mesh.vertices[mesh.elements[marked]].mean(axis=1)
        record.iterations.append(IterationRecord(
            iteration, mesh.n_elements, display * report.global_estimate, true_err, eff,
            time.perf_counter() - t0, gl, marked.size, coarsen_marked.size,
            marked=marked, marked_centroids=centroids))
        if store_meshes:
            record.meshes.append(mesh)

        if marked.size == 0:
            record.converged = True
            break

        refined = mesh_mod.refine(mesh, marked)
        if coarsen_marked.size:
            coords = mesh.vertices[coarsen_marked, 0]
            idx = np.searchsorted(refined.vertices[:, 0], coords)
            keep = np.isclose(refined.vertices[idx, 0], coords)
            refined = mesh_mod.coarsen_1d(refined, idx[keep])
        mesh = refined
    return u_h.mesh, u_h, record
