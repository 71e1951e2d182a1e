"""Experiment drivers with machine-readable outputs.

Each driver reproduces one of the studies at configurable scale and
writes CSV/JSON artifacts plus a manifest of resolved parameters into
an output directory.  All randomness derives from the experiment seed,
so outputs are byte-identical across reruns.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, adapt, bayes, estimators, fem, problems
from . import mesh as mesh_mod
from .rng import CHAIN, OBSERVATION, PERTURBATION, substream

CSV_MAGIC = "# rmfem-csv v1"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(CSV_MAGIC + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish(out_dir, name, params, outputs, extra=None):
    manifest = {"experiment": name, "version": __version__, "params": params,
                "outputs": sorted(outputs)}
    if extra:
        manifest.update(extra)
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


# -- convergence study --------------------------------------------------------

def run_convergence(out_dir, seed=0, p_values=(1.0, 2.0, 3.0), n_realizations=200,
                    levels=(16, 32, 64, 128, 256), threads=1):
    """A priori rates for the smooth problem: deterministic error,
    per-realization randomized error, balance ratio, and the mean-square
    randomization rate for several damping exponents."""
    entry = problems.get("smooth1d")
    params = {"seed": seed, "p_values": list(p_values),
              "n_realizations": n_realizations, "levels": list(levels)}
    rows = []
    summary = {"p": {}}
    hs = np.array([1.0 / n for n in levels])
    det_errors = []
    per_real_errors = {p: [] for p in p_values}  # p -> list over h of arrays
    balance = {p: [] for p in p_values}
    for n in levels:
        mesh = mesh_mod.build_uniform_1d(n)
        u_h = fem.solve(entry.problem, mesh)
        det_err = fem.error_norms(u_h, entry.exact, entry.exact_grad)[0]
        det_errors.append(det_err)
        for p in p_values:
            cfg = mesh_mod.PerturbationConfig(p=p, seed=seed)
            rng = substream(seed, PERTURBATION, int(p * 10), n)
            batch = mesh_mod.perturb_batch_1d(mesh, cfg, rng, n_realizations)

            def one(k):
                pm = batch[k]
                u_t = fem.solve(entry.problem, pm)
                rm_err = fem.error_norms(u_t, entry.exact, entry.exact_grad)[0]
                dist = fem.h1_distance_1d(u_h, u_t)
                return rm_err, dist

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    pairs = list(pool.map(one, range(n_realizations)))
            else:
                pairs = [one(k) for k in range(n_realizations)]
            rm_errs = np.array([a for a, _ in pairs])
            dists = np.array([b for _, b in pairs])
            per_real_errors[p].append(rm_errs)
            balance[p].append(float(np.mean(dists / det_err)))
            rows.append((p, 1.0 / n, det_err, float(rm_errs.mean()),
                         float(np.sqrt(np.mean(dists ** 2))), balance[p][-1]))
    log_h = np.log(hs)
    det_slope = float(np.polyfit(log_h, np.log(det_errors), 1)[0])
    summary["deterministic_slope"] = det_slope
    warnings = []
    for p in p_values:
        errs = np.stack(per_real_errors[p])  # (levels, realizations)
        slopes = np.polyfit(log_h, np.log(errs), 1)[0]
        ms = np.array([r[4] for r in rows if r[0] == p])  # rms randomization distance
        ms_slope = float(np.polyfit(log_h, np.log(ms), 1)[0])
        summary["p"][str(p)] = {
            "realization_slopes": [float(s) for s in slopes],
            "ms_randomization_slope": ms_slope,
            "balance_ratio": balance[p],
        }
        threshold = (p + 1) / 2 - 0.25
        if ms_slope < threshold:
            warnings.append(f"p={p}: mean-square randomization slope {ms_slope:.3f} "
                            f"below conjectured {threshold:.3f}")
    outputs = ["convergence.csv", "summary.json"]
    write_csv(os.path.join(out_dir, "convergence.csv"),
              ["p", "h", "err_det", "err_rm_mean", "dist_rm_rms", "balance_ratio"], rows)
    if warnings:
        with open(os.path.join(out_dir, "conjecture_warning.txt"), "w") as fh:
            fh.write("\n".join(warnings) + "\n")
        outputs.append("conjecture_warning.txt")
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return _finish(out_dir, "convergence", params, outputs)


# -- adaptivity experiments ---------------------------------------------------

def _adapt_outputs(out_dir, entry, config, record, mesh, u_h, params, name):
    write_csv(os.path.join(out_dir, "adapt.csv"),
              ["iteration", "n_elements", "estimator", "true_error", "effectivity"],
              record.rows())
    rows = []
    true_local = fem.local_h1_errors(u_h, entry.exact_grad) if entry.exact_grad else None
    kinds = []
    if mesh.dim == 1:
        pconf = mesh_mod.PerturbationConfig(p=config.p, radius=config.radius, seed=config.seed)
        batch = mesh_mod.perturb_batch_1d(mesh, pconf, substream(config.seed, PERTURBATION, 0),
                                          max(config.n_realizations, 1))
        kinds = [("RM1", estimators.estimator_rm1_1d(u_h, batch)),
                 ("RM2", estimators.estimator_rm2(u_h, batch)),
                 ("BABUSKA", estimators.babuska_1d(u_h, entry.problem.kappa))]
    else:
        pconf = mesh_mod.PerturbationConfig(p=config.p, radius=config.radius,
                                            include_boundary=config.include_boundary,
                                            seed=config.seed)
        perts = [mesh_mod.perturb(mesh, pconf, substream(config.seed, PERTURBATION, 0, k))
                 for k in range(max(config.n_realizations, 1))]
        kinds = [("RM2", estimators.estimator_rm2(u_h, perts)),
                 ("RESIDUAL2D", estimators.residual_2d(u_h, entry.problem.f))]
    cx = mesh.vertices[mesh.elements].mean(axis=1)
    diam = mesh.element_diam
    for kind, rep in kinds:
        for i in range(mesh.n_elements):
            rows.append((kind, i, float(cx[i, 0]),
                         float(cx[i, 1]) if mesh.dim == 2 else 0.0,
                         float(diam[i]), float(rep.local[i]),
                         float(true_local[i]) if true_local is not None else None))
    write_csv(os.path.join(out_dir, "estimators.csv"),
              ["kind", "element", "center_x", "center_y", "diam", "local", "true_local"],
              rows)
    with open(os.path.join(out_dir, "mesh_final.json"), "w") as fh:
        fh.write(mesh.to_json())
    with open(os.path.join(out_dir, "field_final.json"), "w") as fh:
        fh.write(u_h.to_json("mesh_final.json"))
    outputs = ["adapt.csv", "estimators.csv", "mesh_final.json", "field_final.json"]
    extra = {"converged": record.converged,
             "gamma_loc_history": [it.gamma_loc for it in record.iterations]}
    return _finish(out_dir, name, params, outputs, extra)


def run_adapt1d(out_dir, seed=1, gamma=1e-2, p=3.0, n_realizations=20, n_initial=30,
                estimator_kind="RM1", max_iterations=30, threads=1):
    entry = problems.get("adapt1d")
    config = adapt.AdaptConfig(gamma=gamma, estimator_kind=estimator_kind,
                               n_realizations=n_realizations, p=p, seed=seed,
                               max_iterations=max_iterations, threads=threads)
    mesh, u_h, record = adapt.adapt_loop(entry.problem, mesh_mod.build_uniform_1d(n_initial),
                                         config, exact=(entry.exact, entry.exact_grad))
    params = {"seed": seed, "gamma": gamma, "p": p, "n_realizations": n_realizations,
              "n_initial": n_initial, "estimator_kind": estimator_kind,
              "max_iterations": max_iterations}
    return _adapt_outputs(out_dir, entry, config, record, mesh, u_h, params, "adapt1d")


def run_adapt2d(out_dir, which, seed, gamma, n_per_side, p=3.0, n_realizations=50,
                max_iterations=30, threads=1):
    entry = problems.get(which)
    config = adapt.AdaptConfig(gamma=gamma, estimator_kind="RM2",
                               n_realizations=n_realizations, p=p, seed=seed,
                               include_boundary=True, coarsen_factor=0.0,
                               max_iterations=max_iterations, threads=threads)
    builder = mesh_mod.build_structured_2d if which == "adapt2d-arctan" \
        else mesh_mod.build_lshape_2d
    mesh, u_h, record = adapt.adapt_loop(entry.problem, builder(n_per_side), config,
                                         exact=(entry.exact, entry.exact_grad))
    params = {"seed": seed, "gamma": gamma, "p": p, "n_realizations": n_realizations,
              "n_per_side": n_per_side, "estimator_kind": "RM2",
              "max_iterations": max_iterations}
    return _adapt_outputs(out_dir, entry, config, record, mesh, u_h, params, which)


# -- Bayesian inversion -------------------------------------------------------

def _bip1d_truth(which):
    prior_exp = 1.0
    if which == "bip1d-smooth":
        n_kl = 4
        prior = bayes.prior_spectrum(1, prior_exp, n_kl)
        xi_star = np.array([1.0, 1.0, 0.25, 0.25])
        theta_star = bayes.kl_to_field(xi_star, prior)
        return prior, theta_star, xi_star
    n_kl = 9
    prior = bayes.prior_spectrum(1, prior_exp, n_kl)
    theta_star = lambda x: np.log(problems.piecewise_conductivity(np.asarray(x)))
    return prior, theta_star, None


def bip1d_posteriors(which, seed, mesh_sizes, n_steps, n_outer, n_kl=None,
                     noise_var=1e-8, threads=1):
    """Deterministic and randomized posteriors for the 1D inversion.

    Returns {N: {"det": PosteriorSummary, "prob": PosteriorSummary,
    "acceptance": ...}} plus the observation set and truth.
    """
    prior, theta_star, xi_star = _bip1d_truth(which)
    if n_kl is not None and n_kl != prior.n_kl:
        prior = bayes.prior_spectrum(1, 1.0, n_kl)
    f = lambda x: np.sin(2 * np.pi * x)
    pts = np.array([[i / 10] for i in range(1, 10)])
    ref = mesh_mod.build_uniform_1d(1024)
    obs = bayes.synthesize_observations(theta_star, ref, pts, noise_var,
                                        substream(seed, OBSERVATION), f)
    grid = np.linspace(0.0, 1.0, 201)[:, None]
    results = {}
    for n in mesh_sizes:
        mesh = mesh_mod.build_uniform_1d(n)
        fm = bayes.ForwardMap(mesh, pts, f, prior)
        chain, state = bayes.mh_chain(np.zeros(prior.n_kl), obs, fm, n_steps,
                                      substream(seed, CHAIN, 0, n))
        det = bayes.posterior_summary([chain], prior, grid)
        cfg = mesh_mod.PerturbationConfig(p=1.0, seed=seed)

        def outer(j):
            pm = mesh_mod.perturb(mesh, cfg, substream(seed, PERTURBATION, n, j))
            fmj = bayes.ForwardMap(pm, pts, f, prior)
            return bayes.mh_chain(np.zeros(prior.n_kl), obs, fmj, n_steps,
                                  substream(seed, CHAIN, j, n))

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                pairs = list(pool.map(outer, range(1, n_outer + 1)))
        else:
            pairs = [outer(j) for j in range(1, n_outer + 1)]
        chains = [c for c, _ in pairs]
        prob = bayes.posterior_summary(chains, prior, grid)
        results[n] = {"det": det, "prob": prob,
                      "det_acceptance": state.acceptance_rate,
                      "prob_acceptance": [s.acceptance_rate for _, s in pairs],
                      "det_chain": chain, "prob_chains": chains}
    return results, obs, prior, theta_star, xi_star, grid


def run_bip1d(out_dir, which="bip1d-smooth", seed=0, mesh_sizes=(10, 20, 40),
              n_steps=20_000, n_outer=10, n_kl=None, noise_var=1e-8, thin=10, threads=1):
    results, obs, prior, theta_star, xi_star, grid = bip1d_posteriors(
        which, seed, mesh_sizes, n_steps, n_outer, n_kl, noise_var, threads)
    params = {"seed": seed, "mesh_sizes": list(mesh_sizes), "n_steps": n_steps,
              "n_outer": n_outer, "n_kl": prior.n_kl, "noise_var": noise_var, "thin": thin}
    outputs = ["observations.json", "prior.json", "summary.json"]
    with open(os.path.join(out_dir, "observations.json"), "w") as fh:
        fh.write(obs.to_json())
    with open(os.path.join(out_dir, "prior.json"), "w") as fh:
        fh.write(prior.to_json())
    summary = {"experiment": which, "grid": grid[:, 0].tolist(), "by_mesh": {}}
    truth_grid = np.exp(theta_star(grid[:, 0]))
    summary["truth"] = {"kappa_grid": truth_grid.tolist(),
                        "xi": None if xi_star is None else xi_star.tolist()}
    for n, res in results.items():
        cols = [f"xi_{i}" for i in range(prior.n_kl)]
        name = f"chain_det_n{n}.csv"
        write_csv(os.path.join(out_dir, name), ["step"] + cols,
                  [(k * thin, *row) for k, row in enumerate(res["det_chain"][::thin])])
        outputs.append(name)
        for j, c in enumerate(res["prob_chains"], start=1):
            name = f"chain_{j}_n{n}.csv"
            write_csv(os.path.join(out_dir, name), ["step"] + cols,
                      [(k * thin, *row) for k, row in enumerate(c[::thin])])
            outputs.append(name)
        summary["by_mesh"][str(n)] = {
            "deterministic": res["det"].to_json_dict(),
            "probabilistic": res["prob"].to_json_dict(),
            "det_acceptance": res["det_acceptance"],
            "prob_acceptance": res["prob_acceptance"],
        }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return _finish(out_dir, which, params, outputs)


def run_bip2d_smoke(out_dir, seed=5, n_per_side=10, n_steps=2000, n_outer=2,
                    n_kl=6, noise_var=1e-6, m_obs=50, thin=5, threads=1):
    prior = bayes.prior_spectrum(2, 1.3, n_kl)
    xi_star = 10.0 * np.array([(-1.0) ** (i) for i in range(n_kl)])
    theta_star = bayes.kl_to_field(xi_star, prior)
    f = lambda x, y: 8 * np.pi ** 2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    pts = substream(seed, OBSERVATION, 0).uniform(0.02, 0.98, size=(m_obs, 2))
    ref = mesh_mod.build_structured_2d(64)
    obs = bayes.synthesize_observations(theta_star, ref, pts, noise_var,
                                        substream(seed, OBSERVATION, 1), f)
    mesh = mesh_mod.build_structured_2d(n_per_side)
    cfg = mesh_mod.PerturbationConfig(p=1.0, seed=seed)
    chains, accs = [], []
    for j in range(n_outer):
        pm = mesh_mod.perturb(mesh, cfg, substream(seed, PERTURBATION, j))
        fm = bayes.ForwardMap(pm, pts, f, prior)
        c, s = bayes.mh_chain(np.zeros(n_kl), obs, fm, n_steps,
                              substream(seed, CHAIN, j), s0=0.01)
        chains.append(c)
        accs.append(s.acceptance_rate)
    xs = np.linspace(0.0, 1.0, 21)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    summ = bayes.posterior_summary(chains, prior, grid)
    params = {"seed": seed, "n_per_side": n_per_side, "n_steps": n_steps,
              "n_outer": n_outer, "n_kl": n_kl, "noise_var": noise_var,
              "m_obs": m_obs, "thin": thin, "s0": 0.01}
    outputs = ["observations.json", "prior.json", "summary.json"]
    with open(os.path.join(out_dir, "observations.json"), "w") as fh:
        fh.write(obs.to_json())
    with open(os.path.join(out_dir, "prior.json"), "w") as fh:
        fh.write(prior.to_json())
    cols = [f"xi_{i}" for i in range(n_kl)]
    for j, c in enumerate(chains, start=1):
        name = f"chain_{j}.csv"
        write_csv(os.path.join(out_dir, name), ["step"] + cols,
                  [(k * thin, *row) for k, row in enumerate(c[::thin])])
        outputs.append(name)
    _write_json(os.path.join(out_dir, "summary.json"), {
        "experiment": "bip2d-smoke", "acceptance": accs,
        "probabilistic": summ.to_json_dict(),
        "truth": {"xi": xi_star.tolist()},
    })
    return _finish(out_dir, "bip2d-smoke", params, outputs,
                   extra={"acceptance": accs})
