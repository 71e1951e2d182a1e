"""`render --spec <json>` or `render --all <run-dir>`.

A figure spec is a JSON object {"figure": name, "inputs": {...},
"output": stem}; --all inspects a run directory's manifest and renders
every applicable standard figure into <run-dir>/figures/.
"""

import argparse
import json
import os
import sys

from . import figures
from .csvio import SchemaError

FIGURES = {
    "convergence": (figures.convergence_figure, ("adapt_csv",)),
    "effectivity": (figures.effectivity_figure, ("adapt_csv",)),
    "indicators": (figures.indicators_figure, ("estimators_csv",)),
    "solution": (figures.solution_figure, ("mesh_json", "field_json")),
    "mesh": (figures.mesh_figure, ("mesh_json",)),
    "posterior": (figures.posterior_figure, ("summary_json",)),
    "loglog": (figures.loglog_convergence_figure, ("convergence_csv",)),
}


def render_spec(spec):
    name = spec.get("figure")
    if name not in FIGURES:
        raise ValueError(f"unknown figure {name!r}; have {sorted(FIGURES)}")
    func, arg_names = FIGURES[name]
    inputs = spec.get("inputs", {})
    missing = [a for a in arg_names if a not in inputs]
    if missing:
        raise ValueError(f"figure {name!r} needs inputs {missing}")
    for path in inputs.values():
        if not os.path.exists(path):
            raise FileNotFoundError(path)
    return func(*[inputs[a] for a in arg_names], spec["output"])


def render_all(run_dir, out_dir=None):
    present = set(os.listdir(run_dir))
    out_dir = out_dir or os.path.join(run_dir, "figures")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def have(*names):
        return all(n in present for n in names)

    def path(name):
        return os.path.join(run_dir, name)

    if have("adapt.csv"):
        written += figures.convergence_figure(path("adapt.csv"),
                                              os.path.join(out_dir, "convergence"))
        written += figures.effectivity_figure(path("adapt.csv"),
                                              os.path.join(out_dir, "effectivity"))
    if have("estimators.csv"):
        written += figures.indicators_figure(path("estimators.csv"),
                                             os.path.join(out_dir, "indicators"))
    if have("mesh_final.json"):
        written += figures.mesh_figure(path("mesh_final.json"),
                                       os.path.join(out_dir, "mesh"))
        if have("field_final.json"):
            written += figures.solution_figure(path("mesh_final.json"),
                                               path("field_final.json"),
                                               os.path.join(out_dir, "solution"))
    if have("summary.json"):
        data = json.loads(open(path("summary.json")).read())
        if "by_mesh" in data or "probabilistic" in data:
            written += figures.posterior_figure(path("summary.json"),
                                                os.path.join(out_dir, "posterior"))
    if have("convergence.csv"):
        written += figures.loglog_convergence_figure(path("convergence.csv"),
                                                     os.path.join(out_dir, "loglog"))
    if not written:
        raise ValueError(f"nothing to render in {run_dir}")
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(prog="render",
                                     description="render figures from rmfem outputs")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="JSON figure spec")
    group.add_argument("--all", dest="run_dir", help="render all figures for a run directory")
    parser.add_argument("--out", default=None, help="output directory for --all")
    args = parser.parse_args(argv)
    try:
        if args.spec:
            spec = json.loads(open(args.spec).read())
            written = render_spec(spec)
        else:
            written = render_all(args.run_dir, args.out)
    except (SchemaError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for w in written:
        print(w)
    return 0


if __name__ == "__main__":
    sys.exit(main())
