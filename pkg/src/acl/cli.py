"""Command line: ``acl {sketch,learn,eval,verify,experiment}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
The default seed is 0 unless the ``ACL_SEED`` environment variable is set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import ACLError, DataError
from .evaluation import (empirical_excess_risk, load_experiment_config,
                         log_likelihood, records_to_csv, rows_to_csv, run_experiment, sse, success)
from .features import LAWS, FrequencySampler, kernel_scale_preset, make_feature_map
from .models import Box, DiracMixture, load_model, save_model
from .periodic import (PeriodicFunction, constant_Cf, constant_cf, first_coefficient,
                       fourier_coefficient, known_mean_lipschitz, load_tabulated_csv,
                       mean_lipschitz)
from .sketch import load_dataset, load_sketch, save_sketch, simulate_nodes, sketch_dataset
from .solver import VARIANTS, OPTIMIZERS, SolverOptions, TaskSpec, cost, default_variant, solve
from .theory import lemma2_check, slpd_error

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def default_seed() -> int:
    raw = os.environ.get("ACL_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"ACL_SEED must be an integer, got {raw!r}") from None


class UsageError(Exception):
    pass


def _print_config(name, cfg):
    print(f"# {name} config: {json.dumps(cfg, sort_keys=True, default=str)}", file=sys.stderr)


def _floats(text):
    return [float(v) for v in text.split(",")]


def _nonlinearity(name):
    if name.endswith(".csv"):
        return load_tabulated_csv(name)
    return PeriodicFunction.from_name(name)


def _box(args, d):
    lower = _floats(args.lower) if args.lower else [0.0] * d
    upper = _floats(args.upper) if args.upper else [1.0] * d
    if len(lower) == 1:
        lower = lower * d
    if len(upper) == 1:
        upper = upper * d
    return Box(lower, upper)


# --- subcommands -----------------------------------------------------------

def cmd_sketch(args):
    X = load_dataset(args.dataset, header=args.header)
    d = X.shape[1]
    seed = default_seed() if args.seed is None else args.seed
    scale = args.kernel_scale if args.kernel_scale is not None else kernel_scale_preset(args.task, d)
    sampler = (FrequencySampler(args.law, args.sigma2, d) if args.sigma2 is not None
               else FrequencySampler.from_kernel_scale(args.law, scale, d))
    omega_seed = seed if args.omega_seed is None else args.omega_seed
    dither_seed = None if args.no_dither else (seed + 1 if args.dither_seed is None else args.dither_seed)
    fmap = make_feature_map(sampler, args.m, _nonlinearity(args.nonlinearity), omega_seed,
                            dither_seed, renormalize=args.renormalize)
    _print_config("sketch", {"dataset": args.dataset, "n": X.shape[0], "map": fmap.to_json(),
                             "nodes": args.nodes, "float_bits": args.float_bits,
                             "header": args.header, "out": args.out})
    z, bits = simulate_nodes(fmap, X, args.nodes, args.float_bits)
    save_sketch(args.out, z, fmap)
    print(f"wrote {args.out}: m={z.m} n={z.count} bits={bits}")
    return 0


def cmd_learn(args):
    z, psi = load_sketch(args.sketch)
    phi = psi.with_nonlinearity("exp", renormalize=False)
    if args.renormalize and not psi.renormalize and not psi.is_rff:
        z = z.scaled(1.0 / first_coefficient(psi.nonlinearity))
    box = _box(args, phi.d)
    task = TaskSpec(args.task, args.K, box, S=args.S)
    seed = default_seed() if args.seed is None else args.seed
    opts = SolverOptions(restarts=args.restarts, inner_max_iters=args.inner_max_iters,
                         gradient_tolerance=args.gradient_tolerance, step_initial=args.step_initial,
                         seed=seed, variant=args.variant or default_variant(task),
                         optimizer=args.optimizer, trace_path=args.trace)
    _print_config("learn", {"sketch": args.sketch, "task": args.task, "K": args.K,
                            "box": box.to_json(), "S": task.S, "renormalize": args.renormalize,
                            "options": opts.__dict__, "out": args.out})
    model = solve(z, phi, task, opts)
    save_model(args.out, model, box, task.S)
    print(f"wrote {args.out}: final cost {cost(phi, z, model):.6g}")
    return 0


def cmd_eval(args):
    model, _, _ = load_model(args.model)
    X = load_dataset(args.dataset, header=args.header)
    task = "kmeans" if isinstance(model, DiracMixture) else "gmm"
    _print_config("eval", {"model": args.model, "dataset": args.dataset, "task": task,
                           "baseline": args.baseline, "factor": args.factor})
    row = {"task": task, "n": X.shape[0]}
    if task == "kmeans":
        row["sse"] = sse(model, X)
    else:
        row["log_likelihood"] = log_likelihood(model, X)
    if args.baseline:
        base, _, _ = load_model(args.baseline)
        row["excess_risk"] = empirical_excess_risk(model, base, X, task)
        ok = success(model, base, X, task, args.factor)
        row["success"] = "not-evaluable" if ok is None else ok
    print(rows_to_csv([row], columns=list(row)), end="")
    return 0


def _constants_rows():
    C = 1.0
    rows = []
    expected = {
        "quantized": {"F1": 4 / math.pi, "L": 8 / math.pi, "Cf": 1 + math.pi / (2 * math.sqrt(2)),
                      "cf": 24 * C},
        "modulo": {"F1": 2j / math.pi, "L": (4 + math.sqrt(2)) / math.pi,
                   "Cf": 1 + math.sqrt(5) * math.pi / 4, "cf": (24 + 2 * math.sqrt(2)) * C},
        "exp": {"F1": 1.0, "L": 1.0, "Cf": 2.0, "cf": 20 * C},
    }
    for name, exp in expected.items():
        f = PeriodicFunction.from_name(name)
        L_num = mean_lipschitz(f)
        got = {"F1": fourier_coefficient(f, 1), "L": L_num, "Cf": constant_Cf(f),
               "cf": constant_cf(f, C, lipschitz=known_mean_lipschitz(f))}
        got_num_cf = constant_cf(f, C)
        for key in ("F1", "L", "Cf", "cf"):
            rows.append({"suite": "constants", "function": name, "quantity": key,
                         "value": repr(complex(got[key])) if key == "F1" else got[key],
                         "expected": repr(complex(exp[key])) if key == "F1" else exp[key],
                         "abs_error": abs(got[key] - exp[key])})
        rows.append({"suite": "constants", "function": name, "quantity": "cf_numeric_L",
                     "value": got_num_cf, "expected": exp["cf"],
                     "abs_error": abs(got_num_cf - exp["cf"])})
    return rows


def _slpd_rows(args, seed):
    rows = []
    box = Box.unit(args.d)
    sampler = FrequencySampler.from_kernel_scale("gaussian", kernel_scale_preset("kmeans", args.d),
                                                 args.d)
    for m in args.m_list:
        for s in range(args.seeds):
            phi = make_feature_map(sampler, m, "exp", omega_seed=seed + s, dither_seed=seed + 10_000 + s)
            for name in ("exp", "quantized", "modulo"):
                psi = phi.with_nonlinearity(name, renormalize=True)
                rep = slpd_error(phi, psi, box, args.pairs, seed + s)
                rows.append({"suite": "slpd", **rep.as_row()})
    return rows


def _lemma2_rows(args, seed):
    rows = []
    rng = np.random.default_rng(seed)
    sampler = FrequencySampler.from_kernel_scale("gaussian", kernel_scale_preset("kmeans", args.d),
                                                 args.d)
    for i in range(args.instances):
        phi = make_feature_map(sampler, args.lemma2_m, "exp", omega_seed=seed + i,
                               dither_seed=seed + 10_000 + i)
        psi = phi.with_nonlinearity("quantized", renormalize=True)
        X = rng.uniform(0, 1, (args.lemma2_n, args.d))
        grid = [DiracMixture.uniform(rng.uniform(0, 1, (args.K, args.d))) for _ in range(args.grid)]
        res = lemma2_check(phi, psi, sketch_dataset(phi, X), sketch_dataset(psi, X), grid)
        rows.append({"suite": "lemma2", "instance": i, "lhs": res.lhs, "rhs": res.rhs,
                     "eps_hat": res.eps_hat, "holds": res.holds})
    return rows


def cmd_verify(args):
    seed = default_seed() if args.seed is None else args.seed
    suites = ["constants", "slpd", "lemma2"] if args.suite == "all" else [args.suite]
    _print_config("verify", {**{k: v for k, v in vars(args).items() if k != "func"}, "seed": seed})
    out = []
    for suite in suites:
        if suite == "constants":
            rows = _constants_rows()
        elif suite == "slpd":
            rows = _slpd_rows(args, seed)
        else:
            rows = _lemma2_rows(args, seed)
        out.append(rows_to_csv(rows, columns=list(rows[0])))
    text = "\n".join(out)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def cmd_experiment(args):
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    elif "ACL_SEED" in os.environ:
        cfg.seed = default_seed()
    _print_config("experiment", {**cfg.to_json(), "jobs": args.jobs})
    detail = [] if args.detail else None
    rows = run_experiment(cfg, jobs=args.jobs, detail=detail)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.detail:
        with open(args.detail, "w") as fh:
            fh.write(records_to_csv(detail))
    print(text, end="")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acl", description="Compressive learning from periodic sketches.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sketch", help="sketch a CSV dataset")
    s.add_argument("dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--nonlinearity", default="exp",
                   help="exp|quantized|modulo or a tabulated t,re,im CSV file")
    s.add_argument("--law", choices=LAWS, default="folded_gaussian")
    s.add_argument("--task", choices=("kmeans", "gmm"), default="kmeans",
                   help="selects the default kernel scale")
    s.add_argument("--kernel-scale", type=float)
    s.add_argument("--sigma2", type=float, help="frequency variance (overrides --kernel-scale)")
    s.add_argument("--seed", type=int)
    s.add_argument("--omega-seed", type=int)
    s.add_argument("--dither-seed", type=int)
    s.add_argument("--no-dither", action="store_true", help="force xi = 0")
    s.add_argument("--renormalize", action="store_true", help="divide features by F_1")
    s.add_argument("--nodes", type=int, default=1)
    s.add_argument("--float-bits", type=int, choices=(32, 64), default=64)
    s.add_argument("--header", action="store_true", help="skip a CSV header row")
    s.set_defaults(func=cmd_sketch)

    lr = sub.add_parser("learn", help="fit a model to a sketch")
    lr.add_argument("sketch")
    lr.add_argument("--out", required=True)
    lr.add_argument("--task", choices=("kmeans", "gmm"), default="kmeans")
    lr.add_argument("--K", type=int, required=True)
    lr.add_argument("--lower", help="comma-separated lower box corner (default 0)")
    lr.add_argument("--upper", help="comma-separated upper box corner (default 1)")
    lr.add_argument("--S", type=float, help="variance cap for gmm")
    lr.add_argument("--renormalize", action="store_true", help="divide the sketch by F_1 first")
    lr.add_argument("--variant", choices=VARIANTS)
    lr.add_argument("--optimizer", choices=OPTIMIZERS, default="lbfgsb")
    lr.add_argument("--restarts", type=int, default=5)
    lr.add_argument("--inner-max-iters", type=int, default=300)
    lr.add_argument("--gradient-tolerance", type=float, default=1e-9)
    lr.add_argument("--step-initial", type=float, default=1.0)
    lr.add_argument("--seed", type=int)
    lr.add_argument("--trace", help="write a (iteration, stage, cost) CSV")
    lr.set_defaults(func=cmd_learn)

    e = sub.add_parser("eval", help="score a model on a dataset")
    e.add_argument("model")
    e.add_argument("dataset")
    e.add_argument("--baseline", help="baseline model JSON for excess risk and success")
    e.add_argument("--factor", type=float, default=1.2)
    e.add_argument("--header", action="store_true")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="numerical checks of the theory")
    v.add_argument("--suite", choices=("constants", "slpd", "lemma2", "all"), default="all")
    v.add_argument("--seed", type=int)
    v.add_argument("--d", type=int, default=2)
    v.add_argument("--m-list", type=lambda t: [int(x) for x in t.split(",")],
                   default=[64, 256, 1024, 4096])
    v.add_argument("--seeds", type=int, default=10)
    v.add_argument("--pairs", type=int, default=1000)
    v.add_argument("--instances", type=int, default=100)
    v.add_argument("--grid", type=int, default=100)
    v.add_argument("--K", type=int, default=3)
    v.add_argument("--lemma2-m", type=int, default=256)
    v.add_argument("--lemma2-n", type=int, default=200)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    x = sub.add_parser("experiment", help="run an experiment sweep from a JSON config")
    x.add_argument("config")
    x.add_argument("--out")
    x.add_argument("--detail", help="per-trial CSV")
    x.add_argument("--jobs", type=int, default=1)
    x.add_argument("--seed", type=int)
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ACLError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
