"""``hegnn`` command line: expressivity tables, trace tables, verification, N-body runs.

Every command is deterministic given its seed.  CSV outputs end with a
``# version=... seed=... ...`` metadata comment.  Exit codes: 0 success,
1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys

import numpy as np

from . import __version__
from .autodiff import TrainConfig
from .expressivity import DISTINGUISH_TOL, discrimination_trials, sph_sum_check
from .geomgraph import NBodyConfig, generate_dataset, load_dataset, make_structure, perturb, save_dataset
from .groups import ZERO_TOL, brute_force_trace, enumerate_group, trace_closed_form
from .model import init_params, load_params, save_params
from .specfun import MAX_DEGREE
from .training import linear_baseline_mse, mse, nbody_model_config, train, write_history

log = logging.getLogger("hegnn")

DEFAULT_GROUPS = ["Ci"] + [f"C{n}" for n in range(2, 22)] + [f"D{n}" for n in range(2, 22)] + ["T", "O", "I"]


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- parsing helpers

def parse_degrees(text):
    """``"1..11"``, ``"3"`` or ``"1..3,5,7"`` -> sorted list of ints."""
    out = set()
    for part in str(text).split(","):
        part = part.strip()
        m = re.fullmatch(r"(\d+)\.\.(\d+)", part)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            if a > b:
                raise argparse.ArgumentTypeError(f"empty degree range {part!r}")
            out.update(range(a, b + 1))
        elif part.isdigit():
            out.add(int(part))
        else:
            raise argparse.ArgumentTypeError(f"bad degree spec {part!r}; use a..b or a comma list")
    if not out or min(out) < 0 or max(out) > MAX_DEGREE:
        raise argparse.ArgumentTypeError(f"degrees must lie in 0..{MAX_DEGREE}")
    return sorted(out)


def parse_list(kind):
    def parse(text):
        try:
            return [kind(t.strip()) for t in str(text).split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            items.append((k.replace("-", "_"), v))
    return items


def config_to_argv(items, parser):
    """Turn config entries into flags for ``parser`` so they share its validation."""
    flags = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:].replace("-", "_")] = (opt, action)
    argv = []
    for key, value in items:
        if key in ("config",) or key not in flags:
            raise UsageError(f"unknown config key {key!r}")
        opt, action = flags[key]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean")
            if value.lower() in ("true", "1", "yes"):
                argv.append(opt)
        else:
            argv += [opt, value]
    return argv


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8") if path and path != "-" else None


def write_csv(path, header, rows, meta):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    fh = _open_out(path)
    if fh is None:
        sys.stdout.write(buf.getvalue())
    else:
        with fh:
            fh.write(buf.getvalue())


def _fmt(x):
    return f"{x:.6e}"


# --------------------------------------------------------------------------- commands

def cmd_expressivity(args):
    rows = []
    for name in args.structures:
        try:
            g = make_structure(name)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"invalid structure {name!r}: {exc}") from None
        for l in args.degrees:
            if l < 1:
                raise UsageError("degrees must be >= 1")
            if args.mode == "sph-sum":
                norm, verdict = sph_sum_check(g, l)
                rows.append([name, l, "sum", str(verdict).lower(), _fmt(norm)])
                continue
            degs = list(range(1, l + 1)) if args.cumulative else [l]
            label = f"1..{l}" if args.cumulative else str(l)
            trials = discrimination_trials(g, degs, trials=args.trials, seed=args.seed)
            for t in trials:
                rows.append([name, label, t.trial, str(t.verdict).lower(), _fmt(t.score)])
            majority = sum(t.verdict for t in trials) * 2 > len(trials)
            rows.append([name, label, "majority", str(majority).lower(),
                         _fmt(float(np.median([t.score for t in trials])))])
    write_csv(args.out, ["structure", "degree", "trial", "verdict", "norm"], rows,
              {"version": __version__, "seed": args.seed, "mode": args.mode, "tol": DISTINGUISH_TOL})
    return 0


def cmd_traces(args):
    rows = []
    for name in args.groups:
        try:
            G = enumerate_group(name)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for l in range(args.lmax + 1):
            closed = trace_closed_form(l, G.name)
            brute = brute_force_trace(l, G)
            rows.append([G.name, l, closed, f"{brute:.12f}", str(closed == 0).lower()])
    write_csv(args.out, ["group", "l", "closed_form", "brute_force", "degenerate"], rows,
              {"version": __version__, "seed": "none", "zero_tol": ZERO_TOL})
    return 0


def cmd_verify(args):
    from .verify import run_all

    report = run_all(args.seed, fault=args.fault, quick=args.quick)
    report["version"] = __version__
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    fh = _open_out(args.out)
    if fh is None:
        sys.stdout.write(text)
    else:
        with fh:
            fh.write(text)
    for c in report["checks"]:
        log.info("%-16s %s err=%.3e tol=%.0e", c["name"], "ok" if c["passed"] else "FAIL", c["error"], c["tol"])
    return 0 if report["passed"] else 1


def _nbody_cfg(args):
    return NBodyConfig(n=args.n, steps=args.steps, dt=args.dt, pos_std=args.pos_std,
                       vel_std=args.vel_std, charges=args.charges)


def cmd_nbody_generate(args):
    if not args.out:
        raise UsageError("--out is required")
    records = generate_dataset(args.samples, _nbody_cfg(args), args.seed)
    save_dataset(records, args.out)
    return 0


def _load(path):
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise UsageError(f"no such dataset: {path}") from None


def cmd_nbody_train(args):
    if not args.out:
        raise UsageError("--out is required")
    data = _load(args.data)
    val = _load(args.val) if args.val else None
    cfg = nbody_model_config(args.max_degree, hidden_width=args.hidden_width, n_layers=args.n_layers,
                             coord_gain=args.coord_gain)
    tcfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    params, history = train(data, cfg, tcfg, val=val)
    save_params(args.out, params, cfg, extra={"seed": args.seed, "epochs": args.epochs, "lr": args.lr})
    if args.history:
        write_history(args.history, history)
    return 0


def cmd_nbody_eval(args):
    data = _load(args.data)
    if args.checkpoint:
        try:
            params, cfg, _ = load_params(args.checkpoint)
        except FileNotFoundError:
            raise UsageError(f"no such checkpoint: {args.checkpoint}") from None
        label = "trained"
    else:
        cfg = nbody_model_config(args.max_degree, hidden_width=args.hidden_width, n_layers=args.n_layers,
                                 coord_gain=args.coord_gain)
        params = init_params(cfg, args.seed)
        label = "untrained"
    rows = [
        [f"hegnn_l<={cfg.max_degree}", label, _fmt(mse(data, cfg, params))],
        ["linear", "baseline", _fmt(linear_baseline_mse(data, args.horizon))],
    ]
    write_csv(args.out, ["model", "state", "mse"], rows,
              {"version": __version__, "seed": args.seed, "horizon": args.horizon})
    return 0


def cmd_perturb(args):
    if any(e < 0 for e in args.epsilons):
        raise UsageError("epsilons must be non-negative")
    base = make_structure("tetrahedron")
    configs = [("3", [3]), ("1..3", [1, 2, 3])]
    rows = []
    ss = np.random.SeedSequence(args.seed)
    for eps, child in zip(args.epsilons, ss.spawn(len(args.epsilons))):
        seeds = child.generate_state(args.trials)
        for label, degs in configs:
            wins = 0
            for t, s in enumerate(seeds):
                g = perturb(base, eps, seed=int(s))
                # eps = 0 keeps the symmetric structure and its rotation rule
                res = discrimination_trials(g, degs, trials=1, seed=int(s), require_symmetric=eps == 0)
                wins += res[0].verdict
            rows.append([f"{eps:g}", label, args.trials, wins, f"{100.0 * wins / args.trials:.1f}"])
    write_csv(args.out, ["epsilon", "degree", "trials", "distinguished", "rate_percent"], rows,
              {"version": __version__, "seed": args.seed, "tol": DISTINGUISH_TOL})
    return 0


# --------------------------------------------------------------------------- parser

def _add_common(p, seed=True):
    p.add_argument("--config", help="flat key = value file; keys are long option names")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _add_nbody_data(p):
    p.add_argument("--n", type=int, default=5, help="particles per system")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--dt", type=float, default=0.001)
    p.add_argument("--pos-std", type=float, default=0.5)
    p.add_argument("--vel-std", type=float, default=0.5)
    p.add_argument("--charges", choices=("binary", "signed"), default="binary")


def _add_nbody_model(p):
    p.add_argument("--max-degree", type=int, default=2)
    p.add_argument("--hidden-width", type=int, default=64)
    p.add_argument("--n-layers", type=int, default=4)
    p.add_argument("--coord-gain", type=float, default=0.01)


def build_parser():
    parser = argparse.ArgumentParser(prog="hegnn", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expressivity", help="orientation discrimination / spherical-harmonic sums")
    _add_common(p)
    p.add_argument("--structures", type=parse_list(str), default=["tetrahedron"],
                   help="comma list of polyhedron names or kfold:k")
    p.add_argument("--degrees", type=parse_degrees, default=[1])
    p.add_argument("--mode", choices=("forward", "sph-sum"), default="forward")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--cumulative", action="store_true", help="use all degrees 1..l instead of l alone")
    p.set_defaults(func=cmd_expressivity)

    p = sub.add_parser("traces", help="group-average traces, closed form and brute force")
    _add_common(p, seed=False)
    p.add_argument("--groups", type=parse_list(str), default=DEFAULT_GROUPS)
    p.add_argument("--lmax", type=int, default=MAX_DEGREE)
    p.set_defaults(func=cmd_traces)

    p = sub.add_parser("verify", help="run the invariant suites; JSON report")
    _add_common(p)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--fault", choices=("parity", "gate"), help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    nb = sub.add_parser("nbody", help="charged N-body data, training and evaluation")
    nsub = nb.add_subparsers(dest="nbody_command", required=True)
    p = nsub.add_parser("generate")
    _add_common(p)
    _add_nbody_data(p)
    p.add_argument("--samples", type=int, default=700)
    p.set_defaults(func=cmd_nbody_generate)

    p = nsub.add_parser("train")
    _add_common(p)
    _add_nbody_model(p)
    p.add_argument("--data", required=True)
    p.add_argument("--val")
    p.add_argument("--history", help="loss-history CSV path")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch-size", type=int, default=50)
    p.set_defaults(func=cmd_nbody_train)

    p = nsub.add_parser("eval")
    _add_common(p)
    _add_nbody_model(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--horizon", type=float, default=1.0, help="steps * dt of the dataset")
    p.set_defaults(func=cmd_nbody_eval)

    p = sub.add_parser("perturb", help="discrimination of a perturbed tetrahedron")
    _add_common(p)
    p.add_argument("--epsilons", type=parse_list(float), default=[0.01, 0.05, 0.1, 0.5])
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_perturb)
    return parser


def _subparser_for(parser, args):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    p = sub.choices[args.command]
    if args.command == "nbody":
        nsub = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
        p = nsub.choices[args.nbody_command]
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config:
            sp = _subparser_for(parser, args)
            extra = config_to_argv(read_config(args.config), sp)
            # config first so explicit flags win
            pos = argv.index(args.command) + 1 + (args.command == "nbody")
            args = parser.parse_args(argv[:pos] + extra + argv[pos:])
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, FileNotFoundError) as exc:
        print(f"hegnn: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"hegnn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
