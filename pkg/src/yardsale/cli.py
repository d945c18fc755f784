"""Command-line entry point.

Subcommands map one-to-one onto the experiment drivers, plus ``net`` for
network generation/export, ``fit`` for re-fitting existing CSV output and
``theory`` for tabulating the closed-form reference curves. Exits 0 on
success; on failure a single JSON error line goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import theory
from .analysis import fit_critical_divergence
from .harness import (ExperimentConfig, build_network, drive_condensation,
                      drive_lra_census, drive_ranked_traces,
                      drive_stable_phase, write_csv)
from .networks import write_edge_list


def _add_common(sub):
    sub.add_argument("--config", type=Path, help="experiment config JSON")
    sub.add_argument("--seed", type=int, help="master seed override")
    sub.add_argument("--out", type=Path, help="output directory override")
    sub.add_argument("--histories", type=int, help="ensemble size override")
    sub.add_argument("--threads", type=int, help="worker processes")


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise SystemExit("a --config file is required for this subcommand")
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = str(args.out)
    if args.histories is not None:
        cfg.n_histories = args.histories
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def _cmd_net(args):
    topology = {"kind": args.kind, "n": args.n}
    if args.side is not None:
        topology["side"] = args.side
    if args.gamma is not None:
        topology["gamma"] = args.gamma
    net = build_network(topology, args.seed or 0)
    out = args.out or Path("network.edges")
    write_edge_list(net, out)
    print(f"wrote {net.topology} network: n={net.n} edges={net.n_edges} "
          f"mean_degree={net.mean_degree:.3f} -> {out}")


def _cmd_fit(args):
    groups: dict[tuple, list] = {}
    with open(args.input, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if not row.get(args.column) or row[args.column] == "nan":
                continue
            key = (row["topology"], row["n"], row["f"])
            groups.setdefault(key, []).append(
                (float(row["p"]), float(row[args.column])))
    rows = []
    for (topo, n, f), points in groups.items():
        fit = fit_critical_divergence(points, side=args.side)
        rows.append([topo, n, float(f), fit.params["p_c"], fit.params["z"],
                     fit.stderr["z"], theory.p_star(float(f))])
    out = args.out or Path("critical_line.csv")
    write_csv(out, ["topology", "n", "f", "p_c", "z", "z_err",
                    "p_star_theory"], rows)
    print(f"wrote {out} ({len(rows)} fits)")


def _cmd_theory(args):
    rows = []
    if args.table == "critical":
        for f in args.f:
            rows.append([f, theory.p_star(f)])
        header = ["f", "p_star"]
    elif args.table == "theta":
        for f in args.f:
            for p in args.p:
                rows.append([p, f, theory.theta(p, f)])
        header = ["p", "f", "theta"]
    elif args.table == "abad":
        for g in args.gamma:
            rows.append([g, theory.abad_density(args.rho0, g)])
        header = ["gamma", "rho"]
    else:  # ranked
        th = theory.theta(args.p[0], args.f[0])
        for t in args.t:
            rows.append([t] + [theory.ranked_wealth(r, t, th, args.n)
                               for r in args.ranks])
        header = ["t"] + [f"w_rank{r}" for r in args.ranks]
    if args.out:
        write_csv(args.out, header, rows)
        print(f"wrote {args.out}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(v) if isinstance(v, float) else str(v)
                           for v in row))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="yardsale",
        description="Yard-Sale wealth exchange on networks: simulation "
                    "drivers and analysis")
    subs = parser.add_subparsers(dest="command", required=True)

    net = subs.add_parser("net", help="generate and export a network")
    net.add_argument("--kind", required=True,
                     choices=["ring", "lattice2d", "erdos_renyi", "complete"])
    net.add_argument("--n", type=int, required=True)
    net.add_argument("--side", type=int)
    net.add_argument("--gamma", type=float)
    net.add_argument("--seed", type=int, default=0)
    net.add_argument("--out", type=Path)

    for name, help_text in [
        ("stable", "equilibrate, measure tau0, fit the critical line"),
        ("condense", "measure condensation/freezing times over a grid"),
        ("lra", "run to freezing and census locally rich agents"),
        ("ranks", "ensemble ranked-wealth traces at one (p, f) point"),
    ]:
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)

    fit = subs.add_parser("fit", help="fit a critical divergence to an "
                                      "existing driver CSV")
    fit.add_argument("--input", type=Path, required=True)
    fit.add_argument("--column", default="tau0",
                     help="value column to fit (tau0 or t0)")
    fit.add_argument("--side", choices=["below", "above"], default=None)
    fit.add_argument("--out", type=Path)

    th = subs.add_parser("theory", help="tabulate closed-form curves")
    th.add_argument("table", choices=["critical", "theta", "abad", "ranked"])
    th.add_argument("--f", type=float, nargs="+", default=[0.1])
    th.add_argument("--p", type=float, nargs="+", default=[0.5])
    th.add_argument("--gamma", type=float, nargs="+", default=[10.0])
    th.add_argument("--rho0", type=float, default=1.0)
    th.add_argument("--n", type=int, default=400)
    th.add_argument("--ranks", type=int, nargs="+", default=[1, 2, 3, 4])
    th.add_argument("--t", type=float, nargs="+", default=[0.0])
    th.add_argument("--out", type=Path)
    return parser


DRIVERS = {
    "stable": drive_stable_phase,
    "condense": drive_condensation,
    "lra": drive_lra_census,
    "ranks": drive_ranked_traces,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "net":
            _cmd_net(args)
        elif args.command == "fit":
            _cmd_fit(args)
        elif args.command == "theory":
            _cmd_theory(args)
        else:
            cfg = _load_config(args)
            paths = DRIVERS[args.command](cfg)
            for name, path in paths.items():
                print(f"wrote {name}: {path}")
    except Exception as exc:  # pragma: no cover - exercised via CLI tests
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
