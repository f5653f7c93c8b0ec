"""Command-line interface.

Subcommands: pmf, bound, divergence, sweep, simulate, selftest.

Any subcommand accepts ``--config FILE``, an INI file with one section per
subcommand whose keys are the long flag names (dashes or underscores).
Explicit flags override file values, which override built-in defaults.

Exit codes: 0 success, 1 validation error, 2 internal consistency failure,
3 selftest failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from rqm import records
from rqm.accountant import DivergenceQuery, SweepSpec, aggregate_divergence, divergence_sweep, extreme_pair_divergence, random_neighbors, theorem1_bound, worst_case_neighbors
from rqm.distribution import rqm_pmf, rqm_pmf_bruteforce
from rqm.errors import CapacityError, ConsistencyError, DomainError, ParameterError, SimulationError
from rqm.mechanism import RqmParams, build_grid
from rqm.pbm import pbm_for_levels, pbm_pmf
from rqm.presets import PAIRS, preset_sweeps
from rqm.rng import MISC, stream
from rqm.selftest import run_selftest
from rqm.simulator import MECHANISMS, SimConfig, generate_synthetic_federation, resolve_clip, run_training

EXIT_OK, EXIT_VALIDATION, EXIT_CONSISTENCY, EXIT_SELFTEST = 0, 1, 2, 3


class ValidationExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _alpha(text) -> float:
    value = float(text)
    if not value > 1:
        raise argparse.ArgumentTypeError(f"alpha must be > 1 or inf, got {text}")
    return value


def _values(text) -> tuple:
    """``a,b,c`` | ``start:stop`` (inclusive integers) | ``start:stop:count`` (geometric)."""
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
            return tuple(float(v) for v in range(lo, hi + 1))
        if len(parts) == 3:
            return tuple(float(v) for v in np.geomspace(float(parts[0]), float(parts[1]), int(parts[2])))
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return tuple(float(v) for v in text.split(",") if v.strip())


# per-subcommand defaults, applied after the config file
DEFAULTS = {
    "pmf": dict(mech="rqm", x=None, c=1.5, delta=None, m=16, q=0.42, theta=0.25, pbm_full_trials=False, oracle=False),
    "bound": dict(c=1.5, delta=None, m=16, q=0.42, compare_numeric=False),
    "divergence": dict(mech="rqm", c=1.5, delta=None, m=16, q=0.42, theta=0.25, pbm_full_trials=False, n=1, split_k=None, alpha=2.0, random_neighbors=False),
    "sweep": dict(preset=None, paper_fig3=False, axis="n", values=None, c=1.5, delta=None, m=16, q=0.42, theta=0.25, pbm_full_trials=False, n=1, split_k=None, alpha=2.0, random_neighbors=False),
    "simulate": dict(mechanisms="noise_free,rqm,pbm", out_dir="sim_out", **{f.name: f.default for f in fields(SimConfig) if f.name not in ("mechanism", "master_seed")}),
    "selftest": dict(inject_fault=False),
}
COMMON = dict(seed=0, out=None)


def _add_common(p):
    p.add_argument("--config", help="INI file with a section named after the subcommand")
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--seed", type=int, help="master seed for every random stream (default 0)")


def _add_rqm(p):
    p.add_argument("--c", type=float, help="clipping bound c (default 1.5)")
    p.add_argument("--delta", type=float, help="range extension delta (default: equal to c)")
    p.add_argument("--m", type=int, help="number of quantization levels (default 16)")
    p.add_argument("--q", type=float, help="interior level inclusion probability (default 0.42)")


def _add_pbm(p):
    p.add_argument("--theta", type=float, help="PBM theta (default 0.25)")
    p.add_argument("--pbm-full-trials", action="store_true", default=None, help="PBM with m trials (support 0..m) instead of m-1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rqm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pmf", help="exact output distribution for one input")
    _add_common(p)
    p.add_argument("--mech", choices=("rqm", "pbm"))
    p.add_argument("--x", type=float, help="input value, |x| <= c")
    _add_rqm(p)
    _add_pbm(p)
    p.add_argument("--oracle", action="store_true", default=None, help="add the brute-force column (rqm, m <= 20)")

    p = sub.add_parser("bound", help="closed-form single-device D_inf bound")
    _add_common(p)
    _add_rqm(p)
    p.add_argument("--compare-numeric", action="store_true", default=None, help="also evaluate D_inf(P(c) || P(-c)) exactly")

    for name, text in (("divergence", "one aggregate Renyi divergence"), ("sweep", "divergence sweep table")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "divergence":
            p.add_argument("--mech", choices=("rqm", "pbm"))
        _add_rqm(p)
        _add_pbm(p)
        p.add_argument("--n", type=int, help="number of devices (default 1)")
        p.add_argument("--split-k", type=int, help="devices 2..n at +c (default (n-1)//2)")
        p.add_argument("--alpha", type=_alpha, help="Renyi order > 1, or inf (default 2)")
        p.add_argument("--random-neighbors", action="store_true", default=None, help="assign +-c to devices 2..n by seeded coin flips")
        if name == "sweep":
            p.add_argument("--preset", choices=sorted(PAIRS), help="named parameter pair with n- and alpha-axis tables")
            p.add_argument("--paper-fig3", action="store_true", default=None, help="same as --preset fig3")
            p.add_argument("--axis", choices=("n", "alpha", "x"))
            p.add_argument("--values", type=_values, help="a,b,c | start:stop | start:stop:count (geometric)")

    p = sub.add_parser("simulate", help="federated training with each mechanism on a shared seed")
    _add_common(p)
    p.add_argument("--mechanisms", help=f"comma-separated subset of {','.join(MECHANISMS)}")
    p.add_argument("--out-dir", help="directory for CSVs and manifest.json (default sim_out)")
    for f in fields(SimConfig):
        if f.name in ("mechanism", "master_seed"):
            continue
        kind = {"int": int, "float": float, "bool": _bool, "str": str}.get(str(f.type), float)
        if f.name == "clip":
            kind = float
        p.add_argument("--" + f.name.replace("_", "-"), type=kind)

    p = sub.add_parser("selftest", help="run reduced invariant suites")
    _add_common(p)
    p.add_argument("--inject-fault", action="store_true", default=None, help=argparse.SUPPRESS)
    return parser


def _action_types(parser: argparse.ArgumentParser, command: str) -> dict:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    out = {}
    for action in sub.choices[command]._actions:
        if isinstance(action, argparse._StoreTrueAction):
            out[action.dest] = _bool
        elif action.type is not None:
            out[action.dest] = action.type
        else:
            out[action.dest] = str
    return out


def resolve_args(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    """Layer explicit flags over the config file over the defaults."""
    types = _action_types(parser, args.command)
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise ValidationExit(f"cannot read config file {args.config}")
        if cp.has_section(args.command):
            for key, raw in cp.items(args.command):
                dest = key.replace("-", "_")
                if dest not in types:
                    raise ValidationExit(f"unknown key {key!r} in [{args.command}] of {args.config}")
                if getattr(args, dest, None) is None:
                    try:
                        setattr(args, dest, types[dest](raw))
                    except (TypeError, ValueError, argparse.ArgumentTypeError) as err:
                        raise ValidationExit(f"{args.config}: bad value for {key}: {err}") from None
    for key, value in {**COMMON, **DEFAULTS[args.command]}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _rqm_params(args) -> RqmParams:
    return RqmParams(c=args.c, delta=args.c if args.delta is None else args.delta, m=args.m, q=args.q)


def _pbm_params(args):
    return pbm_for_levels(args.c, args.theta, args.m, match_support=not args.pbm_full_trials)


def _params_echo(args) -> dict:
    skip = {"config", "out", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, columns, rows, metadata):
    text = records.render_csv(columns, rows, metadata)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_pmf(args) -> int:
    if args.x is None:
        raise ValidationExit("pmf needs --x")
    meta = {"seed": args.seed, "params": _params_echo(args)}
    if args.mech == "rqm":
        params = _rqm_params(args)
        grid = build_grid(params)
        probs = rqm_pmf(args.x, params, grid)
        columns = ["index", "level", "probability"]
        oracle = None
        if args.oracle:
            oracle = rqm_pmf_bruteforce(args.x, params, grid)
            columns.append("oracle")
            worst = float(abs(oracle - probs).max())
            meta["oracle_max_abs_diff"] = worst
            if worst > 1e-12:
                raise ConsistencyError(f"closed form and brute force differ by {worst:.3e}")
        rows = []
        for i, p in enumerate(probs):
            row = [i, float(grid.levels[i]), float(p)]
            if oracle is not None:
                row.append(float(oracle[i]))
            rows.append(row)
    else:
        if args.oracle:
            raise ValidationExit("--oracle is only available for --mech rqm")
        params = _pbm_params(args)
        probs = pbm_pmf(args.x, params)
        columns = ["index", "level", "probability"]
        # level: the input value whose expected output is this index
        rows = [[i, params.c * (i / params.m - 0.5) / params.theta, float(p)] for i, p in enumerate(probs)]
    _emit(args, columns, rows, meta)
    return EXIT_OK


def cmd_bound(args) -> int:
    params = _rqm_params(args)
    bound = theorem1_bound(params)
    lines = [f"bound: {bound!r}"]
    code = EXIT_OK
    if args.compare_numeric:
        numeric = extreme_pair_divergence(params)
        lines.append(f"numeric_d_inf: {numeric!r}")
        ok = numeric <= bound + 1e-9
        lines.append(f"dominated: {str(ok).lower()}")
        code = EXIT_OK if ok else EXIT_CONSISTENCY
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return code


def _neighbors(args, c):
    if args.random_neighbors:
        return random_neighbors(args.n, c, stream(args.seed, MISC, args.n))
    return worst_case_neighbors(args.n, c, args.split_k)


def cmd_divergence(args) -> int:
    mech = _rqm_params(args) if args.mech == "rqm" else _pbm_params(args)
    x, x_prime = _neighbors(args, mech.c)
    eps = aggregate_divergence(DivergenceQuery(args.alpha, mech, tuple(x), tuple(x_prime)))
    text = f"epsilon: {eps!r}\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    preset = "fig3" if args.paper_fig3 else args.preset
    if preset:
        specs = preset_sweeps(preset, c=args.c, full_trials=args.pbm_full_trials)
        if args.random_neighbors:
            specs = [replace(s, neighbor_seed=args.seed) for s in specs]
    else:
        if args.values is None:
            raise ValidationExit("sweep needs --values or --preset")
        specs = [
            SweepSpec(
                args.axis,
                args.values,
                _rqm_params(args),
                _pbm_params(args),
                alpha=args.alpha,
                n=args.n,
                split_k=args.split_k,
                neighbor_seed=args.seed if args.random_neighbors else None,
                label="custom",
            )
        ]
    rows = []
    for spec in specs:
        for r in divergence_sweep(spec):
            rows.append([spec.label, r.axis, r.value, r.n, r.alpha, r.eps_rqm, r.eps_pbm])
    _emit(args, records.SWEEP_COLUMNS, rows, {"seed": args.seed, "preset": preset or "", "params": _params_echo(args)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    mechanisms = [m.strip() for m in args.mechanisms.split(",") if m.strip()]
    bad = [m for m in mechanisms if m not in MECHANISMS]
    if bad or not mechanisms:
        raise ValidationExit(f"unknown mechanisms {bad}; choose from {MECHANISMS}")
    overrides = {f.name: getattr(args, f.name) for f in fields(SimConfig) if f.name not in ("mechanism", "master_seed")}
    base = SimConfig(mechanism=mechanisms[0], master_seed=args.seed, **overrides)
    federation = generate_synthetic_federation(base)
    clip = resolve_clip(base, federation)
    out_dir = Path(args.out_dir)
    outputs, combined, finals = [], [], {}
    for mech in mechanisms:
        cfg = replace(base, mechanism=mech)
        history = run_training(cfg, federation=federation)
        rows = [[h.round, h.loss, h.accuracy, h.bits_per_device, mech, cfg.master_seed] for h in history]
        combined.extend(rows)
        meta = {"seed": cfg.master_seed, "resolved_clip": clip, "params": cfg.to_dict()}
        outputs.append(records.write_csv(out_dir / f"metrics_{mech}.csv", records.METRIC_COLUMNS, rows, meta))
        finals[mech] = {"loss": history[-1].loss, "accuracy": history[-1].accuracy}
    config_echo = {**base.to_dict(), "mechanisms": mechanisms}
    del config_echo["mechanism"]
    meta = {"seed": base.master_seed, "resolved_clip": clip, "params": config_echo}
    outputs.append(records.write_csv(out_dir / "comparison.csv", records.METRIC_COLUMNS, combined, meta))
    manifest = records.write_manifest(out_dir / "manifest.json", config_echo, outputs, {"resolved_clip": clip, "final": finals})
    for mech, res in finals.items():
        sys.stdout.write(f"{mech}: final loss {res['loss']:.6f}, accuracy {res['accuracy']:.4f}\n")
    sys.stdout.write(f"manifest: {manifest}\n")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_selftest(inject_fault=args.inject_fault)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        sys.stdout.write(f"{status} {r.name} ({r.seconds:.2f}s)\n")
        if not r.passed:
            sys.stdout.write(f"  counterexample: {r.counterexample}\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


COMMANDS = {
    "pmf": cmd_pmf,
    "bound": cmd_bound,
    "divergence": cmd_divergence,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors (and --help) by exiting
        return exc.code
    try:
        resolve_args(parser, args)
        return COMMANDS[args.command](args)
    except (ConsistencyError, SimulationError) as err:
        sys.stderr.write(f"rqm {args.command}: internal consistency failure: {err}\n")
        return EXIT_CONSISTENCY
    except (ValidationExit, ParameterError, DomainError, CapacityError, ValueError) as err:
        sys.stderr.write(f"rqm {args.command}: {err}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
