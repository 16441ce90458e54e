"""Command-line entry point: ``hjrate <subcommand> ...``.

Every subcommand takes ``--config FILE`` (flat TOML whose keys are the
option names with dashes replaced by underscores); flags given on the
command line win. Exit status: 0 success, 2 precondition refusal, 1 any
other error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .engine import PreconditionError

log = logging.getLogger("hjrate")


def _floats(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    return np.array([float(v) for v in str(text).split(",") if v.strip()])


def _game(example: str, profile: str):
    from .games import make_game_2d, make_game_3d
    from .torus import profile_by_name

    dim = {"2d": 2, "3d": 3}[example]
    prof = profile_by_name(profile, dim)
    return make_game_2d(prof) if dim == 2 else make_game_3d(prof)


def cmd_hamiltonian(args) -> int:
    spec = _game(args.example, args.profile)
    x, p = _floats(args.x), _floats(args.p)
    if len(x) != spec.dim or len(p) != spec.dim:
        raise PreconditionError(f"--x and --p need {spec.dim} components")
    print(repr(float(spec.hamiltonian(x, p))))
    return 0


def cmd_isaacs(args) -> int:
    from .games import isaacs_audit

    spec = _game(args.example, args.profile)
    recs = isaacs_audit(spec, args.samples, args.res, args.seed, args.p_max)
    gap = max(r.gap for r in recs)
    delta = max(r.refinement_delta for r in recs)
    cf = max(r.closed_form_error for r in recs)
    print(f"samples={len(recs)} res={args.res} max_gap={gap:.6g} "
          f"max_refinement_delta={delta:.6g} max_closed_form_error={cf:.6g}")
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(spec.dim)] + [f"p{i + 1}" for i in range(spec.dim)]
                       + ["upper", "lower", "refinement_delta", "closed_form"])
            for r in recs:
                w.writerow([f"{v:.17g}" for v in (*r.x, *r.p, r.upper, r.lower,
                                                  r.refinement_delta, r.closed_form)])
    return 0


def cmd_simulate(args) -> int:
    from .engine import diagnostics, integrate
    from .policies import PolicyI, PolicyII

    if args.example != "2d":
        raise PreconditionError("simulate plays the 2D game; use `effective` for 3D")
    spec = _game("2d", args.profile)
    dt = None if args.dt is None else float(args.dt)
    tr = integrate(spec, args.eps, PolicyI.parse(args.policy_i), PolicyII.parse(args.policy_ii),
                   T=args.T, dt=dt)
    d = diagnostics(tr)
    print(f"running={tr.running_cost!r} terminal={tr.terminal_cost!r} total={tr.total_cost!r} "
          f"|E|={d.measure_E!r} switches={d.switch_count}")
    if args.out:
        tr.to_csv(args.out)
    return 0


def cmd_rate(args) -> int:
    from .experiments import RunConfig, emit_report, parse_eps_list, rate_sweep

    cfg = RunConfig(method=args.method, profile=args.profile,
                    eps_list=parse_eps_list(args.eps_list), dt_factor=args.dt_factor,
                    grid=args.grid, L=args.L, h_x1=args.h_x1, T=args.T,
                    policy_i=tuple(args.policy_i), policy_ii=tuple(args.policy_ii),
                    seed=args.seed, out=args.out, plot=args.plot)
    rep = rate_sweep(cfg)
    lo, hi = rep.bracket
    print(f"method={rep.method} profile={rep.profile} slope={rep.slope:.6g} "
          f"intercept={rep.intercept:.6g} r2={rep.r2:.6g} min_scaled={lo:.6g} "
          f"max_scaled={hi:.6g} excluded={rep.excluded} failures={len(rep.failures)}")
    if cfg.out:
        emit_report(rep, cfg.out, cfg.plot)
    return 0


def cmd_effective(args) -> int:
    from .effective import hbar_estimate

    p = _floats(args.p)
    if len(p) != 3:
        raise PreconditionError("--p needs 3 components")
    kw = {}
    if args.method == "game":
        kw["speed_rule"] = args.speed_rule
    est = hbar_estimate(p, args.method, T=args.T, resolution=args.resolution, **kw)
    print(f"hbar={est.value!r} residual={est.residual!r} method={est.method}")
    return 0


def cmd_solve_micro(args) -> int:
    from .hjsolver import micro_grid, solve_micro
    from .torus import profile_by_name

    prof = profile_by_name(args.profile, 2)
    L = args.L if args.L is not None else 2.0 + 3.0 * args.T
    h = 2.0 * L / args.grid
    grid = micro_grid(args.eps, L, h, args.h_x1)
    sol = solve_micro(prof, args.eps, T=args.T, grid=grid, scheme=args.scheme)
    print(f"value={sol.value!r} eps={args.eps!r} h={sol.h!r} steps={sol.steps} "
          f"scheme={sol.scheme}")
    if args.out:
        sol.field.to_csv(args.out)
    if args.binary:
        sol.field.to_binary(args.binary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    from .experiments import DEFAULT_EPS

    parser = argparse.ArgumentParser(prog="hjrate", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="flat TOML file of option defaults")
        sp.set_defaults(func=fn)
        return sp

    h = add("hamiltonian", cmd_hamiltonian, "evaluate a closed-form Hamiltonian")
    h.add_argument("action", choices=["eval"])
    h.add_argument("--example", choices=["2d", "3d"], required=True)
    h.add_argument("--x", required=True)
    h.add_argument("--p", required=True)
    h.add_argument("--profile", choices=["paper", "experiments"], default="paper")

    s = add("isaacs-check", cmd_isaacs, "upper vs lower Hamiltonian by enumeration")
    s.add_argument("--example", choices=["2d", "3d"], default="2d")
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--res", type=int, default=400)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--p-max", type=float, default=20.0)
    s.add_argument("--profile", choices=["paper", "experiments"], default="paper")
    s.add_argument("--out")

    s = add("simulate", cmd_simulate, "play one strategy pair in the 2D game")
    s.add_argument("--example", choices=["2d"], default="2d")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--policy-i", default="highway")
    s.add_argument("--policy-ii", default="adversarial")
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--dt", type=float)
    s.add_argument("--profile", choices=["paper", "experiments"], default="paper")
    s.add_argument("--out")

    s = add("rate", cmd_rate, "eps sweep and log-log rate fit")
    s.add_argument("--method", choices=["game-upper", "game-lower", "pde"], default="game-upper")
    s.add_argument("--eps-list", default=",".join(repr(e) for e in DEFAULT_EPS))
    s.add_argument("--profile", choices=["paper", "experiments"], default="paper")
    s.add_argument("--dt-factor", type=float, default=1.0 / 200.0)
    s.add_argument("--grid", type=int, default=32, help="PDE nodes per eps-cell along x_2")
    s.add_argument("--L", type=float)
    s.add_argument("--h-x1", type=float, default=1.0 / 64.0)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--policy-i", nargs="+", default=["highway", "stay", "home"])
    s.add_argument("--policy-ii", nargs="+", default=["adversarial", "zero", "push", "random"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--plot")

    s = add("effective", cmd_effective, "effective Hamiltonian of the 3D example")
    s.add_argument("--p", required=True)
    s.add_argument("--method", choices=["game", "pde", "formula"], default="game")
    s.add_argument("--T", type=float, default=100.0)
    s.add_argument("--resolution", type=float,
                   help="game: time step; pde: torus nodes per axis")
    s.add_argument("--speed-rule", choices=["optimal", "literal"], default="optimal")

    s = add("solve-micro", cmd_solve_micro, "PDE solve of the 2D microscopic problem")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--profile", choices=["paper", "experiments"], default="experiments")
    s.add_argument("--grid", type=int, required=True, help="points on [-L, L] (h = 2L/N)")
    s.add_argument("--L", type=float)
    s.add_argument("--h-x1", type=float)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--scheme", choices=["upwind", "lf"], default="upwind")
    s.add_argument("--out")
    s.add_argument("--binary")
    return parser


def _with_config(parser: argparse.ArgumentParser, argv):
    """Parse argv with the ``--config`` file's values as defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((t for t in rest if not t.startswith("-")), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(known.config, "rb") as fh:
        cfg = tomllib.load(fh)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    chosen = sub.choices.get(command)
    if chosen is None:
        return parser.parse_args(argv)
    dests = {a.dest for a in chosen._actions} - {"help", "config"}
    unknown = sorted(set(cfg) - dests)
    if unknown:
        raise PreconditionError(f"{known.config}: unknown keys {unknown}")
    for action in chosen._actions:
        if action.dest in cfg:
            action.required = False
    chosen.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _with_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except PreconditionError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface every runtime failure as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
