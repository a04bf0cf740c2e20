"""Command-line interface.

Subcommands mirror the experiment surface: threshold tables, single-policy
training and evaluation, the three sweeps, learning curves, and the exact
DP oracle. Results land as CSV plus rendered PNG figures under --out.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment, report
from .bounds import lbnck_thresholds, lbuc_thresholds_irm
from .channel import DiscreteCostChannel
from .content import ContentGenConfig
from .dp import DpInstance, dp_oracle
from .errors import ConfigError, NumericalError, ProcacheError
from .policy import load_params, save_params


def _parse_float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _parse_int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procache",
        description="Proactive caching: simulation, training, bounds, sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key=value configuration file")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", type=Path, default=Path("results"),
                       help="output directory (default: results/)")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for sweep points")
        p.add_argument("--no-plot", action="store_true",
                       help="skip PNG rendering next to the CSV output")
        p.add_argument("--budget", type=int,
                       help="training rollouts per policy (default from config)")
        p.add_argument("--full", action="store_true",
                       help="paper-scale training budget (20000 rollouts)")

    p = sub.add_parser("bounds", help="emit LB-UC / LB-NCK threshold tables")
    common(p)
    p.add_argument("--samples", type=int, help="override bounds.stat_samples")

    p = sub.add_parser("train", help="train one parametric policy")
    common(p)
    p.add_argument("--policy", choices=("liso", "lfa"), required=True)
    p.add_argument("--optimizer", choices=("fdm", "lrm"), required=True)

    p = sub.add_parser("eval", help="evaluate one scheme or checkpoint")
    common(p)
    p.add_argument("--scheme", choices=experiment.ALL_SCHEMES)
    p.add_argument("--params", type=Path, help="checkpoint file to evaluate")

    p = sub.add_parser("sweep-capacity", help="cost vs cache capacity")
    common(p)
    p.add_argument("--b-list", type=_parse_int_list, default=[0, 10, 20, 30, 40])

    p = sub.add_parser("sweep-lifetime", help="cost vs maximum lifetime")
    common(p)
    p.add_argument("--kmax-list", type=_parse_int_list, default=[5, 10, 15])
    p.add_argument("--b", type=int, help="override cache capacity")

    p = sub.add_parser("sweep-memory", help="cost vs regime persistence grid")
    common(p)
    p.add_argument("--p1-list", type=_parse_float_list, default=[0.1, 0.5, 0.9])
    p.add_argument("--p2-list", type=_parse_float_list, default=[0.1, 0.5, 0.9])

    p = sub.add_parser("curves", help="learning curves for the trained schemes")
    common(p)

    p = sub.add_parser("dp-oracle", help="exact solution of a tiny instance")
    common(p)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--m-max", type=int, default=2)
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--p-a", type=float, default=0.25)

    return parser


def _load_config(args) -> experiment.ExperimentConfig:
    cfg = (experiment.load_config(args.config) if args.config
           else experiment.ExperimentConfig())
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    budget = args.budget
    if args.full:
        budget = 20_000
    if budget is not None:
        cfg = replace(cfg, train_budget=budget)
    return cfg


def cmd_bounds(args) -> int:
    cfg = _load_config(args)
    if args.samples:
        cfg = replace(cfg, stat_samples=args.samples)
    stats = experiment.channel_stats(cfg)
    env = cfg.env()
    uc = lbuc_thresholds_irm(stats, env.k_max, cfg.p_a)
    nck = lbnck_thresholds(stats)
    uc_path = report.write_threshold_table(args.out / "lbuc_thresholds.txt",
                                           uc.by_lifetime[1:])
    nck_path = report.write_threshold_table(args.out / "lbnck_thresholds.txt",
                                            nck.by_gap)
    print(f"E[C] = {stats.mean_cost:.6f} mW over {stats.sample_pool.size} samples")
    print(f"LB-UC thresholds (L=1..{env.k_max}) -> {uc_path}")
    print(f"LB-NCK thresholds (G=1..{nck.by_gap.size}) -> {nck_path}")
    if not args.no_plot:
        png = report.render_threshold_figure(
            args.out / "bound_thresholds.png",
            [("lb-uc", uc.by_lifetime[1:]), ("lb-nck", nck.by_gap)],
        )
        print(f"figure -> {png}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    scheme = f"{args.policy}-{args.optimizer}"
    stats = experiment.channel_stats(cfg)
    env = cfg.env()
    result = experiment.train_scheme(cfg, env, scheme, stats, point_tag="cli")
    mean, stderr = experiment.run_eval(cfg, result.params, env=env)
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt = args.out / f"{scheme}_params.txt"
    save_params(ckpt, result.params,
                meta={"iteration": len(result.curve), "j_mean": repr(mean)})
    curve_rows = [(scheme, c.iteration, c.trajectories_consumed, c.j_mean, c.j_stderr)
                  for c in result.curve]
    csv_path = report.write_csv(args.out / f"{scheme}_curve.csv",
                                experiment.CURVE_HEADER, curve_rows)
    print(f"trained {scheme}: J = {mean:.6f} +/- {stderr:.6f} mW "
          f"({result.trajectories_consumed} rollouts, step {result.step_size:.3g})")
    print(f"checkpoint -> {ckpt}")
    print(f"curve -> {csv_path}")
    if not args.no_plot:
        print(f"figure -> {report.render_curves_figure(csv_path, csv_path.with_suffix('.png'))}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if (args.scheme is None) == (args.params is None):
        raise ConfigError("eval needs exactly one of --scheme or --params")
    if args.params is not None:
        policy, _meta = load_params(args.params)
        label = args.params.name
    else:
        policy = args.scheme
        if policy in experiment.TRAINED_SCHEMES:
            stats = experiment.channel_stats(cfg)
            env = cfg.env()
            policy = experiment.train_scheme(cfg, env, args.scheme, stats,
                                             point_tag="cli").params
        label = args.scheme
    mean, stderr = experiment.run_eval(cfg, policy)
    print(f"{label}: J = {mean:.6f} +/- {stderr:.6f} mW "
          f"({cfg.eval_trajectories} x {cfg.eval_slots} slots)")
    if args.out:
        report.write_csv(
            args.out / f"eval_{label.replace('.', '_')}.csv",
            experiment.CSV_HEADER,
            [(cfg.b, label, mean, stderr, cfg.eval_trajectories, cfg.eval_slots,
              cfg.master_seed)],
        )
    return 0


def _finish_sweep(args, rows, name: str, x_label: str, memory: bool = False) -> int:
    csv_path = report.write_csv(args.out / f"{name}.csv", experiment.CSV_HEADER, rows)
    print(f"{len(rows)} rows -> {csv_path}")
    if not args.no_plot:
        png = csv_path.with_suffix(".png")
        if memory:
            report.render_memory_figure(csv_path, png)
        else:
            report.render_sweep_figure(csv_path, png, x_label)
        print(f"figure -> {png}")
    return 0


def cmd_sweep_capacity(args) -> int:
    cfg = _load_config(args)
    rows = experiment.sweep_capacity(cfg, args.b_list, jobs=args.jobs)
    return _finish_sweep(args, rows, "sweep_capacity", "cache capacity B (contents)")


def cmd_sweep_lifetime(args) -> int:
    cfg = _load_config(args)
    if args.b is not None:
        cfg = replace(cfg, b=args.b)
    rows = experiment.sweep_lifetime(cfg, args.kmax_list, jobs=args.jobs)
    return _finish_sweep(args, rows, "sweep_lifetime", "maximum lifetime (slots)")


def cmd_sweep_memory(args) -> int:
    cfg = _load_config(args)
    rows = experiment.sweep_memory(cfg, args.p1_list, args.p2_list, jobs=args.jobs)
    return _finish_sweep(args, rows, "sweep_memory", "p2", memory=True)


def cmd_curves(args) -> int:
    cfg = _load_config(args)
    rows = experiment.emit_learning_curves(cfg)
    csv_path = report.write_csv(args.out / "learning_curves.csv",
                                experiment.CURVE_HEADER, rows)
    print(f"{len(rows)} rows -> {csv_path}")
    if not args.no_plot:
        png = report.render_curves_figure(csv_path, csv_path.with_suffix(".png"))
        print(f"figure -> {png}")
    return 0


def cmd_dp_oracle(args) -> int:
    if args.k_max > 3 or args.m_max > 2 or args.b > 2 or args.levels > 5:
        raise ConfigError("the oracle instance must stay tiny "
                          "(k_max<=3, m_max<=2, b<=2, levels<=5)")
    content = ContentGenConfig(m_max=args.m_max,
                               lifetime_support=tuple(range(1, args.k_max + 1)))
    rng = np.random.default_rng(experiment.seed_for(args.seed or 0, "dp-levels"))
    values = tuple(sorted(rng.uniform(0.2, 2.0, size=args.levels)))
    probs = tuple([1.0 / args.levels] * args.levels)
    instance = DpInstance(content=content, p_a=args.p_a, b=args.b,
                          channel=DiscreteCostChannel(values, probs))
    solution = dp_oracle(instance)
    print(f"states: {len(solution.states)}, sweeps: {solution.iterations}")
    print(f"optimal average cost rho* = {solution.rho:.8f} mW")
    args.out.mkdir(parents=True, exist_ok=True)
    table = args.out / "dp_oracle_policy.txt"
    with open(table, "w") as fh:
        fh.write("# state (outside | inside | accessed), cost level -> downloads, discards\n")
        for s, key in enumerate(solution.states):
            for z, c in enumerate(values):
                dl, dc = solution.policy[s][z]
                fh.write(f"{key} c={c:.4f} -> dl={dl} dc={dc}\n")
    print(f"policy table -> {table}")
    return 0


COMMANDS = {
    "bounds": cmd_bounds,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-capacity": cmd_sweep_capacity,
    "sweep-lifetime": cmd_sweep_lifetime,
    "sweep-memory": cmd_sweep_memory,
    "curves": cmd_curves,
    "dp-oracle": cmd_dp_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ProcacheError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
