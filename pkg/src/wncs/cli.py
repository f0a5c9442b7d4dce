"""Command-line entry points: train, run, sweep, validate-config.

Sweeps stream one CSV row per finished (variant, M, seed) cell and can
resume by skipping cells already present in the output file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import multiprocessing
import os
import sys

import numpy as np

from . import controller as ctrl
from . import simulator as sim
from .config import ConfigError, parse_config

RESULT_HEADER = sim.RESULT_COLUMNS + ["status"]
CURVE_HEADER = sim.CURVE_COLUMNS


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_row(fh, values) -> None:
    # one atomic line per row keeps interrupted sweeps parseable
    fh.write(",".join(_fmt(v) for v in values) + "\n")
    fh.flush()


def _ensure_outdir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_validate_config(args) -> int:
    resolved = parse_config(args.config, args.set)
    resolved.sim_config()
    resolved.train_config()
    for key in sorted(resolved.values):
        print(f"{key} = {resolved.values[key]}")
    print("config OK")
    return 0


def _write_curve(path, rows, fresh: bool) -> None:
    mode = "w" if fresh else "a"
    with open(path, mode) as fh:
        if fresh:
            _write_row(fh, CURVE_HEADER)
        for row in rows:
            _write_row(fh, row)


def cmd_train(args) -> int:
    resolved = parse_config(args.config, args.set)
    out = _ensure_outdir(args.out)
    policy_path = args.policy or os.path.join(out, "policy.txt")
    curve_path = os.path.join(out, "learning_curve.csv")
    tcfg = resolved.train_config(objective="tail")
    try:
        policy, curve = ctrl.train_policy(resolved.sim_config().model, tcfg)
    except ctrl.TrainingDiverged as exc:
        _write_curve(
            curve_path,
            [(i, c.mean, c.std, "TAIL") for i, c in enumerate(exc.curve)],
            fresh=True,
        )
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    ctrl.save_policy(policy, policy_path)
    rows = [(i, c.mean, c.std, "TAIL") for i, c in enumerate(curve)]
    if args.classic_ref:
        _, ref_curve = ctrl.train_policy(
            resolved.sim_config().model, resolved.train_config(objective="classic")
        )
        rows += [(i, c.mean, c.std, "CLASSIC-REF") for i, c in enumerate(ref_curve)]
    _write_curve(curve_path, rows, fresh=True)
    print(f"policy written to {policy_path}")
    print(f"learning curve written to {curve_path}")
    print(f"final mean return: {curve[-1].mean:.6g}")
    return 0


def _result_row(result: sim.EpisodeResult) -> list:
    row = result.row()
    return [row[c] for c in sim.RESULT_COLUMNS] + ["ok"]


def _abort_row(variant, M, seed, reason) -> list:
    head = {"variant": variant, "M": M, "seed": seed}
    out = []
    for c in sim.RESULT_COLUMNS:
        out.append(head.get(c, float("nan")))
    out.append(f"aborted:{reason}")
    return out


def _load_policy_if_needed(resolved, variants, path):
    if not any(v.control == "TAIL" for v in variants):
        return None
    if path is None or not os.path.exists(path):
        raise ConfigError(
            "TAIL variants need a trained policy file; run `wncs train` and "
            "pass --policy PATH"
        )
    return ctrl.load_policy(path)


def cmd_run(args) -> int:
    resolved = parse_config(args.config, args.set)
    variant = sim.TABLE_VARIANTS[args.variant]
    policy = _load_policy_if_needed(resolved, [variant], args.policy)
    cfg = resolved.sim_config()
    result = sim.run_episode(cfg, variant, args.seed, policy=policy)
    for col, val in zip(sim.RESULT_COLUMNS, _result_row(result)):
        print(f"{col}: {val}")
    if args.out:
        out = _ensure_outdir(args.out)
        path = os.path.join(out, "results.csv")
        fresh = not os.path.exists(path)
        with open(path, "a") as fh:
            if fresh:
                _write_row(fh, RESULT_HEADER)
            _write_row(fh, _result_row(result))
        print(f"row appended to {path}")
    return 0


_WORKER_STATE: dict = {}


def _init_worker(resolved_values, policy_path):
    from .config import Resolved

    resolved = Resolved(values=resolved_values)
    _WORKER_STATE["cfg_base"] = resolved
    _WORKER_STATE["policy"] = (
        ctrl.load_policy(policy_path) if policy_path else None
    )


def _sweep_cell(cell):
    variant_name, M, seed = cell
    resolved = _WORKER_STATE["cfg_base"]
    policy = _WORKER_STATE["policy"]
    variant = sim.TABLE_VARIANTS[variant_name]
    cfg = dataclasses.replace(resolved.sim_config(), M=M)
    try:
        result = sim.run_episode(cfg, variant, seed, policy=policy)
        return _result_row(result)
    except sim.EpisodeAborted as exc:
        return _abort_row(variant_name, M, seed, str(exc).split("(")[0].strip())


def _completed_cells(path):
    done = set()
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                done.add((row["variant"], int(row["M"]), int(row["seed"])))
            except (KeyError, TypeError, ValueError):
                continue
    return done


def cmd_sweep(args) -> int:
    resolved = parse_config(args.config, args.set)
    variants = resolved.variant_list()
    policy = _load_policy_if_needed(resolved, variants, args.policy)
    out = _ensure_outdir(args.out)
    path = os.path.join(out, "results.csv")

    cells = [
        (v.name, M, seed)
        for v in variants
        for M in resolved.m_grid()
        for seed in range(args.seeds)
    ]
    done = _completed_cells(path)
    todo = [c for c in cells if c not in done]
    print(f"{len(cells)} cells, {len(done)} already done, running {len(todo)}")

    fresh = not os.path.exists(path)
    with open(path, "a") as fh:
        if fresh:
            _write_row(fh, RESULT_HEADER)
        if args.workers > 1:
            with multiprocessing.Pool(
                args.workers,
                initializer=_init_worker,
                initargs=(resolved.values, args.policy),
            ) as pool:
                for row in pool.imap_unordered(_sweep_cell, todo):
                    _write_row(fh, row)
        else:
            _init_worker(resolved.values, args.policy)
            for cell in todo:
                _write_row(fh, _sweep_cell(cell))

    _print_summary(path)
    return 0


def _print_summary(path) -> None:
    rows = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if row.get("status") == "ok":
                rows.append(row)
    if not rows:
        print("no completed rows")
        return
    print(f"\nsummary over {len(rows)} rows ({path}):")
    by_key: dict = {}
    for row in rows:
        by_key.setdefault((row["variant"], int(row["M"])), []).append(
            float(row["objective"])
        )
    print(f"{'variant':>8} {'M':>4} {'n':>4} {'mean objective':>16}")
    for (variant, M), vals in sorted(by_key.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        print(f"{variant:>8} {M:>4} {len(vals):>4} {np.mean(vals):>16.6g}")
    for M in sorted({int(r["M"]) for r in rows}):
        full = by_key.get(("full", M))
        v1 = by_key.get(("v1", M))
        if full and v1:
            ratio = np.mean(full) / np.mean(v1)
            print(
                f"M={M}: full/v1 mean objective ratio = {ratio:.4g} "
                f"(reduction {100 * (1 - ratio):.1f}%)"
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wncs",
        description="Co-design simulator for wireless networked control systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="path to key=value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable, applied in order)",
        )

    p_train = sub.add_parser("train", help="train the tail-control policy offline")
    common(p_train)
    p_train.add_argument("--out", default="out", help="output directory")
    p_train.add_argument("--policy", default=None, help="policy file path to write")
    p_train.add_argument(
        "--classic-ref",
        action="store_true",
        help="also train an LQR-objective reference curve",
    )
    p_train.set_defaults(func=cmd_train)

    p_run = sub.add_parser("run", help="run one episode and print its metrics")
    common(p_run)
    p_run.add_argument("--variant", default="full", choices=sorted(sim.TABLE_VARIANTS))
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--policy", default=None, help="trained policy file")
    p_run.add_argument("--out", default=None, help="append the row to OUT/results.csv")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the variant x M x seed grid")
    common(p_sweep)
    p_sweep.add_argument("--out", default="out", help="output directory")
    p_sweep.add_argument("--seeds", type=int, default=20, help="seeds per cell")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel workers")
    p_sweep.add_argument("--policy", default=None, help="trained policy file")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate-config", help="parse and echo the configuration")
    common(p_val)
    p_val.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
