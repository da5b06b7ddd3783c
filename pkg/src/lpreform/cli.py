"""Single entry point wiring the modules into reproducible experiments.

Subcommands: generate, solve, train, reformulate, evaluate, oracle. Options
come from (lowest to highest precedence) built-in defaults, a JSON config
file with sections named after the modules, LPREFORM_<SECTION>_<KEY>
environment variables, and explicit flags. The effective configuration is
echoed into the output directory of every run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, training
from .exceptions import LpReformError
from .lp import ColumnPermutation, apply_permutation, emit_sparsity_image
from .mps import read_mps, write_mps
from .nets import PolicyParams, load_checkpoint
from .reformulate import SplitConfig, k_shot_reformulate, write_report
from .simplex import SolverConfig, solve
from .training import TrainConfig, brute_force_oracle, evaluate, train

log = logging.getLogger(__name__)

ENV_PREFIX = "LPREFORM"
CONFIG_SECTIONS = ("datagen", "solver", "training", "reformulate")


def load_config(path=None, environ=None):
    """Merge config-file sections with LPREFORM_SECTION_KEY env overrides."""
    config = {section: {} for section in CONFIG_SECTIONS}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        for section, values in data.items():
            if section not in config:
                raise LpReformError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise LpReformError(f"config section {section!r} must be an object")
            config[section].update(values)
    environ = os.environ if environ is None else environ
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX + "_"):
            continue
        rest = key[len(ENV_PREFIX) + 1 :]
        section, _, name = rest.partition("_")
        section = section.lower()
        if section not in config or not name:
            continue
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config[section][name.lower()] = value
    return config


def _filtered_kwargs(cls, values):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise LpReformError(f"unknown {cls.__name__} options: {sorted(unknown)}")
    return dict(values)


def build_solver_config(config):
    values = dict(config.get("solver", {}))
    if "pricing" in values:
        from .simplex import Pricing

        values["pricing"] = Pricing(values["pricing"])
    return SolverConfig(**_filtered_kwargs(SolverConfig, values))


def build_train_config(config, args):
    values = dict(config.get("training", {}))
    profile = getattr(args, "profile", None) or values.pop("profile", None)
    for attr, key in (
        ("seed", "seed"),
        ("clusters", "k_clusters"),
        ("pool", "pool"),
        ("split_method", "split_method"),
        ("k_shots", "k_shot_eval"),
        ("steps", "steps"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    values["solver"] = build_solver_config(config)
    if profile == "desk":
        return TrainConfig.desk_profile(**_filtered_kwargs(TrainConfig, values))
    return TrainConfig(**_filtered_kwargs(TrainConfig, values))


def _echo_config(out_dir, payload):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load_params(checkpoint, seed=0):
    params = PolicyParams(seed=seed)
    load_checkpoint(checkpoint, params)
    return params


def cmd_generate(args, config):
    values = dict(config.get("datagen", {}))
    if args.scenario:
        values["scenario"] = args.scenario
    if args.seed is not None:
        values["seed"] = args.seed
    if args.count is not None:
        values["instance_count"] = args.count
    if values.get("scenario") == "paper_bip":
        values.pop("scenario")
        spec = datagen.ScenarioSpec.paper_scale_bip(
            instance_count=values.get("instance_count", 10), seed=values.get("seed", 7)
        )
    else:
        values.setdefault("scenario", "item_placement")
        values.setdefault("instance_count", 20)
        values.setdefault("seed", 7)
        for key in ("split_fractions", "dims_per_bin", "support_sizes"):
            if key in values and values[key] is not None:
                values[key] = tuple(values[key])
        spec = datagen.ScenarioSpec(**_filtered_kwargs(datagen.ScenarioSpec, values))
    manifest = datagen.generate(spec, args.out_dir, build_solver_config(config))
    splits = datagen.split_dataset(manifest, spec.split_fractions, seed=spec.seed)
    for sub in splits:
        with open(Path(args.out_dir) / f"manifest_{sub['split']}.json", "w", encoding="utf-8") as fh:
            json.dump(sub, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _echo_config(args.out_dir, {"datagen": dataclasses.asdict(spec)})
    print(json.dumps({"instances": len(manifest["instances"]), "out_dir": str(args.out_dir)}))
    return 0


def cmd_solve(args, config):
    lp = read_mps(args.instance)
    solution, metrics = solve(lp, build_solver_config(config))
    print(
        json.dumps(
            {
                "instance": lp.name,
                "status": metrics.status.value,
                "objective": solution.objective,
                "iterations": metrics.iterations,
                "phase1_iterations": metrics.phase1_iterations,
                "phase2_iterations": metrics.phase2_iterations,
                "solve_time": metrics.solve_time,
                "max_inf": metrics.max_inf,
            }
        )
    )
    return 0


def cmd_train(args, config):
    cfg = build_train_config(config, args)
    manifest = datagen.load_manifest(args.manifest)
    instances = datagen.load_instances(manifest)
    if len(instances) > cfg.train_size:
        instances = instances[: cfg.train_size]
    out_dir = Path(args.out_dir)
    _echo_config(out_dir, {"training": dataclasses.asdict(cfg)})
    params, rows = train(cfg, instances, out_dir=out_dir)
    print(
        json.dumps(
            {
                "steps": cfg.steps,
                "final_mean_reward": rows[-1][1] if rows else None,
                "checkpoint": str(out_dir / "checkpoint_final.npz"),
            }
        )
    )
    return 0


def cmd_reformulate(args, config):
    cfg = build_train_config(config, args)
    lp = read_mps(args.instance)
    params = _load_params(args.checkpoint, seed=cfg.seed)
    split_cfg = SplitConfig(
        k=min(cfg.k_clusters, lp.num_cols), method=cfg.split_method, pool=cfg.pool
    )
    solver_cfg = build_solver_config(config)
    _, baseline_metrics = solve(lp, solver_cfg)
    best, samples = k_shot_reformulate(
        lp, params, args.k_shots or cfg.k_shot_eval, split_cfg, solver_cfg,
        base_seed=cfg.seed,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    permuted = apply_permutation(lp, best.column_perm)
    write_mps(permuted, out_dir / "reformulated.mps", comment="reformulated column order")
    report = write_report(
        out_dir / "report.json", lp, baseline_metrics.iterations, best, samples
    )
    if args.images:
        emit_sparsity_image(lp, out_dir / "original.pgm", max_dim=args.image_dim)
        emit_sparsity_image(permuted, out_dir / "reformulated.pgm", max_dim=args.image_dim)
    _echo_config(out_dir, {"training": dataclasses.asdict(cfg)})
    print(json.dumps(report))
    return 0


def cmd_evaluate(args, config):
    cfg = build_train_config(config, args)
    manifest = datagen.load_manifest(args.manifest)
    instances = datagen.load_instances(manifest)
    params = _load_params(args.checkpoint, seed=cfg.seed)
    report = evaluate(params, instances, args.k_shots or cfg.k_shot_eval, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save_csv(out_dir / "evaluation.csv")
    report.save_cdf_csv(out_dir / "ratio_cdf.csv")
    _echo_config(out_dir, {"training": dataclasses.asdict(cfg)})
    mean_red, stderr = report.mean_iteration_reduction()
    print(
        json.dumps(
            {
                "instances": len(report.rows),
                "mean_iteration_reduction": mean_red,
                "stderr": stderr,
            }
        )
    )
    return 0


def cmd_oracle(args, config):
    from .reformulate import split_variables

    cfg = build_train_config(config, args)
    lp = read_mps(args.instance)
    split = split_variables(lp, min(cfg.k_clusters, lp.num_cols), cfg.split_method)
    best_perm, table = brute_force_oracle(lp, split, build_solver_config(config))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "oracle_table.csv", "w", encoding="utf-8") as fh:
        fh.write("permutation,iterations\n")
        for perm, iters in table:
            fh.write("-".join(map(str, perm)) + f",{iters:.10g}\n")
    print(json.dumps({"best_perm": list(best_perm), "entries": len(table)}))
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="lpreform", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--out-dir", required=out_required, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--profile", choices=("desk", "paper"))
        p.add_argument("--k-shots", dest="k_shots", type=int)
        p.add_argument("--clusters", type=int)
        p.add_argument("--pool", choices=("mean", "max", "min"))
        p.add_argument("--split-method", dest="split_method",
                       choices=("contiguous", "round_robin", "name_prefix"))
        p.add_argument("--metric", choices=("iterations", "solve_time"))
        p.add_argument("--steps", type=int)

    p = sub.add_parser("generate", help="generate a scenario dataset")
    common(p)
    p.add_argument("--scenario")
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one MPS file, print metrics as JSON")
    common(p, out_required=False)
    p.add_argument("instance")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train the reformulation policy")
    common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reformulate", help="reformulate one instance with a checkpoint")
    common(p)
    p.add_argument("instance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", action="store_true", help="emit sparsity images")
    p.add_argument("--image-dim", type=int, default=256)
    p.set_defaults(func=cmd_reformulate)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint over a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="enumerate all cluster permutations of one instance")
    common(p)
    p.add_argument("instance")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except LpReformError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IoError", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
